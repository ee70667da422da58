"""Blend dataset schema, CSV I/O, train/valid/test splitting and vectorization."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Literal, Sequence

import numpy as np

from .chem import Fingerprint, SmilesError, canonical_pair_order, fingerprint_smiles, parse_smiles, tanimoto

__all__ = [
    "COMPATIBLE",
    "INCOMPATIBLE",
    "HEADER",
    "DEFAULT_POOL",
    "BlendEntry",
    "SplitSpec",
    "ModelInput",
    "DataError",
    "MissingFile",
    "BadHeader",
    "BadRow",
    "TooFewEntries",
    "TooFewPairs",
    "SingleClassSubset",
    "PoolTooSmall",
    "load_entries",
    "write_entries",
    "random_split",
    "grouped_split",
    "balanced_split",
    "split_entries",
    "write_split",
    "class_rates",
    "pair_key",
    "snap_fraction",
    "vectorize",
    "vectorize_fingerprints",
    "stack_inputs",
    "gen_synthetic",
    "synthetic_rule",
]

COMPATIBLE = "compatible"
INCOMPATIBLE = "incompatible"
LABELS = (COMPATIBLE, INCOMPATIBLE)
HEADER = ("smiles_a", "smiles_b", "fraction_a", "label", "source_id")

# Repeating units of common blend partners; the first twelve form the default
# synthetic pool.
DEFAULT_POOL = (
    "*CC*",  # polyethylene
    "*CC(C)*",  # polypropylene
    "*CC(*)c1ccccc1",  # polystyrene
    "*CC(Cl)*",  # poly(vinyl chloride)
    "*CC(C)(C(=O)OC)*",  # poly(methyl methacrylate)
    "*CCO*",  # poly(ethylene oxide)
    "*CC(*)c1ccc(O)cc1",  # poly(p-hydroxystyrene)
    "*CC(OC(C)=O)*",  # poly(vinyl acetate)
    "*CC(O)*",  # poly(vinyl alcohol)
    "*CC(C#N)*",  # polyacrylonitrile
    "*OC(C)C(=O)*",  # poly(lactic acid)
    "*CC(OC)*",  # poly(methyl vinyl ether)
    "*CCCCCC(=O)O*",  # polycaprolactone
    "*CC(F)(F)*",  # poly(vinylidene fluoride)
    "*CC=CC*",  # polybutadiene
    "*CCCCCC(=O)N*",  # nylon 6
)


class DataError(ValueError):
    pass


class MissingFile(DataError, FileNotFoundError):
    pass


class BadHeader(DataError):
    pass


class BadRow(DataError):
    def __init__(self, row: int, reason: str):
        super().__init__(f"row {row}: {reason}")
        self.row = row
        self.reason = reason


class TooFewEntries(DataError):
    pass


class TooFewPairs(DataError):
    pass


class SingleClassSubset(DataError):
    pass


class PoolTooSmall(DataError):
    pass


@dataclass(frozen=True)
class BlendEntry:
    smiles_a: str
    smiles_b: str
    fraction_a: float
    label: Literal["compatible", "incompatible"]
    source_id: str = ""

    def __post_init__(self):
        if not 0.0 <= self.fraction_a <= 1.0:
            raise ValueError(f"fraction_a must lie in [0, 1], got {self.fraction_a}")
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")

    @property
    def incompatible(self) -> bool:
        return self.label == INCOMPATIBLE


def pair_key(e: BlendEntry) -> tuple[str, str]:
    """Unordered polymer pair identity."""
    return (e.smiles_a, e.smiles_b) if e.smiles_a <= e.smiles_b else (e.smiles_b, e.smiles_a)


@dataclass(frozen=True)
class SplitSpec:
    mode: Literal["random", "balanced"] = "random"
    seed: int = 0
    ratios: tuple[float, float, float] = (0.64, 0.16, 0.20)

    def __post_init__(self):
        if self.mode not in ("random", "balanced"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if len(self.ratios) != 3 or min(self.ratios) <= 0:
            raise ValueError("ratios must be three positive numbers")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"ratios must sum to 1, got {sum(self.ratios)}")


@dataclass(frozen=True, eq=False)
class ModelInput:
    fp_first: Fingerprint
    fp_second: Fingerprint
    composition: float
    target: float

    def __eq__(self, other):
        if not isinstance(other, ModelInput):
            return NotImplemented
        return (
            self.fp_first == other.fp_first
            and self.fp_second == other.fp_second
            and self.composition == other.composition
            and self.target == other.target
        )

    __hash__ = None


def _parse_row(fields: list[str], row: int) -> BlendEntry:
    if len(fields) != len(HEADER):
        raise BadRow(row, f"expected {len(HEADER)} fields, got {len(fields)}")
    smiles_a, smiles_b, frac, label, source = (f.strip() for f in fields)
    try:
        fraction = float(frac)
    except ValueError:
        raise BadRow(row, f"fraction_a {frac!r} is not a number") from None
    if not math.isfinite(fraction) or not 0.0 <= fraction <= 1.0:
        raise BadRow(row, f"fraction_a {fraction} outside [0, 1]")
    if label not in LABELS:
        raise BadRow(row, f"label {label!r} is not compatible/incompatible")
    for s in (smiles_a, smiles_b):
        try:
            parse_smiles(s)
        except SmilesError as exc:
            raise BadRow(row, f"unparseable SMILES {s!r}: {exc}") from None
    return BlendEntry(smiles_a, smiles_b, fraction, label, source)


def load_entries(path: str | Path, rejects: list[BadRow] | None = None) -> list[BlendEntry]:
    """Read a dataset CSV, preserving file order.

    Without ``rejects`` the first bad row raises :class:`BadRow`.  With a list,
    bad rows are appended to it and skipped so noisy files load anyway.
    Row numbers are 1-based physical line numbers.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such dataset file: {path}")
    entries: list[BlendEntry] = []
    header_seen = False
    with path.open(encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = next(csv.reader([line]))
            if not header_seen:
                if tuple(f.strip() for f in fields) != HEADER:
                    raise BadHeader(f"header must be {','.join(HEADER)}, got {stripped!r}")
                header_seen = True
                continue
            try:
                entries.append(_parse_row(fields, lineno))
            except BadRow as exc:
                if rejects is None:
                    raise
                rejects.append(exc)
    if not header_seen:
        raise BadHeader(f"{path} has no header row")
    return entries


def _fmt_fraction(x: float) -> str:
    return repr(float(x))


def write_entries(path: str | Path, entries: Iterable[BlendEntry], comment: str | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for e in entries:
            writer.writerow([e.smiles_a, e.smiles_b, _fmt_fraction(e.fraction_a), e.label, e.source_id])


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def random_split(entries: Sequence[BlendEntry], spec: SplitSpec):
    """Seeded uniform shuffle cut by ``spec.ratios``; train takes the remainder."""
    if spec.mode != "random":
        raise ValueError("random_split needs a random-mode SplitSpec")
    n = len(entries)
    if n < 5:
        raise TooFewEntries(f"need at least 5 entries, got {n}")
    order = np.random.default_rng(spec.seed).permutation(n)
    n_valid = _round_half_up(n * spec.ratios[1])
    n_test = _round_half_up(n * spec.ratios[2])
    n_train = n - n_valid - n_test
    picked = [entries[i] for i in order]
    return picked[:n_train], picked[n_train : n_train + n_valid], picked[n_train + n_valid :]


def grouped_split(entries: Sequence[BlendEntry], spec: SplitSpec, rng: np.random.Generator | None = None):
    """Assign whole polymer-pair groups to subsets, targeting entry-count ratios.

    Groups are visited in seeded random order and each goes to the subset with
    the largest remaining deficit, so no pair is shared between subsets.
    """
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    groups: dict[tuple[str, str], list[BlendEntry]] = {}
    for e in entries:
        groups.setdefault(pair_key(e), []).append(e)
    keys = list(groups)
    order = rng.permutation(len(keys))
    total = len(entries)
    targets = [r * total for r in spec.ratios]
    subsets: list[list[BlendEntry]] = [[], [], []]
    for k in order:
        members = groups[keys[k]]
        deficits = [targets[s] - len(subsets[s]) for s in range(3)]
        dest = max(range(3), key=lambda s: (deficits[s], -s))
        subsets[dest].extend(members)
    return subsets[0], subsets[1], subsets[2]


def _oversample(subset: list[BlendEntry], rng: np.random.Generator, name: str) -> list[BlendEntry]:
    inc = [e for e in subset if e.incompatible]
    com = [e for e in subset if not e.incompatible]
    if not inc or not com:
        raise SingleClassSubset(f"{name} subset has no {'incompatible' if not inc else 'compatible'} entries")
    minority = inc if len(inc) < len(com) else com
    deficit = abs(len(inc) - len(com))
    cycle = [minority[i] for i in rng.permutation(len(minority))]
    return list(subset) + [cycle[k % len(cycle)] for k in range(deficit)]


def balanced_split(entries: Sequence[BlendEntry], spec: SplitSpec):
    """Pair-disjoint split followed by per-subset minority oversampling to 50/50."""
    if spec.mode != "balanced":
        raise ValueError("balanced_split needs a balanced-mode SplitSpec")
    by_class = {label: {pair_key(e) for e in entries if e.label == label} for label in LABELS}
    for label, pairs in by_class.items():
        if len(pairs) < 2:
            raise TooFewPairs(f"need at least 2 distinct pairs labelled {label}, got {len(pairs)}")
    rng = np.random.default_rng(spec.seed)
    parts = grouped_split(entries, spec, rng)
    return tuple(_oversample(part, rng, name) for part, name in zip(parts, ("train", "valid", "test")))


def split_entries(entries: Sequence[BlendEntry], spec: SplitSpec):
    return random_split(entries, spec) if spec.mode == "random" else balanced_split(entries, spec)


def class_rates(subset: Sequence[BlendEntry]) -> dict:
    counts = Counter(e.label for e in subset)
    n = len(subset)
    return {
        "count": n,
        "incompatible": counts[INCOMPATIBLE],
        "compatible": counts[COMPATIBLE],
        "incompatible_rate": round(100.0 * counts[INCOMPATIBLE] / n, 1) if n else None,
        "compatible_rate": round(100.0 * counts[COMPATIBLE] / n, 1) if n else None,
    }


def write_split(outdir: str | Path, parts, spec: SplitSpec, extra: dict | None = None) -> dict:
    """Write ``train.csv``/``valid.csv``/``test.csv`` plus ``manifest.json``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    names = ("train", "valid", "test")
    for name, part in zip(names, parts):
        write_entries(outdir / f"{name}.csv", part)
    manifest = {
        "mode": spec.mode,
        "seed": spec.seed,
        "ratios": list(spec.ratios),
        "total": sum(len(p) for p in parts),
        "subsets": {name: class_rates(part) for name, part in zip(names, parts)},
    }
    if extra:
        manifest.update(extra)
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


_GRID = 2.0**32


def snap_fraction(x: float) -> float:
    """Round to a multiple of 2**-32 so that ``1 - x`` is computed exactly."""
    return float(np.round(float(x) * _GRID) / _GRID)


def vectorize_fingerprints(
    fa: Fingerprint, fb: Fingerprint, fraction_a: float, incompatible: bool = False, lam: float = 10.0
) -> ModelInput:
    """Put the pair in canonical order; composition follows the polymer placed first.

    For equal fingerprints the composition is folded to ``min(x, 1 - x)``.
    """
    x = snap_fraction(fraction_a)
    if canonical_pair_order(fa, fb) == "swap":
        fa, fb, x = fb, fa, 1.0 - x
    elif fa == fb:
        # no order to pick between equal fingerprints; fold x and 1 - x together
        x = min(x, 1.0 - x)
    return ModelInput(fa, fb, x, float(lam) if incompatible else 0.0)


def vectorize(e: BlendEntry, lam: float = 10.0, radius: int = 2, width: int = 2048) -> ModelInput:
    fa = fingerprint_smiles(e.smiles_a, radius, width)
    fb = fingerprint_smiles(e.smiles_b, radius, width)
    return vectorize_fingerprints(fa, fb, e.fraction_a, e.incompatible, lam)


def stack_inputs(inputs: Sequence[ModelInput]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Rows of (first fingerprints, second fingerprints, composition column, target column)."""
    xa = np.array([i.fp_first.bits for i in inputs], dtype=np.float64)
    xb = np.array([i.fp_second.bits for i in inputs], dtype=np.float64)
    comp = np.array([[i.composition] for i in inputs], dtype=np.float64)
    y = np.array([[i.target] for i in inputs], dtype=np.float64)
    return xa, xb, comp, y


def synthetic_rule(similarity: float, fraction_a: float, t0: float, alpha: float) -> bool:
    """True (compatible) iff similarity beats a composition-dependent threshold."""
    return similarity > t0 - alpha * abs(fraction_a - 0.5)


def gen_synthetic(
    n: int,
    seed: int,
    pool: Sequence[str] = DEFAULT_POOL[:12],
    t0: float = 0.25,
    alpha: float = 0.3,
    radius: int = 2,
    width: int = 2048,
    rule: Callable[[Fingerprint, Fingerprint, float], bool] | None = None,
) -> list[BlendEntry]:
    """Draw random (pair, fraction) entries labelled by a known rule.

    The default rule is ``tanimoto(fa, fb) > t0 - alpha * |fraction_a - 0.5|``.
    A custom ``rule(fp_a, fp_b, fraction_a) -> compatible?`` may replace it.
    Fractions are drawn uniformly and rounded to two decimals.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < t0 < 1.0:
        raise ValueError("t0 must lie in (0, 1)")
    units = list(dict.fromkeys(pool))
    for s in units:
        parse_smiles(s)
    if len(units) < 8:
        raise PoolTooSmall(f"pool needs at least 8 distinct units, got {len(units)}")
    fps = [fingerprint_smiles(s, radius, width) for s in units]
    rng = np.random.default_rng(seed)
    if rule is None:
        tag = f"synthetic;t0={t0};alpha={alpha};seed={seed}"
    else:
        tag = f"synthetic;rule={getattr(rule, '__name__', 'custom')};seed={seed}"
    out = []
    for _ in range(n):
        i, j = rng.integers(len(units), size=2)
        frac = round(float(rng.uniform()), 2)
        if rule is None:
            ok = synthetic_rule(tanimoto(fps[i], fps[j]), frac, t0, alpha)
        else:
            ok = bool(rule(fps[i], fps[j], frac))
        out.append(BlendEntry(units[i], units[j], frac, COMPATIBLE if ok else INCOMPATIBLE, tag))
    return out

"""Shapley attribution of a blend score to fingerprint bits and composition.

A *feature* is ``("first", bit)``, ``("second", bit)`` or ``("composition", 0)``.
Switching a feature off replaces it with the baseline value: the baseline
fingerprint bit (all-zero unless a background set is given, in which case the
background mean) and the background-mean composition (0.5 without background).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .chem import Molecule
from .data import ModelInput, vectorize_fingerprints
from .zoo import ModelInstance, Sweep, composition_sweep, polymer_fingerprint, predict_arrays

__all__ = [
    "Feature",
    "AttributionRequest",
    "AttributionReport",
    "StructureComparison",
    "EmptyFeatures",
    "TooManyFeatures",
    "default_features",
    "shapley_sample",
    "exact_shapley",
    "compare_structures",
]

Feature = tuple[str, int]
ScoreFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

MAX_EXACT_FEATURES = 20
_CHUNK_ROWS = 4096


class EmptyFeatures(ValueError):
    pass


class TooManyFeatures(ValueError):
    pass


@dataclass
class AttributionRequest:
    model: ModelInstance | ScoreFn
    instance: ModelInput
    background: Sequence[ModelInput] | None = None
    features: Sequence[Feature] | None = None
    n_samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass
class AttributionReport:
    features: list[Feature]
    values: np.ndarray
    baseline_value: float
    instance_value: float
    residual: float
    n_samples: int | None = None

    def value_of(self, feature: Feature) -> float:
        try:
            return float(self.values[self.features.index(tuple(feature))])
        except ValueError:
            return 0.0

    def bit_value(self, bit: int) -> float:
        """Combined attribution of one fingerprint dimension across both polymers."""
        return self.value_of(("first", bit)) + self.value_of(("second", bit))

    def as_dict(self) -> dict:
        return {
            "features": [{"slot": s, "index": i, "phi": float(v)} for (s, i), v in zip(self.features, self.values)],
            "baseline_value": self.baseline_value,
            "instance_value": self.instance_value,
            "residual": self.residual,
            "n_samples": self.n_samples,
        }


def _score_fn(model) -> ScoreFn:
    if isinstance(model, ModelInstance):
        return lambda xa, xb, comp: predict_arrays(model, xa, xb, comp)
    return model


def _flatten(inp: ModelInput) -> np.ndarray:
    return np.concatenate([inp.fp_first.bits, inp.fp_second.bits, [inp.composition]]).astype(np.float64)


def _baseline(instance: ModelInput, background: Sequence[ModelInput] | None) -> np.ndarray:
    width = instance.fp_first.width
    if not background:
        base = np.zeros(2 * width + 1)
        base[-1] = 0.5
        return base
    return np.mean([_flatten(b) for b in background], axis=0)


def default_features(instance: ModelInput) -> list[Feature]:
    """Set bits of either polymer plus the composition slot."""
    feats: list[Feature] = [("first", b) for b in instance.fp_first.on_bits()]
    feats += [("second", b) for b in instance.fp_second.on_bits()]
    feats.append(("composition", 0))
    return feats


def _positions(features: Sequence[Feature], width: int) -> np.ndarray:
    offset = {"first": 0, "second": width, "composition": 2 * width}
    pos = []
    for slot, idx in features:
        if slot not in offset or (slot != "composition" and not 0 <= idx < width):
            raise ValueError(f"bad feature {(slot, idx)!r}")
        pos.append(offset[slot] + (0 if slot == "composition" else idx))
    if len(set(pos)) != len(pos):
        raise ValueError("duplicate features")
    return np.array(pos, dtype=np.int64)


class _Game:
    """Coalition value function over the chosen features."""

    def __init__(self, req: AttributionRequest):
        self.features = list(default_features(req.instance) if req.features is None else map(tuple, req.features))
        if not self.features:
            raise EmptyFeatures("no features to attribute")
        self.width = req.instance.fp_first.width
        self.fn = _score_fn(req.model)
        self.x = _flatten(req.instance)
        self.b = _baseline(req.instance, req.background)
        self.pos = _positions(self.features, self.width)

    def values(self, masks: np.ndarray) -> np.ndarray:
        """Scores for boolean coalition masks of shape ``(rows, n_features)``."""
        out = np.empty(masks.shape[0])
        W = self.width
        for start in range(0, masks.shape[0], _CHUNK_ROWS):
            m = masks[start : start + _CHUNK_ROWS]
            rows = np.tile(self.b, (m.shape[0], 1))
            rows[:, self.pos] = np.where(m, self.x[self.pos], self.b[self.pos])
            out[start : start + m.shape[0]] = np.asarray(
                self.fn(rows[:, :W], rows[:, W : 2 * W], rows[:, 2 * W :]), dtype=np.float64
            ).reshape(-1)
        return out

    def endpoints(self) -> tuple[float, float]:
        m = len(self.features)
        v = self.values(np.array([np.zeros(m, bool), np.ones(m, bool)]))
        return float(v[0]), float(v[1])


def shapley_sample(req: AttributionRequest) -> AttributionReport:
    """Monte Carlo permutation estimate of Shapley values.

    Each sampled ordering adds features one at a time; a feature's marginal
    contribution is the score change when it joins.  Per permutation these
    telescope to ``f(x) - f(baseline)``, so the residual only carries
    floating-point error.
    """
    game = _Game(req)
    m = len(game.features)
    rng = np.random.default_rng(req.seed)
    perms = np.array([rng.permutation(m) for _ in range(req.n_samples)])
    phi = np.zeros(m)
    per_chunk = max(1, _CHUNK_ROWS // (m + 1))
    levels = np.arange(m + 1)[None, :, None]
    for start in range(0, req.n_samples, per_chunk):
        block = perms[start : start + per_chunk]
        # rank of each feature in its permutation; step k switches on ranks < k
        ranks = np.argsort(block, axis=1)
        masks = ranks[:, None, :] < levels
        vals = game.values(masks.reshape(-1, m)).reshape(block.shape[0], m + 1)
        deltas = np.diff(vals, axis=1)
        for r in range(block.shape[0]):
            phi[block[r]] += deltas[r]
    phi /= req.n_samples
    base, full = game.endpoints()
    return AttributionReport(game.features, phi, base, full, abs(full - base - float(phi.sum())), req.n_samples)


def exact_shapley(
    model: ModelInstance | ScoreFn,
    instance: ModelInput,
    background: Sequence[ModelInput] | None = None,
    features: Sequence[Feature] | None = None,
) -> AttributionReport:
    """Shapley values by enumerating all ``2**m`` coalitions (``m <= 20``)."""
    game = _Game(AttributionRequest(model, instance, background, features, 1, 0))
    m = len(game.features)
    if m > MAX_EXACT_FEATURES:
        raise TooManyFeatures(f"{m} features exceeds the exact-enumeration limit of {MAX_EXACT_FEATURES}")
    codes = np.arange(1 << m, dtype=np.int64)
    masks = ((codes[:, None] >> np.arange(m)) & 1).astype(bool)
    v = game.values(masks)
    sizes = masks.sum(axis=1)
    weight = np.array([math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m) for s in range(m)])
    phi = np.zeros(m)
    for j in range(m):
        without = codes[~masks[:, j]]
        phi[j] = float(np.sum(weight[sizes[without]] * (v[without | (1 << j)] - v[without])))
    base, full = float(v[0]), float(v[-1])
    return AttributionReport(game.features, phi, base, full, abs(full - base - float(phi.sum())))


@dataclass
class StructureComparison:
    dimension: int
    normal_sweep: Sweep
    lacking_sweep: Sweep
    compositions: list[float]
    normal_phi: list[float]
    lacking_phi: list[float]
    normal_residuals: list[float] = field(default_factory=list)
    lacking_residuals: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "criterion": self.normal_sweep.criterion,
            "normal_sweep": self.normal_sweep.rows(),
            "lacking_sweep": self.lacking_sweep.rows(),
            "compositions": self.compositions,
            "normal_phi": self.normal_phi,
            "lacking_phi": self.lacking_phi,
            "normal_residuals": self.normal_residuals,
            "lacking_residuals": self.lacking_residuals,
        }


def compare_structures(
    model: ModelInstance,
    normal: tuple[str | Molecule, str | Molecule],
    lacking: tuple[str | Molecule, str | Molecule],
    dimension: int,
    steps: int = 21,
    n_compositions: int = 20,
    n_samples: int = 200,
    seed: int = 0,
) -> StructureComparison:
    """Sweep both blends over composition and collect the named bit's attributions.

    ``lacking`` is typically built with :func:`chem.delete_atoms`.  The same
    seeded compositions and permutation seeds are used for both blends.
    """
    fps = {
        key: (polymer_fingerprint(model, pair[0]), polymer_fingerprint(model, pair[1]))
        for key, pair in (("normal", normal), ("lacking", lacking))
    }
    if not any(fp.bits[dimension] for pair in fps.values() for fp in pair):
        raise ValueError(f"bit {dimension} is set in neither blend")
    rng = np.random.default_rng(seed)
    compositions = sorted(round(float(x), 6) for x in rng.uniform(0.0, 1.0, n_compositions))
    sample_seeds = rng.integers(0, 2**32, size=n_compositions)
    out = {}
    for key, (fa, fb) in fps.items():
        phis, residuals = [], []
        for x, s in zip(compositions, sample_seeds):
            inst = vectorize_fingerprints(fa, fb, x, False, model.lam)
            rep = shapley_sample(AttributionRequest(model, inst, n_samples=n_samples, seed=int(s)))
            phis.append(rep.bit_value(dimension))
            residuals.append(rep.residual)
        out[key] = (phis, residuals)
    return StructureComparison(
        dimension,
        composition_sweep(model, *normal, steps=steps),
        composition_sweep(model, *lacking, steps=steps),
        compositions,
        out["normal"][0],
        out["lacking"][0],
        out["normal"][1],
        out["lacking"][1],
    )

"""Half Dense Difference Network, its ablations and the competitor networks.

All variants map a pair of fingerprints plus the composition of the first
polymer to one scalar score; a score at or above the model's criterion
means *incompatible*.  Siamese variants push both polymers through the same
feature-extraction weights.

Variant summary (``L`` dense layers of width ``F``):

``HDDN``          shared projection + additive dense layers, ``|f(A) - f(B)|``,
                  composition appended, plain decision stack
``HDDN-noc``      as HDDN without the composition input
``HDDN-nodense``  plain chained layers instead of summed inputs
``HDDN-nodiff``   fingerprints concatenated before one dense extractor
``HDDN-noabs``    signed difference ``f(A) - f(B)``
``MLP``           concatenated fingerprints and composition through a plain stack
``CDN``           dense layers fed by concatenation; feature is all layers joined
``DN``            additive dense connections in the decision stack as well
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from . import autodiff as ad
from .chem import Fingerprint, Molecule, ecfp_fingerprint, fingerprint_smiles
from .data import COMPATIBLE, INCOMPATIBLE, ModelInput, stack_inputs, vectorize_fingerprints
from .stats import ConfusionMatrix, MetricsReport, confusion, metrics

__all__ = [
    "VARIANTS",
    "SIAMESE",
    "Dims",
    "ModelInstance",
    "TrainConfig",
    "TrainHistory",
    "Sweep",
    "BadDims",
    "UnknownVariant",
    "EmptySet",
    "DivergedLoss",
    "CheckpointError",
    "BadMagic",
    "VersionMismatch",
    "CorruptPayload",
    "build_model",
    "forward",
    "predict",
    "predict_arrays",
    "classify",
    "train",
    "evaluate",
    "save_checkpoint",
    "load_checkpoint",
    "composition_sweep",
    "polymer_fingerprint",
    "default_learning_rate",
]

VARIANTS = ("HDDN", "HDDN-noc", "HDDN-nodense", "HDDN-nodiff", "HDDN-noabs", "MLP", "CDN", "DN")
SIAMESE = ("HDDN", "HDDN-noc", "HDDN-nodense", "HDDN-noabs", "CDN", "DN")

CHECKPOINT_MAGIC = "HDDN"
CHECKPOINT_VERSION = 1


class BadDims(ValueError):
    pass


class UnknownVariant(ValueError):
    pass


class EmptySet(ValueError):
    pass


class DivergedLoss(FloatingPointError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite training loss in epoch {epoch}")
        self.epoch = epoch


class CheckpointError(ValueError):
    pass


class BadMagic(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


class CorruptPayload(CheckpointError):
    pass


@dataclass(frozen=True)
class Dims:
    fp_width: int = 2048
    feature_width: int = 256
    n_dense_layers: int = 3
    decision_widths: tuple[int, ...] = (64, 16)

    def __post_init__(self):
        object.__setattr__(self, "decision_widths", tuple(int(w) for w in self.decision_widths))
        if min(self.fp_width, self.feature_width, self.n_dense_layers) < 1:
            raise BadDims(f"dims must be positive: {self}")
        if any(w < 1 for w in self.decision_widths):
            raise BadDims(f"decision widths must be positive: {self.decision_widths}")


@dataclass
class ModelInstance:
    variant: str
    dims: Dims
    weights: dict[str, np.ndarray]
    lam: float = 10.0
    criterion: float = 5.0
    radius: int = 2

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise UnknownVariant(self.variant)
        if not self.criterion > 0:
            raise ValueError("criterion must be positive")
        expected = _param_shapes(self.variant, self.dims)
        if set(expected) != set(self.weights):
            raise BadDims(f"weight names {sorted(self.weights)} do not match {self.variant}")
        for name, shape in expected.items():
            if self.weights[name].shape != shape:
                raise BadDims(f"{name} has shape {self.weights[name].shape}, expected {shape}")

    def copy(self) -> ModelInstance:
        return ModelInstance(
            self.variant, self.dims, {k: v.copy() for k, v in self.weights.items()}, self.lam, self.criterion, self.radius
        )


def _param_shapes(variant: str, dims: Dims) -> dict[str, tuple[int, int]]:
    W, F, L = dims.fp_width, dims.feature_width, dims.n_dense_layers
    shapes: dict[str, tuple[int, int]] = {}

    def lin(name: str, fan_in: int, fan_out: int) -> None:
        shapes[name + ".w"] = (fan_in, fan_out)
        shapes[name + ".b"] = (1, fan_out)

    in_width = {"HDDN-nodiff": 2 * W, "MLP": 2 * W + 1}.get(variant, W)
    lin("feat.proj", in_width, F)
    for l in range(1, L + 1):
        lin(f"feat.dense{l}", l * F if variant == "CDN" else F, F)
    feature = (L + 1) * F if variant == "CDN" else F
    width = feature + (0 if variant in ("HDDN-noc", "MLP") else 1)
    if variant == "DN":
        hidden = [dims.decision_widths[0]] * len(dims.decision_widths)
    else:
        hidden = list(dims.decision_widths)
    for k, h in enumerate(hidden, start=1):
        lin(f"dec.{k}", width, h)
        width = h
    lin("dec.out", width, 1)
    return shapes


def build_model(
    variant: str,
    dims: Dims = Dims(),
    seed: int = 0,
    lam: float = 10.0,
    criterion: float | None = None,
    radius: int = 2,
) -> ModelInstance:
    """Allocate weights drawn uniformly from ``±1/sqrt(fan_in)``."""
    if variant not in VARIANTS:
        raise UnknownVariant(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if not isinstance(dims, Dims):
        dims = Dims(*dims)
    rng = np.random.default_rng(seed)
    shapes = _param_shapes(variant, dims)
    weights = {}
    for name, shape in shapes.items():
        fan_in = shapes[name[:-2] + ".w"][0]
        bound = 1.0 / math.sqrt(fan_in)
        weights[name] = rng.uniform(-bound, bound, size=shape)
    crit = lam / 2 if criterion is None else criterion
    return ModelInstance(variant, dims, weights, float(lam), float(crit), radius)


def _extract(tape: ad.Tape, x: int, p: dict[str, int], variant: str, L: int) -> int:
    hs = [tape.relu(tape.linear(x, p["feat.proj.w"], p["feat.proj.b"]))]
    for l in range(1, L + 1):
        if variant in ("HDDN-nodense", "MLP"):
            inp = hs[-1]
        elif variant == "CDN":
            inp = tape.concat(*hs)
        else:
            inp = tape.add(*hs)
        hs.append(tape.relu(tape.linear(inp, p[f"feat.dense{l}.w"], p[f"feat.dense{l}.b"])))
    return tape.concat(*hs) if variant == "CDN" else hs[-1]


def _decide(tape: ad.Tape, z: int, p: dict[str, int], variant: str, n_hidden: int) -> int:
    gs: list[int] = []
    for k in range(1, n_hidden + 1):
        if not gs:
            inp = z
        elif variant == "DN":
            inp = tape.add(*gs)
        else:
            inp = gs[-1]
        gs.append(tape.relu(tape.linear(inp, p[f"dec.{k}.w"], p[f"dec.{k}.b"])))
    return tape.linear(gs[-1] if gs else z, p["dec.out.w"], p["dec.out.b"])


def forward(model: ModelInstance, xa, xb, comp) -> tuple[np.ndarray, ad.Tape]:
    """Run the network on batch arrays; returns ``(scores column, tape)``.

    Leaves are named after the weights plus ``input_a``, ``input_b`` and
    ``composition`` so :func:`autodiff.model_backward` yields input gradients too.
    """
    W = model.dims.fp_width
    xa, xb = np.atleast_2d(np.asarray(xa, dtype=np.float64)), np.atleast_2d(np.asarray(xb, dtype=np.float64))
    comp = np.asarray(comp, dtype=np.float64).reshape(-1, 1)
    if xa.shape[1] != W or xb.shape[1] != W:
        raise ad.ShapeMismatch(f"model expects fingerprints of width {W}, got {xa.shape[1]} and {xb.shape[1]}")
    if not xa.shape[0] == xb.shape[0] == comp.shape[0]:
        raise ad.ShapeMismatch("batch sizes differ between inputs")

    tape = ad.Tape()
    a = tape.leaf(xa, "input_a")
    b = tape.leaf(xb, "input_b")
    c = tape.leaf(comp, "composition")
    p = {name: tape.leaf(value, name) for name, value in model.weights.items()}
    v, L = model.variant, model.dims.n_dense_layers

    if v == "MLP":
        z = _extract(tape, tape.concat(a, b, c), p, v, L)
    elif v == "HDDN-nodiff":
        z = tape.concat(_extract(tape, tape.concat(a, b), p, v, L), c)
    else:
        fa, fb = _extract(tape, a, p, v, L), _extract(tape, b, p, v, L)
        d = tape.sub(fa, fb)
        if v != "HDDN-noabs":
            d = tape.abs(d)
        z = d if v == "HDDN-noc" else tape.concat(d, c)
    out = _decide(tape, z, p, v, len(model.dims.decision_widths))
    return tape.value(out), tape


def predict_arrays(model: ModelInstance, xa, xb, comp) -> np.ndarray:
    out, _ = forward(model, xa, xb, comp)
    return out[:, 0]


def predict(model: ModelInstance, inp: ModelInput) -> float:
    """Raw network score ("prediction difference") for one input."""
    if inp.fp_first.width != model.dims.fp_width:
        raise ad.ShapeMismatch(f"input width {inp.fp_first.width} != model width {model.dims.fp_width}")
    return float(predict_arrays(model, inp.fp_first.bits, inp.fp_second.bits, [inp.composition])[0])


def classify(score: float, criterion: float = 5.0) -> Literal["compatible", "incompatible"]:
    """Scores at or above the criterion are incompatible."""
    if not criterion > 0:
        raise ValueError("criterion must be positive")
    return INCOMPATIBLE if score >= criterion else COMPATIBLE


def default_learning_rate(mode: str) -> float:
    return 1e-4 if mode == "balanced" else 5e-5


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 20
    learning_rate: float = 1e-4
    lam: float = 10.0
    seed: int = 0
    checkpoint_selection: str = "best-valid-accuracy"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.checkpoint_selection not in ("best-valid-accuracy", "last"):
            raise ValueError(f"unknown checkpoint selection {self.checkpoint_selection!r}")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    valid_accuracy: list[float] = field(default_factory=list)
    test_accuracy: list[float] | None = None
    selected_epoch: int | None = None

    def rows(self) -> list[dict]:
        out = []
        for i, loss in enumerate(self.train_loss):
            row = {
                "epoch": i + 1,
                "train_loss": loss,
                "train_accuracy": self.train_accuracy[i],
                "valid_accuracy": self.valid_accuracy[i],
            }
            if self.test_accuracy is not None:
                row["test_accuracy"] = self.test_accuracy[i]
            out.append(row)
        return out


def _accuracy(model: ModelInstance, arrays) -> float:
    xa, xb, comp, y = arrays
    scores = predict_arrays(model, xa, xb, comp)
    pred_bad = scores >= model.criterion
    truth_bad = y[:, 0] >= model.criterion
    return float(np.mean(pred_bad == truth_bad))


def train(
    model: ModelInstance,
    train_set: Sequence[ModelInput],
    valid_set: Sequence[ModelInput],
    cfg: TrainConfig = TrainConfig(),
    test_set: Sequence[ModelInput] | None = None,
) -> tuple[ModelInstance, TrainHistory]:
    """Mini-batch Adam on MSE against {0, lambda} targets.

    The returned weights come from the epoch with the best validation
    accuracy (earliest epoch on ties).  ``model`` itself is not modified.
    """
    if not train_set or not valid_set:
        raise EmptySet("training and validation sets must be non-empty")
    width = model.dims.fp_width
    for inp in (*train_set[:1], *valid_set[:1]):
        if inp.fp_first.width != width:
            raise ad.ShapeMismatch(f"inputs have width {inp.fp_first.width}, model expects {width}")

    work = model.copy()
    history = TrainHistory(test_accuracy=[] if test_set else None)
    if cfg.epochs == 0:
        return work, history

    tr = stack_inputs(train_set)
    va = stack_inputs(valid_set)
    te = stack_inputs(test_set) if test_set else None
    rng = np.random.default_rng(cfg.seed)
    state = ad.AdamState()
    n = len(train_set)
    best_acc, best_weights = -1.0, None

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            out, tape = forward(work, tr[0][idx], tr[1][idx], tr[2][idx])
            loss, grad = ad.mse_loss(out, tr[3][idx])
            if not math.isfinite(loss):
                raise DivergedLoss(epoch)
            total += loss * len(idx)
            grads = ad.model_backward(tape, grad)
            ad.adam_step(work.weights, grads, state, cfg.learning_rate)
        history.train_loss.append(total / n)
        history.train_accuracy.append(_accuracy(work, tr))
        acc = _accuracy(work, va)
        history.valid_accuracy.append(acc)
        if te is not None:
            history.test_accuracy.append(_accuracy(work, te))
        if cfg.checkpoint_selection == "last" or acc > best_acc:
            best_acc = acc
            best_weights = {k: v.copy() for k, v in work.weights.items()}
            history.selected_epoch = epoch

    work.weights = best_weights
    return work, history


@dataclass(frozen=True)
class EvalResult:
    scores: np.ndarray
    predictions: list[str]
    labels: list[str]
    cm: ConfusionMatrix
    report: MetricsReport


def evaluate(model: ModelInstance, inputs: Sequence[ModelInput]) -> EvalResult:
    if not inputs:
        raise EmptySet("nothing to evaluate")
    xa, xb, comp, y = stack_inputs(inputs)
    scores = predict_arrays(model, xa, xb, comp)
    mse = float(np.mean((scores - y[:, 0]) ** 2))
    preds = [classify(s, model.criterion) for s in scores]
    labels = [INCOMPATIBLE if t >= model.criterion else COMPATIBLE for t in y[:, 0]]
    cm = confusion(preds, labels)
    return EvalResult(scores, preds, labels, cm, metrics(cm, mse))


def checkpoint_dict(model: ModelInstance) -> dict:
    return {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "variant": model.variant,
        "dims": {
            "fp_width": model.dims.fp_width,
            "feature_width": model.dims.feature_width,
            "n_dense_layers": model.dims.n_dense_layers,
            "decision_widths": list(model.dims.decision_widths),
        },
        "radius": model.radius,
        "lambda": model.lam,
        "criterion": model.criterion,
        "weights": {
            name: {"shape": list(w.shape), "data": [float(x) for x in w.reshape(-1)]}
            for name, w in sorted(model.weights.items())
        },
    }


def save_checkpoint(model: ModelInstance, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # json writes floats with repr(), which round-trips exactly
    path.write_text(json.dumps(checkpoint_dict(model), sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> ModelInstance:
    try:
        doc = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptPayload(f"{path}: not a valid checkpoint document ({exc})") from None
    if not isinstance(doc, dict) or doc.get("magic") != CHECKPOINT_MAGIC:
        raise BadMagic(f"{path}: missing {CHECKPOINT_MAGIC!r} magic")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatch(f"{path}: version {doc.get('version')!r}, expected {CHECKPOINT_VERSION}")
    try:
        dims = Dims(**doc["dims"])
        weights = {}
        for name, entry in doc["weights"].items():
            arr = np.array(entry["data"], dtype=np.float64)
            weights[name] = arr.reshape(entry["shape"])
        return ModelInstance(
            doc["variant"], dims, weights, float(doc["lambda"]), float(doc["criterion"]), int(doc.get("radius", 2))
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptPayload(f"{path}: {exc}") from None


@dataclass(frozen=True)
class Sweep:
    fractions: tuple[float, ...]
    scores: tuple[float, ...]
    criterion: float

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.fractions, self.scores))


def polymer_fingerprint(model: ModelInstance, polymer: str | Molecule | Fingerprint) -> Fingerprint:
    """Fingerprint a SMILES string or parsed/edited molecule with the model's settings."""
    if isinstance(polymer, Fingerprint):
        fp = polymer
    elif isinstance(polymer, Molecule):
        fp = ecfp_fingerprint(polymer, model.radius, model.dims.fp_width)
    else:
        fp = fingerprint_smiles(polymer, model.radius, model.dims.fp_width)
    if fp.width != model.dims.fp_width:
        raise ad.ShapeMismatch(f"fingerprint width {fp.width} != model width {model.dims.fp_width}")
    return fp


def composition_sweep(
    model: ModelInstance, smiles_a: str | Molecule, smiles_b: str | Molecule, steps: int = 21
) -> Sweep:
    """Scores at ``fraction_a = k / (steps - 1)`` for ``k = 0 .. steps - 1``."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    fa, fb = polymer_fingerprint(model, smiles_a), polymer_fingerprint(model, smiles_b)
    fractions = tuple(k / (steps - 1) for k in range(steps))
    inputs = [vectorize_fingerprints(fa, fb, x, False, model.lam) for x in fractions]
    xa, xb, comp, _ = stack_inputs(inputs)
    scores = predict_arrays(model, xa, xb, comp)
    return Sweep(fractions, tuple(float(s) for s in scores), model.criterion)

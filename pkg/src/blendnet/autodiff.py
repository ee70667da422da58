"""Small reverse-mode differentiation core for dense networks.

Everything is a 2-D float64 ``numpy`` array (rows are batch members).  A
:class:`Tape` records each operation together with a closure mapping the
output gradient to parent gradients; :func:`model_backward` replays it in
reverse.  Leaves carry names so gradients come back keyed like the weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "ShapeMismatch",
    "TapeMismatch",
    "Tape",
    "LayerSpec",
    "AdamState",
    "linear_forward",
    "model_forward",
    "model_backward",
    "mse_loss",
    "adam_step",
    "finite_diff_grad",
    "max_relative_error",
    "kink_distance",
]


class ShapeMismatch(ValueError):
    pass


class TapeMismatch(ValueError):
    pass


def _as2d(x) -> np.ndarray:
    if type(x) is np.ndarray and x.ndim == 2 and x.dtype == np.float64:
        return x
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D tensor, got shape {a.shape}")
    return a


def linear_forward(x, w, b) -> np.ndarray:
    """``x @ w + b`` with ``b`` broadcast over rows."""
    x, w = _as2d(x), _as2d(w)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if x.shape[1] != w.shape[0]:
        raise ShapeMismatch(f"x has {x.shape[1]} columns but w has {w.shape[0]} rows")
    if b.shape[0] != w.shape[1]:
        raise ShapeMismatch(f"bias length {b.shape[0]} != {w.shape[1]} outputs")
    return x @ w + b


@dataclass
class _Node:
    value: np.ndarray
    parents: tuple[int, ...] = ()
    grad_fn: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None = None
    name: str | None = None
    op: str = "leaf"


class Tape:
    """Records a forward computation; node handles are plain ints."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def _push(self, value, parents=(), grad_fn=None, name=None, op="leaf") -> int:
        self.nodes.append(_Node(value, tuple(parents), grad_fn, name, op))
        return len(self.nodes) - 1

    def value(self, i: int) -> np.ndarray:
        return self.nodes[i].value

    @property
    def output(self) -> np.ndarray:
        return self.nodes[-1].value

    def leaf(self, value, name: str) -> int:
        return self._push(_as2d(value), name=name)

    def linear(self, x: int, w: int, b: int) -> int:
        xv, wv, bv = self.nodes[x].value, self.nodes[w].value, self.nodes[b].value
        if xv.shape[1] != wv.shape[0] or bv.shape != (1, wv.shape[1]):
            raise ShapeMismatch(f"linear: x {xv.shape}, w {wv.shape}, b {bv.shape}")
        out = xv @ wv + bv

        def grad_fn(g):
            return g @ wv.T, xv.T @ g, g.sum(axis=0, keepdims=True)

        return self._push(out, (x, w, b), grad_fn, op="linear")

    def relu(self, x: int) -> int:
        xv = self.nodes[x].value
        mask = xv > 0
        return self._push(xv * mask, (x,), lambda g: (g * mask,), op="relu")

    def abs(self, x: int) -> int:
        xv = self.value(x)
        # sign(0) == 0 fixes the subgradient at the kink
        sign = np.sign(xv)
        return self._push(np.abs(xv), (x,), lambda g: (g * sign,), op="abs")

    def add(self, *xs: int) -> int:
        if len(xs) == 1:
            return xs[0]
        shapes = {self.value(x).shape for x in xs}
        if len(shapes) != 1:
            raise ShapeMismatch(f"add needs equal shapes, got {sorted(shapes)}")
        out = self.value(xs[0]).copy()
        for x in xs[1:]:
            out = out + self.value(x)
        return self._push(out, xs, lambda g: tuple(g for _ in xs), op="add")

    def sub(self, a: int, b: int) -> int:
        av, bv = self.value(a), self.value(b)
        if av.shape != bv.shape:
            raise ShapeMismatch(f"sub needs equal shapes, got {av.shape} and {bv.shape}")
        return self._push(av - bv, (a, b), lambda g: (g, -g), op="sub")

    def concat(self, *xs: int) -> int:
        vals = [self.value(x) for x in xs]
        if len({v.shape[0] for v in vals}) != 1:
            raise ShapeMismatch("concat needs equal row counts")
        cuts = np.cumsum([v.shape[1] for v in vals])[:-1]
        return self._push(np.concatenate(vals, axis=1), xs, lambda g: tuple(np.split(g, cuts, axis=1)), op="concat")


def kink_distance(tape: Tape) -> np.ndarray:
    """Per-row distance of the nearest relu/abs input from its kink at 0.

    Exact zeros are skipped: they come from units that are dead on both sides
    of a difference and stay zero under small perturbations.
    """
    rows = tape.output.shape[0]
    dist = np.full(rows, np.inf)
    for node in tape.nodes:
        if node.op in ("relu", "abs"):
            v = np.abs(tape.nodes[node.parents[0]].value)
            dist = np.minimum(dist, np.min(np.where(v == 0.0, np.inf, v), axis=1))
    return dist


def model_backward(tape: Tape, output_grad) -> dict[str, np.ndarray]:
    """Exact gradients of ``sum(output * output_grad)`` for every named leaf."""
    if not tape.nodes:
        raise TapeMismatch("empty tape")
    g_out = _as2d(output_grad)
    if g_out.shape != tape.output.shape:
        raise TapeMismatch(f"output grad shape {g_out.shape} != output shape {tape.output.shape}")
    grads: list[np.ndarray | None] = [None] * len(tape.nodes)
    grads[-1] = g_out
    named: dict[str, np.ndarray] = {}
    for i in range(len(tape.nodes) - 1, -1, -1):
        g = grads[i]
        node = tape.nodes[i]
        if g is None:
            if node.name is not None:
                named.setdefault(node.name, np.zeros_like(node.value))
            continue
        if node.grad_fn is None:
            if node.name is not None:
                # a leaf may be reachable via several paths; accumulate by name
                named[node.name] = named.get(node.name, 0) + g
            continue
        for parent, pg in zip(node.parents, node.grad_fn(g)):
            grads[parent] = pg if grads[parent] is None else grads[parent] + pg
    return named


@dataclass(frozen=True)
class LayerSpec:
    """One step of a sequential network.

    ``linear`` reads ``weights[name + ".w"]`` and ``weights[name + ".b"]``.
    ``add`` and ``concat`` combine earlier activations listed in ``sources``
    (0 is the network input, ``k`` the output of layer ``k``).
    """

    kind: str
    in_dim: int
    out_dim: int
    name: str = ""
    sources: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("linear", "relu", "abs", "add", "concat"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError("layer dims must be positive")
        if self.kind in ("relu", "abs", "add") and self.in_dim != self.out_dim:
            raise ValueError(f"{self.kind} layers preserve dimension")


def model_forward(
    layers: Sequence[LayerSpec], weights: Mapping[str, np.ndarray], x
) -> tuple[np.ndarray, Tape]:
    tape = Tape()
    acts = [tape.leaf(x, "input")]
    leaves: dict[str, int] = {}

    def param(key: str) -> int:
        if key not in leaves:
            leaves[key] = tape.leaf(weights[key], key)
        return leaves[key]

    for k, layer in enumerate(layers, start=1):
        cur = acts[-1]
        width = tape.value(cur).shape[1]
        if layer.kind in ("add", "concat"):
            srcs = [acts[s] for s in layer.sources] or [cur]
            out = tape.add(*srcs) if layer.kind == "add" else tape.concat(*srcs)
        else:
            if width != layer.in_dim:
                raise ShapeMismatch(f"layer {k} expects width {layer.in_dim}, got {width}")
            if layer.kind == "linear":
                out = tape.linear(cur, param(layer.name + ".w"), param(layer.name + ".b"))
            elif layer.kind == "relu":
                out = tape.relu(cur)
            else:
                out = tape.abs(cur)
        if tape.value(out).shape[1] != layer.out_dim:
            raise ShapeMismatch(f"layer {k} produced width {tape.value(out).shape[1]}, spec says {layer.out_dim}")
        acts.append(out)
    return tape.value(acts[-1]), tape


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    pred, target = _as2d(pred), _as2d(target)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")
    resid = pred - target
    return float(np.mean(resid**2)), 2.0 * resid / resid.size


@dataclass
class AdamState:
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_step(
    params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState, lr: float
) -> tuple[dict[str, np.ndarray], AdamState]:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    for key, g in grads.items():
        if key not in params:
            continue
        if params[key].shape != np.shape(g):
            raise ShapeMismatch(f"gradient for {key} has shape {np.shape(g)}, param {params[key].shape}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for key, p in params.items():
        g = grads.get(key)
        if g is None:
            continue
        m = state.first_moment.get(key)
        v = state.second_moment.get(key)
        if m is None:
            m, v = np.zeros_like(p), np.zeros_like(p)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.first_moment[key], state.second_moment[key] = m, v
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


def finite_diff_grad(
    loss_of: Callable[[Mapping[str, np.ndarray]], float],
    params: Mapping[str, np.ndarray],
    h: float = 1e-6,
) -> dict[str, np.ndarray]:
    """Central differences ``(f(p+h) - f(p-h)) / 2h`` for every entry of every param."""
    if h <= 0:
        raise ValueError("step must be positive")
    work = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    out = {}
    for key, arr in work.items():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_of(work)
            flat[i] = orig - h
            down = loss_of(work)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        out[key] = g
    return out


def max_relative_error(
    analytic: Mapping[str, np.ndarray], numeric: Mapping[str, np.ndarray], floor: float = 1e-6
) -> float:
    """Largest ``|a - n| / max(|a|, |n|, floor)`` over all shared entries."""
    worst = 0.0
    for key, a in analytic.items():
        n = numeric[key]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst

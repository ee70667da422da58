"""Classification metrics and the one-sided exact binomial accuracy test.

Positive class throughout is *incompatible*.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ConfusionMatrix",
    "MetricsReport",
    "BinomialTest",
    "LengthMismatch",
    "EmptyInput",
    "UndefinedMetric",
    "DomainError",
    "NoRoot",
    "confusion",
    "metrics",
    "binom_pvalue",
    "binomial_test",
    "theta_at_significance",
    "summarize_runs",
]

METRIC_NAMES = ("accuracy", "precision", "recall", "specificity", "f1")


class LengthMismatch(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class UndefinedMetric(ArithmeticError):
    def __init__(self, name: str):
        super().__init__(f"{name} is undefined (zero denominator)")
        self.name = name


class DomainError(ValueError):
    pass


class NoRoot(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _is_positive(label) -> bool:
    if isinstance(label, str):
        return label == "incompatible"
    return bool(label)


def confusion(predictions: Sequence, labels: Sequence) -> ConfusionMatrix:
    """Count outcomes; labels are ``"incompatible"``/``"compatible"`` strings or truthy flags."""
    if len(predictions) != len(labels):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(labels)} labels")
    if not predictions:
        raise EmptyInput("no predictions to score")
    tp = fp = tn = fn = 0
    for p, y in zip(predictions, labels):
        p, y = _is_positive(p), _is_positive(y)
        if p and y:
            tp += 1
        elif p:
            fp += 1
        elif y:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, tn, fn)


@dataclass(frozen=True)
class MetricsReport:
    """Metrics as fractions; a metric whose denominator is zero is ``None``
    and its name is listed in ``undefined``."""

    mse: float | None
    accuracy: float | None
    precision: float | None
    recall: float | None
    specificity: float | None
    f1: float | None
    undefined: tuple[str, ...] = field(default=())

    def require(self, name: str) -> float:
        value = getattr(self, name)
        if value is None:
            raise UndefinedMetric(name)
        return value

    def as_dict(self) -> dict:
        d = asdict(self)
        d["undefined"] = list(self.undefined)
        return d


def _ratio(num: float, den: float) -> float | None:
    return num / den if den else None


def metrics(cm: ConfusionMatrix, mse: float | None = None) -> MetricsReport:
    if cm.total < 1:
        raise EmptyInput("confusion matrix is empty")
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    specificity = _ratio(cm.tn, cm.tn + cm.fp)
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    values = dict(accuracy=accuracy, precision=precision, recall=recall, specificity=specificity, f1=f1)
    undefined = tuple(k for k in METRIC_NAMES if values[k] is None)
    return MetricsReport(mse=mse, undefined=undefined, **values)


@dataclass(frozen=True)
class BinomialTest:
    n: int
    x0: int
    theta0: float
    p_value: float


def _check_binom(n: int, x0: int, theta0: float) -> None:
    if n < 0 or not 0 <= x0 <= n:
        raise DomainError(f"need 0 <= x0 <= n, got n={n}, x0={x0}")
    if not 0.0 < theta0 < 1.0:
        raise DomainError(f"theta0 must lie in (0, 1), got {theta0}")


def binom_pvalue(n: int, x0: int, theta0: float) -> float:
    """Upper tail ``P(X >= x0)`` for ``X ~ B(n, theta0)``.

    Terms are built in log space with ``lgamma`` and combined with a
    log-sum-exp, which stays finite for n in the thousands.
    """
    _check_binom(n, x0, theta0)
    if x0 == 0:
        return 1.0
    i = np.arange(x0, n + 1, dtype=np.float64)
    log_comb = math.lgamma(n + 1) - np.array([math.lgamma(k + 1) + math.lgamma(n - k + 1) for k in i])
    log_terms = log_comb + i * math.log(theta0) + (n - i) * math.log1p(-theta0)
    top = log_terms.max()
    p = math.exp(top) * float(np.sum(np.exp(log_terms - top)))
    return min(1.0, max(0.0, p))


def binomial_test(n: int, x0: int, theta0: float) -> BinomialTest:
    return BinomialTest(n, x0, theta0, binom_pvalue(n, x0, theta0))


def theta_at_significance(n: int, x0: int, alpha: float, tol: float = 1e-10) -> float:
    """Null success rate whose upper-tail p-value equals ``alpha``.

    The tail probability rises strictly with theta, so plain bisection on
    (0, 1) converges; it stops once ``|p - alpha| < tol``.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not 1 <= x0 <= n:
        raise DomainError(f"need 1 <= x0 <= n, got n={n}, x0={x0}")
    lo, hi = 0.0, 1.0
    tiny = 1e-15
    if not binom_pvalue(n, x0, tiny) <= alpha <= binom_pvalue(n, x0, 1 - tiny):
        raise NoRoot(f"alpha={alpha} is not reachable for n={n}, x0={x0}")
    mid = 0.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        p = binom_pvalue(n, x0, mid)
        if abs(p - alpha) < tol:
            return mid
        if p < alpha:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    return mid


def summarize_runs(reports: Sequence[MetricsReport]) -> dict:
    """Mean, min and max of each metric across runs, ignoring undefined values."""
    out = {}
    for name in ("mse",) + METRIC_NAMES:
        vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        if vals:
            out[name] = {"mean": float(np.mean(vals)), "min": float(min(vals)), "max": float(max(vals))}
        else:
            out[name] = None
    return out

"""Evaluation metrics and the per-run report row schema."""

from dataclasses import dataclass
import math

import numpy as np

from .errors import DimensionError
from .models import predict_batch

# Column order of every results.csv emitted by the harness.
CSV_COLUMNS = ("method", "risk", "accuracy", "excess", "seed")


def empirical_risk(model, xs, ys):
    """Mean squared output-space distance: mean_k ||f(x_k) - y_k||^2."""
    preds = predict_batch(model, xs)
    ys = np.asarray(ys, dtype=float)
    if ys.shape != preds.shape:
        raise DimensionError(f"labels of shape {ys.shape} do not match predictions {preds.shape}")
    if ys.shape[0] == 0:
        raise ValueError("cannot evaluate risk on an empty sample")
    return float(((preds - ys) ** 2).sum(axis=1).mean())


def accuracy(model, xs, labels):
    """Fraction of rows whose argmax prediction matches the integer label.

    argmax ties resolve to the lowest class index.
    """
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise DimensionError(f"labels must be a 1-d class-index vector, got shape {labels.shape}")
    preds = predict_batch(model, xs)
    if preds.shape[0] != labels.shape[0]:
        raise DimensionError(f"{preds.shape[0]} predictions but {labels.shape[0]} labels")
    if labels.shape[0] == 0:
        raise ValueError("cannot evaluate accuracy on an empty sample")
    return float((preds.argmax(axis=1) == labels.astype(int)).mean())


def pearson_with_flag(a, b):
    """Pearson correlation plus a degeneracy flag.

    A constant input vector makes the correlation undefined; it is reported
    as 0.0 with the flag set.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise DimensionError(f"inputs must be equal-length vectors, got {a.shape} and {b.shape}")
    if a.shape[0] < 2:
        raise ValueError("correlation needs at least two samples")
    if a.max() == a.min() or b.max() == b.min():
        return 0.0, True
    ca = a - a.mean()
    cb = b - b.mean()
    denom = math.sqrt(float((ca**2).sum()) * float((cb**2).sum()))
    if denom == 0.0:
        return 0.0, True
    r = float((ca * cb).sum()) / denom
    return max(-1.0, min(1.0, r)), False


def pearson(a, b):
    """Pearson correlation; degenerate (constant) inputs yield 0.0."""
    return pearson_with_flag(a, b)[0]


def _fmt(value):
    if value is None:
        return "nan"
    return f"{float(value):.17g}"


@dataclass(frozen=True)
class EvaluationReport:
    """One evaluated method on one seed.

    ``accuracy`` is None for regression instances; ``excess`` is the risk
    above the oracle aggregation's risk on the same evaluation split.
    """

    method: str
    seed: int
    risk: float
    accuracy: float | None
    excess: float

    def csv_row(self):
        return [self.method, _fmt(self.risk), _fmt(self.accuracy), _fmt(self.excess), str(self.seed)]

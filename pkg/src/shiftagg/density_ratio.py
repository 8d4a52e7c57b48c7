"""Density-ratio estimators.

A ratio estimate beta: X -> [0, B] reweights labeled source samples so that
source averages approximate target expectations. Two routes: the analytic
ratio of two known Gaussians (the 1-d regression benchmark) and a learned
logistic source-vs-target domain classifier.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

DEFAULT_BOUND = 50.0

# Classifier probabilities are clamped away from {0, 1} before forming odds.
PROB_CLAMP = 1e-6


class DensityRatio(ABC):
    """Weight function x -> [0, bound] estimating q(x) / p(x)."""

    bound: float

    @abstractmethod
    def weight(self, x):
        """Ratio estimate for a single input vector (a float)."""

    def weights(self, xs):
        """Ratio estimates for every row of ``xs``."""
        xs = np.asarray(xs, dtype=float)
        if xs.ndim != 2:
            raise DimensionError(f"xs must be a 2-d sample matrix, got shape {xs.shape}")
        return np.array([self.weight(row) for row in xs])


class ConstantRatio(DensityRatio):
    """beta == value everywhere (value 1 recovers unweighted averaging)."""

    def __init__(self, value=1.0):
        value = float(value)
        if value < 0:
            raise ValueError(f"ratio value must be non-negative, got {value}")
        self.value = value
        self.bound = max(value, 1.0)

    def weight(self, x):
        return self.value

    def weights(self, xs):
        xs = np.asarray(xs, dtype=float)
        if xs.ndim != 2:
            raise DimensionError(f"xs must be a 2-d sample matrix, got shape {xs.shape}")
        return np.full(xs.shape[0], self.value)


class GaussianRatio(DensityRatio):
    """Analytic ratio of two univariate Gaussian densities, clipped to [0, bound]."""

    def __init__(self, source_mean, source_std, target_mean, target_std, bound=DEFAULT_BOUND):
        if source_std <= 0 or target_std <= 0:
            raise ValueError("standard deviations must be positive")
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        self.source_mean = float(source_mean)
        self.source_std = float(source_std)
        self.target_mean = float(target_mean)
        self.target_std = float(target_std)
        self.bound = float(bound)

    def _log_ratio(self, values):
        zp = (values - self.source_mean) / self.source_std
        zq = (values - self.target_mean) / self.target_std
        return np.log(self.source_std / self.target_std) + 0.5 * (zp**2 - zq**2)

    def weight(self, x):
        value = float(np.asarray(x, dtype=float).reshape(-1)[0])
        return float(self.weights(np.array([[value]]))[0])

    def weights(self, xs):
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 2:
            if xs.shape[1] != 1:
                raise DimensionError(
                    f"the Gaussian ratio is univariate; got {xs.shape[1]} input columns"
                )
            xs = xs[:, 0]
        elif xs.ndim != 1:
            raise DimensionError(f"xs must be 1-d or (k, 1), got shape {xs.shape}")
        with np.errstate(over="ignore"):
            raw = np.exp(self._log_ratio(xs))
        return np.clip(raw, 0.0, self.bound)


class LearnedRatio(DensityRatio):
    """Domain-classifier ratio: prior_ratio * d(x) / (1 - d(x)), clipped to [0, bound].

    d(x) is the logistic probability that x came from the target domain,
    clamped to [PROB_CLAMP, 1 - PROB_CLAMP]; prior_ratio = n/m corrects for
    the source/target sample imbalance in the classifier's training set.
    """

    def __init__(self, weights, intercept, prior_ratio, bound=DEFAULT_BOUND):
        self.coef = np.asarray(weights, dtype=float)
        if self.coef.ndim != 1:
            raise DimensionError(f"classifier weights must be 1-d, got shape {self.coef.shape}")
        self.intercept = float(intercept)
        if prior_ratio <= 0:
            raise ValueError(f"prior_ratio must be positive, got {prior_ratio}")
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        self.prior_ratio = float(prior_ratio)
        self.bound = float(bound)

    def classifier_probability(self, xs):
        """Clamped P(target | x) for every row of xs."""
        xs = np.asarray(xs, dtype=float)
        logits = xs @ self.coef + self.intercept
        with np.errstate(over="ignore"):
            probs = 1.0 / (1.0 + np.exp(-logits))
        return np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)

    def weight(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return float(self.weights(x[None, :])[0])

    def weights(self, xs):
        xs = np.asarray(xs, dtype=float)
        if xs.ndim != 2:
            raise DimensionError(f"xs must be a 2-d sample matrix, got shape {xs.shape}")
        if xs.shape[1] != self.coef.shape[0]:
            raise DimensionError(
                f"input has {xs.shape[1]} columns but the classifier expects {self.coef.shape[0]}"
            )
        d = self.classifier_probability(xs)
        return np.clip(self.prior_ratio * d / (1.0 - d), 0.0, self.bound)


def fit_domain_classifier(source_x, target_x, epochs=500, lr=0.5, bound=DEFAULT_BOUND):
    """Logistic source-vs-target classifier trained by full-batch gradient descent.

    Source rows get label 0, target rows label 1; parameters start at zero,
    so the fit is deterministic and (up to float summation order) invariant
    under reordering of the training rows.
    """
    source_x = np.asarray(source_x, dtype=float)
    target_x = np.asarray(target_x, dtype=float)
    if source_x.ndim != 2 or target_x.ndim != 2:
        raise DimensionError("source_x and target_x must be 2-d sample matrices")
    if source_x.shape[1] != target_x.shape[1]:
        raise DimensionError(
            f"source has {source_x.shape[1]} columns but target has {target_x.shape[1]}"
        )
    n, m = source_x.shape[0], target_x.shape[0]
    if n == 0 or m == 0:
        raise ValueError("both domains need at least one sample")
    if epochs < 0 or lr <= 0:
        raise ValueError("epochs must be >= 0 and lr > 0")
    x = np.vstack([source_x, target_x])
    y = np.concatenate([np.zeros(n), np.ones(m)])
    total = n + m
    w = np.zeros(x.shape[1])
    b = 0.0
    for _ in range(int(epochs)):
        with np.errstate(over="ignore"):
            probs = 1.0 / (1.0 + np.exp(-(x @ w + b)))
        resid = probs - y
        w = w - lr * (x.T @ resid) / total
        b = b - lr * float(resid.mean())
    return LearnedRatio(w, b, n / m, bound)


@dataclass(frozen=True)
class SourceWeights:
    """Raw per-sample ratio weights plus their mean.

    The mean is a Monte Carlo check of E_p[beta] = 1; no rescaling is
    applied to the weights themselves.
    """

    values: np.ndarray
    mean: float


def normalized_weights(beta, xs):
    """Evaluate ``beta`` on the rows of ``xs`` and report the weight mean."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise DimensionError(f"xs must be a non-empty 2-d sample matrix, got shape {xs.shape}")
    values = np.asarray(beta.weights(xs), dtype=float)
    return SourceWeights(values=values, mean=float(values.mean()))

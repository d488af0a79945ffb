"""Isotropic Gaussian mixtures with known weights and identity covariance.

All density and weight computations are done in log space with the maximum
score subtracted before exponentiating, so they stay finite for
well-separated centers and for points far from every center.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .errors import ShapeError, ValidationError
from .rng import make_rng

LOG_2PI = float(np.log(2.0 * np.pi))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """Ground-truth mixture ``sum_i weights[i] * N(centers[i], I_d)``."""

    centers: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        centers = _frozen(np.atleast_2d(self.centers))
        weights = _frozen(np.atleast_1d(self.weights))
        if centers.ndim != 2 or centers.shape[0] < 1 or centers.shape[1] < 1:
            raise ShapeError(f"centers must be a non-empty (M, d) matrix, got shape {centers.shape}")
        if weights.shape != (centers.shape[0],):
            raise ShapeError(f"weights shape {weights.shape} does not match {centers.shape[0]} centers")
        if not np.all(np.isfinite(centers)):
            raise ValidationError("centers must be finite")
        if not np.all(weights > 0):
            raise ValidationError("mixing weights must be strictly positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValidationError(f"mixing weights sum to {weights.sum()!r}, not 1")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "weights", weights)

    @property
    def M(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)

    def digest(self) -> str:
        """SHA-256 of the shape, centers and weights."""
        h = hashlib.sha256()
        h.update(np.array(self.centers.shape, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.centers).tobytes())
        h.update(np.ascontiguousarray(self.weights).tobytes())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {"centers": self.centers.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "MixtureModel":
        return cls(np.asarray(doc["centers"], dtype=float), np.asarray(doc["weights"], dtype=float))

    def __eq__(self, other):
        if not isinstance(other, MixtureModel):
            return NotImplemented
        return np.array_equal(self.centers, other.centers) and np.array_equal(self.weights, other.weights)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class CenterSet:
    """An EM iterate: M centers in R^d."""

    centers: np.ndarray

    def __post_init__(self):
        c = _frozen(np.atleast_2d(self.centers))
        if c.ndim != 2:
            raise ShapeError(f"centers must be (M, d), got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValidationError("iterate contains non-finite entries")
        object.__setattr__(self, "centers", c)

    @property
    def M(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    def __eq__(self, other):
        if not isinstance(other, CenterSet):
            return NotImplemented
        return np.array_equal(self.centers, other.centers)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observations drawn from a mixture, plus what is needed to regenerate them.

    The generating labels are kept for diagnostics only; nothing in the EM
    code path reads them.
    """

    points: np.ndarray
    seed: int
    source_model_digest: str
    _labels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        pts = _frozen(np.atleast_2d(self.points))
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ShapeError(f"points must be a non-empty (n, d) matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("points must be finite")
        object.__setattr__(self, "points", pts)
        if self._labels is not None:
            labels = np.array(self._labels, dtype=np.int64, copy=True)
            labels.setflags(write=False)
            object.__setattr__(self, "_labels", labels)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def component_counts(self, M: int) -> np.ndarray:
        """Number of points generated by each component (diagnostic)."""
        if self._labels is None:
            raise ValidationError("dataset carries no generating labels")
        return np.bincount(self._labels, minlength=M)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.source_model_digest == other.source_model_digest
            and np.array_equal(self.points, other.points)
        )

    __hash__ = None


def as_centers(iterate) -> np.ndarray:
    """Center matrix of a CenterSet, MixtureModel or array-like."""
    if isinstance(iterate, (CenterSet, MixtureModel)):
        return iterate.centers
    return np.atleast_2d(np.asarray(iterate, dtype=np.float64))


def _check_point(x, centers) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != centers.shape[1]:
        raise ShapeError(f"point of shape {x.shape} does not match dimension {centers.shape[1]}")
    return x


def _check_weights(weights, M) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (M,):
        raise ShapeError(f"weights shape {weights.shape} does not match {M} centers")
    return weights


def log_density(x, model: MixtureModel) -> float:
    """Log of the mixture density at ``x``."""
    x = _check_point(x, model.centers)
    diff = x[None, :] - model.centers
    comp = model.log_weights - 0.5 * np.einsum("md,md->m", diff, diff) - 0.5 * model.d * LOG_2PI
    return float(logsumexp(comp))


def log_scores(x, centers, weights) -> np.ndarray:
    """Unnormalised log posterior ``log pi_i - ||x - mu_i||^2 / 2``."""
    diff = x[None, :] - centers
    return np.log(weights) - 0.5 * np.einsum("md,md->m", diff, diff)


def posterior_weights(x, iterate, weights) -> np.ndarray:
    """Posterior probability that ``x`` came from each component.

    Args:
        x: point in R^d.
        iterate: current centers (CenterSet or (M, d) array).
        weights: mixing weights, shape (M,).

    Returns:
        Array of shape (M,) summing to one.
    """
    centers = as_centers(iterate)
    x = _check_point(x, centers)
    weights = _check_weights(weights, centers.shape[0])
    s = log_scores(x, centers, weights)
    s -= s.max()
    w = np.exp(s)
    return w / w.sum()


def posterior_matrix(points, iterate, weights) -> np.ndarray:
    """Posterior weights for every row of ``points``; shape (n, M)."""
    centers = as_centers(iterate)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[1] != centers.shape[1]:
        raise ShapeError(f"points of dimension {points.shape[1]} do not match centers of dimension {centers.shape[1]}")
    weights = _check_weights(weights, centers.shape[0])
    return kernels.responsibilities(points, centers, np.log(weights))


def grad_weight(x, iterate, weights, component: int) -> np.ndarray:
    """Gradient of ``w_component(x; mu)`` with respect to all centers.

    Block ``j`` of the (M, d) result is ``w_c w_j (mu_j - x)`` for ``j != c``
    and ``-w_c (1 - w_c) (mu_c - x)`` for ``j == c``.
    """
    centers = as_centers(iterate)
    M = centers.shape[0]
    if not 0 <= component < M:
        raise IndexError(f"component {component} out of range for {M} components")
    w = posterior_weights(x, centers, weights)
    x = np.asarray(x, dtype=np.float64)
    wc = w[component]
    grad = (wc * w)[:, None] * (centers - x[None, :])
    grad[component] = -wc * (1.0 - wc) * (centers[component] - x)
    return grad


def sample_points(model: MixtureModel, n: int, rng: np.random.Generator):
    """Draw ``n`` labelled points from ``model`` using ``rng``."""
    labels = rng.choice(model.M, size=n, p=model.weights)
    points = model.centers[labels] + rng.standard_normal((n, model.d))
    return points, labels


def sample_dataset(model: MixtureModel, n: int, seed: int) -> Dataset:
    """Draw ``n`` iid points from ``model``; deterministic in ``(model, n, seed)``."""
    if int(n) < 1:
        raise ValidationError("n must be at least 1")
    points, labels = sample_points(model, int(n), make_rng(seed))
    return Dataset(points, int(seed), model.digest(), labels)

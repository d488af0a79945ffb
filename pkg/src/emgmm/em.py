"""EM updates for mixtures with known weights and identity covariance.

The sample update replaces every center by the posterior-weighted mean of
the data. The population update does the same with expectations under the
true mixture, estimated here by Monte Carlo.

Accumulation order: data rows are visited in index order (per chunk of
``MC_CHUNK`` rows for Monte-Carlo draws) and chunk totals are added left
to right. Given the same inputs and kernel backend, outputs are
bit-identical.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .core import CenterSet, Dataset, MixtureModel, as_centers, sample_points
from .errors import ShapeError, ValidationError, WeightCollapseError
from .rng import make_rng

COLLAPSE_THRESHOLD = 1e-300
MC_CHUNK = 1 << 18
MLE_REL_TOL = 1e-10
MLE_MAX_ITERS = 5000


class StopReason(str, enum.Enum):
    MAX_ITERS = "max_iters"
    REL_CHANGE_BELOW_TOL = "rel_change_below_tol"
    WEIGHT_COLLAPSE = "weight_collapse"


class Matching(str, enum.Enum):
    IDENTITY = "identity"
    BEST_PERMUTATION = "best_permutation"


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 500
    rel_tol: float = 1e-8
    population_mc_samples: int = 100_000
    matching: Matching = Matching.IDENTITY

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise ValidationError("max_iters must be at least 1")
        if not self.rel_tol > 0:
            raise ValidationError("rel_tol must be positive")
        if int(self.population_mc_samples) < 1:
            raise ValidationError("population_mc_samples must be at least 1")
        object.__setattr__(self, "matching", Matching(self.matching))

    def to_dict(self) -> dict:
        return {
            "max_iters": int(self.max_iters),
            "rel_tol": float(self.rel_tol),
            "population_mc_samples": int(self.population_mc_samples),
            "matching": self.matching.value,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EmConfig":
        return cls(**doc)


@dataclass
class Trajectory:
    """Per-iteration record of one EM run; index 0 is the initial iterate."""

    iterates: list
    stat_errors: list
    opt_errors: list | None = None
    stop_reason: StopReason = StopReason.MAX_ITERS
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.stat_errors) != len(self.iterates):
            raise ValidationError("stat_errors and iterates differ in length")
        if self.opt_errors is not None and len(self.opt_errors) != len(self.iterates):
            raise ValidationError("opt_errors and iterates differ in length")

    @property
    def n_iterations(self) -> int:
        return len(self.iterates) - 1

    @property
    def final(self) -> CenterSet:
        return self.iterates[-1]


def _check_collapse(mass):
    low = np.flatnonzero(~(mass >= COLLAPSE_THRESHOLD))
    if low.size:
        raise WeightCollapseError(low[0], mass[low[0]])


def _quotient(mass, wsum) -> CenterSet:
    _check_collapse(mass)
    return CenterSet(wsum / mass[:, None])


def _weights_of(weights, M):
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (M,):
        raise ShapeError(f"weights shape {weights.shape} does not match {M} centers")
    return weights


def em_step_sample(data: Dataset, iterate, weights) -> CenterSet:
    """One EM update on a finite sample.

    Raises:
        WeightCollapseError: a component's total weight fell below 1e-300.
    """
    centers = as_centers(iterate)
    points = data.points if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float))
    if points.shape[1] != centers.shape[1]:
        raise ShapeError(f"data dimension {points.shape[1]} does not match iterate dimension {centers.shape[1]}")
    weights = _weights_of(weights, centers.shape[0])
    mass, wsum = kernels.accumulate(points, centers, np.log(weights))
    return _quotient(mass, wsum)


def population_sums(model: MixtureModel, iterate, mc_samples: int, seed: int):
    """Monte-Carlo sums ``(mass, wsum)`` over fresh draws from ``model``.

    ``mass`` and ``wsum`` are sums of w_i(X) and w_i(X) X. Draws are made in
    chunks of ``MC_CHUNK`` from a single generator.
    """
    centers = as_centers(iterate)
    if centers.shape != model.centers.shape:
        raise ShapeError(f"iterate shape {centers.shape} does not match model shape {model.centers.shape}")
    mc_samples = int(mc_samples)
    if mc_samples < 1:
        raise ValidationError("mc_samples must be at least 1")
    rng = make_rng(seed)
    logw = model.log_weights
    mass = np.zeros(model.M)
    wsum = np.zeros((model.M, model.d))
    for start in range(0, mc_samples, MC_CHUNK):
        x, _ = sample_points(model, min(MC_CHUNK, mc_samples - start), rng)
        m, s = kernels.accumulate(x, centers, logw)
        mass += m
        wsum += s
    return mass, wsum


def em_step_population(model: MixtureModel, iterate, mc_samples: int, seed: int) -> CenterSet:
    """Monte-Carlo estimate of the population EM update.

    Estimates ``E[w_i(X; mu) X] / E[w_i(X; mu)]`` with ``X ~ model`` from
    ``mc_samples`` draws; the same seed gives the same draws.
    """
    mass, wsum = population_sums(model, iterate, mc_samples, seed)
    return _quotient(mass, wsum)


def statistical_error(iterate, truth, matching=Matching.IDENTITY) -> float:
    """Largest center distance between ``iterate`` and ``truth``.

    With ``best_permutation`` the components of ``truth`` are relabelled to
    minimise that maximum: by enumeration for M <= 8, otherwise by an
    assignment on the distance matrix (bottleneck search over thresholds).
    """
    a = as_centers(iterate)
    b = as_centers(truth)
    if a.shape != b.shape:
        raise ShapeError(f"iterate shape {a.shape} does not match truth shape {b.shape}")
    matching = Matching(matching)
    if matching is Matching.IDENTITY:
        return float(np.max(np.linalg.norm(a - b, axis=1)))
    dist = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    M = a.shape[0]
    rows = np.arange(M)
    if M <= 8:
        return float(min(dist[rows, list(p)].max() for p in itertools.permutations(range(M))))
    # smallest threshold admitting a perfect matching
    for thr in np.unique(dist):
        cost = np.where(dist <= thr, 0.0, 1.0)
        r, c = linear_sum_assignment(cost)
        if cost[r, c].sum() == 0:
            return float(thr)
    return float(dist.max())  # pragma: no cover


def _relative_change(new, old) -> float:
    step = np.max(np.linalg.norm(new - old, axis=1))
    return float(step / (1.0 + np.max(np.linalg.norm(old, axis=1))))


def _iterate(step, init, max_iters, rel_tol):
    """Run ``step`` from ``init``; returns ``(iterates, stop_reason, collapse)``."""
    iterates = [init]
    current = init.centers
    for t in range(1, max_iters + 1):
        try:
            nxt = step(current)
        except WeightCollapseError as exc:
            return iterates, StopReason.WEIGHT_COLLAPSE, exc.tagged(iteration=t)
        iterates.append(nxt)
        change = _relative_change(nxt.centers, current)
        current = nxt.centers
        if change < rel_tol:
            return iterates, StopReason.REL_CHANGE_BELOW_TOL, None
    return iterates, StopReason.MAX_ITERS, None


def run_em(
    data_or_model,
    init,
    config: EmConfig,
    truth: MixtureModel,
    *,
    seed: int = 0,
    record_opt_error: bool = False,
    raise_on_collapse: bool = True,
) -> Trajectory:
    """Iterate EM from ``init`` and record errors against ``truth``.

    With a Dataset the sample update is used; with a MixtureModel the
    population update (``config.population_mc_samples`` draws seeded by
    ``seed`` each step). Stops after ``config.max_iters`` steps or when
    ``max_i ||mu_i^{t+1} - mu_i^t|| / (1 + max_i ||mu_i^t||) < config.rel_tol``.

    With ``record_opt_error`` the same map is first iterated to relative
    change 1e-10 (at most 5000 steps) and its limit is used as the MLE
    proxy for ``opt_errors``.
    """
    if not isinstance(config, EmConfig):
        raise ValidationError("config must be an EmConfig")
    init = init if isinstance(init, CenterSet) else CenterSet(as_centers(init))
    if init.centers.shape != truth.centers.shape:
        raise ShapeError(f"init shape {init.centers.shape} does not match truth shape {truth.centers.shape}")

    if isinstance(data_or_model, MixtureModel):
        model = data_or_model

        def step(c):
            return em_step_population(model, c, config.population_mc_samples, seed)
    else:
        data = data_or_model

        def step(c):
            return em_step_sample(data, c, truth.weights)

    metadata = {}
    mu_hat = None
    if record_opt_error:
        long_iters, long_reason, collapse = _iterate(
            step, init, max(config.max_iters, MLE_MAX_ITERS), min(config.rel_tol, MLE_REL_TOL)
        )
        iterates, reason = _truncate(long_iters, config)
        if collapse is not None and len(iterates) == len(long_iters):
            reason = StopReason.WEIGHT_COLLAPSE
        else:
            collapse = None
            mu_hat = long_iters[-1]
        metadata["mle_proxy"] = {
            "definition": "EM limit from the same initializer",
            "rel_tol": min(config.rel_tol, MLE_REL_TOL),
            "iterations": len(long_iters) - 1,
            "converged": long_reason is StopReason.REL_CHANGE_BELOW_TOL,
        }
    else:
        iterates, reason, collapse = _iterate(step, init, config.max_iters, config.rel_tol)
    if collapse is not None:
        if raise_on_collapse:
            raise collapse
        metadata["collapse"] = {"component": collapse.component, "iteration": collapse.iteration}

    stat = [statistical_error(c, truth, config.matching) for c in iterates]
    opt = None
    if mu_hat is not None:
        opt = [statistical_error(c, mu_hat, Matching.IDENTITY) for c in iterates]
    return Trajectory(iterates, stat, opt, reason, metadata)


def _truncate(iterates, config):
    """Prefix of a long run where a run with ``config`` would have stopped."""
    for t in range(1, len(iterates)):
        if t > config.max_iters:
            return iterates[: config.max_iters + 1], StopReason.MAX_ITERS
        if _relative_change(iterates[t].centers, iterates[t - 1].centers) < config.rel_tol:
            return iterates[: t + 1], StopReason.REL_CHANGE_BELOW_TOL
    if len(iterates) - 1 >= config.max_iters:
        return iterates[: config.max_iters + 1], StopReason.MAX_ITERS
    return list(iterates), StopReason.REL_CHANGE_BELOW_TOL

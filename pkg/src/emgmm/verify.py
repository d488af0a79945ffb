"""Monte-Carlo checks of the bounds used in the convergence proof.

These are falsification tests rather than proofs: suprema over a segment or
a ball are approximated by grids and random probes, and every comparison
carries a 3 standard-error margin. A check whose margin straddles the
bound is reported as inconclusive.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate
from scipy.special import softmax

from . import kernels
from .core import MixtureModel, as_centers, sample_points
from .em import MC_CHUNK
from .errors import ShapeError, ValidationError
from .rng import DATA, POPULATION, PROBES, derive_seed, make_rng
from . import theory

MARGIN = 3.0


@dataclass(frozen=True)
class LemmaCheckResult:
    """Monte-Carlo estimate compared against a claimed bound.

    ``kind="upper"`` checks ``estimate + 3 se <= bound``; ``kind="lower"``
    checks ``estimate - 3 se >= bound``.
    """

    estimate: float
    bound: float
    mc_std_error: float
    n_samples: int
    kind: str = "upper"
    name: str = ""

    def __post_init__(self):
        if self.mc_std_error < 0:
            raise ValidationError("mc_std_error must be non-negative")
        if self.kind not in ("upper", "lower"):
            raise ValidationError(f"unknown bound kind {self.kind!r}")

    @property
    def holds(self) -> bool:
        if self.kind == "upper":
            return self.estimate + MARGIN * self.mc_std_error <= self.bound
        return self.estimate - MARGIN * self.mc_std_error >= self.bound

    @property
    def verdict(self) -> str:
        if self.holds:
            return "holds"
        if self.kind == "upper":
            violated = self.estimate - MARGIN * self.mc_std_error > self.bound
        else:
            violated = self.estimate + MARGIN * self.mc_std_error < self.bound
        return "violated" if violated else "inconclusive"

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["holds"] = self.holds
        doc["verdict"] = self.verdict
        return doc


def _chunks(model, mc_samples, seed):
    mc_samples = int(mc_samples)
    if mc_samples < 1:
        raise ValidationError("mc_samples must be at least 1")
    rng = make_rng(seed)
    for start in range(0, mc_samples, MC_CHUNK):
        x, _ = sample_points(model, min(MC_CHUNK, mc_samples - start), rng)
        yield x


def _check_iterate(model, iterate):
    c = as_centers(iterate)
    if c.shape != model.centers.shape:
        raise ShapeError(f"iterate shape {c.shape} does not match model shape {model.centers.shape}")
    return c


def weight_moments(model: MixtureModel, iterate, mc_samples: int, seed: int):
    """Monte-Carlo mean and standard error of ``w_i(X; mu)`` for every i."""
    centers = _check_iterate(model, iterate)
    s1 = np.zeros(model.M)
    s2 = np.zeros(model.M)
    for x in _chunks(model, mc_samples, seed):
        w = kernels.responsibilities(x, centers, model.log_weights)
        s1 += w.sum(axis=0)
        s2 += (w * w).sum(axis=0)
    N = int(mc_samples)
    mean = s1 / N
    var = np.maximum(s2 / N - mean**2, 0.0)
    return mean, np.sqrt(var / max(N - 1, 1))


def estimate_weight_mass(model: MixtureModel, iterate, component: int, mc_samples: int, seed: int) -> LemmaCheckResult:
    """``E[w_component(X; mu)]`` against the lower bound ``3 kappa / 4``."""
    if not 0 <= component < model.M:
        raise IndexError(f"component {component} out of range")
    mean, se = weight_moments(model, iterate, mc_samples, seed)
    return LemmaCheckResult(
        float(mean[component]), 0.75 * float(model.weights.min()), float(se[component]),
        int(mc_samples), "lower", f"weight_mass[{component}]",
    )


def operator_norm(A, iters: int = 50, tol: float = 1e-10) -> float:
    """Largest singular value by power iteration on ``A^T A``.

    Starts from the normalised all-ones vector so results are reproducible.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    v = np.ones(A.shape[1]) / math.sqrt(A.shape[1])
    sigma = 0.0
    for _ in range(iters):
        u = A.T @ (A @ v)
        norm = np.linalg.norm(u)
        if norm == 0.0:
            return 0.0
        v = u / norm
        new = float(np.linalg.norm(A @ v))
        if abs(new - sigma) <= tol * max(new, 1e-300):
            sigma = new
            break
        sigma = new
    return sigma


def v_matrix(model: MixtureModel, iterate, i: int, mc_samples: int, seed: int, component: int = 0):
    """Monte-Carlo estimate of the matrix inside ``V_i`` at iterate ``mu``.

    For ``i == component`` this is ``E[w_c (1 - w_c) (X - mu*_c)(X - mu_c)^T]``,
    otherwise ``E[w_c w_i (X - mu*_c)(X - mu_i)^T]``. Returns the mean and
    entrywise standard errors.
    """
    centers = _check_iterate(model, iterate)
    if not (0 <= i < model.M and 0 <= component < model.M):
        raise IndexError("component index out of range")
    d = model.d
    s1 = np.zeros((d, d))
    s2 = np.zeros((d, d))
    star = model.centers[component]
    for x in _chunks(model, mc_samples, seed):
        w = kernels.responsibilities(x, centers, model.log_weights)
        wc = w[:, component]
        f = wc * (1.0 - wc) if i == component else wc * w[:, i]
        left = (x - star) * f[:, None]
        right = x - centers[i]
        s1 += left.T @ right
        s2 += np.einsum("nd,ne->de", left * left, right * right)
    N = int(mc_samples)
    mean = s1 / N
    var = np.maximum(s2 / N - mean**2, 0.0)
    return mean, np.sqrt(var / max(N - 1, 1))


def estimate_v(model: MixtureModel, iterate_start, iterate_end, i: int, t_grid: int = 11,
               mc_samples: int = 100_000, seed: int = 0, component: int = 0) -> float:
    """Grid approximation of ``V_i``: max over t of the operator norm at ``mu^t``.

    ``mu^t = start + t (end - start)`` for ``t_grid`` equally spaced t in
    [0, 1]; every grid point reuses the same Monte-Carlo draws.
    """
    if t_grid < 2:
        raise ValidationError("t_grid must be at least 2")
    start = _check_iterate(model, iterate_start)
    end = _check_iterate(model, iterate_end)
    best = 0.0
    for t in np.linspace(0.0, 1.0, t_grid):
        mean, _ = v_matrix(model, start + t * (end - start), i, mc_samples, seed, component)
        best = max(best, operator_norm(mean))
    return best


def fixed_point_residual(model: MixtureModel, mc_samples: int, seed: int) -> float:
    """``max_i || mean of w_i(X; mu*) (X - mu*_i) ||`` over Monte-Carlo draws."""
    mass = np.zeros(model.M)
    wsum = np.zeros((model.M, model.d))
    for x in _chunks(model, mc_samples, seed):
        m, s = kernels.accumulate(x, model.centers, model.log_weights)
        mass += m
        wsum += s
    N = int(mc_samples)
    resid = (wsum - mass[:, None] * model.centers) / N
    return float(np.max(np.linalg.norm(resid, axis=1)))


def uniform_in_balls(centers, radius: float, rng: np.random.Generator) -> np.ndarray:
    """One point uniform in each ball ``B(centers[i], radius)``."""
    centers = np.asarray(centers, dtype=float)
    g = rng.standard_normal(centers.shape)
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(centers.shape[0]) ** (1.0 / centers.shape[1])
    return centers + g * r[:, None]


def _averages(points, centers, model, which):
    """Per-component averages of w_i (``weight_sum``) or w_i (X - mu*_i)."""
    mass, wsum = kernels.accumulate(points, centers, model.log_weights)
    n = points.shape[0]
    if which == "weight_sum":
        return mass / n
    return (wsum - mass[:, None] * model.centers) / n


def _population_averages(model, centers, which, mc_samples, seed):
    mass = np.zeros(model.M)
    wsum = np.zeros((model.M, model.d))
    for x in _chunks(model, mc_samples, seed):
        m, s = kernels.accumulate(x, centers, model.log_weights)
        mass += m
        wsum += s
    N = int(mc_samples)
    if which == "weight_sum":
        return mass / N
    return (wsum - mass[:, None] * model.centers) / N


@dataclass(frozen=True)
class DeviationResult:
    max_deviation: float
    rate_reference: float


def empirical_deviation(model: MixtureModel, n: int, probe_count: int, radius: float, which: str,
                        seed: int, population_samples: int = 1_000_000) -> DeviationResult:
    """Largest gap between an empirical average and its population value.

    Draws one dataset of size ``n`` and ``probe_count`` iterates uniform in
    the product of balls ``B(mu*_i, radius)`` (just ``mu*`` when radius is
    0). For each probe and component, compares the empirical average of
    ``w_i`` (``which="weight_sum"``) or ``w_i (X - mu*_i)``
    (``which="weighted_vector"``) with an independent Monte-Carlo estimate
    of its expectation. Probes and population draws depend on ``seed`` but
    not on ``n``.
    """
    if probe_count < 1:
        raise ValidationError("probe_count must be at least 1")
    if which not in ("weight_sum", "weighted_vector"):
        raise ValidationError(f"unknown deviation kind {which!r}")
    data_rng = make_rng(derive_seed(seed, DATA, n))
    points, _ = sample_points(model, int(n), data_rng)
    probe_rng = make_rng(derive_seed(seed, PROBES))
    pop_seed = derive_seed(seed, POPULATION)
    worst = 0.0
    for _ in range(probe_count if radius > 0 else 1):
        centers = uniform_in_balls(model.centers, radius, probe_rng) if radius > 0 else model.centers
        emp = _averages(points, centers, model, which)
        pop = _population_averages(model, centers, which, population_samples, pop_seed)
        gap = np.abs(emp - pop) if which == "weight_sum" else np.linalg.norm(emp - pop, axis=1)
        worst = max(worst, float(gap.max()))
    rate = math.sqrt(model.M * model.d * math.log(n) / n)
    if which == "weighted_vector":
        try:
            rate *= 1.5 * theory.separation_stats(model).r_max
        except theory.DegenerateModelError:
            pass
    return DeviationResult(worst, rate)


# -- one-dimensional quadrature oracles ------------------------------------


def _weights_1d(x, centers, weights):
    scores = np.log(weights) - 0.5 * (x - centers) ** 2
    return softmax(scores)


def _density_1d(x, centers, weights):
    return float(np.sum(weights * np.exp(-0.5 * (x - centers) ** 2)) / math.sqrt(2.0 * math.pi))


def quad_expectation_1d(model: MixtureModel, f) -> float:
    """``E[f(X)]`` for a one-dimensional mixture by adaptive quadrature.

    The real line is split at every center (and +-12 around each) so each
    piece has at most one Gaussian bump.
    """
    if model.d != 1:
        raise ShapeError("quadrature oracle is one-dimensional")
    c = model.centers[:, 0]
    w = model.weights
    knots = np.unique(np.concatenate([c, c - 12.0, c + 12.0]))
    g = lambda x: f(x) * _density_1d(x, c, w)
    total = integrate.quad(g, -np.inf, knots[0], limit=200)[0]
    for a, b in zip(knots[:-1], knots[1:]):
        total += integrate.quad(g, a, b, limit=200, epsabs=1e-13, epsrel=1e-12)[0]
    total += integrate.quad(g, knots[-1], np.inf, limit=200)[0]
    return total


def quad_em_update_1d(model: MixtureModel, iterate) -> np.ndarray:
    """Population EM update of a 1-D iterate by quadrature; shape (M, 1)."""
    mu = as_centers(iterate)[:, 0]
    out = np.empty((model.M, 1))
    for i in range(model.M):
        num = quad_expectation_1d(model, lambda x: _weights_1d(x, mu, model.weights)[i] * x)
        den = quad_expectation_1d(model, lambda x: _weights_1d(x, mu, model.weights)[i])
        out[i, 0] = num / den
    return out


def quad_weight_mass_1d(model: MixtureModel, iterate, component: int) -> float:
    mu = as_centers(iterate)[:, 0]
    return quad_expectation_1d(model, lambda x: _weights_1d(x, mu, model.weights)[component])


def quad_v_entry_1d(model: MixtureModel, iterate, i: int, component: int = 0) -> float:
    """The scalar inside ``V_i`` for d = 1, by quadrature."""
    mu = as_centers(iterate)[:, 0]
    star = model.centers[component, 0]

    def f(x):
        w = _weights_1d(x, mu, model.weights)
        fac = w[component] * (1.0 - w[component]) if i == component else w[component] * w[i]
        return fac * (x - star) * (x - mu[i])

    return quad_expectation_1d(model, f)


def lemma_checks(model: MixtureModel, mc_samples: int = 200_000, probes: int = 10, seed: int = 0,
                 t_grid: int = 11) -> list[LemmaCheckResult]:
    """Battery of checks for ``model``: fixed point, weight mass, V_i bound.

    Probe iterates are drawn inside the radius each bound is stated for;
    when that radius is not positive only ``mu*`` itself is probed.
    """
    results = []
    N = int(mc_samples)
    resid = fixed_point_residual(model, N, derive_seed(seed, POPULATION, 0))
    results.append(LemmaCheckResult(resid, 5.0 * math.sqrt(model.d / N), 0.0, N, "upper", "fixed_point_residual"))
    if model.M < 2:
        return results
    stats = theory.separation_stats(model)
    rng = make_rng(derive_seed(seed, PROBES))
    r_low = theory.lemma_lower_radius(stats)
    for p in range(probes):
        it = uniform_in_balls(model.centers, r_low, rng) if r_low > 0 else model.centers
        mean, se = weight_moments(model, it, N, derive_seed(seed, POPULATION, 1, p))
        i = int(np.argmin(mean))
        results.append(LemmaCheckResult(float(mean[i]), 0.75 * stats.kappa, float(se[i]), N, "lower",
                                        f"weight_mass[probe={p},component={i}]"))
    r_up = theory.lemma_upper_radius(stats)
    bound = theory.v_bound_lemma(stats, max(r_up, 0.0))
    for p in range(min(probes, 3)):
        it = uniform_in_balls(model.centers, r_up, rng) if r_up > 0 else model.centers
        vs = [estimate_v(model, model.centers, it, i, t_grid, N, derive_seed(seed, POPULATION, 2, p))
              for i in range(model.M)]
        results.append(LemmaCheckResult(max(vs), bound, 0.0, N, "upper", f"max_v[probe={p}]"))
    return results

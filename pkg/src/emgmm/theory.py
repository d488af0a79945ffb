"""Closed-form convergence quantities for EM on well-separated mixtures.

Everything here is a plain numeric evaluation. Unspecified universal
constants (``c0`` .. ``c3``) are explicit inputs and are echoed in every
report. Negative radii mean the hypotheses cannot be met at the given
parameters; they are returned as-is.

Two effective dimensions appear and are kept apart: ``min(d, 2M)`` for the
population contraction radius and coefficient, ``min(d, M)`` for the
simplified radius and the weight-mass lower bound.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import MixtureModel
from .errors import DegenerateModelError, DomainError, ValidationError


@dataclass(frozen=True)
class SeparationStats:
    r_min: float
    r_max: float
    kappa: float
    M: int
    d: int

    def __post_init__(self):
        if not (0 < self.r_min <= self.r_max):
            raise ValidationError(f"need 0 < r_min <= r_max, got {self.r_min}, {self.r_max}")
        if not (0 < self.kappa <= 1.0 / self.M + 1e-12):
            raise ValidationError(f"kappa must lie in (0, 1/M], got {self.kappa}")

    @property
    def effective_dim_2m(self) -> int:
        return min(self.d, 2 * self.M)

    @property
    def effective_dim_m(self) -> int:
        return min(self.d, self.M)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["effective_dim_2m"] = self.effective_dim_2m
        doc["effective_dim_m"] = self.effective_dim_m
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SeparationStats":
        return cls(doc["r_min"], doc["r_max"], doc["kappa"], doc["M"], doc["d"])


@dataclass(frozen=True)
class TheoryConstants:
    c0: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0

    def __post_init__(self):
        for name in ("c0", "c1", "c2", "c3"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be strictly positive")


def separation_stats(model: MixtureModel) -> SeparationStats:
    """Minimum/maximum pairwise center distance and smallest weight."""
    if model.M < 2:
        raise DegenerateModelError("center separation is undefined for a single component")
    dists = [
        float(np.linalg.norm(model.centers[i] - model.centers[j]))
        for i, j in itertools.combinations(range(model.M), 2)
    ]
    return SeparationStats(min(dists), max(dists), float(model.weights.min()), model.M, model.d)


def _radius_max_term(r_min, kappa, with_kappa=True) -> float:
    terms = [4.0 * math.sqrt(2.0) * math.sqrt(max(math.log(r_min / 4.0), 0.0)), 8.0 * math.sqrt(3.0)]
    if with_kappa:
        terms.append(8.0 * math.log(4.0 / kappa))
    return max(terms)


def contraction_radius_thm1(stats: SeparationStats) -> float:
    """Largest initial error for which the population update provably contracts."""
    m = stats.effective_dim_2m
    return 0.5 * stats.r_min - math.sqrt(m) * _radius_max_term(stats.r_min, stats.kappa)


def separation_ok_thm1(stats: SeparationStats) -> bool:
    """``R_min >= 30 sqrt(min(d, 2M))``."""
    return stats.r_min >= 30.0 * math.sqrt(stats.effective_dim_2m)


def lemma_upper_radius(stats: SeparationStats) -> float:
    """Radius under which the V_i suprema bound applies (no kappa term)."""
    m = stats.effective_dim_2m
    return 0.5 * stats.r_min - math.sqrt(m) * _radius_max_term(stats.r_min, stats.kappa, with_kappa=False)


def lemma_lower_radius(stats: SeparationStats) -> float:
    """Radius under which ``E[w_i] >= 3 kappa / 4`` is guaranteed."""
    m = stats.effective_dim_m
    return 0.5 * stats.r_min - math.sqrt(m) * _radius_max_term(stats.r_min, stats.kappa)


def log_exp_factor(stats: SeparationStats, a: float) -> float:
    return -0.125 * (0.5 * stats.r_min - a) * math.sqrt(stats.effective_dim_2m)


def contraction_coefficient_zeta(stats: SeparationStats, a: float) -> float:
    """Population contraction factor for iterates within radius ``a``.

    ``(3M / kappa^2) (2 R_max + min(2M, d))^2 exp(-(R_min/2 - a) sqrt(min(d, 2M)) / 8)``,
    evaluated in log space.
    """
    if not a < 0.5 * stats.r_min:
        raise DomainError(f"radius a={a} must be below R_min/2={0.5 * stats.r_min}")
    log_pref = (
        math.log(3.0 * stats.M)
        - 2.0 * math.log(stats.kappa)
        + 2.0 * math.log(2.0 * stats.r_max + stats.effective_dim_2m)
    )
    return math.exp(log_pref + log_exp_factor(stats, a))


def v_bound_lemma(stats: SeparationStats, a: float) -> float:
    """Upper bound on ``max_i V_i``: ``(2/kappa)(2 R_max + min(2M, d))^2 exp(...)``."""
    if not a < 0.5 * stats.r_min:
        raise DomainError(f"radius a={a} must be below R_min/2={0.5 * stats.r_min}")
    log_pref = math.log(2.0 / stats.kappa) + 2.0 * math.log(2.0 * stats.r_max + stats.effective_dim_2m)
    return math.exp(log_pref + log_exp_factor(stats, a))


def thm2_radius(stats: SeparationStats, constants: TheoryConstants = TheoryConstants(), dim: int | None = None) -> float:
    """Simplified contraction radius (halving per step).

    ``dim`` defaults to ``min(d, M)``; pass ``stats.effective_dim_2m`` for
    the variant that the proof actually produces.
    """
    m = stats.effective_dim_m if dim is None else dim
    log_inner = max(math.log(stats.M) - 2.0 * math.log(stats.kappa), math.log(stats.r_max), math.log(m))
    return 0.5 * stats.r_min - constants.c1 * math.sqrt(m) * math.sqrt(log_inner)


def thm2_separation_ok(stats: SeparationStats, constants: TheoryConstants = TheoryConstants()) -> bool:
    return stats.r_min >= constants.c0 * math.sqrt(stats.effective_dim_m)


def c2_tilde(stats: SeparationStats, constants: TheoryConstants = TheoryConstants(), variant: str = "lemma") -> float:
    """Concentration constant for the weight sums.

    ``variant="lemma"`` gives ``C2 log(M (2 R_max + sqrt d))``;
    ``variant="with_rmax"`` gives ``C2 log(2 M R_max (2 R_max + sqrt d))``.
    """
    inner = 2.0 * stats.r_max + math.sqrt(stats.d)
    if variant == "lemma":
        return constants.c2 * math.log(stats.M * inner)
    if variant == "with_rmax":
        return constants.c2 * math.log(2.0 * stats.M * stats.r_max * inner)
    raise ValidationError(f"unknown variant {variant!r}")


def c3_tilde(stats: SeparationStats, constants: TheoryConstants = TheoryConstants()) -> float:
    return constants.c3 * math.log(stats.M * (3.0 * stats.r_max**2 + stats.d))


@dataclass(frozen=True)
class SampleSizeCheck:
    ok: bool
    threshold: float
    lhs: float
    c2_tilde: float
    c3_tilde: float


def sample_size_check(stats: SeparationStats, init_error: float, n: int,
                      constants: TheoryConstants = TheoryConstants()) -> SampleSizeCheck:
    """Whether ``log(n)/n`` is below the sample-size threshold."""
    if int(n) < 2:
        raise DomainError("n must be at least 2")
    c2t = c2_tilde(stats, constants)
    c3t = c3_tilde(stats, constants)
    Md = stats.M * stats.d
    k2 = stats.kappa**2
    threshold = min(
        k2 / (144.0 * c2t * Md),
        k2 * init_error**2 / (9.0 * c3t * stats.r_max**2 * Md),
    )
    lhs = math.log(n) / n
    return SampleSizeCheck(bool(lhs <= threshold and threshold > 0), threshold, lhs, c2t, c3t)


def plateau_term(stats: SeparationStats, n: int, constants: TheoryConstants = TheoryConstants()) -> float:
    """``(3 R_max / kappa) sqrt(C3~ M d log(n) / n)``."""
    if int(n) < 2:
        raise DomainError("n must be at least 2")
    return 3.0 * stats.r_max / stats.kappa * math.sqrt(
        c3_tilde(stats, constants) * stats.M * stats.d * math.log(n) / n
    )


def error_envelope(t: int, init_error: float, stats: SeparationStats, n: int,
                   constants: TheoryConstants = TheoryConstants()) -> float:
    """High-probability bound on the statistical error after ``t`` sample EM steps."""
    if t < 0:
        raise DomainError("t must be non-negative")
    return init_error / 2.0**t + plateau_term(stats, n, constants)


def gaussian_tail_bound(r: float, d: int) -> float:
    """Claimed bound ``exp(-r sqrt(d) / 2)`` on ``P(||N(0, I_d)|| >= r)``.

    Only stated for ``r >= 2 sqrt(d)``. Note the exact probability exceeds
    this value at ``r = 2 sqrt(d)`` once ``d >= 17``.
    """
    if d < 1:
        raise DomainError("d must be a positive integer")
    if r < 2.0 * math.sqrt(d):
        raise DomainError(f"tail bound requires r >= 2 sqrt(d) = {2.0 * math.sqrt(d)}, got r={r}")
    return math.exp(-r * math.sqrt(d) / 2.0)


def chi_survival(r: float, d: int) -> float:
    """Exact ``P(||N(0, I_d)|| >= r)`` via the regularized upper incomplete gamma."""
    from scipy.special import gammaincc

    return float(gammaincc(d / 2.0, r * r / 2.0))


@dataclass(frozen=True)
class TheoryReport:
    stats: SeparationStats
    constants: TheoryConstants
    radius_a: float
    zeta: float
    thm1_separation_ok: bool
    thm1_radius_positive: bool
    lemma_upper_radius: float
    lemma_lower_radius: float
    v_bound: float
    thm2_radius: float
    thm2_radius_2m: float
    thm2_dims_differ: bool
    thm2_separation_ok: bool
    n: int | None = None
    init_error: float | None = None
    sample_threshold: float | None = None
    sample_size_ok: bool | None = None
    c2_tilde: float | None = None
    c2_tilde_with_rmax: float | None = None
    c3_tilde: float | None = None
    plateau: float | None = None
    degenerate: bool = False
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["stats"] = self.stats.to_dict()
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_stats(cls, stats: SeparationStats, constants: TheoryConstants = TheoryConstants(),
                   n: int | None = None, init_error: float | None = None) -> "TheoryReport":
        a = contraction_radius_thm1(stats)
        a_up = lemma_upper_radius(stats)
        r2 = thm2_radius(stats, constants)
        r2m = thm2_radius(stats, constants, dim=stats.effective_dim_2m)
        kw = {}
        if n is not None:
            kw["n"] = int(n)
            kw["c2_tilde"] = c2_tilde(stats, constants)
            kw["c2_tilde_with_rmax"] = c2_tilde(stats, constants, "with_rmax")
            kw["c3_tilde"] = c3_tilde(stats, constants)
            kw["plateau"] = plateau_term(stats, n, constants)
            if init_error is not None:
                chk = sample_size_check(stats, init_error, n, constants)
                kw["init_error"] = float(init_error)
                kw["sample_threshold"] = chk.threshold
                kw["sample_size_ok"] = chk.ok
        return cls(
            stats=stats,
            constants=constants,
            radius_a=a,
            zeta=contraction_coefficient_zeta(stats, a),
            thm1_separation_ok=separation_ok_thm1(stats),
            thm1_radius_positive=a > 0,
            lemma_upper_radius=a_up,
            lemma_lower_radius=lemma_lower_radius(stats),
            v_bound=v_bound_lemma(stats, a_up),
            thm2_radius=r2,
            thm2_radius_2m=r2m,
            thm2_dims_differ=stats.effective_dim_m != stats.effective_dim_2m,
            thm2_separation_ok=thm2_separation_ok(stats, constants),
            **kw,
        )

    @classmethod
    def from_dict(cls, doc: dict) -> "TheoryReport":
        """Rebuild by recomputing from the stored stats, constants, n and init_error."""
        if doc.get("degenerate"):
            return degenerate_report(doc["extras"]["M"], doc["extras"]["d"], TheoryConstants(**doc["constants"]))
        return cls.from_stats(
            SeparationStats.from_dict(doc["stats"]),
            TheoryConstants(**doc["constants"]),
            doc.get("n"),
            doc.get("init_error"),
        )


def degenerate_report(M: int, d: int, constants: TheoryConstants = TheoryConstants()) -> dict:
    """Report document for a model where separation is undefined (M = 1)."""
    return {
        "degenerate": True,
        "constants": asdict(constants),
        "thm1_separation_ok": False,
        "thm1_radius_positive": False,
        "thm2_separation_ok": False,
        "sample_size_ok": False,
        "extras": {"M": M, "d": d},
    }


def theory_report(model: MixtureModel, constants: TheoryConstants = TheoryConstants(),
                  n: int | None = None, init_error: float | None = None):
    """TheoryReport for ``model``; a degenerate dict when M = 1."""
    try:
        stats = separation_stats(model)
    except DegenerateModelError:
        return degenerate_report(model.M, model.d, constants)
    return TheoryReport.from_stats(stats, constants, n, init_error)

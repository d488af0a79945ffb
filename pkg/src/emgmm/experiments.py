"""Simulation protocol: simplex-plus-origin mixtures, perturbed starts, EM trials.

Each trial derives its own seed from ``(master_seed, trial index)`` and its
data and initial iterate from that seed, so results do not depend on how
many worker threads are used or in what order trials finish.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .core import CenterSet, MixtureModel, sample_dataset
from .em import EmConfig, Trajectory, run_em
from .errors import GeometryError, ValidationError, WeightCollapseError
from .rng import DATA, INIT, TRIAL, derive_seed, make_rng
from .theory import TheoryConstants, theory_report

PLATEAU_WINDOW = 3
PLATEAU_SLACK = 1.1
CSV_COLUMNS = ["trial", "iteration", "stat_error", "opt_error", "r_min", "n", "weights_kind", "seed"]


class ModelKind(str, enum.Enum):
    SIMPLEX_PLUS_ORIGIN = "simplex_plus_origin"
    EXPLICIT_CENTERS = "explicit_centers"


class WeightsKind(str, enum.Enum):
    UNIFORM = "uniform"
    LINEAR_I_OVER_SUM = "linear_i_over_sum"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce a batch of EM trials."""

    model_kind: ModelKind = ModelKind.SIMPLEX_PLUS_ORIGIN
    M: int = 5
    d: int = 10
    r_min_scale: float = 2.0
    weights_kind: WeightsKind = WeightsKind.UNIFORM
    n: int = 8000
    trials: int = 10
    init_radius_fraction: float = 0.4
    em: EmConfig = field(default_factory=lambda: EmConfig(max_iters=500, rel_tol=1e-8))
    master_seed: int = 0
    centers: tuple | None = None
    weights: tuple | None = None
    record_opt_error: bool = True

    def __post_init__(self):
        object.__setattr__(self, "model_kind", ModelKind(self.model_kind))
        object.__setattr__(self, "weights_kind", WeightsKind(self.weights_kind))
        if isinstance(self.em, dict):
            object.__setattr__(self, "em", EmConfig.from_dict(self.em))
        if self.centers is not None:
            object.__setattr__(self, "centers", tuple(tuple(float(v) for v in row) for row in self.centers))
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(v) for v in self.weights))
        if int(self.trials) < 1:
            raise ValidationError("trials must be at least 1")
        if not (0.0 < self.init_radius_fraction <= 0.5):
            raise ValidationError("init_radius_fraction must lie in (0, 0.5]")
        if int(self.M) < 1 or int(self.d) < 1:
            raise ValidationError("M and d must be positive")
        if int(self.n) < int(self.M):
            raise ValidationError("n must be at least M")
        if not self.r_min_scale > 0:
            raise ValidationError("r_min_scale must be positive")
        if self.model_kind is ModelKind.EXPLICIT_CENTERS and self.centers is None:
            raise ValidationError("explicit_centers requires 'centers'")
        if self.weights_kind is WeightsKind.EXPLICIT and self.weights is None:
            raise ValidationError("explicit weights require 'weights'")

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "model_kind": self.model_kind.value,
            "M": int(self.M),
            "d": int(self.d),
            "r_min_scale": float(self.r_min_scale),
            "weights_kind": self.weights_kind.value,
            "n": int(self.n),
            "trials": int(self.trials),
            "init_radius_fraction": float(self.init_radius_fraction),
            "em": self.em.to_dict(),
            "master_seed": int(self.master_seed),
            "centers": None if self.centers is None else [list(r) for r in self.centers],
            "weights": None if self.weights is None else list(self.weights),
            "record_opt_error": bool(self.record_opt_error),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown spec fields: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)


@dataclass
class TrialResult:
    trial_index: int
    seed: int
    trajectory: Trajectory
    plateau_estimate: float
    iterations_to_plateau: int

    def summary(self) -> dict:
        traj = self.trajectory
        return {
            "trial_index": self.trial_index,
            "seed": self.seed,
            "plateau_estimate": self.plateau_estimate,
            "iterations_to_plateau": self.iterations_to_plateau,
            "n_iterations": traj.n_iterations,
            "stop_reason": traj.stop_reason.value,
            "initial_stat_error": traj.stat_errors[0],
            "final_stat_error": traj.stat_errors[-1],
            "final_centers": traj.final.centers.tolist(),
        }


def build_weights(spec: ExperimentSpec) -> np.ndarray:
    M = int(spec.M)
    if spec.weights_kind is WeightsKind.UNIFORM:
        return np.full(M, 1.0 / M)
    if spec.weights_kind is WeightsKind.LINEAR_I_OVER_SUM:
        i = np.arange(1, M + 1, dtype=float)
        return i / i.sum()
    w = np.asarray(spec.weights, dtype=float)
    if w.shape != (M,):
        raise ValidationError(f"explicit weights must have length M={M}")
    return w


def build_model(spec: ExperimentSpec) -> MixtureModel:
    """Ground-truth mixture described by ``spec``.

    ``simplex_plus_origin`` puts one center at 0 and the rest at
    ``r_min_scale * e_1, ..., r_min_scale * e_{M-1}``, so the smallest
    separation is ``r_min_scale`` and the largest ``sqrt(2) r_min_scale``.
    """
    M, d = int(spec.M), int(spec.d)
    if spec.model_kind is ModelKind.SIMPLEX_PLUS_ORIGIN:
        if M - 1 > d:
            raise GeometryError(f"cannot place {M - 1} axis vertices in dimension {d}")
        centers = np.zeros((M, d))
        for i in range(1, M):
            centers[i, i - 1] = spec.r_min_scale
    else:
        centers = np.asarray(spec.centers, dtype=float)
        if centers.shape != (M, d):
            raise ValidationError(f"explicit centers have shape {centers.shape}, expected {(M, d)}")
    return MixtureModel(centers, build_weights(spec))


def _r_min(model: MixtureModel) -> float:
    c = model.centers
    ds = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=2)
    return float(ds[np.triu_indices(model.M, 1)].min())


def perturbed_init(model: MixtureModel, fraction: float, seed: int, scale: float | None = None) -> CenterSet:
    """Truth plus independent perturbations uniform on a sphere.

    Each center moves by exactly ``fraction * scale`` in a uniformly random
    direction; ``scale`` defaults to the model's smallest center separation
    (and must be given when M = 1).
    """
    if not (0.0 < fraction <= 0.5):
        raise ValidationError("fraction must lie in (0, 0.5]")
    if scale is None:
        if model.M < 2:
            raise ValidationError("scale is required for a single-component model")
        scale = _r_min(model)
    rng = make_rng(seed)
    g = rng.standard_normal(model.centers.shape)
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return CenterSet(model.centers + fraction * scale * g)


def plateau_stats(stat_errors) -> tuple[float, int]:
    """Mean of the last three errors, and the first index within 10% of it."""
    errs = np.asarray(stat_errors, dtype=float)
    plateau = float(errs[-PLATEAU_WINDOW:].mean())
    hit = np.flatnonzero(errs <= PLATEAU_SLACK * plateau)
    return plateau, int(hit[0])


def trial_seed(spec: ExperimentSpec, trial: int) -> int:
    return derive_seed(spec.master_seed, TRIAL, trial)


def run_trial(spec: ExperimentSpec, trial: int, model: MixtureModel | None = None) -> TrialResult:
    model = build_model(spec) if model is None else model
    seed = trial_seed(spec, trial)
    data = sample_dataset(model, spec.n, derive_seed(seed, DATA))
    scale = spec.r_min_scale if model.M < 2 else None
    init = perturbed_init(model, spec.init_radius_fraction, derive_seed(seed, INIT), scale)
    try:
        traj = run_em(data, init, spec.em, model, record_opt_error=spec.record_opt_error)
    except WeightCollapseError as exc:
        raise exc.tagged(trial=trial) from None
    plateau, hit = plateau_stats(traj.stat_errors)
    return TrialResult(trial, seed, traj, plateau, hit)


def run_trials(spec: ExperimentSpec, threads: int = 1) -> list[TrialResult]:
    """Run ``spec.trials`` independent trials; output ordered by trial index."""
    model = build_model(spec)
    indices = range(int(spec.trials))
    if threads <= 1:
        return [run_trial(spec, t, model) for t in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda t: run_trial(spec, t, model), indices))


def _padded_errors(results, length):
    rows = []
    for r in results:
        e = list(r.trajectory.stat_errors)
        rows.append(e + [e[-1]] * (length - len(e)))
    return np.asarray(rows)


@dataclass
class SnrSweep:
    """Per-R_min trial results plus the aggregated per-iteration table.

    Trajectories that stopped early are padded with their final error
    (the iterate no longer moves) before averaging.
    """

    r_values: list
    results: dict
    rows: list

    def mean_error_at(self, r: float, iteration: int) -> float:
        for row in self.rows:
            if row["r_min"] == r and row["iteration"] == iteration:
                return row["mean_stat_error"]
        raise KeyError((r, iteration))


def snr_sweep(base: ExperimentSpec, r_values, threads: int = 1) -> SnrSweep:
    """Repeat ``run_trials`` at each R_min, sharing the master seed."""
    r_values = [float(r) for r in r_values]
    if not r_values or any(r <= 0 for r in r_values):
        raise ValidationError("r_values must be a non-empty list of positive numbers")
    results = {}
    rows = []
    for r in r_values:
        res = run_trials(base.replace(r_min_scale=r), threads)
        results[r] = res
        length = max(len(x.trajectory.stat_errors) for x in res)
        errs = _padded_errors(res, length)
        for t in range(length):
            rows.append({
                "r_min": r,
                "iteration": t,
                "mean_stat_error": float(errs[:, t].mean()),
                "mean_log_stat_error": float(np.log(errs[:, t]).mean()),
                "trials": len(res),
            })
    return SnrSweep(r_values, results, rows)


def csv_text(results: list[TrialResult], spec: ExperimentSpec) -> str:
    """One row per (trial, iteration)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for res in results:
        traj = res.trajectory
        for t, err in enumerate(traj.stat_errors):
            opt = "" if traj.opt_errors is None else repr(float(traj.opt_errors[t]))
            writer.writerow([res.trial_index, t, repr(float(err)), opt, repr(float(spec.r_min_scale)),
                             int(spec.n), spec.weights_kind.value, res.seed])
    return buf.getvalue()


def results_document(results: list[TrialResult], spec: ExperimentSpec,
                     constants: TheoryConstants = TheoryConstants()) -> dict:
    """JSON-ready summary: spec, theory report, metadata, per-trial summaries."""
    model = build_model(spec)
    init_error = spec.init_radius_fraction * spec.r_min_scale
    report = theory_report(model, constants, n=spec.n, init_error=init_error)
    report = report if isinstance(report, dict) else report.to_dict()
    mle = next((r.trajectory.metadata.get("mle_proxy") for r in results
                if "mle_proxy" in r.trajectory.metadata), None)
    return {
        "spec": spec.to_dict(),
        "theory_report": report,
        "metadata": {
            "kernel_backend": kernels.BACKEND,
            "center_layout": (
                f"origin plus r_min_scale * e_1..e_{int(spec.M) - 1}"
                if spec.model_kind is ModelKind.SIMPLEX_PLUS_ORIGIN else "explicit"
            ),
            "mle_proxy": None if mle is None else {k: mle[k] for k in ("definition", "rel_tol")},
            "plateau_rule": f"mean of last {PLATEAU_WINDOW} errors; first t with error <= {PLATEAU_SLACK} x plateau",
        },
        "trials": [r.summary() for r in results],
    }


def emit_outputs(results: list[TrialResult], format: str, path, spec: ExperimentSpec,
                 constants: TheoryConstants = TheoryConstants()) -> Path:
    """Write trial results as CSV or JSON to ``path``; same input, same bytes."""
    if not results:
        raise ValidationError("no results to emit")
    path = Path(path)
    if format == "csv":
        text = csv_text(results, spec)
    elif format == "json":
        text = json.dumps(results_document(results, spec, constants), indent=2, sort_keys=True) + "\n"
    else:
        raise ValidationError(f"unknown output format {format!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def sweep_csv_text(sweep: SnrSweep, spec: ExperimentSpec) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["r_min", "iteration", "mean_stat_error", "mean_log_stat_error", "trials", "weights_kind"])
    for row in sweep.rows:
        writer.writerow([repr(row["r_min"]), row["iteration"], repr(row["mean_stat_error"]),
                         repr(row["mean_log_stat_error"]), row["trials"], spec.weights_kind.value])
    return buf.getvalue()


def figure1_spec(**overrides) -> ExperimentSpec:
    """Default balanced protocol: M=5, d=10, R_min=2, n=8000, 10 trials, 0.4 R_min starts."""
    return ExperimentSpec(**overrides)


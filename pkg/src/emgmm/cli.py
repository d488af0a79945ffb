"""Command-line entry point.

Exit codes: 0 success, 2 validation error, 3 weight collapse.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import CenterSet, Dataset, MixtureModel, sample_dataset
from .em import run_em
from .errors import ValidationError, WeightCollapseError
from .experiments import (
    ExperimentSpec,
    TrialResult,
    WeightsKind,
    build_model,
    csv_text,
    emit_outputs,
    perturbed_init,
    plateau_stats,
    run_trials,
    snr_sweep,
    sweep_csv_text,
)
from .rng import DATA, INIT, derive_seed
from .theory import TheoryConstants, theory_report
from .verify import lemma_checks

log = logging.getLogger("emgmm")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_COLLAPSE = 3


def _spec(args) -> ExperimentSpec:
    spec = ExperimentSpec.load(args.config) if args.config else ExperimentSpec()
    if args.seed is not None:
        spec = spec.replace(master_seed=args.seed)
    return spec


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def _constants(args) -> TheoryConstants:
    return TheoryConstants(args.c0, args.c1, args.c2, args.c3)


def save_dataset(path, data: Dataset, model: MixtureModel):
    np.savez(path, points=data.points, seed=np.uint64(data.seed), digest=data.source_model_digest,
             centers=model.centers, weights=model.weights, labels=data._labels)


def load_dataset(path) -> tuple[Dataset, MixtureModel]:
    with np.load(path) as f:
        model = MixtureModel(f["centers"], f["weights"])
        data = Dataset(f["points"], int(f["seed"]), str(f["digest"]), f["labels"])
    if data.source_model_digest != model.digest():
        raise ValidationError(f"{path}: dataset digest does not match its stored model")
    return data, model


def cmd_simulate(args) -> int:
    spec = _spec(args)
    model = build_model(spec)
    data = sample_dataset(model, spec.n, derive_seed(spec.master_seed, DATA))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(out / "dataset.npz", data, model)
    _write(out / "model.json", json.dumps(model.to_dict(), indent=2) + "\n")
    return EXIT_OK


def cmd_em_run(args) -> int:
    spec = _spec(args)
    data, model = load_dataset(args.dataset)
    if args.init:
        p = Path(args.init)
        arr = np.load(p) if p.suffix == ".npy" else np.asarray(json.loads(p.read_text()), dtype=float)
        init = CenterSet(arr)
    else:
        scale = spec.r_min_scale if model.M < 2 else None
        init = perturbed_init(model, spec.init_radius_fraction, derive_seed(spec.master_seed, INIT), scale)
    traj = run_em(data, init, spec.em, model, record_opt_error=spec.record_opt_error)
    plateau, hit = plateau_stats(traj.stat_errors)
    result = TrialResult(0, data.seed, traj, plateau, hit)
    _write(Path(args.out) / "trajectory.csv", csv_text([result], spec.replace(n=data.n)))
    return EXIT_OK


def cmd_theory_report(args) -> int:
    spec = _spec(args)
    model = build_model(spec)
    init_error = args.init_error if args.init_error is not None else spec.init_radius_fraction * spec.r_min_scale
    report = theory_report(model, _constants(args), n=args.n or spec.n, init_error=init_error)
    doc = report if isinstance(report, dict) else report.to_dict()
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        _write(Path(args.out) / "theory_report.json", text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify_lemmas(args) -> int:
    spec = _spec(args)
    model = build_model(spec)
    results = lemma_checks(model, args.mc_samples, args.probes, spec.master_seed, args.t_grid)
    text = json.dumps([r.to_dict() for r in results], indent=2) + "\n"
    if args.out:
        _write(Path(args.out) / "lemma_checks.json", text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_fig1(args) -> int:
    """Balanced and imbalanced trial sets (left panels) and both SNR sweeps."""
    base = _spec(args)
    out = Path(args.out)
    for kind in (WeightsKind.UNIFORM, WeightsKind.LINEAR_I_OVER_SUM):
        spec = base.replace(weights_kind=kind)
        results = run_trials(spec, args.threads)
        emit_outputs(results, "csv", out / f"fig1_{kind.value}.csv", spec)
        emit_outputs(results, "json", out / f"fig1_{kind.value}.json", spec)
        if not args.skip_sweep:
            sweep = snr_sweep(spec.replace(record_opt_error=False), args.r_values, args.threads)
            _write(out / f"fig1_snr_{kind.value}.csv", sweep_csv_text(sweep, spec))
    return EXIT_OK


def cmd_snr_sweep(args) -> int:
    spec = _spec(args).replace(record_opt_error=False)
    sweep = snr_sweep(spec, args.r_values, args.threads)
    _write(Path(args.out) / "snr_sweep.csv", sweep_csv_text(sweep, spec))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emgmm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="JSON file with ExperimentSpec fields")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", required=out_required, help="output directory")

    def consts(p):
        for name in ("c0", "c1", "c2", "c3"):
            p.add_argument(f"--{name}", type=float, default=1.0)

    p = sub.add_parser("simulate", help="sample a dataset from the spec's model")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("em-run", help="run EM on a saved dataset")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--init", help=".npy or JSON (M x d) initial centers; default perturbed truth")
    p.set_defaults(func=cmd_em_run)

    p = sub.add_parser("theory-report", help="evaluate the theoretical quantities for the spec's model")
    common(p, out_required=False)
    consts(p)
    p.add_argument("--n", type=int)
    p.add_argument("--init-error", type=float)
    p.set_defaults(func=cmd_theory_report)

    p = sub.add_parser("verify-lemmas", help="Monte-Carlo checks of the lemma bounds")
    common(p, out_required=False)
    p.add_argument("--mc-samples", type=int, default=200_000)
    p.add_argument("--probes", type=int, default=10)
    p.add_argument("--t-grid", type=int, default=11)
    p.set_defaults(func=cmd_verify_lemmas)

    p = sub.add_parser("fig1", help="full simulation study (CSV + JSON)")
    common(p)
    p.add_argument("--r-values", type=float, nargs="+", default=[1.5, 2.0, 3.0, 4.0])
    p.add_argument("--skip-sweep", action="store_true")
    p.set_defaults(func=cmd_fig1)

    p = sub.add_parser("snr-sweep", help="mean error per iteration across R_min values")
    common(p)
    p.add_argument("--r-values", type=float, nargs="+", default=[1.5, 2.0, 3.0, 4.0])
    p.set_defaults(func=cmd_snr_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except WeightCollapseError as exc:
        log.error("%s", exc)
        return EXIT_COLLAPSE
    except (ValidationError, TypeError, KeyError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

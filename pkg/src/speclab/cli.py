"""Command-line front end: ``speclab generate | estimate | sweep | slopes``.

Exit codes: 0 success, 2 invalid configuration, 3 estimator failure,
4 sweep-level failure.  Result files never contain timestamps; use
``--log-file`` for a timestamped run log.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .errors import EstimatorError
from .estimators import EstimatorConfig, esprit, esprit_refine, objective
from .experiments import (
    ESTIMATORS,
    SweepConfig,
    SweepError,
    error_metrics,
    expected_slopes,
    match_spikes,
    run_sweep,
    slopes_from_csv,
    write_plot_data,
    write_trial_csv,
)
from .measure import (
    InfeasibleMeasureError,
    NoiseModel,
    apply_noise,
    dump_json,
    load_measure,
    load_measurements,
    random_measure,
    sample_noiseless,
)

EXIT_OK, EXIT_CONFIG, EXIT_ESTIMATOR, EXIT_SWEEP = 0, 2, 3, 4

log = logging.getLogger("speclab")

PRESETS = {
    "example1": {"r": 4, "min_gap": 0.1, "sigma": 0.1, "p": 0.0},
    "example2": {"r": 4, "min_gap": 0.1, "sigma": 0.1, "p": 0.25},
    "example3": {"r": 4, "min_gap": 0.1, "sigma": 0.1, "p": 0.75},
}
PRESET_GRID = [16, 32, 64, 128, 256, 512, 1024, 2048, 4096]


class ConfigError(ValueError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="speclab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    ap.add_argument("--log-file", type=Path, help="timestamped run log (sidecar)")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a spike measure and its measurements")
    g.add_argument("--r", type=int, required=True)
    g.add_argument("--gap", type=float, required=True, help="minimum circular gap")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--sigma", type=float, default=0.0)
    g.add_argument("--p", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--trial", type=int, default=0, help="noise trial index")
    g.add_argument("--weight-low", type=float, default=0.5)
    g.add_argument("--weight-high", type=float, default=1.5)
    g.add_argument("--out-dir", type=Path, default=Path("."))
    g.add_argument("--prefix", default="spikes")

    e = sub.add_parser("estimate", help="recover spikes from a measurement file")
    e.add_argument("input", type=Path)
    e.add_argument("--rank", type=int, required=True)
    e.add_argument("--refine", action="store_true", help="Gauss-Newton refinement")
    e.add_argument("--truth", type=Path, help="measure JSON for error metrics")
    e.add_argument("--max-iters", type=int, default=50)
    e.add_argument("--out", type=Path, default=Path("estimate.json"))
    e.add_argument("--metrics", type=Path, help="default: <out stem>_metrics.json")

    s = sub.add_parser("sweep", help="Monte Carlo error-scaling sweep")
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--config", type=Path, help="JSON with SweepConfig fields")
    s.add_argument("--r", type=int)
    s.add_argument("--gap", dest="min_gap", type=float)
    s.add_argument("--sigma", type=float)
    s.add_argument("--p", type=float)
    s.add_argument("--n-grid", type=_int_list)
    s.add_argument("--trials", type=int)
    s.add_argument("--seed", dest="master_seed", type=int)
    s.add_argument("--estimator", dest="estimators", action="append", choices=ESTIMATORS)
    s.add_argument("--weight-low", type=float)
    s.add_argument("--weight-high", type=float)
    s.add_argument("--max-iters", type=int)
    s.add_argument("--max-n", type=int, help="drop grid points above this")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out-dir", type=Path, default=Path("."))
    s.add_argument("--stem", default="sweep")

    sl = sub.add_parser("slopes", help="expected slopes, optionally refit from a trial CSV")
    sl.add_argument("--p", type=float, required=True)
    sl.add_argument("--csv", type=Path)
    sl.add_argument("--estimator", choices=ESTIMATORS)
    return ap


def _setup_logging(args) -> None:
    level = logging.WARNING - 10 * min(args.verbose, 2)
    root = logging.getLogger()
    for h in [h for h in root.handlers if getattr(h, "_speclab", False)]:
        root.removeHandler(h)
        h.close()
    root.setLevel(logging.DEBUG)
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(level)
    console.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    ours = [console]
    if args.log_file:
        fh = logging.FileHandler(args.log_file)
        fh.setLevel(logging.DEBUG)
        fh.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
        ours.append(fh)
    for h in ours:
        h._speclab = True
        root.addHandler(h)


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    try:
        measure = random_measure(args.r, args.gap, args.weight_low, args.weight_high, seed=args.seed)
        model = NoiseModel(args.sigma, args.p, args.seed)
        clean = sample_noiseless(measure, args.n)
    except InfeasibleMeasureError as exc:
        raise ConfigError(str(exc))
    except ValueError as exc:
        raise ConfigError(f"invalid parameters: {exc}")
    noisy = apply_noise(clean, model, args.trial)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{args.prefix}_{name}.json" for name in ("measure", "clean", "noisy")]
    dump_json(measure, paths[0])
    dump_json(clean, paths[1])
    dump_json(noisy, paths[2])
    for p in paths:
        print(p)
    return EXIT_OK


# ---------------------------------------------------------------------------
# estimate


def cmd_estimate(args) -> int:
    try:
        g = load_measurements(args.input)
        truth = load_measure(args.truth) if args.truth else None
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read input: {exc}")
    if args.rank < 1:
        raise ConfigError("--rank must be >= 1")
    try:
        if args.refine:
            res = esprit_refine(g, EstimatorConfig(rank=args.rank, max_iters=args.max_iters))
            est, extra = res.measure, {
                "converged": res.converged,
                "iterations": res.iterations,
                "initial_objective": res.initial_objective,
            }
        else:
            est, extra = esprit(g, args.rank), {}
    except EstimatorError as exc:
        print(f"estimator failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR

    doc = {
        "estimator": "esprit+refine" if args.refine else "esprit",
        "measure": est.to_dict(),
        "objective": objective(g, est),
        **extra,
    }
    dump_json(doc, args.out)
    print(f"objective {doc['objective']:.12g}")
    if truth is not None:
        if truth.r != est.r:
            raise ConfigError(f"truth has {truth.r} spikes, rank is {est.r}")
        pairing = match_spikes(truth, est)
        loc, wt = error_metrics(truth, est, pairing)
        metrics = {
            "pairing": pairing.tolist(),
            "location_errors": loc.tolist(),
            "weight_errors": wt.tolist(),
            "loc_err_max": float(loc.max()),
            "wt_err_max": float(wt.max()),
        }
        path = args.metrics or args.out.with_name(args.out.stem + "_metrics.json")
        dump_json(metrics, path)
        print(f"max location error {metrics['loc_err_max']:.3e}  max weight error {metrics['wt_err_max']:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def resolve_sweep_config(args) -> SweepConfig:
    """Preset, then config file, then explicit flags."""
    fields = {}
    if args.preset:
        fields.update(PRESETS[args.preset])
        fields["n_grid"] = list(PRESET_GRID)
    if args.config:
        try:
            fields.update(json.loads(args.config.read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}")
    for name in (
        "r",
        "min_gap",
        "sigma",
        "p",
        "n_grid",
        "trials",
        "master_seed",
        "estimators",
        "weight_low",
        "weight_high",
        "max_iters",
    ):
        value = getattr(args, name)
        if value is not None:
            fields[name] = value
    if args.max_n is not None:
        grid = fields.get("n_grid", list(SweepConfig().n_grid))
        fields["n_grid"] = [n for n in grid if n <= args.max_n]
    try:
        return SweepConfig.from_dict(fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sweep config: {exc}")


def _print_slopes(report) -> None:
    pl, pw = report.predicted
    print(f"expected slopes: location {pl:+.3f}  weight {pw:+.3f}")
    if report.noiseless:
        print("noiseless configuration: slope fit skipped")
    for est in report.config.estimators:
        fits = report.slopes.get(est, {})
        parts = []
        for q in ("location", "weight"):
            fit = fits.get(q)
            parts.append(f"{q} {'n/a':>7}" if fit is None else f"{q} {fit['slope']:+.3f} (R2 {fit['r_squared']:.3f})")
        print(f"{est:>18}: " + "  ".join(parts))


def cmd_sweep(args) -> int:
    cfg = resolve_sweep_config(args)
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    status = EXIT_OK
    try:
        report = run_sweep(cfg, workers=args.workers)
    except SweepError as exc:
        print(f"sweep failure: {exc}", file=sys.stderr)
        report, status = exc.report, EXIT_SWEEP
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    dump_json(report.to_dict(), out / f"{args.stem}_report.json")
    write_trial_csv(report, out / f"{args.stem}_trials.csv")
    write_plot_data(report, out, args.stem)
    log.info("wrote sweep outputs to %s", out)
    _print_slopes(report)
    return status


def cmd_slopes(args) -> int:
    pl, pw = expected_slopes(args.p)
    print(f"expected slopes: location {pl:+.3f}  weight {pw:+.3f}")
    if args.csv:
        try:
            fits = slopes_from_csv(args.csv, args.estimator)
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot refit from {args.csv}: {exc}")
        for est, f in fits.items():
            parts = [f"{q} {'n/a' if f[q] is None else format(f[q]['slope'], '+.3f')}" for q in ("location", "weight")]
            print(f"{est:>18}: " + "  ".join(parts))
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "estimate": cmd_estimate,
    "sweep": cmd_sweep,
    "slopes": cmd_slopes,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args)
    log.info("command %s", args.command)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

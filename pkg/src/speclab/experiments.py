"""Monte Carlo sweeps of estimation error against the maximum frequency ``n``.

Every trial is a pure function of ``(config, n, trial_index, estimator)``:
the spike measure and the noise come from independent random streams keyed
on ``(master_seed, n, trial_index)``, so reports do not depend on how trials
are scheduled across workers.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import linregress

from .errors import EstimatorError
from .estimators import EstimatorConfig, esprit, esprit_refine
from .measure import (
    MEASURE_STREAM,
    NoiseModel,
    SpikeMeasure,
    apply_noise,
    circular_distance,
    draw_noise,
    random_measure,
    sample_noiseless,
    trial_rng,
)
from .perturbation import build_design, solve_first_order

log = logging.getLogger(__name__)

ESTIMATORS = ("esprit", "esprit+refine", "linearized-oracle")
EXHAUSTIVE_MAX_R = 8
CSV_COLUMNS = (
    "n",
    "trial",
    "estimator",
    "loc_err_max",
    "loc_err_mean",
    "wt_err_max",
    "wt_err_mean",
    "success",
)


class SweepError(RuntimeError):
    """A whole grid level produced no successful trial."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SweepConfig:
    r: int = 4
    min_gap: float = 0.1
    sigma: float = 0.1
    p: float = 0.0
    n_grid: tuple = (16, 32, 64, 128, 256, 512, 1024)
    trials: int = 50
    master_seed: int = 0
    estimators: tuple = ("esprit", "esprit+refine")
    weight_low: float = 0.5
    weight_high: float = 1.5
    max_iters: int = 50
    warm_start_window: int | None = 64

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if not self.n_grid:
            raise ValueError("n_grid must not be empty")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must be strictly increasing")
        if self.n_grid[0] < 1:
            raise ValueError("grid values must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.r < 1 or not self.min_gap > 0:
            raise ValueError("need r >= 1 and min_gap > 0")
        if self.sigma < 0 or self.p < 0:
            raise ValueError("sigma and p must be >= 0")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad or not self.estimators:
            raise ValueError(f"unknown estimators {bad}; choose from {ESTIMATORS}")

    def advisories(self) -> list[str]:
        """Grid points below the ``n ~ r / min_gap`` separation regime."""
        limit = self.r / self.min_gap
        return [f"n={n} is below r/min_gap={limit:.3g}" for n in self.n_grid if n < limit]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_grid"] = list(self.n_grid)
        d["estimators"] = list(self.estimators)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config fields: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class ErrorRecord:
    n: int
    trial_index: int
    estimator: str
    location_errors: np.ndarray
    weight_errors: np.ndarray
    success: bool
    converged: bool = True
    message: str = ""

    def __eq__(self, other):
        if not isinstance(other, ErrorRecord):
            return NotImplemented
        return (
            (self.n, self.trial_index, self.estimator, self.success, self.converged, self.message)
            == (other.n, other.trial_index, other.estimator, other.success, other.converged, other.message)
            and np.array_equal(self.location_errors, other.location_errors)
            and np.array_equal(self.weight_errors, other.weight_errors)
        )

    def csv_row(self) -> list:
        if self.success:
            vals = [
                self.location_errors.max(),
                self.location_errors.mean(),
                self.weight_errors.max(),
                self.weight_errors.mean(),
            ]
            vals = [repr(float(v)) for v in vals]
        else:
            vals = [""] * 4
        return [self.n, self.trial_index, self.estimator, *vals, int(self.success)]


@dataclass
class SweepReport:
    config: SweepConfig
    levels: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)
    predicted: tuple = (0.0, 0.0)
    noiseless: bool = False
    records: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "noiseless": self.noiseless,
            "predicted_slopes": {"location": self.predicted[0], "weight": self.predicted[1]},
            "levels": self.levels,
            "slopes": self.slopes,
            "metadata": {
                "statistic": "median over trials of max-over-spikes error",
                "location_error": "circular absolute error (radians)",
                "weight_error": "relative error |w_hat - w| / |w|",
                "trials_per_n": self.config.trials,
                "failed_trials": "excluded from statistics, counted per level",
                "advisories": self.config.advisories(),
            },
        }

    def slope(self, estimator: str, quantity: str) -> float | None:
        fit = self.slopes.get(estimator, {}).get(quantity)
        return None if fit is None else fit["slope"]


# ---------------------------------------------------------------------------
# matching and metrics


@lru_cache(maxsize=None)
def _permutations(r: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(r))), dtype=np.intp)


def match_spikes(truth: SpikeMeasure, estimate: SpikeMeasure) -> np.ndarray:
    """Permutation ``perm`` pairing ``truth[k]`` with ``estimate[perm[k]]``.

    Minimizes the summed circular distance; exhaustive up to
    ``EXHAUSTIVE_MAX_R`` spikes, Hungarian assignment beyond.
    """
    if truth.r != estimate.r:
        raise ValueError(f"spike counts differ: {truth.r} vs {estimate.r}")
    cost = circular_distance(truth.locations[:, None], estimate.locations[None, :])
    if truth.r <= EXHAUSTIVE_MAX_R:
        perms = _permutations(truth.r)
        total = cost[np.arange(truth.r), perms].sum(axis=1)
        return perms[int(np.argmin(total))].copy()
    _, cols = linear_sum_assignment(cost)
    return cols


def error_metrics(truth: SpikeMeasure, estimate: SpikeMeasure, pairing) -> tuple[np.ndarray, np.ndarray]:
    """Per-spike circular location errors and relative weight errors."""
    pairing = np.asarray(pairing)
    loc = circular_distance(truth.locations, estimate.locations[pairing])
    wt = np.abs(estimate.weights[pairing] - truth.weights) / np.abs(truth.weights)
    return loc, wt


# ---------------------------------------------------------------------------
# slopes


def fit_slope(points) -> tuple[float, float, float]:
    """OLS fit of ``log(error)`` on ``log(n)``; returns (slope, intercept, R^2)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (n, error) points")
    if np.any(pts <= 0):
        raise ValueError("n and error values must be positive")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(lx) == 0:
        raise ValueError("need at least two distinct n values")
    fit = linregress(lx, ly)
    r2 = 1.0 if pts.shape[0] == 2 else float(fit.rvalue**2)
    return float(fit.slope), float(fit.intercept), r2


def expected_slopes(p: float) -> tuple[float, float]:
    return (-1.5 + p, -0.5 + p)


# ---------------------------------------------------------------------------
# trials


def trial_measure(cfg: SweepConfig, n: int, trial_index: int) -> SpikeMeasure:
    rng = trial_rng(cfg.master_seed, n, trial_index, MEASURE_STREAM)
    return random_measure(cfg.r, cfg.min_gap, cfg.weight_low, cfg.weight_high, seed=rng)


def run_trial(cfg: SweepConfig, n: int, trial_index: int, estimator: str) -> ErrorRecord:
    truth = trial_measure(cfg, n, trial_index)
    model = NoiseModel(cfg.sigma, cfg.p, cfg.master_seed)
    converged = True
    try:
        if estimator == "linearized-oracle":
            z = draw_noise(model, n, trial_index)
            sol = solve_first_order(build_design(truth, n), z)
            loc = np.abs(sol.a.real)
            wt = np.abs(sol.b)
        else:
            g = apply_noise(sample_noiseless(truth, n), model, trial_index)
            if estimator == "esprit":
                est = esprit(g, cfg.r)
            else:
                ecfg = EstimatorConfig(
                    rank=cfg.r, max_iters=cfg.max_iters, warm_start_window=cfg.warm_start_window
                )
                res = esprit_refine(g, ecfg)
                est, converged = res.measure, res.converged
            loc, wt = error_metrics(truth, est, match_spikes(truth, est))
    except (EstimatorError, ValueError, np.linalg.LinAlgError) as exc:
        nan = np.full(cfg.r, np.nan)
        return ErrorRecord(n, trial_index, estimator, nan, nan, False, False, f"{type(exc).__name__}: {exc}")
    return ErrorRecord(n, trial_index, estimator, loc, wt, True, converged)


def _run_task(args):
    return run_trial(*args)


def _summary(values: list[float]) -> dict:
    if not values:
        return {"median": None, "mean": None}
    v = np.sort(np.asarray(values))
    return {"median": float(np.median(v)), "mean": float(math.fsum(v) / v.size)}


def run_sweep(cfg: SweepConfig, workers: int = 1) -> SweepReport:
    """Run every (estimator, n, trial) task and aggregate per grid level.

    Raises :class:`SweepError` (carrying the report) if some level has no
    successful trial for some estimator.
    """
    for msg in cfg.advisories():
        log.warning("advisory: %s", msg)
    tasks = [
        (cfg, n, t, est)
        for est in cfg.estimators
        for n in cfg.n_grid
        for t in range(cfg.trials)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        records = [_run_task(t) for t in tasks]
    records.sort(key=lambda rec: (cfg.estimators.index(rec.estimator), rec.n, rec.trial_index))

    noiseless = cfg.sigma == 0
    report = SweepReport(config=cfg, predicted=expected_slopes(cfg.p), noiseless=noiseless, records=records)
    empty = []
    for est in cfg.estimators:
        levels = []
        for n in cfg.n_grid:
            ok = [r for r in records if r.estimator == est and r.n == n and r.success]
            n_fail = cfg.trials - len(ok)
            if not ok:
                empty.append((est, n))
            loc = _summary([float(r.location_errors.max()) for r in ok])
            wt = _summary([float(r.weight_errors.max()) for r in ok])
            levels.append(
                {
                    "n": n,
                    "successes": len(ok),
                    "failures": n_fail,
                    "not_converged": sum(not r.converged for r in ok),
                    "loc_err_median": loc["median"],
                    "loc_err_mean": loc["mean"],
                    "wt_err_median": wt["median"],
                    "wt_err_mean": wt["mean"],
                }
            )
        report.levels[est] = levels
        report.slopes[est] = _fit_levels(levels, noiseless)

    if empty:
        raise SweepError(f"no successful trials at (estimator, n) = {empty}", report)
    return report


def _fit_levels(levels: list[dict], noiseless: bool) -> dict:
    out = {}
    for quantity, key in (("location", "loc_err_median"), ("weight", "wt_err_median")):
        pts = [(lv["n"], lv[key]) for lv in levels if lv[key] is not None and lv[key] > 0]
        if noiseless or len(pts) < 2:
            out[quantity] = None
            continue
        slope, intercept, r2 = fit_slope(pts)
        out[quantity] = {"slope": slope, "intercept": intercept, "r_squared": r2}
    return out


# ---------------------------------------------------------------------------
# output files


def write_trial_csv(report: SweepReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in report.records:
            w.writerow(rec.csv_row())


def read_trial_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_plot_data(report: SweepReport, directory, stem: str = "sweep") -> list[Path]:
    """Two-column ``log10 n`` / ``log10 median error`` files per estimator and quantity."""
    directory = Path(directory)
    paths = []
    for est, levels in report.levels.items():
        tag = est.replace("+", "_")
        for quantity, key in (("location", "loc_err_median"), ("weight", "wt_err_median")):
            path = directory / f"{stem}_{tag}_{quantity}.dat"
            lines = [f"# log10_n log10_median_{quantity}_error ({est})"]
            for lv in levels:
                if lv[key] is not None and lv[key] > 0:
                    lines.append(f"{math.log10(lv['n']):.12g} {math.log10(lv[key]):.12g}")
            path.write_text("\n".join(lines) + "\n")
            paths.append(path)
    return paths


def slopes_from_csv(path, estimator: str | None = None) -> dict:
    """Refit median-of-max slopes from a trial CSV."""
    rows = [r for r in read_trial_csv(path) if r["success"] == "1"]
    out = {}
    for est in sorted({r["estimator"] for r in rows}):
        if estimator is not None and est != estimator:
            continue
        by_n: dict[int, dict[str, list]] = {}
        for r in rows:
            if r["estimator"] == est:
                d = by_n.setdefault(int(r["n"]), {"loc": [], "wt": []})
                d["loc"].append(float(r["loc_err_max"]))
                d["wt"].append(float(r["wt_err_max"]))
        levels = [
            {"n": n, "loc_err_median": float(np.median(d["loc"])), "wt_err_median": float(np.median(d["wt"]))}
            for n, d in sorted(by_n.items())
        ]
        out[est] = _fit_levels(levels, noiseless=False)
    return out

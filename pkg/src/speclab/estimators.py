"""ESPRIT spike recovery and Gauss-Newton refinement of the data fit."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.signal import fftconvolve
from scipy.sparse.linalg import LinearOperator, svds

from .errors import DegeneracyError, EstimatorError, IllConditionedError, RankDeficiencyError, SizeError
from .measure import MeasurementSet, SpikeMeasure, min_circular_gap, sample_noiseless, wrap_angle
from .perturbation import COND_MAX, build_design, solve_first_order

log = logging.getLogger(__name__)

# Hankel orders above this use a matrix-free truncated SVD
DENSE_SVD_MAX = 384
COLLISION_GAP = 1e-8


@dataclass(frozen=True)
class Damping:
    shrink: float = 0.5
    max_halvings: int = 30


@dataclass(frozen=True)
class EstimatorConfig:
    rank: int
    max_iters: int = 50
    step_tol: float = 1e-13
    damping: Damping = field(default_factory=Damping)
    warm_start_window: int | None = 64
    window_growth: float = 2.0

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not self.step_tol > 0:
            raise ValueError("step_tol must be positive")
        if not 0 < self.damping.shrink < 1:
            raise ValueError("damping.shrink must lie in (0, 1)")
        if self.warm_start_window is not None and self.warm_start_window < 1:
            raise ValueError("warm_start_window must be >= 1")
        if not self.window_growth > 1:
            raise ValueError("window_growth must exceed 1")


@dataclass(frozen=True)
class RefineResult:
    measure: SpikeMeasure
    objective: float
    initial_objective: float
    iterations: int
    converged: bool
    history: tuple = ()


def objective(g: MeasurementSet, m: SpikeMeasure) -> float:
    """Data misfit ``sum_j |f_j(m) - g_j|**2``."""
    res = g.samples - sample_noiseless(m, g.n).samples
    return float(np.vdot(res, res).real)


def _hankel_operator(samples: np.ndarray, n: int) -> LinearOperator:
    # H[s, t] = g[s + t] (array index), square and complex symmetric
    g = samples

    def matvec(x):
        x = np.asarray(x).reshape(-1)
        return fftconvolve(g, x[::-1], mode="valid")

    def rmatvec(y):
        y = np.asarray(y).reshape(-1)
        return np.conj(fftconvolve(g, np.conj(y)[::-1], mode="valid"))

    return LinearOperator((n + 1, n + 1), matvec=matvec, rmatvec=rmatvec, dtype=complex)


def _signal_subspace(g: MeasurementSet, rank: int):
    n = g.n
    if n <= DENSE_SVD_MAX:
        idx = np.arange(n + 1)
        H = g.samples[idx[:, None] + idx[None, :]]
        U, s, _ = np.linalg.svd(H)
        return U[:, :rank], s
    v0 = np.ones(n + 1, dtype=complex)
    U, s, _ = svds(_hankel_operator(g.samples, n), k=rank, v0=v0, solver="arpack")
    order = np.argsort(s)[::-1]
    return U[:, order], s[order]


def esprit(
    g: MeasurementSet,
    rank: int,
    *,
    exact_gap_ratio: float | None = None,
    cond_max: float = COND_MAX,
) -> SpikeMeasure:
    """Single-snapshot ESPRIT on the ``(n+1) x (n+1)`` Hankel matrix of ``g``.

    Parameters
    ----------
    g : MeasurementSet
    rank : int
        Known number of spikes.
    exact_gap_ratio : float, optional
        For data that should be exactly rank ``rank``: raise if the next
        singular value exceeds this fraction of the ``rank``-th one.  Only
        checked on the dense path.

    Returns
    -------
    SpikeMeasure
        Locations from the eigenvalue arguments of the rotation operator,
        weights from :func:`weights_least_squares`.
    """
    if rank < 1:
        raise SizeError("rank must be >= 1")
    if g.n < rank:
        raise SizeError(f"n={g.n} too small for rank {rank}: need 2n+1 >= 2*rank+1")
    U, s = _signal_subspace(g, rank)
    smax = s[0] if s.size else 0.0
    if not smax > 0 or s[rank - 1] <= 1e-13 * smax * (g.n + 1):
        raise RankDeficiencyError(f"data matrix has fewer than {rank} nonzero singular values")
    if exact_gap_ratio is not None and s.size > rank and s[rank] > exact_gap_ratio * s[rank - 1]:
        raise RankDeficiencyError(
            f"singular value {rank + 1} is {s[rank] / s[rank - 1]:.3g} of singular value {rank}"
        )
    psi, *_ = scipy.linalg.lstsq(U[:-1], U[1:])
    eig = np.linalg.eigvals(psi)
    x = wrap_angle(np.angle(eig))
    if rank > 1 and min_circular_gap(x) == 0:
        raise DegeneracyError("ESPRIT returned coincident locations")
    w = weights_least_squares(g, x, cond_max=cond_max)
    return SpikeMeasure.from_unsorted(x, w)


def weights_least_squares(g: MeasurementSet, locations, *, cond_max: float = COND_MAX) -> np.ndarray:
    """Minimize ``sum_j |sum_k exp(1j*j*x_k) w_k - g_j|**2`` over complex ``w``."""
    x = np.atleast_1d(np.asarray(locations, dtype=float))
    V = np.exp(1j * np.outer(g.freqs, x))
    sv = np.linalg.svd(V, compute_uv=False)
    cond = np.inf if sv[-1] == 0 else float(sv[0] / sv[-1]) ** 2
    if not cond <= cond_max:
        raise IllConditionedError("Vandermonde system", cond, cond_max)
    w, *_ = np.linalg.lstsq(V, g.samples, rcond=None)
    return w


def _step(m: SpikeMeasure, da: np.ndarray, db: np.ndarray, t: float) -> SpikeMeasure:
    x = m.locations + t * da
    if m.r > 1 and min_circular_gap(wrap_angle(x)) < COLLISION_GAP:
        raise DegeneracyError("spike locations collided during refinement")
    return SpikeMeasure.from_unsorted(x, m.weights * (1 + t * db), None if m.r > 1 else m.min_gap)


def mle_refine(
    g: MeasurementSet,
    initial: SpikeMeasure,
    cfg: EstimatorConfig,
    *,
    cond_max: float = COND_MAX,
) -> RefineResult:
    """Damped Gauss-Newton iterations on the data misfit.

    Each step linearizes around the current iterate and solves
    :func:`~speclab.perturbation.solve_first_order` (real location shifts)
    with the current residual.  Locations move by ``a``; weights are scaled
    by ``1 + b``.  Steps that increase the misfit are halved.  ``converged`` is
    False when ``max_iters`` ran out or the line search failed before the
    step became negligible; the best iterate is returned either way.
    """
    if initial.r != cfg.rank:
        raise ValueError(f"initial measure has {initial.r} spikes, config rank is {cfg.rank}")
    m = initial
    f0 = f = objective(g, m)
    history = [f]
    converged = False
    it = 0
    while it < cfg.max_iters:
        it += 1
        residual = g.samples - sample_noiseless(m, g.n).samples
        d = build_design(m, g.n)
        sol = solve_first_order(d, residual, real_locations=True, cond_max=cond_max)
        da, db = sol.a.real, sol.b
        size = float(np.max(np.abs(da)))
        # decrease promised by the linear model; below rounding of f nothing can move
        lin = d.M @ np.concatenate([da, db])
        floor = float(np.vdot(lin, lin).real) <= 1e-13 * f
        t = 1.0
        for _ in range(cfg.damping.max_halvings + 1):
            trial = _step(m, da, db, t)
            ft = objective(g, trial)
            if ft <= f:
                break
            t *= cfg.damping.shrink
        else:
            converged = floor or size < cfg.step_tol
            log.debug("line search failed at iteration %d (step %.3g)", it, size)
            break
        m, f = trial, ft
        history.append(f)
        if size * t < cfg.step_tol or floor:
            converged = True
            break
    return RefineResult(
        measure=m,
        objective=f,
        initial_objective=f0,
        iterations=it,
        converged=converged,
        history=tuple(history),
    )


def esprit_refine(
    g: MeasurementSet, cfg: EstimatorConfig, *, cond_max: float = COND_MAX
) -> RefineResult:
    """ESPRIT followed by refinement, with a coarse-to-fine fallback.

    Two starts are refined and the lower misfit wins:

    * full-window ESPRIT, refined on all of ``g``;
    * ESPRIT on the central window ``|j| <= cfg.warm_start_window``, refined
      on windows growing by ``cfg.window_growth`` up to ``n``.

    The second start matters when noise grows with ``|j|``: high frequencies
    then swamp the Hankel subspace, while each refinement stage only needs an
    initial guess within its own basin.  ``initial_objective`` is the misfit
    of full-window ESPRIT when it succeeded, so the result never exceeds it.
    """
    results: list[RefineResult] = []
    errors: list[Exception] = []
    f_esprit = None
    try:
        init = esprit(g, cfg.rank, cond_max=cond_max)
        f_esprit = objective(g, init)
        results.append(mle_refine(g, init, cfg, cond_max=cond_max))
    except (EstimatorError, ValueError) as exc:
        errors.append(exc)

    k = max(cfg.rank, cfg.warm_start_window or g.n)
    if k < g.n:
        try:
            m = esprit(g.window(k), cfg.rank, cond_max=cond_max)
            iters = 0
            while True:
                res = mle_refine(g.window(k), m, cfg, cond_max=cond_max)
                m, iters = res.measure, iters + res.iterations
                if k == g.n:
                    break
                k = min(g.n, int(np.ceil(k * cfg.window_growth)))
            results.append(replace(res, iterations=iters))
        except (EstimatorError, ValueError) as exc:
            errors.append(exc)

    if not results:
        raise errors[0]
    best = min(results, key=lambda r: r.objective)
    if f_esprit is not None:
        best = replace(best, initial_objective=f_esprit)
    return best

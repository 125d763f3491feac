"""First-order perturbation analysis of the spike-recovery least-squares problem.

With ``x~_k = x_k + a_k`` and ``w~_k = w_k (1 + b_k)`` the residual of the
data fit is, to first order, ``M [a; b] - z`` where ``M = [A B] diag(W, W)``,
``A[j, k] = 1j*j*exp(1j*j*x_k)`` and ``B[j, k] = exp(1j*j*x_k)``.  Rows are
ordered ``j = -n..n``.

The Gram matrix ``[[A*A, A*B], [B*A, B*B]]`` has entries that are derivatives
of the Dirichlet kernel ``D_n(t) = sum_j exp(1j*j*t)`` evaluated at spike
differences; after scaling by ``diag(n**-1.5 I, n**-0.5 I)`` on both sides it
tends to ``diag(2/3 I, 2 I)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import IllConditionedError
from .measure import SpikeMeasure, complex_to_pairs, noise_scale

COND_MAX = 1e12


@dataclass(frozen=True, eq=False)
class DesignMatrices:
    A: np.ndarray
    B: np.ndarray
    weights: np.ndarray
    n: int

    @property
    def W(self) -> np.ndarray:
        return np.diag(self.weights)

    @property
    def r(self) -> int:
        return self.weights.size

    @property
    def M(self) -> np.ndarray:
        """``[A B] diag(W, W)`` as a ``(2n+1, 2r)`` array."""
        return np.hstack([self.A * self.weights, self.B * self.weights])


@dataclass(frozen=True, eq=False)
class GramBlocks:
    AA: np.ndarray
    AB: np.ndarray
    BA: np.ndarray
    BB: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return np.block([[self.AA, self.AB], [self.BA, self.BB]])

    def to_dict(self) -> dict:
        return {k: complex_to_pairs(getattr(self, k)) for k in ("AA", "AB", "BA", "BB")}


@dataclass(frozen=True, eq=False)
class PerturbationSolution:
    """Solution of the linearized problem.

    ``a`` is kept complex; ``a.real`` is the location shift and ``|a.imag|``
    measures how far the linear model is from a pure angle shift.
    """

    a: np.ndarray
    b: np.ndarray
    u: np.ndarray
    v: np.ndarray
    residual_norm: float
    cond: float

    @property
    def location_shift(self) -> np.ndarray:
        return self.a.real

    @property
    def imag_diagnostic(self) -> float:
        return float(np.max(np.abs(self.a.imag)))

    def to_dict(self) -> dict:
        return {
            "a": complex_to_pairs(self.a),
            "b": complex_to_pairs(self.b),
            "u": complex_to_pairs(self.u),
            "v": complex_to_pairs(self.v),
            "residual_norm": self.residual_norm,
            "cond": self.cond,
        }


def build_design(measure: SpikeMeasure, n: int) -> DesignMatrices:
    if n < 1:
        raise ValueError("n must be >= 1")
    j = np.arange(-n, n + 1)
    B = np.exp(1j * np.outer(j, measure.locations))
    A = (1j * j)[:, None] * B
    return DesignMatrices(A=A, B=B, weights=np.array(measure.weights), n=n)


def gram_blocks(d: DesignMatrices) -> GramBlocks:
    AB = d.A.conj().T @ d.B
    return GramBlocks(
        AA=d.A.conj().T @ d.A,
        AB=AB,
        BA=AB.conj().T,
        BB=d.B.conj().T @ d.B,
    )


# ---------------------------------------------------------------------------
# Dirichlet kernel


def _use_direct(n: int, s: float) -> bool:
    # The quotient forms cancel catastrophically once (n + 1/2)|sin(t/2)| < 1.
    return abs(s) < max(1e-6, 1.0 / (n + 0.5))


def _direct(n: int, t: float, order: int) -> float:
    j = np.arange(1, n + 1, dtype=float)
    if order == 0:
        return 1.0 + 2.0 * math.fsum(np.cos(j * t))
    if order == 1:
        return -2.0 * math.fsum(j * np.sin(j * t))
    return -2.0 * math.fsum(j * j * np.cos(j * t))


def dirichlet_sum(n: int, t: float) -> float:
    """``sum_{j=-n}^{n} exp(1j*j*t) = sin((n + 1/2) t) / sin(t / 2)``."""
    t = math.remainder(t, 2 * math.pi)
    s = math.sin(t / 2)
    if _use_direct(n, s):
        return _direct(n, t, 0)
    return math.sin((n + 0.5) * t) / s


def dirichlet_derivative(n: int, t: float, order: int) -> complex:
    """``sum_{j=-n}^{n} (1j*j)**order * exp(1j*j*t)``, the t-derivative of the kernel.

    The value is real; it is returned as a complex number to mirror the sum.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order!r}")
    t = math.remainder(t, 2 * math.pi)
    s, c = math.sin(t / 2), math.cos(t / 2)
    if _use_direct(n, s):
        return complex(_direct(n, t, order))
    N = n + 0.5
    sn, cn = math.sin(N * t), math.cos(N * t)
    p = N * cn * s - 0.5 * sn * c
    if order == 1:
        return complex(p / (s * s))
    return complex(((0.25 - N * N) * sn * s * s - p * c) / s**3)


def dirichlet_direct(n: int, t: float, order: int = 0) -> complex:
    """Plain O(n) complex summation, kept as a reference."""
    j = np.arange(-n, n + 1)
    return complex(np.sum((1j * j) ** order * np.exp(1j * j * t)))


# ---------------------------------------------------------------------------
# linear solve


def _cond_squared(X: np.ndarray) -> float:
    sv = np.linalg.svd(X, compute_uv=False)
    return np.inf if sv[-1] == 0 else float((sv[0] / sv[-1]) ** 2)


def _lstsq(X: np.ndarray, y: np.ndarray, method: str) -> np.ndarray:
    if method == "qr":
        Q, R = np.linalg.qr(X)
        return scipy.linalg.solve_triangular(R, Q.conj().T @ y)
    if method == "normal":
        return scipy.linalg.solve(X.conj().T @ X, X.conj().T @ y, assume_a="her")
    raise ValueError(f"unknown method {method!r}")


def solve_first_order(
    d: DesignMatrices,
    z,
    *,
    method: str = "qr",
    real_locations: bool = False,
    cond_max: float = COND_MAX,
) -> PerturbationSolution:
    """Least-squares solution of ``M [a; b] ~= z``.

    ``method="qr"`` factorizes ``M`` directly; ``method="normal"`` solves the
    Hermitian system ``G diag(W, W) [a; b] = [A* z; B* z]`` explicitly.

    With ``real_locations=True`` the location shifts are constrained to be
    real (the problem is split into real and imaginary parts), which is the
    Gauss-Newton step for real angles and complex weights.

    Raises :class:`IllConditionedError` when ``cond(M* M) > cond_max``.
    """
    z = np.asarray(z, dtype=complex).reshape(-1)
    if z.size != 2 * d.n + 1:
        raise ValueError(f"z must have {2 * d.n + 1} entries")
    r = d.r
    M = d.M
    cond = _cond_squared(M)
    if not cond <= cond_max:
        raise IllConditionedError("Gram matrix", cond, cond_max)

    ww = np.concatenate([d.weights, d.weights])
    if real_locations:
        Ma, Mb = M[:, :r], M[:, r:]
        X = np.block([[Ma.real, Mb.real, -Mb.imag], [Ma.imag, Mb.imag, Mb.real]])
        y = np.concatenate([z.real, z.imag])
        sol = _lstsq(X, y, method)
        theta = np.concatenate([sol[:r], sol[r : 2 * r] + 1j * sol[2 * r :]]).astype(complex)
        residual = float(np.linalg.norm(X.T @ (X @ sol - y)))
    else:
        if method == "normal":
            rhs = np.concatenate([d.A.conj().T @ z, d.B.conj().T @ z])
            uv = scipy.linalg.solve(gram_blocks(d).matrix, rhs, assume_a="her")
            theta = uv / ww
        else:
            theta = _lstsq(M, z, method)
        residual = None

    uv = ww * theta
    if residual is None:
        rhs = np.concatenate([d.A.conj().T @ z, d.B.conj().T @ z])
        residual = float(np.linalg.norm(gram_blocks(d).matrix @ uv - rhs))
    return PerturbationSolution(
        a=theta[:r], b=theta[r:], u=uv[:r], v=uv[r:], residual_norm=residual, cond=cond
    )


# ---------------------------------------------------------------------------
# asymptotics


def scaled_gram_deviation(g: GramBlocks, n: int) -> float:
    r = g.AA.shape[0]
    scale = np.concatenate([np.full(r, n**-1.5), np.full(r, n**-0.5)])
    S = scale[:, None] * g.matrix * scale[None, :]
    limit = np.diag(np.concatenate([np.full(r, 2.0 / 3.0), np.full(r, 2.0)]))
    return float(np.max(np.abs(S - limit)))


def rhs_noise_scales(n: int, sigma: float, p: float) -> tuple[float, float]:
    """Standard deviations of each entry of ``A* z`` and ``B* z``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    var = noise_scale(n, p) ** 2
    j2 = np.arange(-n, n + 1, dtype=float) ** 2
    return sigma * math.sqrt(math.fsum(j2 * var)), sigma * math.sqrt(math.fsum(var))


def predicted_error_scales(
    n: int, sigma: float, p: float, min_weight: float
) -> tuple[float, float]:
    """Leading-order spread of the location and relative-weight errors.

    ``(sqrt(3/2) sigma n**(p - 3/2), sqrt(1/2) sigma n**(p - 1/2))``, both
    divided by the smallest weight modulus.
    """
    if not min_weight > 0:
        raise ValueError("min_weight must be positive")
    return (
        math.sqrt(1.5) * sigma * n ** (p - 1.5) / min_weight,
        math.sqrt(0.5) * sigma * n ** (p - 0.5) / min_weight,
    )

"""Spike measures on the circle, their Fourier samples, and noise models.

A spike measure is ``mu = sum_k w_k delta_{x_k}`` with locations on
``[0, 2*pi)``.  Its Fourier coefficients are ``f_j = sum_k exp(1j*j*x_k) w_k``
and we observe ``g_j = f_j + z_j`` for ``-n <= j <= n``.  Noise entries are
``z_j ~ |j|**p * sigma * N_C(0, 1)`` with ``E|N_C(0, 1)|**2 = 1``.

Sample vectors are stored with array index ``j + n``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * np.pi

# spawn-key tags separating the independent random streams of one trial
NOISE_STREAM = 0
MEASURE_STREAM = 1


class InfeasibleMeasureError(ValueError):
    """Requested spike count cannot fit on the circle with the given gap."""


def wrap_angle(x):
    """Map angles onto ``[0, 2*pi)``."""
    y = np.mod(np.asarray(x, dtype=float), TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    return np.where(y >= TWO_PI, 0.0, y)


def circular_distance(x, y):
    """Elementwise ``min(|x - y|, 2*pi - |x - y|)`` after wrapping."""
    d = np.abs(wrap_angle(x) - wrap_angle(y))
    return np.minimum(d, TWO_PI - d)


def min_circular_gap(locations) -> float:
    """Smallest circular gap between distinct spikes (``inf`` for one spike)."""
    x = np.sort(wrap_angle(locations))
    if x.size < 2:
        return np.inf
    gaps = np.diff(x)
    return float(min(gaps.min(), TWO_PI - x[-1] + x[0]))


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpikeMeasure:
    """Ground-truth (or estimated) spike measure.

    Use :meth:`from_unsorted` to build one from arbitrary angles; the
    constructor itself only validates.
    """

    locations: np.ndarray
    weights: np.ndarray
    min_gap: float

    def __post_init__(self):
        x = _frozen(self.locations, float).reshape(-1)
        w = _frozen(self.weights, complex).reshape(-1)
        object.__setattr__(self, "locations", x)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "min_gap", float(self.min_gap))
        if x.size == 0 or x.size != w.size:
            raise ValueError("need matching, non-empty locations and weights")
        if np.any(x < 0) or np.any(x >= TWO_PI):
            raise ValueError("locations must lie in [0, 2*pi)")
        if np.any(np.diff(x) < 0):
            raise ValueError("locations must be sorted ascending")
        if not self.min_gap > 0:
            raise ValueError("min_gap must be positive")
        # relative slack absorbs wrap-around rounding
        if min_circular_gap(x) < self.min_gap * (1 - 1e-12):
            raise ValueError(
                f"circular gap {min_circular_gap(x):.3g} below min_gap {self.min_gap:.3g}"
            )
        if np.any(np.abs(w) == 0):
            raise ValueError("weights must be nonzero")

    @classmethod
    def from_unsorted(cls, locations, weights, min_gap=None) -> "SpikeMeasure":
        """Wrap and sort ``locations`` (carrying weights along).

        With ``min_gap=None`` the measured circular gap is used, which is
        what estimators want.
        """
        x = wrap_angle(np.atleast_1d(locations))
        w = np.asarray(np.atleast_1d(weights), dtype=complex)
        order = np.argsort(x, kind="stable")
        x, w = x[order], w[order]
        if min_gap is None:
            gap = min_circular_gap(x)
            min_gap = np.pi if not np.isfinite(gap) else gap
        return cls(x, w, min_gap)

    @property
    def r(self) -> int:
        return self.locations.size

    def __eq__(self, other):
        if not isinstance(other, SpikeMeasure):
            return NotImplemented
        return (
            np.array_equal(self.locations, other.locations)
            and np.array_equal(self.weights, other.weights)
            and self.min_gap == other.min_gap
        )

    def to_dict(self) -> dict:
        return {
            "locations": self.locations.tolist(),
            "weights": complex_to_pairs(self.weights),
            "min_gap": self.min_gap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpikeMeasure":
        return cls(d["locations"], pairs_to_complex(d["weights"]), d["min_gap"])


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.1
    exponent: float = 0.0
    master_seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")
        if not self.exponent >= 0:
            raise ValueError("exponent p must be >= 0")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Samples ``g_j`` for ``j = -n..n`` plus provenance."""

    n: int
    samples: np.ndarray
    sigma: float | None = None
    p: float | None = None
    seed: int | None = None
    trial_index: int | None = None

    def __post_init__(self):
        s = _frozen(self.samples, complex).reshape(-1)
        object.__setattr__(self, "samples", s)
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if s.size != 2 * self.n + 1:
            raise ValueError(f"expected {2 * self.n + 1} samples, got {s.size}")

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(-self.n, self.n + 1)

    def window(self, k: int) -> "MeasurementSet":
        """The samples with ``|j| <= k``."""
        if not 1 <= k <= self.n:
            raise ValueError(f"window {k} outside 1..{self.n}")
        return MeasurementSet(
            n=k,
            samples=self.samples[self.n - k : self.n + k + 1],
            sigma=self.sigma,
            p=self.p,
            seed=self.seed,
            trial_index=self.trial_index,
        )

    def at(self, j: int) -> complex:
        """Sample at frequency ``j``."""
        return complex(self.samples[j + self.n])

    def __eq__(self, other):
        if not isinstance(other, MeasurementSet):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.samples, other.samples)
            and (self.sigma, self.p, self.seed, self.trial_index)
            == (other.sigma, other.p, other.seed, other.trial_index)
        )

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "sigma": self.sigma,
            "p": self.p,
            "seed": self.seed,
            "trial_index": self.trial_index,
            "samples": complex_to_pairs(self.samples),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementSet":
        return cls(
            n=int(d["n"]),
            samples=pairs_to_complex(d["samples"]),
            sigma=d.get("sigma"),
            p=d.get("p"),
            seed=d.get("seed"),
            trial_index=d.get("trial_index"),
        )


def complex_to_pairs(z) -> list:
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=-1).tolist()


def pairs_to_complex(pairs) -> np.ndarray:
    a = np.asarray(pairs, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def dump_json(obj, path) -> None:
    """Write ``obj`` (a dict or anything with ``to_dict``) deterministically."""
    d = obj.to_dict() if hasattr(obj, "to_dict") else obj
    Path(path).write_text(json.dumps(d, indent=1, sort_keys=True) + "\n")


def load_measure(path) -> SpikeMeasure:
    return SpikeMeasure.from_dict(json.loads(Path(path).read_text()))


def load_measurements(path) -> MeasurementSet:
    return MeasurementSet.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# operations


def fourier_coefficient(measure: SpikeMeasure, j: int) -> complex:
    return complex(np.sum(np.exp(1j * j * measure.locations) * measure.weights))


def sample_noiseless(measure: SpikeMeasure, n: int) -> MeasurementSet:
    if n < 1:
        raise ValueError("n must be >= 1")
    j = np.arange(-n, n + 1)
    f = np.exp(1j * np.outer(j, measure.locations)) @ measure.weights
    return MeasurementSet(n=n, samples=f, sigma=0.0)


def trial_rng(master_seed: int, n: int, trial_index: int, stream: int) -> np.random.Generator:
    """Generator keyed on ``(master_seed, n, trial_index, stream)`` only."""
    ss = np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=(int(n), int(trial_index), int(stream))
    )
    return np.random.Generator(np.random.Philox(ss))


def noise_scale(n: int, exponent: float) -> np.ndarray:
    """Per-frequency multiplier ``|j|**p`` for ``j = -n..n``."""
    j = np.abs(np.arange(-n, n + 1, dtype=float))
    return j**exponent


def draw_noise(model: NoiseModel, n: int, trial_index: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = trial_rng(model.master_seed, n, trial_index, NOISE_STREAM)
    z = rng.standard_normal((2, 2 * n + 1)) * np.sqrt(0.5)
    return model.sigma * noise_scale(n, model.exponent) * (z[0] + 1j * z[1])


def apply_noise(clean: MeasurementSet, model: NoiseModel, trial_index: int) -> MeasurementSet:
    z = draw_noise(model, clean.n, trial_index)
    return MeasurementSet(
        n=clean.n,
        samples=clean.samples + z,
        sigma=model.sigma,
        p=model.exponent,
        seed=int(model.master_seed),
        trial_index=int(trial_index),
    )


def check_feasible(r: int, min_gap: float) -> None:
    if r < 1:
        raise InfeasibleMeasureError(f"r must be >= 1 (got r={r})")
    if not min_gap > 0:
        raise InfeasibleMeasureError(f"min_gap must be positive (got {min_gap})")
    if not r * min_gap < TWO_PI:
        raise InfeasibleMeasureError(
            f"infeasible: r * min_gap = {r * min_gap:.6g} must be < 2*pi"
        )


def random_measure(
    r: int,
    min_gap: float,
    weight_low: float = 0.5,
    weight_high: float = 1.5,
    seed=0,
) -> SpikeMeasure:
    """Draw ``r`` spikes uniformly on the circle conditioned on the gap.

    Points are placed on a shortened circle of length ``2*pi - r*min_gap``,
    one ``min_gap`` is inserted after each, and the whole configuration is
    rotated uniformly.  This is exactly the uniform law conditioned on all
    circular gaps being ``>= min_gap`` and it never rejects.

    ``seed`` is an int or a ``numpy.random.Generator``.
    """
    check_feasible(r, min_gap)
    if not 0 < weight_low <= weight_high:
        raise ValueError("need 0 < weight_low <= weight_high")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    slack = TWO_PI - r * min_gap
    u = np.sort(rng.uniform(0.0, slack, size=r))
    x = u + min_gap * np.arange(r) + rng.uniform(0.0, TWO_PI)
    w = rng.uniform(weight_low, weight_high, size=r)
    # the rotation is applied before wrapping, so the order is scrambled
    return SpikeMeasure.from_unsorted(x, w, min_gap=min_gap)

"""Calibrated noise distributions with seeded sampling and tail diagnostics.

All four laws used by the mechanism variants live here: Laplace (threshold
noise and one query-noise baseline), exponential (the one-sided query noise),
Gaussian, and Gumbel. Each is described by a kind, a scale, and a location,
and exposes pdf, cdf, quantile, and inverse-cdf sampling from a single
uniform stream. The log-survival helpers back the tail Lipschitz check that
decides whether a law is eligible as pure-DP query noise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

EULER_GAMMA = 0.5772156649015329

# Smallest positive double; keeps inverse-cdf sampling finite if the
# underlying uniform stream ever returns exactly 0.
_TINY_U = 5e-324


class Kind(enum.Enum):
    LAPLACE = "laplace"
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"
    GUMBEL = "gumbel"


@dataclass(frozen=True)
class NoiseDist:
    """A noise law: kind, scale, location.

    The scale carries each law's usual parameter: Laplace b, exponential
    mean (reciprocal of the rate), Gaussian sigma, Gumbel beta. Location
    defaults to 0, which is what every mechanism here uses.
    """

    kind: Kind
    scale: float
    location: float = 0.0

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not math.isfinite(self.location):
            raise ValueError(f"location must be finite, got {self.location}")

    def mean(self) -> float:
        if self.kind is Kind.EXPONENTIAL:
            return self.location + self.scale
        if self.kind is Kind.GUMBEL:
            return self.location + EULER_GAMMA * self.scale
        return self.location

    def variance(self) -> float:
        if self.kind is Kind.LAPLACE:
            return 2.0 * self.scale**2
        if self.kind is Kind.EXPONENTIAL:
            return self.scale**2
        if self.kind is Kind.GAUSSIAN:
            return self.scale**2
        return math.pi**2 * self.scale**2 / 6.0


def laplace(scale: float, location: float = 0.0) -> NoiseDist:
    return NoiseDist(Kind.LAPLACE, scale, location)


def exponential(mean: float, location: float = 0.0) -> NoiseDist:
    """Exponential law parameterized by its mean (= 1/rate)."""
    return NoiseDist(Kind.EXPONENTIAL, mean, location)


def gaussian(sigma: float, location: float = 0.0) -> NoiseDist:
    return NoiseDist(Kind.GAUSSIAN, sigma, location)


def gumbel(beta: float, location: float = 0.0) -> NoiseDist:
    return NoiseDist(Kind.GUMBEL, beta, location)


def _standardize(d: NoiseDist, x) -> np.ndarray:
    return (np.asarray(x, dtype=float) - d.location) / d.scale


def _as_given(value: np.ndarray, like) -> float | np.ndarray:
    """Return a Python float for scalar input, an array otherwise."""
    if np.isscalar(like) or getattr(like, "ndim", 1) == 0:
        return float(value)
    return value


def pdf(d: NoiseDist, x) -> float | np.ndarray:
    """Density of ``d`` at ``x`` (scalar or array).

    Zero below the location for the exponential law, which is supported on
    [location, infinity).
    """
    z = _standardize(d, x)
    if d.kind is Kind.LAPLACE:
        out = np.exp(-np.abs(z)) / (2.0 * d.scale)
    elif d.kind is Kind.EXPONENTIAL:
        out = np.where(z < 0, 0.0, np.exp(-np.clip(z, 0, None)) / d.scale)
    elif d.kind is Kind.GAUSSIAN:
        out = np.exp(-0.5 * z * z) / (d.scale * math.sqrt(2.0 * math.pi))
    else:
        out = np.exp(-z - np.exp(-z)) / d.scale
    return _as_given(out, x)


def cdf(d: NoiseDist, x) -> float | np.ndarray:
    """P[X <= x] for ``d`` at ``x`` (scalar or array)."""
    z = _standardize(d, x)
    if d.kind is Kind.LAPLACE:
        out = np.where(z < 0, 0.5 * np.exp(np.clip(z, None, 0)),
                       1.0 - 0.5 * np.exp(-np.clip(z, 0, None)))
    elif d.kind is Kind.EXPONENTIAL:
        out = np.where(z < 0, 0.0, -np.expm1(-np.clip(z, 0, None)))
    elif d.kind is Kind.GAUSSIAN:
        out = ndtr(z)
    else:
        out = np.exp(-np.exp(-z))
    return _as_given(out, x)


def log_sf(d: NoiseDist, x) -> float | np.ndarray:
    """log(1 - cdf) evaluated stably far into the upper tail.

    Returns -inf where the survival probability underflows to zero in
    double precision; callers probing tails should treat such points as
    "cdf is exactly 1 here" (see :func:`lipschitz_tail_check`).
    """
    z = _standardize(d, x)
    if d.kind is Kind.LAPLACE:
        lower = np.log1p(-0.5 * np.exp(np.clip(z, None, 0)))
        upper = math.log(0.5) - z
        out = np.where(z < 0, lower, upper)
    elif d.kind is Kind.EXPONENTIAL:
        out = np.where(z < 0, 0.0, -np.clip(z, 0, None))
    elif d.kind is Kind.GAUSSIAN:
        out = log_ndtr(-z)
    else:
        # 1 - exp(-exp(-z)); -expm1 keeps precision while exp(-z) > 0.
        with np.errstate(divide="ignore"):
            out = np.log(-np.expm1(-np.exp(-z)))
    return _as_given(out, x)


def quantile(d: NoiseDist, p) -> float | np.ndarray:
    """Inverse cdf of ``d`` at probability ``p`` in the open interval (0, 1)."""
    parr = np.asarray(p, dtype=float)
    if np.any(parr <= 0.0) or np.any(parr >= 1.0):
        raise ValueError(f"quantile probability must lie in (0, 1), got {p}")
    return _as_given(_quantile_core(d, parr), p)


def _quantile_core(d: NoiseDist, p: np.ndarray) -> np.ndarray:
    if d.kind is Kind.LAPLACE:
        with np.errstate(divide="ignore"):
            out = np.where(p < 0.5,
                           np.log(2.0 * p),
                           -np.log(np.clip(2.0 * (1.0 - p), _TINY_U, None)))
    elif d.kind is Kind.EXPONENTIAL:
        out = -np.log1p(-p)
    elif d.kind is Kind.GAUSSIAN:
        out = ndtri(p)
    else:
        with np.errstate(divide="ignore"):
            out = -np.log(-np.log(p))
    return d.location + d.scale * out


def sample(d: NoiseDist, rng: np.random.Generator,
           size: int | None = None) -> float | np.ndarray:
    """Inverse-cdf draw(s) from ``d`` using ``rng``'s uniform stream.

    Every law samples through its quantile function from a single
    ``rng.random()`` stream, so a fixed seed fixes the entire draw sequence
    across all distributions.

    Args:
        d: the law to sample.
        rng: a seeded numpy Generator.
        size: None for one scalar draw, else the number of draws.

    Returns:
        A float when ``size`` is None, otherwise an array of length ``size``.
    """
    u = np.maximum(rng.random(size), _TINY_U)
    out = _quantile_core(d, np.asarray(u, dtype=float))
    return float(out) if size is None else out


@dataclass(frozen=True)
class TailCheckResult:
    """Outcome of a survival-ratio Lipschitz probe.

    max_violation is the largest observed
    |log sf(x) - log sf(x + shift)| - k2*|shift| over the usable grid
    points; a law eligible as pure-DP query noise stays <= 0 up to float
    noise. Grid points where the cdf is exactly 1 (survival underflows)
    are skipped and listed in ``skipped``.
    """

    max_violation: float
    skipped: tuple[float, ...] = field(default=())


def lipschitz_tail_check(d: NoiseDist, k2: float, shift: float,
                         grid) -> TailCheckResult:
    """Probe the survival-function Lipschitz bound with constant ``k2``.

    Evaluates |log(1-F(x)) - log(1-F(x+shift))| - k2*|shift| over ``grid``
    and returns the maximum. Points where either survival probability is
    exactly zero in double precision are undefined and reported instead of
    evaluated; if every point is skipped the violation is -inf.
    """
    if shift == 0:
        raise ValueError("shift must be nonzero")
    if not k2 > 0:
        raise ValueError(f"k2 must be positive, got {k2}")
    xs = np.asarray(grid, dtype=float)
    left = np.asarray(log_sf(d, xs))
    right = np.asarray(log_sf(d, xs + shift))
    usable = np.isfinite(left) & np.isfinite(right)
    skipped = tuple(float(x) for x in xs[~usable])
    if not np.any(usable):
        return TailCheckResult(float("-inf"), skipped)
    violation = np.abs(left[usable] - right[usable]) - k2 * abs(shift)
    return TailCheckResult(float(np.max(violation)), skipped)

"""Threshold-correction engine.

The corrected mechanism adds an offset r to the noisy threshold to counter
the one-sided query noise. The right r maximizes the success probability

    p(r) = Gamma(r + alpha)^k * (1 - Gamma(r - alpha)),

where Gamma is the cdf of Z = X - Y for X the exponential query noise
(rate lambda) and Y the Laplace threshold noise (scale b), k the expected
number of negatives answered before a positive, and alpha the score
tolerance. Two evaluation paths coexist:

  * an analytical path built on the closed-form Gamma of the
    exponential-minus-Laplace difference, used as a cross-check oracle and
    a fast path for this specific pairing; and
  * the default numerical path: discretize both laws on a shared mesh,
    convolve with FFT to get the law of Z, accumulate to a step cdf, and
    take the grid argmax of p.

The numerical path generalizes to any pair of laws expressible as a
:class:`~svtkit.noise.NoiseDist`; the bracket bookkeeping below keeps the
probability mass outside the finite grid accounted for.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve

from . import noise
from .noise import NoiseDist

DEFAULT_MESH_COUNT = 20001
DEFAULT_TAIL_MASS = 1e-10

# Half-width of the window around b*lambda = 1 inside which callers are
# warned that the textbook closed form is singular. The evaluation itself
# uses an equivalent expm1 form whose limit at b = 1/lambda is exact, so
# the warning is informational only.
_SINGULAR_TOL = 1e-9

# Above this value of z*(mu - b)/(b*mu) the expm1 orientation of the
# survival's first term would overflow; the direct difference of
# exponentials is then itself cancellation-free.
_EXPM1_ARG_CAP = 50.0


@dataclass(frozen=True, eq=False)
class DiscretePmf:
    """A distribution discretized on a uniform mesh, plus tail brackets.

    Chunk i covers [i*u, (i+1)*u) and is represented at its left edge i*u;
    ``mass[j]`` is the mass of chunk ``origin_index + j``. Everything below
    the lowest chunk edge sits in ``neg_inf_mass`` and everything at or
    above the highest right edge in ``pos_inf_mass``, so the three parts
    always sum to 1.
    """

    mesh: float
    origin_index: int
    mass: np.ndarray
    neg_inf_mass: float
    pos_inf_mass: float

    def values(self) -> np.ndarray:
        """Left-edge value of each chunk."""
        idx = self.origin_index + np.arange(len(self.mass))
        return idx * self.mesh

    def total_mass(self) -> float:
        return float(self.neg_inf_mass + self.mass.sum() + self.pos_inf_mass)


@dataclass(frozen=True)
class CorrectionQuery:
    """Inputs of a correction-term optimization.

    Args:
        b: Laplace threshold-noise scale.
        lam: exponential query-noise rate.
        alpha: score tolerance (nonnegative).
        k: expected negatives answered per positive, at least 1.
        m: mesh count per side for the numerical path.
        e: tail mass left outside the grid boundary, in (0, 0.5).
    """

    b: float
    lam: float
    alpha: float
    k: int
    m: int = DEFAULT_MESH_COUNT
    e: float = DEFAULT_TAIL_MASS

    def __post_init__(self) -> None:
        if not (self.b > 0 and self.lam > 0):
            raise ValueError("b and lam must be positive")
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if self.m < 2:
            raise ValueError(f"m must be at least 2, got {self.m}")
        if not 0.0 < self.e < 0.5:
            raise ValueError(f"e must lie in (0, 0.5), got {self.e}")


def discretize(d: NoiseDist, m: int, B: float) -> DiscretePmf:
    """Discretize ``d`` on 2m-2 chunks covering [-(m-1)u, (m-1)u), u = B/(m-1).

    Chunk i in [-m+1, m-2] receives cdf((i+1)u) - cdf(iu); the mass below
    -(m-1)u and at or above (m-1)u goes to the brackets. The pieces
    telescope, so total mass is exactly 1 up to float summation.
    """
    if m < 2:
        raise ValueError(f"m must be at least 2, got {m}")
    if not B > 0:
        raise ValueError(f"B must be positive, got {B}")
    u = B / (m - 1)
    edges = np.arange(-m + 1, m) * u  # 2m-1 edges for 2m-2 chunks
    cdf_edges = np.asarray(noise.cdf(d, edges))
    mass = np.maximum(np.diff(cdf_edges), 0.0)
    return DiscretePmf(mesh=u, origin_index=-m + 1, mass=mass,
                       neg_inf_mass=float(cdf_edges[0]),
                       pos_inf_mass=float(1.0 - cdf_edges[-1]))


def convolve_difference(x: DiscretePmf, y: DiscretePmf) -> DiscretePmf:
    """Law of Z = X - Y for independent discretized X and Y.

    Reflects y's grid and convolves the mass arrays with FFT. Bracket
    algebra: a pair with one infinite operand lands in that bracket, two
    matching infinities stay there, and the mass of the opposing pairs
    (-inf of one with +inf of the other) is split evenly between both
    brackets -- with the default tail mass that product is around 1e-20
    and only kept so the total stays exactly 1.
    """
    if abs(x.mesh - y.mesh) > 1e-12 * max(x.mesh, y.mesh):
        raise ValueError(f"mismatched mesh: {x.mesh} vs {y.mesh}")
    r_mass = y.mass[::-1]
    r_origin = -(y.origin_index + len(y.mass) - 1)
    r_neg, r_pos = y.pos_inf_mass, y.neg_inf_mass

    z_mass = np.maximum(fftconvolve(x.mass, r_mass), 0.0)
    x_fin = float(x.mass.sum())
    y_fin = float(r_mass.sum())
    opposing = 0.5 * (x.pos_inf_mass * r_neg + x.neg_inf_mass * r_pos)
    pos = x_fin * r_pos + x.pos_inf_mass * y_fin + x.pos_inf_mass * r_pos + opposing
    neg = x_fin * r_neg + x.neg_inf_mass * y_fin + x.neg_inf_mass * r_neg + opposing
    return DiscretePmf(mesh=x.mesh, origin_index=x.origin_index + r_origin,
                       mass=z_mass, neg_inf_mass=neg, pos_inf_mass=pos)


def pmf_cdf(pmf: DiscretePmf, t) -> float | np.ndarray:
    """Step cdf of a discretized law: P[Z <= t] counting chunks by left edge."""
    values = pmf.values()
    cum = np.concatenate(([pmf.neg_inf_mass],
                          pmf.neg_inf_mass + np.cumsum(pmf.mass)))
    idx = np.searchsorted(values, np.asarray(t, dtype=float), side="right")
    out = cum[idx]
    return float(out) if np.isscalar(t) else out


def _rate_to_mean(b: float, lam: float) -> float:
    """Mean 1/lam, flagging the singular line b*lam = 1 of the textbook
    closed form. The evaluation used here takes the exact limit there, so
    the answer is still correct; the warning exists for callers comparing
    against the raw two-denominator form."""
    if abs(b * lam - 1.0) < _SINGULAR_TOL:
        warnings.warn(
            f"b*lam = {b * lam} lies on the singular line of the raw "
            "closed form; evaluated through its exact removable limit",
            RuntimeWarning, stacklevel=3)
    return 1.0 / lam


def difference_cdf(z, b: float, lam: float) -> float | np.ndarray:
    """Closed-form cdf of Z = X - Y, X ~ Exp(rate lam), Y ~ Laplace(b)."""
    if not (b > 0 and lam > 0):
        raise ValueError("b and lam must be positive")
    cdf, _ = _difference_cdf_sf(z, b, _rate_to_mean(b, lam))
    return _scalar_like(cdf, z)


def difference_sf(z, b: float, lam: float) -> float | np.ndarray:
    """Closed-form survival 1 - cdf of Z = X - Y, cancellation-free tails."""
    if not (b > 0 and lam > 0):
        raise ValueError("b and lam must be positive")
    _, sf = _difference_cdf_sf(z, b, _rate_to_mean(b, lam))
    return _scalar_like(sf, z)


def _scalar_like(value: np.ndarray, like) -> float | np.ndarray:
    if np.isscalar(like) or getattr(like, "ndim", 1) == 0:
        return float(np.asarray(value).ravel()[0])
    return value


def _sf_positive(zh: np.ndarray, b: float, mu: float) -> np.ndarray:
    """Survival of Exp(mean mu) - Laplace(b) at z > 0, cancellation-free.

    The textbook form

        mu^2/(mu^2 - b^2) * exp(-z/mu) + b/(2(b - mu)) * exp(-z/b)

    subtracts two terms of size ~b/(2|mu - b|) and loses all precision as
    mu approaches b. Rearranged exactly (D = mu - b):

        sf = exp(-z/b) * (b/(2D)) * expm1(z*D/(b*mu))
             + exp(-z/mu) * (2*mu + b) / (2*(mu + b))

    Both terms are nonnegative for every mu, b, z > 0, and the first has
    the exact limit z/(2*mu) * exp(-z/b) at D = 0. For large positive
    expm1 arguments (only possible when mu > b) the orientation flips back
    to the plain difference of exponentials, which is then itself far from
    cancellation.
    """
    d = mu - b
    second = np.exp(-zh / mu) * (2.0 * mu + b) / (2.0 * (mu + b))
    if d == 0.0:
        return np.exp(-zh / b) * zh / (2.0 * mu) + second
    arg = zh * (d / (b * mu))
    first = np.empty_like(zh)
    small = arg <= _EXPM1_ARG_CAP
    first[small] = (np.exp(-zh[small] / b) * (b / (2.0 * d))
                    * np.expm1(arg[small]))
    big = ~small
    first[big] = (b / (2.0 * d)) * (np.exp(-zh[big] / mu)
                                    - np.exp(-zh[big] / b))
    return first + second


def _difference_cdf_sf(z, b: float, mu: float):
    """cdf and survival of Exp(mean mu) - Laplace(b)."""
    zarr = np.atleast_1d(np.asarray(z, dtype=float))
    cdf = np.empty_like(zarr)
    sf = np.empty_like(zarr)

    low = zarr <= 0
    zl = zarr[low]
    cdf_low = b * np.exp(zl / b) / (2.0 * (mu + b))
    cdf[low] = cdf_low
    sf[low] = 1.0 - cdf_low

    sf_high = _sf_positive(zarr[~low], b, mu)
    sf[~low] = sf_high
    cdf[~low] = 1.0 - sf_high
    return np.clip(cdf, 0.0, 1.0), np.clip(sf, 0.0, 1.0)


def _log_difference_cdf(z, b: float, mu: float) -> np.ndarray:
    """log of the difference cdf, stable in both tails (mu = 1/rate)."""
    zarr = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.empty_like(zarr)
    low = zarr <= 0
    out[low] = math.log(b / (2.0 * (mu + b))) + zarr[low] / b
    sf_high = np.clip(_sf_positive(zarr[~low], b, mu), 0.0, 1.0)
    out[~low] = np.log1p(-sf_high)
    return out


def success_probability_analytical(r, q: CorrectionQuery) -> float | np.ndarray:
    """Closed-form p(r) = Gamma(r+alpha)^k * (1 - Gamma(r-alpha)).

    Evaluates the piecewise closed form of Gamma; the three branches in r
    (below -alpha, between, above alpha) come from which side of 0 the two
    shifted arguments land on. On the line b = 1/lam, where the raw closed
    form is singular, the exact removable limit is used (a RuntimeWarning
    flags the crossing).
    """
    rarr = np.atleast_1d(np.asarray(r, dtype=float))
    mu = _rate_to_mean(q.b, q.lam)
    log_gamma_plus = _log_difference_cdf(rarr + q.alpha, q.b, mu)
    _, sf_minus = _difference_cdf_sf(rarr - q.alpha, q.b, mu)
    with np.errstate(divide="ignore"):
        log_p = q.k * log_gamma_plus + np.log(sf_minus)
    out = np.clip(np.exp(log_p), 0.0, 1.0)
    return _scalar_like(out, r)


@lru_cache(maxsize=64)
def _difference_grid(q: CorrectionQuery):
    """Discretized law of Z = Exp - Lap for q: (chunk values, extended cdf).

    The extended cdf has one leading entry for "below every chunk" so that
    searchsorted indices map straight into it. Cached per query since the
    harness re-optimizes identical configurations across repetitions.
    """
    mu = 1.0 / q.lam
    exp_d = noise.exponential(mu)
    lap_d = noise.laplace(q.b)
    B = max(noise.quantile(exp_d, 1.0 - q.e),
            noise.quantile(lap_d, 1.0 - q.e),
            abs(noise.quantile(lap_d, q.e)))
    z = convolve_difference(discretize(exp_d, q.m, B),
                            discretize(lap_d, q.m, B))
    values = z.values()
    cum = np.concatenate(([z.neg_inf_mass],
                          z.neg_inf_mass + np.cumsum(z.mass)))
    return values, cum


def _grid_cdf(values: np.ndarray, cum: np.ndarray, t: np.ndarray) -> np.ndarray:
    return cum[np.searchsorted(values, t, side="right")]


def _grid_success(q: CorrectionQuery, r: np.ndarray) -> np.ndarray:
    values, cum = _difference_grid(q)
    gamma_plus = _grid_cdf(values, cum, r + q.alpha)
    gamma_minus = _grid_cdf(values, cum, r - q.alpha)
    with np.errstate(divide="ignore"):
        log_p = q.k * np.log(gamma_plus) + np.log1p(-gamma_minus)
    return np.exp(log_p)


@lru_cache(maxsize=64)
def optimal_correction(q: CorrectionQuery) -> tuple[float, float]:
    """Grid argmax of the success probability on the discretized difference law.

    Discretizes both laws out to the boundary where each leaves at most
    ``q.e`` mass behind, convolves to the law of Z = Exp - Lap, and
    maximizes p(r) over the chunk grid. Ties break toward the smaller r.
    Cached like the grid itself: a simulation re-runs one configuration
    many times and the argmax is pure.

    Returns:
        (r_op, p_at_r_op): the maximizing grid value and p there.
    """
    values, _ = _difference_grid(q)
    p = _grid_success(q, values)
    best = int(np.argmax(p))
    return float(values[best]), float(p[best])


def correction_sweep(q: CorrectionQuery, r_grid) -> list[tuple[float, float]]:
    """Evaluate the numerical success probability on caller-chosen r values.

    Points outside the discretized support are evaluated against the step
    cdf's flat extensions (0 below, 1 minus the bracket above), which is
    the honest reading of the grid; keep the grid inside the support for
    plot-quality values.
    """
    rarr = np.asarray(r_grid, dtype=float)
    p = _grid_success(q, rarr)
    return [(float(r), float(v)) for r, v in zip(rarr, p)]

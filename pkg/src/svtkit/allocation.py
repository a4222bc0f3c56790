"""Privacy-budget splitting and private-comparison variance.

The total budget eps splits into a threshold part eps1 and a query part
eps2 = w * eps1. For each mechanism variant the comparison variance, as a
function of w, has a unique closed-form minimizer; these formulas and the
variance itself live here so the harness and the acceptance checks share
one source of truth.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

_SPLIT_TOL = 1e-12


class Variant(enum.Enum):
    """Mechanism variants: three baselines and the exponential family.

    The exponential variants differ only in their threshold-correction
    rule (none, noise mean, numerically optimized); they share one noise
    family and one budget-allocation rule.
    """

    LAP = "lap"
    GAU = "gau"
    GUM = "gum"
    EXP_NO_CORR = "exp-none"
    EXP_MEAN_CORR = "exp-mean"
    EXP_OPT_CORR = "exp-opt"

    @property
    def query_family(self) -> str:
        """The query-noise family behind this variant."""
        if self in (Variant.EXP_NO_CORR, Variant.EXP_MEAN_CORR,
                    Variant.EXP_OPT_CORR):
            return "exponential"
        return {Variant.LAP: "laplace", Variant.GAU: "gaussian",
                Variant.GUM: "gumbel"}[self]


# Coefficient a such that the optimal w is (a * c)^(2/3) in the
# non-monotonic setting; the monotonic setting halves a*c.
_W_COEFF = {
    "exponential": math.sqrt(2.0),
    "gumbel": math.pi / math.sqrt(3.0),
    "laplace": 2.0,
    "gaussian": 2.0,
}

# Query-noise variance is _QVAR_COEFF * s^2 where s is the query-noise
# scale 2c*delta/eps2 (c*delta/eps2 when monotonic).
_QVAR_COEFF = {
    "exponential": 1.0,
    "gumbel": math.pi**2 / 6.0,
    "laplace": 2.0,
}


@dataclass(frozen=True)
class BudgetSplit:
    eps_total: float
    w: float
    eps1: float
    eps2: float
    variant: Variant
    monotonic: bool

    def __post_init__(self) -> None:
        if not (self.eps_total > 0 and self.w > 0):
            raise ValueError("eps_total and w must be positive")
        if abs(self.eps1 + self.eps2 - self.eps_total) > _SPLIT_TOL * self.eps_total:
            raise ValueError("eps1 + eps2 must equal eps_total")
        if abs(self.eps2 - self.w * self.eps1) > _SPLIT_TOL * max(self.eps2, 1.0):
            raise ValueError("eps2 must equal w * eps1")


def optimal_w(variant: Variant, c: int, monotonic: bool = False) -> float:
    """Closed-form budget ratio w = eps2/eps1 minimizing the comparison variance.

    Args:
        variant: mechanism variant (only its noise family matters).
        c: positive-answer budget.
        monotonic: True when neighboring datasets move all query results the
            same way, which halves the query-noise scale.

    Returns:
        The variance-minimizing w for this variant and c.
    """
    if c < 1:
        raise ValueError(f"c must be at least 1, got {c}")
    effective = _W_COEFF[variant.query_family] * c * (0.5 if monotonic else 1.0)
    return effective ** (2.0 / 3.0)


def split(eps_total: float, variant: Variant, c: int,
          monotonic: bool = False) -> BudgetSplit:
    """Split a total budget at the variant's optimal ratio."""
    if not eps_total > 0:
        raise ValueError(f"eps_total must be positive, got {eps_total}")
    w = optimal_w(variant, c, monotonic)
    eps1 = eps_total / (1.0 + w)
    return BudgetSplit(eps_total=eps_total, w=w, eps1=eps1,
                       eps2=eps_total - eps1, variant=variant,
                       monotonic=monotonic)


def gaussian_kappa(delta_dp: float) -> float:
    """Calibration constant for the Gaussian baseline: sigma = kappa*delta/eps."""
    if not 0.0 < delta_dp < 1.0:
        raise ValueError(f"delta_dp must lie in (0, 1), got {delta_dp}")
    return math.sqrt(2.0 * math.log(1.25 / delta_dp))


def comparison_variance(variant: Variant, eps1: float, eps2: float, c: int,
                        delta: float, monotonic: bool = False,
                        delta_dp: float | None = None) -> float:
    """Variance of the private comparison: threshold-noise plus query-noise terms.

    The threshold noise is Laplace(delta/eps1) for every variant except the
    Gaussian one, which uses sigma = kappa*delta/eps1 with
    kappa = sqrt(2 ln(1.25/delta_dp)); delta_dp is required there and
    ignored elsewhere.
    """
    if not (eps1 > 0 and eps2 > 0 and delta > 0):
        raise ValueError("eps1, eps2, delta must all be positive")
    if c < 1:
        raise ValueError(f"c must be at least 1, got {c}")
    s = (c if monotonic else 2 * c) * delta / eps2
    family = variant.query_family
    if family == "gaussian":
        if delta_dp is None:
            raise ValueError("the Gaussian variant needs delta_dp for its "
                             "calibration constant")
        kappa_sq = gaussian_kappa(delta_dp) ** 2
        return kappa_sq * ((delta / eps1) ** 2 + s**2)
    return 2.0 * (delta / eps1) ** 2 + _QVAR_COEFF[family] * s**2

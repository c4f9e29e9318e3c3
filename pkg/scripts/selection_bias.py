"""Selection-induced bias of the chosen dose's response rate and the
Type I error inflation it causes when Stage-1 data are pooled into a
confirmatory analysis.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

from scipy.stats import binom, norm

from design_errors import ContractError, DomainError
from outcome_model import UtilityMoments

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TwoStagePlan:
    n1: int
    n2: int
    lambda_u: float = 0.0
    p0: float = 0.5
    alpha: float = 0.025

    def __post_init__(self):
        if self.n1 < 1:
            raise DomainError(f"n1 must be >= 1, got {self.n1}")
        if self.n2 < 0:
            raise DomainError(f"n2 must be >= 0, got {self.n2}")
        if not (0.0 < self.p0 < 1.0):
            raise DomainError(f"p0 must be in (0, 1), got {self.p0}")
        if not (0.0 < self.alpha < 0.5):
            raise DomainError(f"alpha must be in (0, 0.5), got {self.alpha}")

    @property
    def n_total(self) -> int:
        return self.n1 + self.n2

    @property
    def w1(self) -> float:
        """Share of the pooled estimate coming from Stage 1"""
        return self.n1 / self.n_total


@dataclass(frozen=True)
class BiasReport:
    stage1_bias: float
    combined_bias: float
    max_bias: float
    max_combined_bias: float
    z_type1: float
    z_type1_max: float
    binom_type1: float
    binom_type1_max: float
    binom_critical: int


def truncated_selection_expectation(k):
    """E[Z_H 1{Z_H - Z_L > k} + Z_L 1{Z_H - Z_L <= k}] for iid standard normals"""
    return math.exp(-k * k / 4.0) / math.sqrt(math.pi)


def selection_bias(moments: UtilityMoments, n1, lambda_u, cov: Optional[float] = None):
    """Stage-1 bias of an endpoint W on the selected arm; cov is Cov(W, U), default Cov(X, U)"""
    if moments.sigma2 <= 0.0:
        raise DomainError("Utility variance is zero: selection carries no information")
    if n1 < 1:
        raise DomainError(f"n1 must be >= 1, got {n1}")
    if cov is None:
        cov = moments.cov_xu
    sigma_u = moments.sigma
    k = lambda_u * math.sqrt(n1) / sigma_u
    return cov / (sigma_u * math.sqrt(n1)) * truncated_selection_expectation(k)


def max_bias(p0, n1, lambda_u=0.0, sigma_u=None):
    """Upper bound on the response-rate bias, reached when U is perfectly correlated with X"""
    if not (0.0 < p0 < 1.0):
        raise DomainError(f"p0 must be in (0, 1), got {p0}")
    bound = math.sqrt(p0 * (1.0 - p0)) / math.sqrt(n1 * math.pi)
    if lambda_u > 0.0:
        if sigma_u is None:
            raise ContractError("lambda_u > 0 needs sigma_u for the exponential factor")
        bound *= math.exp(-lambda_u ** 2 * n1 / (4.0 * sigma_u ** 2))
    return bound


def combined_bias(stage1_bias, n1, n2):
    """Stage-1 bias diluted by Stage-2 patients in the pooled estimate"""
    return stage1_bias * n1 / (n1 + n2)


def _se0(p0, n_total):
    return math.sqrt(p0 * (1.0 - p0) / n_total)


def z_test_type1(plan: TwoStagePlan, delta_p_combined):
    z = norm.ppf(1.0 - plan.alpha)
    shift = delta_p_combined / _se0(plan.p0, plan.n_total)
    return float(norm.sf(z - shift))


def binomial_critical(n_total, p0, alpha):
    """Smallest k with Pr(X > k) <= alpha under Binomial(n_total, p0)"""
    lo, hi = 0, n_total
    while lo < hi:
        mid = (lo + hi) // 2
        if binom.sf(mid, n_total, p0) <= alpha:
            hi = mid
        else:
            lo = mid + 1
    return lo


def binomial_size(n_total, p0, alpha):
    """Attained size of the exact binomial test"""
    k_c = binomial_critical(n_total, p0, alpha)
    return float(binom.sf(k_c, n_total, p0))


def binomial_type1(plan: TwoStagePlan, delta_p_combined):
    p_true = plan.p0 + delta_p_combined
    if not (0.0 < p_true < 1.0):
        raise DomainError(f"p0 + delta_p = {p_true} is not a probability")
    k_c = binomial_critical(plan.n_total, plan.p0, plan.alpha)
    return float(binom.sf(k_c, plan.n_total, p_true))


def bias_report(moments: UtilityMoments, plan: TwoStagePlan, p_hat=None) -> BiasReport:
    """Plugin and maximum-bias predictions for one plan; p_hat feeds the max bound (defaults to p0)"""
    stage1 = selection_bias(moments, plan.n1, plan.lambda_u)
    combined = combined_bias(stage1, plan.n1, plan.n2)
    bound = max_bias(p_hat if p_hat is not None else plan.p0, plan.n1, plan.lambda_u, moments.sigma)
    bound_combined = combined_bias(bound, plan.n1, plan.n2)
    return BiasReport(
        stage1_bias=stage1,
        combined_bias=combined,
        max_bias=bound,
        max_combined_bias=bound_combined,
        z_type1=z_test_type1(plan, combined),
        z_type1_max=z_test_type1(plan, bound_combined),
        binom_type1=binomial_type1(plan, combined),
        binom_type1_max=binomial_type1(plan, bound_combined),
        binom_critical=binomial_critical(plan.n_total, plan.p0, plan.alpha),
    )

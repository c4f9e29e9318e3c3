"""Selection bias carried into time-to-event confirmatory endpoints.

The response-rate bias formula is reused with a different endpoint W:
the landmark indicator S(tau) for the landmark test and the survival
time T for the hazard-based tests, whose bias is moved to the log-hazard
scale by the delta method.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

from scipy.stats import norm

from design_errors import DomainError
from outcome_model import UtilityMoments
from selection_bias import max_bias, selection_bias

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TtePlan:
    n1: int
    n2: int
    d_events: float
    d_total: float
    lambda0: float = 0.1
    tau: float = 24.0
    lambda_u: float = 0.0
    alpha: float = 0.025

    def __post_init__(self):
        if self.lambda0 <= 0 or self.tau <= 0:
            raise DomainError(f"lambda0 and tau must be positive, got {self.lambda0}, {self.tau}")
        if self.n1 < 1 or self.n2 < 0:
            raise DomainError(f"Invalid stage sizes n1={self.n1}, n2={self.n2}")
        if self.d_events < 1 or self.d_total < 1:
            raise DomainError(f"Event counts must be >= 1, got {self.d_events}, {self.d_total}")

    @property
    def w1(self) -> float:
        return self.n1 / (self.n1 + self.n2)

    @property
    def s0_tau(self) -> float:
        """Null landmark survival exp(-lambda0 * tau)"""
        return math.exp(-self.lambda0 * self.tau)


@dataclass(frozen=True)
class TteBiasReport:
    landmark_bias: float
    landmark_bias_max: float
    landmark_type1: float
    mean_time_bias: float
    hazard_bias: float
    log_hazard_bias_combined: float
    exp_type1: float
    beta_bias_combined: float
    cox_type1: float
    bridge_hazard_bias_upper: float
    bridge_cox_type1: float


def _endpoint_bias(cov, sigma_u, n1, lambda_u):
    if sigma_u <= 0:
        raise DomainError("Utility standard deviation must be positive")
    moments = UtilityMoments(mu=0.0, sigma2=sigma_u ** 2, cov_xu=cov)
    return selection_bias(moments, n1, lambda_u, cov=cov)


def landmark_bias(cov_su, sigma_u, n1, lambda_u, w1):
    """Pooled bias of the landmark survival proportion"""
    return w1 * _endpoint_bias(cov_su, sigma_u, n1, lambda_u)


def landmark_bias_max(s0_tau, n1, lambda_u=0.0, sigma_u=None):
    """Stage-1 bound on the landmark bias"""
    if not (0.0 < s0_tau < 1.0):
        raise DomainError(f"s0_tau must be in (0, 1), got {s0_tau}")
    return max_bias(s0_tau, n1, lambda_u, sigma_u)


def landmark_type1(plan: TtePlan, landmark_bias_combined, s0=None):
    s0 = plan.s0_tau if s0 is None else s0
    se0 = math.sqrt(s0 * (1.0 - s0) / (plan.n1 + plan.n2))
    z = norm.ppf(1.0 - plan.alpha)
    return float(norm.sf(z - landmark_bias_combined / se0))


def mean_time_bias(cov_tu, sigma_u, n1, lambda_u=0.0):
    """Stage-1 bias B of the mean survival time on the selected arm"""
    return _endpoint_bias(cov_tu, sigma_u, n1, lambda_u)


def _lower_tail_type1(alpha, bias_z):
    return float(norm.cdf(-norm.ppf(1.0 - alpha) - bias_z))


def exp_test_type1(plan: TtePlan, mean_time_bias_B):
    """(bias_z, type1) for the one-sample exponential test"""
    log_hazard_comb = -plan.lambda0 * plan.w1 * mean_time_bias_B
    bias_z = log_hazard_comb * math.sqrt(plan.d_events)
    return bias_z, _lower_tail_type1(plan.alpha, bias_z)


def cox_type1(plan: TtePlan, mean_time_bias_B):
    """(beta_bias, bias_z, type1) for the log-rank and Cox score tests under 1:1 allocation"""
    beta_bias = -plan.lambda0 * plan.w1 * mean_time_bias_B
    bias_z = beta_bias * math.sqrt(plan.d_total / 4.0)
    return beta_bias, bias_z, _lower_tail_type1(plan.alpha, bias_z)


def landmark_hazard_bridge(s0_tau, tau, lambda0, landmark_bias_max_value, w1):
    """Conservative hazard and log-hazard-ratio bias bounds from a landmark bias bound"""
    if not (0.0 < s0_tau < 1.0):
        raise DomainError(f"s0_tau must be in (0, 1), got {s0_tau}")
    hazard_upper = -landmark_bias_max_value / (tau * s0_tau)
    beta_upper = w1 * hazard_upper / lambda0
    return hazard_upper, beta_upper


def bridge_type1(plan: TtePlan, beta_bias_upper, test="cox"):
    if test == "cox":
        bias_z = beta_bias_upper * math.sqrt(plan.d_total / 4.0)
    elif test == "exp":
        bias_z = beta_bias_upper * math.sqrt(plan.d_events)
    else:
        raise DomainError(f"Unknown test for the bridge bound: {test}")
    return _lower_tail_type1(plan.alpha, bias_z)


def expected_events(n, lambda0, t_entry, t_admin):
    """Expected events with uniform accrual on [0, t_entry] and censoring at calendar t_admin"""
    if t_entry <= 0:
        return n * (1.0 - math.exp(-lambda0 * t_admin))
    tail = (math.exp(-lambda0 * (t_admin - t_entry)) - math.exp(-lambda0 * t_admin)) / (lambda0 * t_entry)
    return n * (1.0 - tail)


def tte_bias_report(plan: TtePlan, cov_su, cov_tu, sigma_u, s0_tau: Optional[float] = None) -> TteBiasReport:
    s0 = plan.s0_tau if s0_tau is None else s0_tau
    lm_bias = landmark_bias(cov_su, sigma_u, plan.n1, plan.lambda_u, plan.w1)
    lm_max_stage1 = landmark_bias_max(s0, plan.n1, plan.lambda_u, sigma_u)

    B = mean_time_bias(cov_tu, sigma_u, plan.n1, plan.lambda_u)
    _, exp_t1 = exp_test_type1(plan, B)
    beta_bias, _, cox_t1 = cox_type1(plan, B)
    hazard_upper, beta_upper = landmark_hazard_bridge(s0, plan.tau, plan.lambda0, lm_max_stage1, plan.w1)

    return TteBiasReport(
        landmark_bias=lm_bias,
        landmark_bias_max=plan.w1 * lm_max_stage1,
        landmark_type1=landmark_type1(plan, lm_bias, s0),
        mean_time_bias=B,
        hazard_bias=-plan.lambda0 ** 2 * B,
        log_hazard_bias_combined=-plan.lambda0 * plan.w1 * B,
        exp_type1=exp_t1,
        beta_bias_combined=beta_bias,
        cox_type1=cox_t1,
        bridge_hazard_bias_upper=hazard_upper,
        bridge_cox_type1=bridge_type1(plan, beta_upper, "cox"),
    )

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from design_errors import DomainError

logger = logging.getLogger(__name__)

# Slack allowed when a correlation sits on a Frechet bound
BOUND_TOL = 1e-12


@dataclass(frozen=True)
class UtilitySpec:
    """Utility scores for the four efficacy/safety outcomes, best first.

    u1: response and no AE, u2: response with AE, u3: no response and
    no AE, u4: no response with AE.
    """
    u1: float
    u2: float
    u3: float
    u4: float
    r: Optional[float] = None
    swapped: bool = False

    def __post_init__(self):
        scores = self.scores
        if any(not (0.0 <= s <= 1.0) for s in scores):
            raise DomainError(f"Utility scores must lie in [0, 1], got {scores}")
        if not (self.u1 >= self.u2 >= self.u3 >= self.u4):
            raise DomainError(f"Utility scores must satisfy u1 >= u2 >= u3 >= u4, got {scores}")

    @property
    def scores(self) -> Tuple[float, float, float, float]:
        return (self.u1, self.u2, self.u3, self.u4)

    @property
    def eta(self) -> float:
        """Interaction term u1 - u2 - u3 + u4"""
        return self.u1 - self.u2 - self.u3 + self.u4

    @property
    def utility_independent(self) -> bool:
        return abs(self.eta) < 1e-12

    @property
    def spread(self) -> float:
        return self.u1 - self.u4


RESPONSE_ONLY = UtilitySpec(1.0, 1.0, 0.0, 0.0)


@dataclass(frozen=True)
class JointOutcomeModel:
    """Joint binary efficacy/safety model for one dose"""
    p: float
    q: float
    phi: float
    pi: Tuple[float, float, float, float]
    degenerate: bool = False
    truncated: bool = False


@dataclass(frozen=True)
class UtilityMoments:
    mu: float
    sigma2: float
    cov_xu: float

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


@dataclass(frozen=True)
class CountTable:
    """Observed counts of (response, no AE) outcomes"""
    n11: int
    n10: int
    n01: int
    n00: int

    def __post_init__(self):
        counts = (self.n11, self.n10, self.n01, self.n00)
        if any(c < 0 for c in counts):
            raise DomainError(f"Counts must be nonnegative, got {counts}")
        if sum(counts) == 0:
            raise DomainError("Count table is empty")

    @property
    def n(self) -> int:
        return self.n11 + self.n10 + self.n01 + self.n00

    @classmethod
    def from_records(cls, x, y):
        """Tabulate 0/1 response (x) and no-AE (y) indicators"""
        x = np.asarray(x, dtype=bool)
        y = np.asarray(y, dtype=bool)
        return cls(
            n11=int(np.sum(x & y)),
            n10=int(np.sum(x & ~y)),
            n01=int(np.sum(~x & y)),
            n00=int(np.sum(~x & ~y)),
        )


def utility_from_margins(delta, d):
    """Derive utility scores from an efficacy margin delta and a safety margin d"""
    for name, value in (("delta", delta), ("d", d)):
        if not (0.0 < value <= 1.0):
            raise DomainError(f"Margin {name} must be in (0, 1], got {value}")

    r = delta / d
    u2 = 1.0 / (1.0 + r)
    u3 = r / (1.0 + r)
    swapped = False
    if r > 1.0:
        # Efficacy margin larger than the safety margin would break the ordering
        u2, u3 = u3, u2
        swapped = True
        logger.warning(f"Trade-off ratio r={r:.4g} > 1: u2 and u3 swapped; consider revisiting the margins")

    return UtilitySpec(1.0, u2, u3, 0.0, r=r, swapped=swapped)


def _check_marginals(p, q):
    for name, value in (("p", p), ("q", q)):
        if not (0.0 < value < 1.0):
            raise DomainError(f"{name} must be strictly between 0 and 1, got {value}")


def _phi_scale(p, q):
    return math.sqrt(p * q * (1.0 - p) * (1.0 - q))


def phi_bounds(p, q):
    """Frechet-Hoeffding limits on the efficacy/safety correlation"""
    _check_marginals(p, q)
    scale = _phi_scale(p, q)
    pi1_low = max(0.0, p + q - 1.0)
    pi1_high = min(p, q)
    return (pi1_low - p * q) / scale, (pi1_high - p * q) / scale


def joint_probs(p, q, phi, truncate=False):
    """Outcome probabilities (pi1..pi4) for marginals p, q and correlation phi"""
    phi_min, phi_max = phi_bounds(p, q)
    truncated = False
    if phi < phi_min - BOUND_TOL or phi > phi_max + BOUND_TOL:
        if not truncate:
            raise DomainError(
                f"phi={phi} outside Frechet bounds [{phi_min:.4f}, {phi_max:.4f}] for p={p}, q={q}"
            )
        truncated = True
        logger.warning(f"phi={phi} truncated into [{phi_min:.4f}, {phi_max:.4f}]")
    phi = min(max(phi, phi_min), phi_max)

    pi1 = p * q + phi * _phi_scale(p, q)
    pi = np.clip([pi1, p - pi1, q - pi1, 1.0 - p - q + pi1], 0.0, 1.0)
    return JointOutcomeModel(p=p, q=q, phi=phi, pi=tuple(float(v) for v in pi), truncated=truncated)


def constant_response_model(p, q) -> JointOutcomeModel:
    """Response fixed at 0 or 1; phi is undefined and ignored"""
    if p not in (0.0, 1.0):
        raise DomainError(f"constant_response_model needs p in {{0, 1}}, got {p}")
    if not (0.0 <= q <= 1.0):
        raise DomainError(f"q must be in [0, 1], got {q}")
    pi = (q, 1.0 - q, 0.0, 0.0) if p == 1.0 else (0.0, 0.0, q, 1.0 - q)
    return JointOutcomeModel(p=float(p), q=q, phi=0.0, pi=pi, degenerate=True)


def arm_outcome_model(p, q, phi) -> JointOutcomeModel:
    """joint_probs for interior p; constant assignment when p is 0 or 1"""
    if p in (0.0, 1.0):
        return constant_response_model(p, q)
    return joint_probs(p, q, phi)


def estimate_model(counts: CountTable) -> JointOutcomeModel:
    """Estimate (p, q, phi) from a 2x2 table of historical outcomes"""
    n = counts.n
    n_resp = counts.n11 + counts.n10
    n_safe = counts.n11 + counts.n01
    p_hat = n_resp / n
    q_hat = n_safe / n

    denom = n_resp * (n - n_resp) * n_safe * (n - n_safe)
    if denom == 0:
        logger.warning(f"Degenerate table {counts}: a margin is empty, phi set to 0")
        pi = tuple(c / n for c in (counts.n11, counts.n10, counts.n01, counts.n00))
        return JointOutcomeModel(p=p_hat, q=q_hat, phi=0.0, pi=pi, degenerate=True)

    phi_hat = (n * counts.n11 - n_resp * n_safe) / math.sqrt(denom)
    return joint_probs(p_hat, q_hat, phi_hat, truncate=True)


def utility_moments(u: UtilitySpec, m: JointOutcomeModel) -> UtilityMoments:
    scores = np.array(u.scores)
    pi = np.array(m.pi)
    mu = float(scores @ pi)
    sigma2 = max(float((scores ** 2) @ pi) - mu * mu, 0.0)
    cov_xu = u.u1 * m.pi[0] + u.u2 * m.pi[1] - m.p * mu
    return UtilityMoments(mu=mu, sigma2=sigma2, cov_xu=cov_xu)


def mean_utility_decomposed(u: UtilitySpec, p, q, phi):
    """Mean utility written through the marginals; returns (mu, eta)"""
    pi1 = p * q + phi * _phi_scale(p, q)
    eta = u.eta
    mu = u.u4 + (u.u2 - u.u4) * p + (u.u3 - u.u4) * q + eta * pi1
    return mu, eta


def _mu_partials(u: UtilitySpec, p, q, phi):
    _check_marginals(p, q)
    sp = math.sqrt(p * (1.0 - p))
    sq = math.sqrt(q * (1.0 - q))
    dpi1_dp = q + phi * sq * (1.0 - 2.0 * p) / (2.0 * sp)
    dpi1_dq = p + phi * sp * (1.0 - 2.0 * q) / (2.0 * sq)
    dmu_dp = (u.u2 - u.u4) + u.eta * dpi1_dp
    dmu_dq = (u.u3 - u.u4) + u.eta * dpi1_dq
    return dmu_dp, dmu_dq


def marginal_rate_of_substitution(u: UtilitySpec, p, q, phi):
    """Response-rate gain that offsets a unit loss in the no-AE rate at constant mean utility"""
    dmu_dp, dmu_dq = _mu_partials(u, p, q, phi)
    if abs(dmu_dp) < 1e-15:
        raise DomainError(f"Mean utility does not depend on p at p={p}, q={q}, phi={phi}")
    return dmu_dq / dmu_dp


def outcome_scores(u: UtilitySpec, x, y):
    """Map 0/1 response and no-AE indicators to utility scores"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (u.u1 * x * y + u.u2 * x * (1.0 - y)
            + u.u3 * (1.0 - x) * y + u.u4 * (1.0 - x) * (1.0 - y))

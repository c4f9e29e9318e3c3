"""Exact distribution of per-arm utility sums on an integer lattice.

Utility scores are rescaled to integers so the n-fold sum of one
patient's four-point distribution can be built by dense convolution.
Selection probabilities are then read off exactly, ties included.
"""
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np

from design_errors import ContractError, DomainError, ResourceCapError
from outcome_model import JointOutcomeModel, UtilitySpec

logger = logging.getLogger(__name__)

FALLBACK_SCALE = 10 ** 6
DEFAULT_MEMORY_CAP = 10 ** 7
LATTICE_TOL = 1e-9


class LatticeScores(NamedTuple):
    scale: int
    scores: Tuple[int, int, int, int]
    approximate: bool


@dataclass(frozen=True, eq=False)
class LatticePmf:
    """Probability masses on integer offsets; utility value = offset / scale"""
    scale: int
    offsets: np.ndarray
    masses: np.ndarray
    n: Optional[int] = None

    def mean(self) -> float:
        return float(self.offsets @ self.masses) / self.scale

    def variance(self) -> float:
        values = self.offsets / self.scale
        mean = float(values @ self.masses)
        return float(((values - mean) ** 2) @ self.masses)

    def total(self) -> float:
        return float(self.masses.sum())

    def mass_at(self, offset: int) -> float:
        idx = offset - int(self.offsets[0])
        if 0 <= idx < len(self.masses):
            return float(self.masses[idx])
        return 0.0


def rationalize_utilities(u: UtilitySpec, max_denominator=1000) -> LatticeScores:
    """Smallest common denominator turning every score into an integer"""
    if max_denominator < 1:
        raise DomainError(f"max_denominator must be >= 1, got {max_denominator}")

    for scale in range(1, max_denominator + 1):
        scaled = [s * scale for s in u.scores]
        rounded = [round(v) for v in scaled]
        if all(abs(v - r) < LATTICE_TOL for v, r in zip(scaled, rounded)):
            return LatticeScores(scale, tuple(int(r) for r in rounded), False)

    logger.warning(f"No lattice denominator <= {max_denominator} for {u.scores}; "
                   f"using scale {FALLBACK_SCALE} (approximate lattice)")
    rounded = tuple(int(round(s * FALLBACK_SCALE)) for s in u.scores)
    return LatticeScores(FALLBACK_SCALE, rounded, True)


def _single_patient(pi, lattice: LatticeScores):
    low = min(lattice.scores)
    span = max(lattice.scores) - low
    base = np.zeros(span + 1)
    for score, prob in zip(lattice.scores, pi):
        base[score - low] += prob
    return base, low


def utility_sum_pmf(n, m: JointOutcomeModel, u: UtilitySpec, lattice: Optional[LatticeScores] = None,
                    memory_cap=DEFAULT_MEMORY_CAP) -> LatticePmf:
    """Exact PMF of the utility sum of n patients drawn from model m"""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if lattice is None:
        lattice = rationalize_utilities(u)

    base, low = _single_patient(m.pi, lattice)
    support = n * (len(base) - 1) + 1
    if support > memory_cap:
        raise ResourceCapError(
            f"Utility-sum lattice needs {support:,} points for n={n}, above the cap of {memory_cap:,}",
            cap=memory_cap,
        )

    # Binary powering; np.convolve accumulates in increasing index order
    result = np.ones(1)
    power = base
    k = n
    while True:
        if k & 1:
            result = np.convolve(result, power)
        k >>= 1
        if not k:
            break
        power = np.convolve(power, power)

    offsets = np.arange(len(result), dtype=np.int64) + n * low
    return LatticePmf(scale=lattice.scale, offsets=offsets, masses=result, n=n)


def _check_pair(pmf_H: LatticePmf, pmf_L: LatticePmf, n=None):
    if pmf_H.scale != pmf_L.scale:
        raise ContractError(f"Lattice scales differ: {pmf_H.scale} vs {pmf_L.scale}")
    if n is not None:
        for pmf in (pmf_H, pmf_L):
            if pmf.n is not None and pmf.n != n:
                raise ContractError(f"PMF built for n={pmf.n}, used with n={n}")


def threshold_offset(n, lambda_u, scale):
    """Threshold n * lambda_u * scale in lattice units, snapped to an integer when within tolerance.

    Returns (smallest difference that selects H, whether the threshold is a lattice point).
    """
    thr = lambda_u * n * scale
    nearest = round(thr)
    if abs(thr - nearest) < LATTICE_TOL:
        return int(nearest) + 1, True
    return math.floor(thr) + 1, False


def difference_pmf(pmf_H: LatticePmf, pmf_L: LatticePmf) -> LatticePmf:
    """Exact PMF of S_H - S_L for independent arms"""
    _check_pair(pmf_H, pmf_L)
    masses = np.convolve(pmf_H.masses, pmf_L.masses[::-1])
    start = int(pmf_H.offsets[0]) - int(pmf_L.offsets[-1])
    offsets = np.arange(len(masses), dtype=np.int64) + start
    return LatticePmf(scale=pmf_H.scale, offsets=offsets, masses=masses)


def select_high_prob(pmf_H: LatticePmf, pmf_L: LatticePmf, n, lambda_u) -> float:
    """Pr(mean utility of H exceeds that of L by more than lambda_u)"""
    _check_pair(pmf_H, pmf_L, n)
    k_min, _ = threshold_offset(n, lambda_u, pmf_H.scale)

    cdf_L = np.cumsum(pmf_L.masses)
    idx = np.searchsorted(pmf_L.offsets, pmf_H.offsets - k_min, side='right') - 1
    below = np.where(idx >= 0, cdf_L[np.clip(idx, 0, None)], 0.0)
    prob = float(pmf_H.masses @ below)
    return min(max(prob, 0.0), 1.0)


def tie_prob(pmf_H: LatticePmf, pmf_L: LatticePmf, n, lambda_u) -> float:
    """Mass of S_H - S_L exactly at the threshold; these ties select L"""
    _check_pair(pmf_H, pmf_L, n)
    k_min, on_lattice = threshold_offset(n, lambda_u, pmf_H.scale)
    if not on_lattice:
        return 0.0
    return difference_pmf(pmf_H, pmf_L).mass_at(k_min - 1)

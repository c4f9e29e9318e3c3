import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import norm

from design_errors import DomainError, ResourceCapError
from outcome_model import (RESPONSE_ONLY, UtilitySpec, joint_probs, utility_from_margins,
                           utility_moments)
from utility_dist import (LATTICE_TOL, difference_pmf, rationalize_utilities, threshold_offset,
                          utility_sum_pmf)

logger = logging.getLogger(__name__)

DEFAULT_N_CAP = 5000
APPROX_N_CAP = 10 ** 7
SEARCH_BACKOFF = 10


@dataclass(frozen=True)
class DesignScenario:
    """Reference dose (p, q) plus the margins that define scenarios S_L and S_H.

    S_L: L=(p, q), H=(p, q - d); S_H: L=(p - delta, q), H=(p, q).
    """
    p: float
    q: float
    delta: float
    d: float
    phi: float = 0.0
    utilities: Optional[UtilitySpec] = None
    alpha_L: float = 0.8
    alpha_H: float = 0.8

    def __post_init__(self):
        if not (0.0 < self.delta <= 1.0):
            raise DomainError(f"delta must be in (0, 1], got {self.delta}")
        if not (0.0 <= self.d <= 1.0):
            raise DomainError(f"d must be in [0, 1], got {self.d}")
        if self.p - self.delta <= 0.0:
            raise DomainError(f"p - delta must be positive, got p={self.p}, delta={self.delta}")
        if self.q - self.d <= 0.0:
            raise DomainError(f"q - d must be positive, got q={self.q}, d={self.d}")
        for name in ("alpha_L", "alpha_H"):
            value = getattr(self, name)
            if not (0.5 < value < 1.0):
                raise DomainError(f"{name} must be in (0.5, 1), got {value}")
        if self.utilities is None:
            object.__setattr__(self, "utilities", utility_from_margins(self.delta, self.d))

    def arm_margins(self):
        return {
            ("S_L", "L"): (self.p, self.q),
            ("S_L", "H"): (self.p, self.q - self.d),
            ("S_H", "L"): (self.p - self.delta, self.q),
            ("S_H", "H"): (self.p, self.q),
        }

    def arm_models(self):
        models = {}
        for (scenario, arm), (p, q) in self.arm_margins().items():
            try:
                models[(scenario, arm)] = joint_probs(p, q, self.phi)
            except DomainError as e:
                raise DomainError(f"Scenario {scenario}, dose {arm}: {e}") from e
        return models


class ScenarioMoments(NamedTuple):
    dmu_L: float
    v_L: float
    dmu_H: float
    v_H: float


@dataclass(frozen=True)
class DesignResult:
    n: int
    lambda_u: float
    method: str
    pcs_L: float
    pcs_H: float
    binding: str
    pcs_kind: str
    utilities: UtilitySpec

    def to_row(self):
        return {
            'method': self.method,
            'n': self.n,
            'lambda_u': self.lambda_u,
            'PCS_L': self.pcs_L,
            'PCS_H': self.pcs_H,
            'pcs_kind': self.pcs_kind,
            'binding': self.binding,
            'u1': self.utilities.u1,
            'u2': self.utilities.u2,
            'u3': self.utilities.u3,
            'u4': self.utilities.u4,
        }


@dataclass(frozen=True)
class GridSpec:
    """Threshold candidates for the exact search.

    kind='lattice' uses every threshold k / (n * scale); kind='uniform'
    uses multiples of step. Thresholds are nonnegative unless
    allow_negative is set.
    """
    kind: str = "lattice"
    step: float = 0.001
    allow_negative: bool = False
    window: int = 15

    def __post_init__(self):
        if self.kind not in ("lattice", "uniform"):
            raise DomainError(f"Unknown grid kind: {self.kind}")
        if self.kind == "uniform" and self.step <= 0:
            raise DomainError(f"Grid step must be positive, got {self.step}")
        if self.window < 1:
            raise DomainError(f"Search window must be >= 1, got {self.window}")


def scenario_moments(s: DesignScenario) -> ScenarioMoments:
    models = s.arm_models()
    moments = {key: utility_moments(s.utilities, m) for key, m in models.items()}

    dmu_L = moments[("S_L", "H")].mu - moments[("S_L", "L")].mu
    dmu_H = moments[("S_H", "H")].mu - moments[("S_H", "L")].mu
    v_L = moments[("S_L", "H")].sigma2 + moments[("S_L", "L")].sigma2
    v_H = moments[("S_H", "H")].sigma2 + moments[("S_H", "L")].sigma2

    if not (dmu_L <= 0.0 < dmu_H):
        raise DomainError(
            f"Scenario utilities do not separate the doses: dmu(S_L)={dmu_L:.6g}, dmu(S_H)={dmu_H:.6g}"
        )
    return ScenarioMoments(dmu_L, v_L, dmu_H, v_H)


def _ceil(x):
    return int(math.ceil(x - 1e-9))


def _z_targets(s: DesignScenario):
    return norm.ppf(s.alpha_L), norm.ppf(s.alpha_H)


def n_for_threshold(s: DesignScenario, lambda_u, n_cap=APPROX_N_CAP):
    """Per-scenario sizes (n_L, n_H) for a fixed threshold and their maximum"""
    mom = scenario_moments(s)
    if not (mom.dmu_L < lambda_u < mom.dmu_H):
        raise DomainError(
            f"lambda_u={lambda_u} must lie strictly inside ({mom.dmu_L:.6g}, {mom.dmu_H:.6g})"
        )
    z_L, z_H = _z_targets(s)
    n_L_real = z_L ** 2 * mom.v_L / (lambda_u - mom.dmu_L) ** 2
    n_H_real = z_H ** 2 * mom.v_H / (mom.dmu_H - lambda_u) ** 2
    if max(n_L_real, n_H_real) > n_cap:
        raise ResourceCapError(f"Required n exceeds the cap of {n_cap:,} per arm", cap=n_cap)
    n_L, n_H = _ceil(n_L_real), _ceil(n_H_real)
    return n_L, n_H, max(n_L, n_H)


def analytic_pcs(s: DesignScenario, n, lambda_u):
    """Normal-model PCS pair at design (n, lambda_u)"""
    mom = scenario_moments(s)
    pcs_L = norm.cdf((lambda_u - mom.dmu_L) / math.sqrt(mom.v_L / n))
    pcs_H = norm.cdf((mom.dmu_H - lambda_u) / math.sqrt(mom.v_H / n))
    return float(pcs_L), float(pcs_H)


def _binding(s: DesignScenario, pcs_L, pcs_H):
    return "S_L" if pcs_L - s.alpha_L < pcs_H - s.alpha_H else "S_H"


def optimal_design_approx(s: DesignScenario) -> DesignResult:
    """Jointly optimal n and threshold from the normal approximation"""
    mom = scenario_moments(s)
    z_L, z_H = _z_targets(s)
    n_real = ((z_L * math.sqrt(mom.v_L) + z_H * math.sqrt(mom.v_H)) / (mom.dmu_H - mom.dmu_L)) ** 2
    n = max(_ceil(n_real), 1)
    # Threshold is re-derived at the integer n actually used
    lambda_u = mom.dmu_H - z_H * math.sqrt(mom.v_H / n)
    pcs_L, pcs_H = analytic_pcs(s, n, lambda_u)
    return DesignResult(n=n, lambda_u=lambda_u, method="approximate", pcs_L=pcs_L, pcs_H=pcs_H,
                        binding=_binding(s, pcs_L, pcs_H), pcs_kind="analytic", utilities=s.utilities)


def _difference_cdfs(s: DesignScenario, n, lattice, models):
    pmfs = {key: utility_sum_pmf(n, m, s.utilities, lattice=lattice) for key, m in models.items()}
    diff_L = difference_pmf(pmfs[("S_L", "H")], pmfs[("S_L", "L")])
    diff_H = difference_pmf(pmfs[("S_H", "H")], pmfs[("S_H", "L")])
    return diff_L, np.cumsum(diff_L.masses), diff_H, np.cumsum(diff_H.masses)


def _cdf_at(pmf, cdf, t):
    idx = np.asarray(t) - int(pmf.offsets[0])
    inside = np.clip(idx, 0, len(cdf) - 1)
    return np.where(idx < 0, 0.0, np.where(idx >= len(cdf), 1.0, cdf[inside]))


def _open_interval_ints(low, high):
    """Integers strictly between two reals, with lattice snapping"""
    r_low, r_high = round(low), round(high)
    first = r_low + 1 if abs(low - r_low) < LATTICE_TOL else math.floor(low) + 1
    last = r_high - 1 if abs(high - r_high) < LATTICE_TOL else math.floor(high)
    return first, last


def _candidates(mom: ScenarioMoments, n, scale, grid: GridSpec):
    """Return (lambda values, lattice cut t); H is selected iff S_H - S_L > t"""
    if grid.kind == "lattice":
        first, last = _open_interval_ints(mom.dmu_L * n * scale, mom.dmu_H * n * scale)
        if not grid.allow_negative:
            first = max(first, 0)
        t = np.arange(first, last + 1, dtype=np.int64)
        return t / (n * scale), t

    first, last = _open_interval_ints(mom.dmu_L / grid.step, mom.dmu_H / grid.step)
    if not grid.allow_negative:
        first = max(first, 0)
    lambdas = np.arange(first, last + 1) * grid.step
    t = np.array([threshold_offset(n, lam, scale)[0] - 1 for lam in lambdas], dtype=np.int64)
    return lambdas, t


def _evaluate_n(s: DesignScenario, n, lattice, models, mom, grid):
    diff_L, cdf_L, diff_H, cdf_H = _difference_cdfs(s, n, lattice, models)
    lambdas, t = _candidates(mom, n, lattice.scale, grid)
    if len(t) == 0:
        return {'n': n, 'feasible': False, 'best': None}

    pcs_L = _cdf_at(diff_L, cdf_L, t)
    pcs_H = 1.0 - _cdf_at(diff_H, cdf_H, t)
    ok = (pcs_L >= s.alpha_L) & (pcs_H >= s.alpha_H)

    slack = np.minimum(pcs_L - s.alpha_L, pcs_H - s.alpha_H)
    best_idx = int(np.argmax(slack))
    best = (float(pcs_L[best_idx]), float(pcs_H[best_idx]))
    if not ok.any():
        return {'n': n, 'feasible': False, 'best': best}

    # Smallest feasible threshold wins
    i = int(np.flatnonzero(ok)[0])
    return {'n': n, 'feasible': True, 'best': best, 'lambda_u': float(lambdas[i]),
            'pcs_L': float(pcs_L[i]), 'pcs_H': float(pcs_H[i])}


def optimal_design_exact(s: DesignScenario, lambda_grid: Optional[GridSpec] = None,
                         n_cap=DEFAULT_N_CAP, workers=1) -> DesignResult:
    """Smallest n with exact PCS targets met for some threshold on the grid"""
    grid = lambda_grid or GridSpec()
    if n_cap < 1:
        raise DomainError(f"n_cap must be >= 1, got {n_cap}")

    mom = scenario_moments(s)
    models = s.arm_models()
    lattice = rationalize_utilities(s.utilities)
    approx = optimal_design_approx(s)
    start = max(1, approx.n - SEARCH_BACKOFF)
    best_seen = None

    logger.info(f"Exact search from n={start} (approximate n={approx.n}, lattice scale {lattice.scale})")
    while start <= n_cap:
        window = range(start, min(start + grid.window, n_cap + 1))
        if workers == 1:
            results = [_evaluate_n(s, n, lattice, models, mom, grid) for n in window]
        else:
            results = Parallel(n_jobs=workers)(
                delayed(_evaluate_n)(s, n, lattice, models, mom, grid) for n in window
            )

        feasible = [r for r in results if r['feasible']]
        for r in results:
            if r['best'] is not None and (best_seen is None or min(r['best']) > min(best_seen)):
                best_seen = r['best']

        if feasible:
            found = feasible[0]
            later_gaps = [r['n'] for r in results if r['n'] > found['n'] and not r['feasible']]
            if later_gaps:
                logger.warning(f"Exact feasibility is not monotone in n: n={found['n']} feasible, "
                               f"but not n={later_gaps}")
            assert found['pcs_L'] >= s.alpha_L and found['pcs_H'] >= s.alpha_H
            return DesignResult(n=found['n'], lambda_u=found['lambda_u'], method="exact",
                                pcs_L=found['pcs_L'], pcs_H=found['pcs_H'],
                                binding=_binding(s, found['pcs_L'], found['pcs_H']),
                                pcs_kind="exact", utilities=s.utilities)
        start = window.stop

    raise ResourceCapError(f"No exact design with n <= {n_cap}; best PCS pair {best_seen}",
                           cap=n_cap, best=best_seen)


def exact_pcs(s: DesignScenario, n, lambda_u):
    """Exact PCS pair at design (n, lambda_u)"""
    lattice = rationalize_utilities(s.utilities)
    diff_L, cdf_L, diff_H, cdf_H = _difference_cdfs(s, n, lattice, s.arm_models())
    t = threshold_offset(n, lambda_u, lattice.scale)[0] - 1
    return float(_cdf_at(diff_L, cdf_L, t)), float(1.0 - _cdf_at(diff_H, cdf_H, t))


def rose_scenario(p, delta, alpha):
    """Efficacy-only scenario: utility equals the response indicator"""
    return DesignScenario(p=p, q=0.5, delta=delta, d=0.0, phi=0.0, utilities=RESPONSE_ONLY,
                          alpha_L=alpha, alpha_H=alpha)


def rose_design(p, delta, alpha, method="approx", lambda_grid=None, n_cap=DEFAULT_N_CAP, workers=1):
    s = rose_scenario(p, delta, alpha)
    if method == "approx":
        return optimal_design_approx(s)
    if method == "exact":
        return optimal_design_exact(s, lambda_grid=lambda_grid, n_cap=n_cap, workers=workers)
    raise DomainError(f"Unknown method: {method}")


def design_table(scenarios, methods=("approx", "exact"), lambda_grid=None, workers=1):
    """Approximate and/or exact designs for a list of scenarios, one row per scenario"""
    rows = []
    for s in scenarios:
        row = {'alpha': s.alpha_L, 'p': s.p, 'q': s.q, 'delta': s.delta, 'd': s.d, 'phi': s.phi}
        if "approx" in methods:
            res = optimal_design_approx(s)
            row.update({'approx_n': res.n, 'approx_lambda_u': res.lambda_u,
                        'approx_PCS_L': res.pcs_L, 'approx_PCS_H': res.pcs_H})
        if "exact" in methods:
            res = optimal_design_exact(s, lambda_grid=lambda_grid, workers=workers)
            row.update({'exact_n': res.n, 'exact_lambda_u': res.lambda_u,
                        'exact_PCS_L': res.pcs_L, 'exact_PCS_H': res.pcs_H})
        rows.append(row)
    return pd.DataFrame(rows)

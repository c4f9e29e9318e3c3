"""Monte Carlo engine for the select-then-confirm pathway.

Replications are simulated in fixed-size blocks of numpy arrays shaped
(replications, patients). Each block owns a Philox stream keyed by
(seed, scenario id, block index), so totals do not depend on how blocks
are spread across workers.
"""
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.special import log_ndtr, ndtr
from scipy.stats import binom, norm

from design_errors import ConfigError, ContractError, DomainError, ResourceCapError
from design_sizer import DesignScenario
from outcome_model import (RESPONSE_ONLY, JointOutcomeModel, UtilitySpec, arm_outcome_model,
                           outcome_scores)
from rng_streams import DEFAULT_BLOCK_SIZE, block_stream, replication_blocks
from selection_bias import binomial_critical
from survival_tests import exponential_z, landmark_z, two_sample_batch
from utility_dist import rationalize_utilities, threshold_offset

logger = logging.getLogger(__name__)

DEFAULT_REPLICATIONS = 100_000
PATIENT_DRAW_CAP = 5 * 10 ** 9
# Float sums of lattice scores can miss an exact tie by rounding
TIE_TOLERANCE = 1e-9


def default_workers():
    raw = os.environ.get("DOSEOPT_WORKERS", "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError([f"DOSEOPT_WORKERS: expected a positive integer, got {raw!r}"]) from None
    if workers < 1:
        raise ConfigError([f"DOSEOPT_WORKERS: expected a positive integer, got {raw!r}"])
    return workers


@dataclass(frozen=True)
class TteSettings:
    """Survival block; times in weeks, lambda0 per week"""
    enabled: bool = False
    lambda0: float = 0.1
    rho_c: float = 0.0
    t_entry: float = 52.0
    t_admin: float = 76.0
    tau: float = 24.0
    control_size: Optional[int] = None
    alpha: float = 0.025


@dataclass(frozen=True)
class BinarySettings:
    """Binary confirmatory tests; p0 defaults to the true response rate of dose H"""
    p0: Optional[float] = None
    alpha: float = 0.025


@dataclass(frozen=True)
class SimConfig:
    scenario_id: str
    p_L: float
    p_H: float
    q_L: float
    q_H: float
    n1: int
    n2: int
    phi: float = 0.0
    utilities: UtilitySpec = RESPONSE_ONLY
    lambda_u: float = 0.0
    replications: int = DEFAULT_REPLICATIONS
    seed: int = 0
    tte: TteSettings = field(default_factory=TteSettings)
    binary: BinarySettings = field(default_factory=BinarySettings)
    block_size: int = DEFAULT_BLOCK_SIZE
    cov_time_events_only: bool = False

    def __post_init__(self):
        if self.replications < 1:
            raise DomainError(f"replications must be >= 1, got {self.replications}")
        if self.n1 < 1 or self.n2 < 0:
            raise DomainError(f"Invalid stage sizes n1={self.n1}, n2={self.n2}")
        if self.block_size < 1:
            raise DomainError(f"block_size must be >= 1, got {self.block_size}")
        if self.tte.enabled:
            if not (-1.0 < self.tte.rho_c < 1.0):
                raise DomainError(f"rho_c must be in (-1, 1), got {self.tte.rho_c}")
            if self.tte.t_admin - self.tte.t_entry < self.tte.tau:
                raise DomainError(
                    f"Minimum follow-up {self.tte.t_admin - self.tte.t_entry} is shorter than tau={self.tte.tau}"
                )
        # Fails early on infeasible correlations
        self.arm_model("L")
        self.arm_model("H")

    def arm_model(self, arm) -> JointOutcomeModel:
        p, q = (self.p_L, self.q_L) if arm == "L" else (self.p_H, self.q_H)
        try:
            return arm_outcome_model(p, q, self.phi)
        except DomainError as e:
            raise DomainError(f"Scenario {self.scenario_id}, dose {arm}: {e}") from e

    @property
    def p0(self) -> float:
        return self.binary.p0 if self.binary.p0 is not None else self.p_H

    @property
    def control_size(self) -> int:
        return self.tte.control_size or (self.n1 + self.n2)

    def patients_per_replication(self) -> int:
        stage2_arms = 1 if self.arm_model("L").pi == self.arm_model("H").pi else 2
        total = 2 * self.n1 + stage2_arms * self.n2
        if self.tte.enabled:
            total += self.control_size
        return total


@dataclass(frozen=True)
class PatientRecord:
    x: int
    y: int
    u: float
    t: float
    enroll: float
    v: float
    event: int


@dataclass
class ArmBlock:
    """Patient data for one arm across a block of replications, arrays shaped (reps, n)"""
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    t: Optional[np.ndarray] = None
    enroll: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    event: Optional[np.ndarray] = None

    @property
    def has_survival(self) -> bool:
        return self.t is not None


@dataclass
class SelectionOutcome:
    select_H: np.ndarray
    p_hat_selected: np.ndarray
    sigma_u: np.ndarray
    cov_xu: np.ndarray
    cov_su: Optional[np.ndarray]
    cov_vu: Optional[np.ndarray]
    events_selected: Optional[np.ndarray]
    phi_hat: np.ndarray
    rho_tx: Optional[np.ndarray]


def _censor(t, rng, reps, n, tte: TteSettings):
    enroll = rng.uniform(0.0, tte.t_entry, size=(reps, n))
    follow_up = tte.t_admin - enroll
    v = np.minimum(t, follow_up)
    event = t <= follow_up
    return enroll, v, event


def gen_arm_block(rng, reps, n, model: JointOutcomeModel, utilities: UtilitySpec,
                  tte: Optional[TteSettings] = None) -> ArmBlock:
    """Correlated efficacy, safety and (optionally) survival data via a Gaussian copula"""
    rho = tte.rho_c if tte is not None and tte.enabled else 0.0
    z1 = rng.standard_normal((reps, n))
    p = model.p
    if p in (0.0, 1.0):
        x = np.full((reps, n), p == 1.0)
    else:
        x = ndtr(z1) <= p

    p_y_given_x1 = model.pi[0] / p if p > 0 else 0.0
    p_y_given_x0 = model.pi[2] / (1.0 - p) if p < 1 else 0.0
    y = rng.random((reps, n)) < np.where(x, p_y_given_x1, p_y_given_x0)
    u = outcome_scores(utilities, x, y)

    if tte is None or not tte.enabled:
        return ArmBlock(x=x, y=y, u=u)

    z2 = rho * z1 + math.sqrt(1.0 - rho * rho) * rng.standard_normal((reps, n))
    # Small Phi(Z2) means long survival, so rho > 0 pairs responders with long survival
    t = -log_ndtr(z2) / tte.lambda0
    enroll, v, event = _censor(t, rng, reps, n, tte)
    return ArmBlock(x=x, y=y, u=u, t=t, enroll=enroll, v=v, event=event)


def gen_control_block(rng, reps, n, tte: TteSettings) -> ArmBlock:
    """Concurrent control: exponential survival only"""
    t = rng.exponential(1.0 / tte.lambda0, size=(reps, n))
    enroll, v, event = _censor(t, rng, reps, n, tte)
    empty = np.zeros((reps, n))
    return ArmBlock(x=empty.astype(bool), y=empty.astype(bool), u=empty, t=t, enroll=enroll, v=v, event=event)


def gen_arm(n, p, q, phi, rho_c, lambda0, t_entry, t_admin, rng_stream, utilities=None) -> List[PatientRecord]:
    """One arm of n patients; utilities default to the response indicator"""
    if not (-1.0 < rho_c < 1.0):
        raise DomainError(f"rho_c must be in (-1, 1), got {rho_c}")
    model = arm_outcome_model(p, q, phi)
    tte = TteSettings(enabled=True, lambda0=lambda0, rho_c=rho_c, t_entry=t_entry, t_admin=t_admin)
    block = gen_arm_block(rng_stream, 1, n, model, utilities or RESPONSE_ONLY, tte)
    return [
        PatientRecord(x=int(block.x[0, i]), y=int(block.y[0, i]), u=float(block.u[0, i]),
                      t=float(block.t[0, i]), enroll=float(block.enroll[0, i]),
                      v=float(block.v[0, i]), event=int(block.event[0, i]))
        for i in range(n)
    ]


def records_frame(records: List[PatientRecord]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in records])


def _row_cov(a, b):
    n = a.shape[1]
    return np.sum((a - a.mean(axis=1, keepdims=True)) * (b - b.mean(axis=1, keepdims=True)), axis=1) / (n - 1)


def _row_corr(a, b):
    cov = _row_cov(a, b)
    scale = np.sqrt(_row_cov(a, a) * _row_cov(b, b))
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.where(scale > 0, cov / scale, 0.0)


def _row_cov_masked(a, b, mask):
    """Row covariance over the patients where mask is set (events-only variant)"""
    count = mask.sum(axis=1)
    with np.errstate(divide='ignore', invalid='ignore'):
        mean_a = np.where(count > 0, np.sum(a * mask, axis=1) / count, 0.0)
        mean_b = np.where(count > 0, np.sum(b * mask, axis=1) / count, 0.0)
        cross = np.sum((a - mean_a[:, None]) * (b - mean_b[:, None]) * mask, axis=1)
        return np.where(count > 1, cross / (count - 1), 0.0)


def _pick(select_H, high, low):
    return np.where(select_H[:, None], high, low)


def run_selection(arm_L: ArmBlock, arm_H: ArmBlock, lambda_u, tau=None,
                  cov_time_events_only=False) -> SelectionOutcome:
    """Apply the strict selection rule and compute Stage-1 plugin inputs from both arms pooled"""
    if arm_L.u.shape != arm_H.u.shape:
        raise ContractError(f"Arms differ in size: {arm_L.u.shape} vs {arm_H.u.shape}")
    n1 = arm_L.u.shape[1]

    diff = arm_H.u.sum(axis=1) - arm_L.u.sum(axis=1)
    select_H = diff > lambda_u * n1 + TIE_TOLERANCE

    p_hat_selected = np.where(select_H, arm_H.x.mean(axis=1), arm_L.x.mean(axis=1))

    u = np.concatenate([arm_L.u, arm_H.u], axis=1)
    x = np.concatenate([arm_L.x, arm_H.x], axis=1).astype(float)
    y = np.concatenate([arm_L.y, arm_H.y], axis=1).astype(float)
    sigma_u = np.sqrt(_row_cov(u, u))
    cov_xu = _row_cov(x, u)
    phi_hat = _row_corr(x, y)

    cov_su = cov_vu = events_selected = rho_tx = None
    if arm_L.has_survival and arm_H.has_survival:
        v = np.concatenate([arm_L.v, arm_H.v], axis=1)
        t = np.concatenate([arm_L.t, arm_H.t], axis=1)
        if tau is not None:
            follow_up_gap = v < tau
            events = np.concatenate([arm_L.event, arm_H.event], axis=1)
            if np.any(follow_up_gap & ~events):
                raise DomainError(f"Some Stage-1 patients are censored before tau={tau}")
            cov_su = _row_cov((v > tau).astype(float), u)
        if cov_time_events_only:
            events = np.concatenate([arm_L.event, arm_H.event], axis=1)
            cov_vu = _row_cov_masked(v, u, events)
        else:
            cov_vu = _row_cov(v, u)
        events_selected = np.where(select_H, arm_H.event.sum(axis=1), arm_L.event.sum(axis=1))
        rho_tx = _row_corr(t, x)

    return SelectionOutcome(select_H=select_H, p_hat_selected=p_hat_selected, sigma_u=sigma_u,
                            cov_xu=cov_xu, cov_su=cov_su, cov_vu=cov_vu,
                            events_selected=events_selected, phi_hat=phi_hat, rho_tx=rho_tx)


def _pool(select_H, arm_L: ArmBlock, arm_H: ArmBlock, stage2: ArmBlock) -> ArmBlock:
    """Selected Stage-1 arm followed by its Stage-2 patients"""
    def join(name):
        high, low, extra = getattr(arm_H, name), getattr(arm_L, name), getattr(stage2, name)
        if high is None:
            return None
        return np.concatenate([_pick(select_H, high, low), extra], axis=1)
    return ArmBlock(**{name: join(name) for name in ("x", "y", "u", "t", "enroll", "v", "event")})


def run_tests(selected: ArmBlock, control: Optional[ArmBlock], config: SimConfig, k_c=None) -> Dict[str, np.ndarray]:
    """Reject flags and statistics of the confirmatory tests on pooled selected-arm data"""
    n_total = selected.x.shape[1]
    p0 = config.p0
    z_crit = norm.ppf(1.0 - config.binary.alpha)
    if k_c is None:
        k_c = binomial_critical(n_total, p0, config.binary.alpha)

    responders = selected.x.sum(axis=1)
    p_hat = responders / n_total
    z_binary = (p_hat - p0) / math.sqrt(p0 * (1.0 - p0) / n_total)
    out = {
        'p_hat_combined': p_hat,
        'z_stat': z_binary,
        'z_reject': z_binary > z_crit,
        'binom_reject': responders > k_c,
    }
    if control is None:
        return out

    tte = config.tte
    if not (tte.enabled and selected.has_survival and control.has_survival):
        raise ContractError("Survival tests need the TTE block enabled and survival data on both arms")
    z_tte = norm.ppf(1.0 - tte.alpha)
    s0 = math.exp(-tte.lambda0 * tte.tau)

    survivors = (selected.v > tte.tau).sum(axis=1)
    z_landmark = landmark_z(survivors, n_total, s0)

    events = selected.event.sum(axis=1)
    z_exp = exponential_z(events, selected.v.sum(axis=1), tte.lambda0)
    indeterminate = np.isnan(z_exp)

    time = np.concatenate([selected.v, control.v], axis=1)
    status = np.concatenate([selected.event, control.event], axis=1)
    group = np.concatenate([np.ones_like(selected.event), np.zeros_like(control.event)], axis=1)
    z_lr, z_cox = two_sample_batch(time, status, group)

    out.update({
        'landmark_reject': z_landmark > z_tte,
        'exp_reject': np.where(indeterminate, False, np.nan_to_num(z_exp, nan=0.0) <= -z_tte),
        'exp_indeterminate': indeterminate,
        'logrank_reject': z_lr <= -z_tte,
        'cox_reject': z_cox <= -z_tte,
        'events_selected': events,
        'events_total': events + control.event.sum(axis=1),
        'z_logrank': z_lr,
        'z_cox': z_cox,
    })
    return out


def _selection_factor(sigma_u, n1, lambda_u):
    """exp(-k^2/4) / (sqrt(pi) * sigma_u * sqrt(n1)) with k = lambda_u sqrt(n1) / sigma_u"""
    with np.errstate(divide='ignore', invalid='ignore'):
        k = lambda_u * math.sqrt(n1) / sigma_u
        factor = np.exp(-k * k / 4.0) / (math.sqrt(math.pi) * sigma_u * math.sqrt(n1))
    return np.where(sigma_u > 0, factor, 0.0)


def _simulate_block(config: SimConfig, block_index, reps, k_c):
    rng = block_stream(config.seed, config.scenario_id, block_index)
    tte = config.tte if config.tte.enabled else None
    model_L, model_H = config.arm_model("L"), config.arm_model("H")
    u = config.utilities
    n1, n2 = config.n1, config.n2
    w1 = n1 / (n1 + n2)

    arm_L = gen_arm_block(rng, reps, n1, model_L, u, tte)
    arm_H = gen_arm_block(rng, reps, n1, model_H, u, tte)
    stage2_H = gen_arm_block(rng, reps, n2, model_H, u, tte)
    if model_L.pi == model_H.pi:
        stage2_L = stage2_H
    else:
        stage2_L = gen_arm_block(rng, reps, n2, model_L, u, tte)
    control = gen_control_block(rng, reps, config.control_size, tte) if tte is not None else None

    sel = run_selection(arm_L, arm_H, config.lambda_u, tau=tte.tau if tte else None,
                        cov_time_events_only=config.cov_time_events_only)
    stage2 = ArmBlock(**{
        name: (None if getattr(stage2_H, name) is None
               else _pick(sel.select_H, getattr(stage2_H, name), getattr(stage2_L, name)))
        for name in ("x", "y", "u", "t", "enroll", "v", "event")
    })
    selected = _pool(sel.select_H, arm_L, arm_H, stage2)
    tests = run_tests(selected, control, config, k_c=k_c)

    p_true = np.where(sel.select_H, config.p_H, config.p_L)
    bias_obs = tests['p_hat_combined'] - p_true
    factor = _selection_factor(sel.sigma_u, n1, config.lambda_u)
    bias_est = w1 * sel.cov_xu * factor
    p_sel = sel.p_hat_selected
    bias_max = w1 * np.sqrt(p_sel * (1.0 - p_sel)) / math.sqrt(n1 * math.pi)
    if config.lambda_u > 0:
        with np.errstate(divide='ignore'):
            bias_max = np.where(sel.sigma_u > 0,
                                bias_max * np.exp(-config.lambda_u ** 2 * n1 / (4.0 * sel.sigma_u ** 2)), 0.0)

    n_total = n1 + n2
    p0 = config.p0
    z_crit = norm.ppf(1.0 - config.binary.alpha)
    se0 = math.sqrt(p0 * (1.0 - p0) / n_total)

    def binom_est(shift):
        return binom.sf(k_c, n_total, np.clip(p0 + shift, 1e-12, 1.0 - 1e-12))

    totals = {
        'replications': reps,
        'select_H': int(sel.select_H.sum()),
        'bias_obs': float(bias_obs.sum()),
        'bias_obs_sq': float((bias_obs ** 2).sum()),
        'bias_est': float(bias_est.sum()),
        'bias_est_sq': float((bias_est ** 2).sum()),
        'bias_max': float(bias_max.sum()),
        'bias_max_sq': float((bias_max ** 2).sum()),
        'z_reject': int(tests['z_reject'].sum()),
        'binom_reject': int(tests['binom_reject'].sum()),
        'z_est': float(norm.sf(z_crit - bias_est / se0).sum()),
        'z_est_max': float(norm.sf(z_crit - bias_max / se0).sum()),
        'binom_est': float(binom_est(bias_est).sum()),
        'binom_est_max': float(binom_est(bias_max).sum()),
        'phi_hat': float(sel.phi_hat.sum()),
    }

    if tte is not None:
        z_tte = norm.ppf(1.0 - tte.alpha)
        s0 = math.exp(-tte.lambda0 * tte.tau)
        lm_bias = w1 * sel.cov_su * factor
        lm_se0 = math.sqrt(s0 * (1.0 - s0) / n_total)
        B = sel.cov_vu * factor
        beta_bias = -tte.lambda0 * w1 * B

        valid = ~tests['exp_indeterminate']
        exp_est = norm.cdf(-z_tte - beta_bias * np.sqrt(tests['events_selected']))
        cox_est = norm.cdf(-z_tte - beta_bias * np.sqrt(tests['events_total'] / 4.0))
        totals.update({
            'landmark_reject': int(tests['landmark_reject'].sum()),
            'landmark_est': float(norm.sf(z_tte - lm_bias / lm_se0).sum()),
            'exp_valid': int(valid.sum()),
            'exp_reject': int(tests['exp_reject'].sum()),
            'exp_est': float(exp_est[valid].sum()),
            'logrank_reject': int(tests['logrank_reject'].sum()),
            'cox_reject': int(tests['cox_reject'].sum()),
            'cox_est': float(cox_est.sum()),
            'rho_tx': float(sel.rho_tx.sum()),
        })
    return totals


@dataclass(frozen=True)
class ScenarioSummary:
    scenario_id: str
    replications: int
    prob_select_H: float
    observed_bias: float
    est_bias: float
    est_max_bias: float
    z_observed: float
    z_est: float
    z_est_max: float
    binom_observed: float
    binom_est: float
    binom_est_max: float
    phi_hat: float
    binom_critical: int
    landmark_observed: Optional[float] = None
    landmark_est: Optional[float] = None
    exp_observed: Optional[float] = None
    exp_est: Optional[float] = None
    logrank_observed: Optional[float] = None
    logrank_est: Optional[float] = None
    cox_observed: Optional[float] = None
    cox_est: Optional[float] = None
    rho_tx: Optional[float] = None
    indeterminate_exp: int = 0
    mc_se: Dict[str, float] = field(default_factory=dict)

    def to_row(self):
        row = {k: v for k, v in asdict(self).items() if k != 'mc_se'}
        row.update({f"mc_se_{k}": v for k, v in self.mc_se.items()})
        return row


def _proportion_se(p, count):
    return math.sqrt(max(p * (1.0 - p), 0.0) / count) if count > 0 else float('nan')


def _mean_se(total, total_sq, count):
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0)
    return math.sqrt(var / count)


def summarize(config: SimConfig, totals, k_c) -> ScenarioSummary:
    R = totals['replications']
    mc_se = {
        'observed_bias': _mean_se(totals['bias_obs'], totals['bias_obs_sq'], R),
        'est_bias': _mean_se(totals['bias_est'], totals['bias_est_sq'], R),
        'est_max_bias': _mean_se(totals['bias_max'], totals['bias_max_sq'], R),
    }

    def rate(key, denom=R):
        value = totals[key] / denom if denom > 0 else float('nan')
        mc_se[key.replace('_reject', '_observed')] = _proportion_se(value, denom)
        return value

    prob_select_H = rate('select_H')
    mc_se['prob_select_H'] = mc_se.pop('select_H')
    summary = dict(
        scenario_id=config.scenario_id,
        replications=R,
        prob_select_H=prob_select_H,
        observed_bias=totals['bias_obs'] / R,
        est_bias=totals['bias_est'] / R,
        est_max_bias=totals['bias_max'] / R,
        z_observed=rate('z_reject'),
        z_est=totals['z_est'] / R,
        z_est_max=totals['z_est_max'] / R,
        binom_observed=rate('binom_reject'),
        binom_est=totals['binom_est'] / R,
        binom_est_max=totals['binom_est_max'] / R,
        phi_hat=totals['phi_hat'] / R,
        binom_critical=int(k_c),
    )
    if config.tte.enabled:
        valid = totals['exp_valid']
        summary.update(
            landmark_observed=rate('landmark_reject'),
            landmark_est=totals['landmark_est'] / R,
            exp_observed=rate('exp_reject', valid),
            exp_est=totals['exp_est'] / valid if valid else float('nan'),
            logrank_observed=rate('logrank_reject'),
            logrank_est=totals['cox_est'] / R,
            cox_observed=rate('cox_reject'),
            cox_est=totals['cox_est'] / R,
            rho_tx=totals['rho_tx'] / R,
            indeterminate_exp=R - valid,
        )
    return ScenarioSummary(mc_se=mc_se, **summary)


def _merge(parts):
    totals = {}
    for part in parts:
        for key, value in part.items():
            totals[key] = totals.get(key, 0) + value
    return totals


def run_study(config: SimConfig, workers=None, patient_cap=PATIENT_DRAW_CAP) -> ScenarioSummary:
    """Simulate all replications of one scenario and aggregate them"""
    workers = workers or default_workers()
    draws = config.replications * config.patients_per_replication()
    if draws > patient_cap:
        raise ResourceCapError(
            f"Scenario {config.scenario_id} needs {draws:,} patient draws, above the cap of {patient_cap:,}",
            cap=patient_cap,
        )

    k_c = binomial_critical(config.n1 + config.n2, config.p0, config.binary.alpha)
    blocks = replication_blocks(config.replications, config.block_size)
    logger.info(f"Scenario {config.scenario_id}: {config.replications:,} replications in {len(blocks)} blocks")

    if workers == 1:
        parts = [_simulate_block(config, index, size, k_c) for index, size in blocks]
    else:
        parts = Parallel(n_jobs=workers)(
            delayed(_simulate_block)(config, index, size, k_c) for index, size in blocks
        )
    # Parallel returns parts in block order, keeping the float sums reproducible
    return summarize(config, _merge(parts), k_c)


def _pcs_block(pi_L, pi_H, scores, n, k_min, seed, key, block_index, reps):
    rng = block_stream(seed, key, block_index)
    counts_L = rng.multinomial(n, pi_L, size=reps)
    counts_H = rng.multinomial(n, pi_H, size=reps)
    diff = counts_H @ scores - counts_L @ scores
    return int(np.sum(diff >= k_min))


def empirical_pcs(scenario: DesignScenario, n, lambda_u, R, seed, workers=1, block_size=DEFAULT_BLOCK_SIZE):
    """Simulated PCS under S_L and S_H for design (n, lambda_u)"""
    lattice = rationalize_utilities(scenario.utilities)
    scores = np.array(lattice.scores, dtype=np.int64)
    k_min, _ = threshold_offset(n, lambda_u, lattice.scale)
    models = scenario.arm_models()
    blocks = replication_blocks(R, block_size)
    tag = f"pcs|{scenario.p}|{scenario.q}|{scenario.delta}|{scenario.d}|{scenario.phi}|{n}|{lambda_u!r}"

    selected_H = {}
    for name in ("S_L", "S_H"):
        pi_L = np.array(models[(name, "L")].pi)
        pi_L /= pi_L.sum()
        pi_H = np.array(models[(name, "H")].pi)
        pi_H /= pi_H.sum()
        key = f"{tag}|{name}"
        if workers == 1:
            parts = [_pcs_block(pi_L, pi_H, scores, n, k_min, seed, key, i, size) for i, size in blocks]
        else:
            parts = Parallel(n_jobs=workers)(
                delayed(_pcs_block)(pi_L, pi_H, scores, n, k_min, seed, key, i, size) for i, size in blocks
            )
        selected_H[name] = sum(parts)

    return 1.0 - selected_H["S_L"] / R, selected_H["S_H"] / R

import math

import numpy as np
import pytest
from joblib import parallel_backend

from design_errors import ConfigError, ContractError, DomainError, ResourceCapError
from design_sizer import exact_pcs
from outcome_model import UtilitySpec, joint_probs
from table_reproduction import null_config
from trial_sim import (ArmBlock, SimConfig, TteSettings, default_workers, empirical_pcs, gen_arm, gen_arm_block,
                       records_frame, run_selection, run_study)


def make_config(**overrides):
    settings = dict(scenario_id="s", p_L=0.3, p_H=0.3, q_L=0.5, q_H=0.5, n1=10, n2=10, replications=100)
    settings.update(overrides)
    return SimConfig(**settings)


class TestSimConfig:
    def test_infeasible_correlation_names_scenario_and_dose(self):
        with pytest.raises(DomainError, match="Scenario s, dose L"):
            make_config(phi=0.9)

    def test_copula_correlation_range(self):
        with pytest.raises(DomainError, match="rho_c"):
            make_config(tte=TteSettings(enabled=True, rho_c=1.0))

    def test_follow_up_shorter_than_landmark(self):
        with pytest.raises(DomainError, match="shorter than tau"):
            make_config(tte=TteSettings(enabled=True, t_entry=52.0, t_admin=60.0))

    def test_replications(self):
        with pytest.raises(DomainError):
            make_config(replications=0)

    def test_patients_per_replication(self):
        assert make_config().patients_per_replication() == 30
        assert make_config(p_H=0.4).patients_per_replication() == 40
        assert make_config(tte=TteSettings(enabled=True)).patients_per_replication() == 50


class TestGenerators:
    def test_marginals_and_correlation(self):
        model = joint_probs(0.4, 0.8, -0.3)
        block = gen_arm_block(np.random.default_rng(5), 200, 1000, model, UtilitySpec(1.0, 0.8, 0.2, 0.0))
        assert block.x.mean() == pytest.approx(0.4, abs=0.005)
        assert block.y.mean() == pytest.approx(0.8, abs=0.005)
        x, y = block.x.ravel().astype(float), block.y.ravel().astype(float)
        assert np.corrcoef(x, y)[0, 1] == pytest.approx(-0.3, abs=0.01)
        assert not block.has_survival

    @pytest.mark.parametrize("rho_c, low, high", [(0.0, -0.02, 0.02), (0.7, 0.2, 1.0)])
    def test_copula_links_response_and_survival(self, rho_c, low, high):
        model = joint_probs(0.4, 0.8, 0.0)
        tte = TteSettings(enabled=True, rho_c=rho_c)
        block = gen_arm_block(np.random.default_rng(9), 100, 500, model, UtilitySpec(1.0, 0.8, 0.2, 0.0), tte)
        corr = np.corrcoef(block.x.ravel().astype(float), block.t.ravel())[0, 1]
        assert low < corr < high
        assert block.t.mean() == pytest.approx(10.0, rel=0.03)

    def test_gen_arm_records(self):
        records = gen_arm(50, 0.4, 0.8, 0.0, 0.3, 0.1, 52.0, 76.0, np.random.default_rng(3))
        frame = records_frame(records)
        assert list(frame.columns) == ['x', 'y', 'u', 't', 'enroll', 'v', 'event']
        assert len(frame) == 50
        assert (frame['v'] <= frame['t']).all()
        assert frame['enroll'].between(0.0, 52.0).all()
        assert ((frame['t'] <= 76.0 - frame['enroll']) == frame['event'].astype(bool)).all()
        assert (frame['u'] == frame['x']).all()

    @pytest.mark.parametrize("p", [0.0, 1.0])
    def test_constant_response_arms(self, p):
        records = gen_arm(400, p, 0.5, 0.4, 0.0, 1.0, 1.0, 3.0, np.random.default_rng(1))
        frame = records_frame(records)
        assert (frame['x'] == int(p)).all()
        assert frame['y'].mean() == pytest.approx(0.5, abs=0.08)

    def test_constant_response_scenario(self):
        config = make_config(p_L=0.0, p_H=1.0, phi=0.4)
        assert config.arm_model("L").pi == (0.0, 0.0, 0.5, 0.5)
        assert config.arm_model("H").pi == (0.5, 0.5, 0.0, 0.0)
        assert config.patients_per_replication() == 40


def _arm(u):
    u = np.asarray(u, dtype=float)
    return ArmBlock(x=(u >= 0.5), y=np.zeros_like(u, dtype=bool), u=u)


class TestSelectionRule:
    def test_ties_go_to_the_lower_dose(self):
        sel = run_selection(_arm([[1.0, 0.0]]), _arm([[0.0, 1.0]]), 0.0)
        assert not sel.select_H[0]

    def test_rounded_sums_still_tie(self):
        sel = run_selection(_arm([[0.8, 0.2, 0.8]]), _arm([[0.2, 0.8, 0.8]]), 0.0)
        assert not sel.select_H[0]

    def test_higher_utility_wins(self):
        sel = run_selection(_arm([[0.0, 0.0], [1.0, 1.0]]), _arm([[1.0, 1.0], [1.0, 0.0]]), 0.0)
        assert list(sel.select_H) == [True, False]
        assert sel.p_hat_selected == pytest.approx([1.0, 1.0])

    def test_threshold_must_be_exceeded(self):
        sel = run_selection(_arm([[0.0, 0.0]]), _arm([[1.0, 0.0]]), 0.5)
        assert not sel.select_H[0]

    def test_arm_sizes_must_match(self):
        with pytest.raises(ContractError):
            run_selection(_arm([[1.0, 0.0]]), _arm([[1.0, 0.0, 1.0]]), 0.0)


class TestRunStudy:
    def test_null_scenario_matches_published_bias(self):
        summary = run_study(null_config(0.4, 0.0, 60, 20000, 2024), workers=1)
        assert summary.observed_bias == pytest.approx(0.01051, abs=0.0015)
        assert summary.est_bias == pytest.approx(0.01056, abs=0.0005)
        assert summary.est_max_bias == pytest.approx(0.01077, abs=0.0005)
        assert summary.z_observed == pytest.approx(0.0436, abs=0.006)
        assert summary.phi_hat == pytest.approx(0.0, abs=0.01)
        assert summary.prob_select_H == pytest.approx(0.5, abs=0.03)
        assert summary.landmark_observed is None

    def test_worker_count_does_not_change_results(self):
        config = make_config(replications=1200, block_size=300, p_H=0.4)
        single = run_study(config, workers=1)
        with parallel_backend("threading"):
            parallel = run_study(config, workers=2)
        assert single.to_row() == parallel.to_row()

    def test_seed_changes_results(self):
        a = run_study(make_config(replications=500, seed=1), workers=1)
        b = run_study(make_config(replications=500, seed=2), workers=1)
        assert a.observed_bias != b.observed_bias

    def test_survival_summary(self):
        config = null_config(0.4, 0.0, 60, 400, 7, tte=TteSettings(enabled=True, rho_c=0.7))
        summary = run_study(config, workers=1)
        assert 0.0 <= summary.logrank_observed <= 1.0
        assert 0.0 <= summary.cox_observed <= 1.0
        assert summary.rho_tx > 0.2
        assert summary.indeterminate_exp == 0
        assert 0.0 <= summary.landmark_observed <= 1.0
        assert set(summary.mc_se) >= {'landmark_observed', 'exp_observed', 'logrank_observed', 'cox_observed'}

    def test_patient_cap(self):
        with pytest.raises(ResourceCapError, match="patient draws"):
            run_study(make_config(), workers=1, patient_cap=10)


def test_empirical_pcs_agrees_with_exact(table1_row):
    replications = 20000
    pcs_L, pcs_H = empirical_pcs(table1_row, 46, 0.0, replications, seed=7)
    exact_L, exact_H = exact_pcs(table1_row, 46, 0.0)
    for simulated, exact in ((pcs_L, exact_L), (pcs_H, exact_H)):
        se = math.sqrt(exact * (1.0 - exact) / replications)
        assert abs(simulated - exact) < 4 * se


@pytest.mark.parametrize("raw", ["four", "0"])
def test_bad_worker_setting(monkeypatch, raw):
    monkeypatch.setenv("DOSEOPT_WORKERS", raw)
    with pytest.raises(ConfigError, match="DOSEOPT_WORKERS"):
        default_workers()


def test_worker_setting(monkeypatch):
    monkeypatch.setenv("DOSEOPT_WORKERS", "3")
    assert default_workers() == 3

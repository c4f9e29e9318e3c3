import pytest

from design_errors import DomainError, ResourceCapError
from design_sizer import (DesignScenario, GridSpec, analytic_pcs, design_table, exact_pcs, n_for_threshold,
                          optimal_design_approx, optimal_design_exact, rose_design, rose_scenario,
                          scenario_moments)
from table_reproduction import MIN_EXACT_MATCHES, load_reference, table1_scenarios


class TestScenario:
    def test_margin_utilities_default(self, table1_row):
        assert table1_row.utilities.scores == pytest.approx((1.0, 0.6, 0.4, 0.0))

    def test_symmetric_utility_differences(self, table1_row):
        mom = scenario_moments(table1_row)
        assert mom.dmu_H == pytest.approx(0.06)
        assert mom.dmu_L == pytest.approx(-0.06)

    @pytest.mark.parametrize("kwargs, match", [
        (dict(p=0.1, q=0.5, delta=0.15, d=0.1), "p - delta"),
        (dict(p=0.3, q=0.1, delta=0.1, d=0.15), "q - d"),
        (dict(p=0.3, q=0.5, delta=0.1, d=0.15, alpha_L=0.4), "alpha_L"),
    ])
    def test_invalid_scenarios(self, kwargs, match):
        with pytest.raises(DomainError, match=match):
            DesignScenario(**kwargs)

    def test_rose_moments(self):
        mom = scenario_moments(rose_scenario(0.4, 0.15, 0.8))
        assert mom.dmu_L == 0.0
        assert mom.dmu_H == pytest.approx(0.15)
        assert mom.v_L == pytest.approx(0.48)
        assert mom.v_H == pytest.approx(0.4275)

    def test_infeasible_correlation_names_dose_and_bound(self):
        s = DesignScenario(p=0.3, q=0.5, delta=0.10, d=0.15, phi=0.9)
        with pytest.raises(DomainError, match="0.6547"):
            optimal_design_approx(s)


class TestOptimalDesignApprox:
    def test_rose_special_case(self):
        res = rose_design(0.4, 0.15, 0.8)
        assert res.n == 58
        assert 0.076 <= res.lambda_u <= 0.079

    def test_table1_row(self, table1_row):
        res = optimal_design_approx(table1_row)
        assert res.n == 44
        assert res.pcs_H == pytest.approx(0.8, abs=1e-12)
        assert res.pcs_L >= 0.8 - 1e-12
        assert res.pcs_kind == "analytic"

    def test_threshold_sizes_agree_at_optimum(self):
        res = rose_design(0.4, 0.15, 0.8)
        n_L, n_H, n = n_for_threshold(rose_scenario(0.4, 0.15, 0.8), res.lambda_u)
        assert n == 58
        assert abs(n_L - n_H) <= 1

    def test_threshold_outside_interval(self, table1_row):
        with pytest.raises(DomainError, match="strictly inside"):
            n_for_threshold(table1_row, 0.07)

    def test_threshold_near_upper_end_hits_cap(self, table1_row):
        with pytest.raises(ResourceCapError):
            n_for_threshold(table1_row, 0.06 - 1e-7)

    def test_all_published_sizes(self):
        reference = load_reference(1)
        for s, (_, row) in zip(table1_scenarios(), reference.iterrows()):
            assert (s.alpha_L, s.p, s.q, s.delta, s.phi) == pytest.approx(
                (row['alpha'], row['p'], row['q'], row['delta'], row['phi']))
            assert optimal_design_approx(s).n == row['UtilApprox_n']
            assert rose_design(s.p, s.delta, s.alpha_L).n == row['ROSEApprox_n']

    def test_analytic_pcs_grows_with_n(self, table1_row):
        small = analytic_pcs(table1_row, 20, 0.0)
        large = analytic_pcs(table1_row, 200, 0.0)
        assert large[0] > small[0] and large[1] > small[1]


class TestOptimalDesignExact:
    def test_table1_row(self, table1_row):
        res = optimal_design_exact(table1_row)
        assert abs(res.n - 46) <= 1
        assert res.pcs_L >= 0.8 and res.pcs_H >= 0.8
        assert res.lambda_u >= 0.0
        assert (res.pcs_L, res.pcs_H) == pytest.approx(exact_pcs(table1_row, res.n, res.lambda_u), abs=1e-12)

    def test_no_smaller_feasible_n(self, table1_row):
        res = optimal_design_exact(table1_row)
        with pytest.raises(ResourceCapError):
            optimal_design_exact(table1_row, n_cap=res.n - 1)

    @pytest.mark.parametrize("scenario, expected", [
        (DesignScenario(p=0.5, q=0.7, delta=0.15, d=0.15, phi=0.2, alpha_L=0.7, alpha_H=0.7), 20),
        (rose_scenario(0.3, 0.15, 0.7), 19),
    ])
    def test_published_exact_sizes(self, scenario, expected):
        res = optimal_design_exact(scenario)
        assert abs(res.n - expected) <= 1
        assert res.pcs_L >= scenario.alpha_L and res.pcs_H >= scenario.alpha_H

    def test_full_table1_exact_sizes(self):
        reference = load_reference(1)
        sizes = [optimal_design_exact(s).n for s in table1_scenarios()]
        differences = (reference["UtilExact_n"] - sizes).abs()
        assert (differences == 0).sum() >= MIN_EXACT_MATCHES
        assert differences.max() <= 1

    def test_uniform_grid(self, table1_row):
        res = optimal_design_exact(table1_row, lambda_grid=GridSpec(kind="uniform", step=0.001))
        assert res.pcs_L >= 0.8 and res.pcs_H >= 0.8

    def test_cap_reports_best(self, table1_row):
        with pytest.raises(ResourceCapError):
            optimal_design_exact(table1_row, n_cap=5)

    def test_bad_grid(self):
        with pytest.raises(DomainError):
            GridSpec(kind="random")


def test_design_table_columns(table1_row):
    frame = design_table([table1_row], methods=("approx",))
    assert list(frame.columns[:6]) == ['alpha', 'p', 'q', 'delta', 'd', 'phi']
    assert frame.loc[0, 'approx_n'] == 44

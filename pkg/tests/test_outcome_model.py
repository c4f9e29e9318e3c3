import math

import numpy as np
import pytest

from design_errors import DomainError
from outcome_model import (RESPONSE_ONLY, CountTable, UtilitySpec, arm_outcome_model, constant_response_model,
                           estimate_model, joint_probs,
                           marginal_rate_of_substitution, mean_utility_decomposed, outcome_scores, phi_bounds,
                           utility_from_margins, utility_moments)


class TestUtilityFromMargins:
    def test_margin_scores(self):
        u = utility_from_margins(0.10, 0.15)
        assert u.scores == pytest.approx((1.0, 0.6, 0.4, 0.0))
        assert u.r == pytest.approx(2.0 / 3.0)
        assert not u.swapped
        assert u.utility_independent

    def test_swap_when_ratio_above_one(self):
        u = utility_from_margins(0.2, 0.1)
        assert u.swapped
        assert u.u2 == pytest.approx(2.0 / 3.0)
        assert u.u3 == pytest.approx(1.0 / 3.0)

    def test_equal_margins(self):
        u = utility_from_margins(0.1, 0.1)
        assert u.scores == pytest.approx((1.0, 0.5, 0.5, 0.0))

    @pytest.mark.parametrize("delta, d", [(0.0, 0.1), (0.1, 0.0), (1.2, 0.1)])
    def test_bad_margins(self, delta, d):
        with pytest.raises(DomainError, match="Margin"):
            utility_from_margins(delta, d)


def test_utility_ordering_enforced():
    with pytest.raises(DomainError, match="u1 >= u2"):
        UtilitySpec(1.0, 0.2, 0.8, 0.0)


def test_phi_bounds_symmetric_case():
    low, high = phi_bounds(0.3, 0.5)
    assert high == pytest.approx(0.6547, abs=1e-4)
    assert low == pytest.approx(-0.6547, abs=1e-4)


def test_phi_outside_bounds_names_the_bound():
    with pytest.raises(DomainError, match="0.6547"):
        joint_probs(0.3, 0.5, 0.9)


@pytest.mark.parametrize("p", [0.05, 0.3, 0.5, 0.8, 0.95])
@pytest.mark.parametrize("q", [0.1, 0.5, 0.9])
@pytest.mark.parametrize("frac", [0.0, 0.5, 1.0])
def test_joint_probs_reproduce_margins(p, q, frac):
    low, high = phi_bounds(p, q)
    phi = low + frac * (high - low)
    m = joint_probs(p, q, phi)
    pi1, pi2, pi3, pi4 = m.pi
    assert sum(m.pi) == pytest.approx(1.0, abs=1e-12)
    assert min(m.pi) >= 0.0
    assert pi1 + pi2 == pytest.approx(p, abs=1e-12)
    assert pi1 + pi3 == pytest.approx(q, abs=1e-12)
    recovered = (pi1 * pi4 - pi2 * pi3) / math.sqrt(p * (1 - p) * q * (1 - q))
    assert recovered == pytest.approx(phi, abs=1e-10)


def test_response_only_moments():
    mom = utility_moments(RESPONSE_ONLY, joint_probs(0.4, 0.8, 0.0))
    assert mom.mu == pytest.approx(0.4)
    assert mom.sigma2 == pytest.approx(0.24)
    assert mom.cov_xu == pytest.approx(0.24)


def test_null_table_utility_moments():
    mom = utility_moments(UtilitySpec(1.0, 0.8, 0.2, 0.0), joint_probs(0.4, 0.8, 0.0))
    assert mom.mu == pytest.approx(0.48)
    assert mom.sigma2 == pytest.approx(0.16)
    assert mom.cov_xu == pytest.approx(0.192)


def test_decomposed_mean_matches_direct():
    u = UtilitySpec(1.0, 0.7, 0.5, 0.1)
    mu, eta = mean_utility_decomposed(u, 0.35, 0.6, 0.2)
    assert mu == pytest.approx(utility_moments(u, joint_probs(0.35, 0.6, 0.2)).mu)
    assert eta == pytest.approx(-0.1)


@pytest.mark.parametrize("phi", [-0.3, 0.0, 0.3])
def test_mrs_equals_margin_ratio_under_independence(phi):
    u = utility_from_margins(0.10, 0.15)
    assert marginal_rate_of_substitution(u, 0.4, 0.6, phi) == pytest.approx(0.10 / 0.15)


def test_mrs_undefined_when_mean_ignores_response():
    flat = UtilitySpec(0.5, 0.5, 0.5, 0.5)
    with pytest.raises(DomainError, match="does not depend on p"):
        marginal_rate_of_substitution(flat, 0.4, 0.6, 0.0)


class TestEstimateModel:
    def test_from_records(self):
        counts = CountTable.from_records([1, 1, 0, 0, 1], [1, 0, 1, 0, 1])
        assert (counts.n11, counts.n10, counts.n01, counts.n00) == (2, 1, 1, 1)
        assert counts.n == 5

    def test_recovers_table(self):
        m = estimate_model(CountTable(30, 10, 20, 40))
        assert m.p == pytest.approx(0.4)
        assert m.q == pytest.approx(0.5)
        assert m.pi == pytest.approx((0.3, 0.1, 0.2, 0.4))
        assert not m.degenerate

    def test_empty_margin_is_degenerate(self):
        m = estimate_model(CountTable(5, 0, 3, 0))
        assert m.degenerate
        assert m.phi == 0.0
        assert m.pi == pytest.approx((5 / 8, 0.0, 3 / 8, 0.0))

    def test_boundary_cells_kept(self):
        m = estimate_model(CountTable(4, 0, 2, 4))
        assert m.pi[1] == pytest.approx(0.0, abs=1e-12)
        assert not m.truncated

    def test_negative_counts_rejected(self):
        with pytest.raises(DomainError):
            CountTable(-1, 2, 3, 4)


def test_outcome_scores():
    u = UtilitySpec(1.0, 0.8, 0.2, 0.0)
    x = np.array([1, 1, 0, 0])
    y = np.array([1, 0, 1, 0])
    assert outcome_scores(u, x, y) == pytest.approx([1.0, 0.8, 0.2, 0.0])


def test_phi_bounds_with_large_margins():
    low, high = phi_bounds(0.9, 0.9)
    assert low == pytest.approx(-1.0 / 9.0)
    assert high == pytest.approx(1.0)


def test_joint_probs_with_correlation():
    assert joint_probs(0.3, 0.5, 0.2).pi == pytest.approx((0.19583, 0.10417, 0.30417, 0.39583), abs=1e-5)
    assert joint_probs(0.5, 0.5, 1.0).pi == pytest.approx((0.5, 0.0, 0.0, 0.5), abs=1e-12)


def test_margin_utility_moments():
    mom = utility_moments(utility_from_margins(0.10, 0.15), joint_probs(0.3, 0.5, 0.0))
    assert mom.mu == pytest.approx(0.38)
    assert mom.sigma2 == pytest.approx(0.1156)
    assert mom.cov_xu == pytest.approx(0.126)


def test_estimated_correlation():
    m = estimate_model(CountTable(20, 10, 30, 40))
    assert (m.p, m.q) == pytest.approx((0.3, 0.5))
    assert m.phi == pytest.approx(0.21822, abs=1e-5)


def test_mrs_matches_finite_differences():
    u = UtilitySpec(1.0, 0.4, 0.4, 0.0)
    h = 1e-6

    def mu(p, q):
        return mean_utility_decomposed(u, p, q, 0.0)[0]

    d_p = (mu(0.3 + h, 0.5) - mu(0.3 - h, 0.5)) / (2 * h)
    d_q = (mu(0.3, 0.5 + h) - mu(0.3, 0.5 - h)) / (2 * h)
    assert marginal_rate_of_substitution(u, 0.3, 0.5, 0.0) == pytest.approx(d_q / d_p, abs=1e-6)


@pytest.mark.parametrize("p, pi", [(1.0, (0.7, 0.3, 0.0, 0.0)), (0.0, (0.0, 0.0, 0.7, 0.3))])
def test_constant_response_model(p, pi):
    model = arm_outcome_model(p, 0.7, 0.5)
    assert model.degenerate
    assert model.phi == 0.0
    assert model.pi == pytest.approx(pi)


def test_constant_response_model_rejects_interior_p():
    with pytest.raises(DomainError):
        constant_response_model(0.4, 0.7)

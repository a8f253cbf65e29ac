import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from momineq.smoothing import (
    IndexKind,
    IndexSpec,
    cone_projection_qlr,
    eval_S,
    eval_S_mu,
    approximation_gap,
    gradient_check,
    qlr_active_set_enumeration,
    smoothed_qlr,
)

I2 = np.eye(2)


# ---------------------------------------------------------------- eval_S

def test_max_plus_all_slack_is_zero():
    spec = IndexSpec(IndexKind.MAX_PLUS, 2)
    assert eval_S(spec, [-1.0, -2.0], I2) == 0.0


def test_sum_plus_keeps_positive_parts():
    spec = IndexSpec(IndexKind.SUM_PLUS, 2)
    assert eval_S(spec, [1.0, -1.0], I2) == 1.0


def test_qlr_projects_onto_nonpositive_cone():
    spec = IndexSpec(IndexKind.QLR, 2)
    # t = (0, -1) is optimal, residual (1, 0)
    assert_allclose(eval_S(spec, [1.0, -1.0], I2), 1.0, atol=1e-12)


def test_qlr_matches_enumeration_oracle():
    rng = np.random.default_rng(909)
    for _ in range(100):
        j = int(rng.integers(1, 4))
        a = rng.standard_normal((j, j))
        sigma = a @ a.T + 0.2 * np.eye(j)
        m = rng.standard_normal(j) * 2.0
        fast = cone_projection_qlr(m, sigma)
        brute = qlr_active_set_enumeration(m, sigma)
        assert abs(fast - brute) <= 1e-8


def test_qlr_zero_iff_nonpositive():
    rng = np.random.default_rng(11)
    spec = IndexSpec(IndexKind.QLR, 3)
    for _ in range(50):
        a = rng.standard_normal((3, 3))
        sigma = a @ a.T + 0.5 * np.eye(3)
        m = -np.abs(rng.standard_normal(3))
        assert eval_S(spec, m, sigma) <= 1e-10
        m_viol = m.copy()
        m_viol[0] = abs(rng.standard_normal()) + 0.1
        assert eval_S(spec, m_viol, sigma) > 1e-10


def test_soft_min_boundary_exact_counterpart_is_min():
    spec = IndexSpec(IndexKind.SOFT_MIN_BOUNDARY, 3)
    assert eval_S(spec, [0.3, -0.2, 0.9], None) == pytest.approx(-0.2)


def test_sum_plus_sq():
    spec = IndexSpec(IndexKind.SUM_PLUS_SQ, 3)
    value = eval_S(spec, [1.0, -1.0, 2.0], np.eye(3))
    assert value == pytest.approx(5.0)


# ------------------------------------------------------------- eval_S_mu

def test_max_plus_smooth_value_at_origin():
    spec = IndexSpec(IndexKind.MAX_PLUS, 2)
    out = eval_S_mu(spec, [0.0, 0.0], I2, mu=1.0)
    assert out.value == pytest.approx(math.log(3.0))


def test_sum_plus_smooth_value_at_origin():
    spec = IndexSpec(IndexKind.SUM_PLUS, 2)
    out = eval_S_mu(spec, [0.0, 0.0], I2, mu=1.0)
    assert out.value == pytest.approx(2.0 * math.log(2.0))


def test_softmin_symmetric_point():
    spec = IndexSpec(IndexKind.SOFT_MIN_BOUNDARY, 2)
    for a in (-1.3, 0.0, 2.4):
        out = eval_S_mu(spec, [a, a], None, mu=0.02)
        assert out.value == pytest.approx(a - 0.02 * math.log(2.0))
        assert_allclose(out.gradient, [0.5, 0.5])


def test_smoothed_qlr_zero_inside_cone():
    spec = IndexSpec(IndexKind.QLR, 2)
    for mu in (0.01, 0.5, 3.0):
        out = eval_S_mu(spec, [-1.0, -1.0], I2, mu=mu)
        assert out.value == pytest.approx(0.0, abs=1e-12)
        assert_allclose(out.gradient, [0.0, 0.0], atol=1e-12)


def test_smoothed_qlr_approaches_qlr():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((3, 3))
    sigma = a @ a.T + 0.4 * np.eye(3)
    m = rng.standard_normal(3)
    exact = cone_projection_qlr(m, sigma)
    value, _ = smoothed_qlr(m, sigma, 1e-9)
    assert value == pytest.approx(exact, rel=1e-6)


def test_mu_must_be_positive():
    spec = IndexSpec(IndexKind.MAX_PLUS, 2)
    with pytest.raises(ValueError):
        eval_S_mu(spec, [0.0, 0.0], I2, mu=0.0)


def test_sum_plus_sq_has_no_smoothing():
    spec = IndexSpec(IndexKind.SUM_PLUS_SQ, 2)
    with pytest.raises(ValueError):
        eval_S_mu(spec, [0.0, 0.0], I2, mu=0.1)


def test_no_overflow_at_extreme_scale():
    # |m / mu| up to 1e4 must stay finite
    spec = IndexSpec(IndexKind.MAX_PLUS, 3)
    out = eval_S_mu(spec, [1.0, -1.0, 0.5], np.eye(3), mu=1e-4)
    assert np.isfinite(out.value) and np.all(np.isfinite(out.gradient))
    assert out.value == pytest.approx(1.0, rel=1e-6)
    spec = IndexSpec(IndexKind.SUM_PLUS, 2)
    out = eval_S_mu(spec, [5.0, -5.0], I2, mu=1e-4)
    assert out.value == pytest.approx(5.0, rel=1e-6)


# -------------------------------------------------------- approximation gap

def test_gap_collapses_with_dominant_coordinate():
    spec = IndexSpec(IndexKind.MAX_PLUS, 3)
    gap = approximation_gap(spec, [50.0, 0.0, -3.0], np.eye(3), mu=0.1)
    assert abs(gap) < 1e-12


def test_gap_at_origin_attains_beta():
    spec = IndexSpec(IndexKind.MAX_PLUS, 2)
    gap = approximation_gap(spec, [0.0, 0.0], I2, mu=1.0)
    assert gap == pytest.approx(math.log(3.0))
    assert gap <= spec.beta


def test_gap_bound_random_sweep():
    rng = np.random.default_rng(2024)
    for _ in range(2000):
        j = int(rng.integers(1, 7))
        kind = (IndexKind.SUM_PLUS, IndexKind.MAX_PLUS)[int(rng.integers(0, 2))]
        spec = IndexSpec(kind, j)
        m = rng.standard_normal(j) * 10 ** rng.uniform(-2, 1)
        sigma = np.diag(np.exp(rng.uniform(-1, 1, j)) ** 2)
        mu = rng.uniform(0.01, 1.0)
        gap = approximation_gap(spec, m, sigma, mu)
        assert abs(gap) <= spec.beta * mu + 1e-10
        # one-sided bracket for the soft minimum
        soft = IndexSpec(IndexKind.SOFT_MIN_BOUNDARY, j)
        sgap = approximation_gap(soft, m, sigma, mu)
        assert -mu * math.log(j) - 1e-10 <= sgap <= 1e-12


# ---------------------------------------------------------------- gradients

def test_gradient_check_maxplus_random():
    rng = np.random.default_rng(77)
    spec = IndexSpec(IndexKind.MAX_PLUS, 4)
    for _ in range(20):
        m = rng.standard_normal(4)
        assert gradient_check(spec, m, np.eye(4), mu=0.1, h=1e-5) <= 1e-6


def test_gradient_linear_region_is_unit_over_sd():
    sd = np.array([2.0, 0.5, 1.0])
    spec = IndexSpec(IndexKind.MAX_PLUS, 3)
    out = eval_S_mu(spec, [80.0, -1.0, -2.0], np.diag(sd**2), mu=0.1)
    expected = np.array([1.0 / sd[0], 0.0, 0.0])
    assert_allclose(out.gradient, expected, atol=1e-10)
    assert gradient_check(spec, [80.0, -1.0, -2.0], np.diag(sd**2), mu=0.1, h=1e-6) <= 1e-8


def test_maxplus_weights_sum_below_one_and_localize():
    spec = IndexSpec(IndexKind.MAX_PLUS, 3)
    m = np.array([0.4, 0.1, -0.2])
    for mu in (1.0, 0.1, 0.05):
        grad = eval_S_mu(spec, m, np.eye(3), mu).gradient
        assert 0.0 < grad.sum() < 1.0  # the "+1" slack absorbs the rest
    tight = eval_S_mu(spec, m, np.eye(3), 1e-4).gradient
    assert tight.sum() <= 1.0
    assert_allclose(tight, [1.0, 0.0, 0.0], atol=1e-8)


# ---------------------------------------------------------------- invariants

@given(
    scale=st.floats(0.01, 100.0),
    seed=st.integers(0, 2**31 - 1),
    j=st.integers(1, 6),
)
@settings(max_examples=60, deadline=None)
def test_homogeneity_degree_chi(scale, seed, j):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal(j) * 2
    a = rng.standard_normal((j, j))
    sigma = a @ a.T + 0.5 * np.eye(j)
    diag = np.diag(np.diag(sigma))
    for kind in (IndexKind.SUM_PLUS, IndexKind.MAX_PLUS, IndexKind.SOFT_MIN_BOUNDARY):
        spec = IndexSpec(kind, j)
        lhs = eval_S(spec, scale * m, diag)
        rhs = scale * eval_S(spec, m, diag)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
    for kind in (IndexKind.QLR, IndexKind.SUM_PLUS_SQ):
        spec = IndexSpec(kind, j)
        lhs = eval_S(spec, scale * m, sigma if kind == IndexKind.QLR else diag)
        rhs = scale**2 * eval_S(spec, m, sigma if kind == IndexKind.QLR else diag)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


@given(seed=st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_monotone_in_each_coordinate(seed):
    rng = np.random.default_rng(seed)
    j = int(rng.integers(1, 5))
    m = rng.standard_normal(j)
    sigma = np.diag(np.exp(rng.uniform(-1, 1, j)) ** 2)
    bump = np.zeros(j)
    k = int(rng.integers(0, j))
    bump[k] = abs(rng.standard_normal()) + 0.01
    for kind in (IndexKind.SUM_PLUS, IndexKind.MAX_PLUS, IndexKind.SOFT_MIN_BOUNDARY):
        spec = IndexSpec(kind, j)
        assert eval_S(spec, m + bump, sigma) >= eval_S(spec, m, sigma) - 1e-12
        assert (
            eval_S_mu(spec, m + bump, sigma, 0.05).value
            >= eval_S_mu(spec, m, sigma, 0.05).value - 1e-12
        )


def test_maxplus_gradient_lipschitz_bound():
    rng = np.random.default_rng(314)
    spec = IndexSpec(IndexKind.MAX_PLUS, 5)
    eye = np.eye(5)
    for _ in range(300):
        mu = 10 ** rng.uniform(-2, 0)
        m1 = rng.standard_normal(5)
        m2 = m1 + rng.standard_normal(5) * 0.1
        g1 = eval_S_mu(spec, m1, eye, mu).gradient
        g2 = eval_S_mu(spec, m2, eye, mu).gradient
        assert np.linalg.norm(g1 - g2) <= np.linalg.norm(m1 - m2) / mu + 1e-12


def test_table_constants():
    assert IndexSpec(IndexKind.SUM_PLUS, 4).smooth_params.beta == pytest.approx(4 * math.log(2))
    assert IndexSpec(IndexKind.SUM_PLUS, 4).smooth_params.alpha == 4.0
    assert IndexSpec(IndexKind.MAX_PLUS, 4).smooth_params.beta == pytest.approx(math.log(5))
    assert IndexSpec(IndexKind.MAX_PLUS, 4).smooth_params.alpha == 1.0
    assert IndexSpec(IndexKind.SOFT_MIN_BOUNDARY, 4).beta == pytest.approx(math.log(4))
    assert IndexSpec(IndexKind.QLR, 4).smooth_params.chi == 2
    assert IndexSpec(IndexKind.SUM_PLUS_SQ, 4).smooth_params.chi == 2
    with pytest.raises(ValueError):
        IndexSpec(IndexKind.QLR, 4).beta  # noqa: B018 - beta not certified


def test_degenerate_variance_rejected():
    spec = IndexSpec(IndexKind.MAX_PLUS, 2)
    with pytest.raises(ValueError, match="variance"):
        eval_S(spec, [0.0, 0.0], np.diag([1.0, 0.0]))

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from momineq.core import (
    ConformanceError,
    Dataset,
    DegenerateMomentError,
    DegenerateSampleError,
    MomentModel,
    MomentStats,
    SimPanel,
    bootstrap_resample,
    covariance,
    moment_stats,
    per_observation_moments,
    regularized_covariance,
    sample_moments,
    simulate_panel,
    stats_from_per_obs,
    studentized_slackness,
)
from momineq.models.intersection import IntersectionConfig, gen_intersection_data, intersection_moment_model
from momineq.streams import Stream


def scalar_model(kernel, sampler=None, analytic=None, n_moments=1):
    return MomentModel(
        n_moments=n_moments,
        dim_theta=1,
        kernel=kernel,
        shock_sampler=sampler or (lambda obs, rng: 0.0),
        analytic_moment=analytic,
    )


def value_dataset(values):
    return Dataset(tuple(float(v) for v in values))


# ------------------------------------------------------------ simulate_panel

def test_constant_sampler_gives_zero_panel():
    model = scalar_model(lambda x, u, th: np.array([u]))
    data = value_dataset([1.0, 2.0, 3.0])
    panel = simulate_panel(model, data, 4, Stream.from_seed(0))
    assert all(u == 0.0 for row in panel.draws for u in row)


def test_panel_mean_obeys_clt_bound():
    model = scalar_model(
        lambda x, u, th: np.array([u]), sampler=lambda obs, rng: rng.standard_normal()
    )
    n, r = 1000, 100
    data = value_dataset(np.zeros(n))
    panel = simulate_panel(model, data, r, Stream.from_seed(5))
    draws = np.array([list(row) for row in panel.draws])
    assert abs(draws.mean()) <= 4.0 / math.sqrt(n * r)


def test_panel_is_deterministic_in_the_stream():
    model = scalar_model(
        lambda x, u, th: np.array([u]), sampler=lambda obs, rng: rng.standard_normal()
    )
    data = value_dataset([0.0, 1.0])
    a = simulate_panel(model, data, 3, Stream.from_seed(9))
    b = simulate_panel(model, data, 3, Stream.from_seed(9))
    assert a == b


def test_panel_requires_positive_draws():
    model = scalar_model(lambda x, u, th: np.array([u]))
    with pytest.raises(ValueError):
        simulate_panel(model, value_dataset([1.0, 2.0]), 0, Stream.from_seed(0))


# ------------------------------------------------------------ sample_moments

def test_sample_moments_is_the_grand_mean():
    model = scalar_model(lambda x, u, th: np.array([x]))
    data = value_dataset([0.2, 0.4])
    panel = simulate_panel(model, data, 1, Stream.from_seed(0))
    assert sample_moments(model, data, panel, [0.0])[0] == pytest.approx(0.3)


def test_zero_kernel_gives_zero_vector():
    model = scalar_model(lambda x, u, th: np.zeros(3), n_moments=3)
    data = value_dataset([1.0, 2.0])
    panel = simulate_panel(model, data, 2, Stream.from_seed(0))
    assert_allclose(sample_moments(model, data, panel, [0.0]), np.zeros(3))


def test_intersection_kernel_mean_near_half():
    # E[1{u < X}] = 1/2 when u - X is symmetric around zero
    cfg = IntersectionConfig(n_moments=1, n_obs=10_000)
    model = intersection_moment_model(cfg)
    data = gen_intersection_data(cfg, Stream.from_seed(3))
    panel = simulate_panel(model, data, 100, Stream.from_seed(4))
    mbar = sample_moments(model, data, panel, [0.0])
    se = 0.5 / math.sqrt(cfg.n_obs)  # crude bound on sd of the mean
    assert abs(mbar[0] - (-0.5)) <= 3 * se


def test_panel_data_mismatch_raises():
    model = scalar_model(lambda x, u, th: np.array([x]))
    data = value_dataset([1.0, 2.0, 3.0])
    panel = simulate_panel(model, value_dataset([1.0, 2.0]), 1, Stream.from_seed(0))
    with pytest.raises(ConformanceError):
        sample_moments(model, data, panel, [0.0])


# ---------------------------------------------------------------- covariance

def test_covariance_two_point_example():
    model = scalar_model(lambda x, u, th: np.array([x]))
    data = value_dataset([0.0, 2.0])
    panel = simulate_panel(model, data, 1, Stream.from_seed(0))
    mbar = sample_moments(model, data, panel, [0.0])
    sigma = covariance(model, data, panel, [0.0], mbar)
    assert sigma[0, 0] == pytest.approx(1.0)  # divisor n, not n-1


def test_covariance_identical_rows_is_zero():
    model = scalar_model(lambda x, u, th: np.array([1.7]))
    data = value_dataset([5.0, 5.0, 5.0])
    panel = simulate_panel(model, data, 1, Stream.from_seed(0))
    sigma = covariance(model, data, panel, [0.0], np.array([1.7]))
    assert_allclose(sigma, np.zeros((1, 1)))


def test_covariance_needs_two_observations():
    with pytest.raises(DegenerateSampleError):
        stats_from_per_obs(np.array([[1.0, 2.0]]))


def test_covariance_bernoulli_moments():
    rng = np.random.default_rng(12)
    n = 100_000
    rows = (rng.random((n, 2)) < 0.5).astype(float)
    stats = stats_from_per_obs(rows)
    band = 3.0 / math.sqrt(n)
    assert abs(stats.sigma[0, 0] - 0.25) <= band
    assert abs(stats.sigma[1, 1] - 0.25) <= band
    assert abs(stats.sigma[0, 1]) <= band


def test_covariance_invariant_under_permutation():
    rng = np.random.default_rng(3)
    rows = rng.standard_normal((40, 3))
    stats = stats_from_per_obs(rows)
    perm = stats_from_per_obs(rows[rng.permutation(40)])
    assert_allclose(stats.sigma, perm.sigma, atol=1e-14)
    assert_allclose(np.sort(stats.mbar), np.sort(perm.mbar))


# ------------------------------------------------------------- moment stats

def test_moment_stats_shapes_and_omega():
    rng = np.random.default_rng(8)
    rows = rng.standard_normal((60, 4)) @ np.diag([1.0, 2.0, 0.5, 1.5])
    stats = stats_from_per_obs(rows)
    assert stats.sigma.shape == (4, 4)
    assert_allclose(stats.sigma, stats.sigma.T)
    assert_allclose(np.diag(stats.omega), np.ones(4))
    assert_allclose(stats.vdiag, np.diag(stats.sigma))
    eigs = np.linalg.eigvalsh(stats.omega)
    assert eigs.min() >= -1e-10


# ---------------------------------------------------- regularized_covariance

def test_regularization_inactive_when_determinant_large():
    stats = MomentStats(mbar=np.zeros(2), sigma=np.diag([2.0, 3.0]), n=10)
    assert_allclose(regularized_covariance(stats), np.diag([2.0, 3.0]))


def test_regularization_with_perfect_correlation():
    sigma = np.array([[1.0, 1.0], [1.0, 1.0]])
    stats = MomentStats(mbar=np.zeros(2), sigma=sigma, n=10)
    assert_allclose(regularized_covariance(stats), sigma + 0.012 * np.eye(2))


def test_regularization_matches_direct_recomputation():
    # random 3x3 with det(Omega) pushed below the floor
    rng = np.random.default_rng(21)
    base = rng.standard_normal((3, 3))
    sigma = base @ base.T + 0.01 * np.eye(3)
    d = np.sqrt(np.diag(sigma))
    omega = sigma / np.outer(d, d)
    shrink = 0.0
    # blend towards a singular matrix until det < 0.012
    while np.linalg.det(omega) >= 0.005:
        shrink += 0.05
        omega = (1 - shrink) * omega + shrink * np.ones((3, 3)) * 0.999
        omega[np.diag_indices(3)] = 1.0
    sigma = omega * np.outer(d, d)
    stats = MomentStats(mbar=np.zeros(3), sigma=sigma, n=50)
    expected = sigma + max(0.012 - np.linalg.det(omega), 0.0) * np.diag(np.diag(sigma))
    assert_allclose(regularized_covariance(stats), expected, rtol=1e-12)


def test_regularization_difference_is_nonnegative_diagonal():
    rng = np.random.default_rng(100)
    for _ in range(50):
        base = rng.standard_normal((4, 4))
        sigma = base @ base.T + 0.05 * np.eye(4)
        stats = MomentStats(mbar=np.zeros(4), sigma=sigma, n=30)
        diff = regularized_covariance(stats) - sigma
        assert_allclose(diff, np.diag(np.diag(diff)), atol=1e-14)
        assert np.all(np.diag(diff) >= 0.0)
        if np.linalg.det(stats.omega) >= 0.012:
            assert_allclose(diff, np.zeros((4, 4)))


def test_regularization_rejects_degenerate_moment():
    stats = MomentStats(mbar=np.zeros(2), sigma=np.diag([1.0, 0.0]), n=10)
    with pytest.raises(DegenerateMomentError, match="1"):
        regularized_covariance(stats)


# --------------------------------------------------- studentized_slackness

def test_slackness_formula():
    kappa = math.sqrt(math.log(100.0))
    stats = MomentStats(mbar=np.array([-0.5]), sigma=np.array([[0.25]]), n=100)
    # sqrt(100) * (-0.5) / 0.5 / kappa
    assert studentized_slackness(stats, kappa)[0] == pytest.approx(-10.0 / kappa)
    assert studentized_slackness(stats, kappa)[0] == pytest.approx(-4.660, abs=5e-4)
    unit = MomentStats(mbar=np.array([-0.5]), sigma=np.array([[1.0]]), n=100)
    assert studentized_slackness(unit, kappa)[0] == pytest.approx(-5.0 / kappa)


def test_slackness_zero_moments():
    stats = MomentStats(mbar=np.zeros(3), sigma=np.eye(3), n=50)
    assert_allclose(studentized_slackness(stats, 2.0), np.zeros(3))


def test_slackness_power_rule():
    stats = MomentStats(mbar=np.array([0.25]), sigma=np.array([[4.0]]), n=256)
    kappa = 256 ** (1.0 / 16.0)
    xi = studentized_slackness(stats, kappa)[0]
    assert xi == pytest.approx(16 * 0.125 / kappa)
    assert xi == pytest.approx(math.sqrt(2.0), abs=1e-4)


def test_slackness_scale_free():
    rng = np.random.default_rng(7)
    rows = rng.standard_normal((30, 2)) + 0.3
    for a in (0.1, 3.0, 250.0):
        xi = studentized_slackness(stats_from_per_obs(rows), 1.5)
        xi_scaled = studentized_slackness(stats_from_per_obs(a * rows), 1.5)
        assert_allclose(xi, xi_scaled, rtol=1e-12)


def test_slackness_rejects_zero_sd():
    stats = MomentStats(mbar=np.zeros(2), sigma=np.diag([1.0, 0.0]), n=10)
    with pytest.raises(DegenerateMomentError):
        studentized_slackness(stats, 1.0)


# --------------------------------------------------------- bootstrap_resample

def test_resample_single_observation():
    model = scalar_model(
        lambda x, u, th: np.array([u]), sampler=lambda obs, rng: rng.standard_normal()
    )
    data = Dataset((1.25,))
    d1, p1 = bootstrap_resample(data, model, 2, Stream.from_seed(1))
    d2, p2 = bootstrap_resample(data, model, 2, Stream.from_seed(2))
    assert d1.observations == (1.25,) and d2.observations == (1.25,)
    assert p1.draws != p2.draws  # fresh simulation draws per stream


def test_resample_frequencies_are_uniform():
    model = scalar_model(lambda x, u, th: np.array([u]))
    data = value_dataset([0.0, 1.0, 2.0, 3.0, 4.0])
    counts = np.zeros(5)
    reps = 10_000
    master = Stream.from_seed(44)
    for b in range(reps):
        resampled, _ = bootstrap_resample(data, model, 1, master.child(b))
        for obs in resampled.observations:
            counts[int(obs)] += 1
    freq = counts / (5 * reps)
    se = math.sqrt(0.2 * 0.8 / (5 * reps))
    assert np.all(np.abs(freq - 0.2) <= 3 * se)


def test_resample_deterministic():
    model = scalar_model(
        lambda x, u, th: np.array([u]), sampler=lambda obs, rng: rng.standard_normal()
    )
    data = value_dataset([0.0, 1.0, 2.0])
    a = bootstrap_resample(data, model, 2, Stream.from_seed(6))
    b = bootstrap_resample(data, model, 2, Stream.from_seed(6))
    assert a[0] == b[0] and a[1] == b[1]


# -------------------------------------------------------------- unbiasedness

def test_simulation_unbiased_against_analytic():
    cfg = IntersectionConfig(n_moments=2, n_obs=10_000)
    model = intersection_moment_model(cfg)
    data = gen_intersection_data(cfg, Stream.from_seed(15))
    panel = simulate_panel(model, data, 10, Stream.from_seed(16))
    theta = [0.1]
    stats = moment_stats(model, data, panel, theta)
    analytic = np.stack(
        [model.analytic_moment(obs, np.array(theta)) for obs in data.observations]
    ).mean(axis=0)
    bound = 4.0 * math.sqrt(stats.vdiag.max() / cfg.n_obs)
    assert np.all(np.abs(stats.mbar - analytic) <= bound)


def test_per_observation_moments_match_manual_average():
    model = scalar_model(
        lambda x, u, th: np.array([x + u]), sampler=lambda obs, rng: rng.standard_normal()
    )
    data = value_dataset([1.0, -1.0])
    panel = simulate_panel(model, data, 5, Stream.from_seed(2))
    rows = per_observation_moments(model, data, panel, [0.0])
    manual = np.array([[np.mean([x + u for u in panel.draws[i]])] for i, x in enumerate((1.0, -1.0))])
    assert_allclose(rows, manual)

"""Test statistics and critical values for moment-inequality confidence sets.

Three critical-value engines are provided:

* ``Fixed`` -- a user-supplied constant (e.g. a least-favorable quantile);
* ``GmsBootstrap`` -- the moment-selection bootstrap that resamples the data
  and redraws the simulation shocks, so the critical value absorbs the extra
  variation a finite number of draws injects into the sample moments;
* ``SmoothedBootstrap`` -- the regularized procedure: replace the index
  function by its mu-smooth surrogate, bootstrap the centered root against
  a high-precision simulated centering panel, and add the known bias bound
  sqrt(n) * mu * beta to the quantile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.spatial.distance import cdist

from . import core, smoothing
from .core import Dataset, MomentModel, MomentStats, SimPanel
from .smoothing import IndexKind, IndexSpec
from .streams import Stream

__all__ = [
    "Fixed",
    "GmsBootstrap",
    "SmoothedBootstrap",
    "CriticalValueSpec",
    "ConfidenceOutcome",
    "LevelSet",
    "ConfigurationError",
    "kappa_value",
    "bootstrap_quantile",
    "test_statistic",
    "smoothed_statistic",
    "gms_bootstrap_cv",
    "gms_cv_from_roots",
    "smoothed_bootstrap_cv",
    "membership_from_rows",
    "confidence_membership",
    "interval_upper_endpoint",
    "sum_plus_sq_statistic",
    "level_set_estimate",
    "hausdorff_distance",
]


class ConfigurationError(ValueError):
    pass


KAPPA_RULES = ("sqrt_log_n", "n_pow_1_16")


def kappa_value(rule: str, n: int) -> float:
    """Moment-selection tuning constant for sample size n."""
    if rule == "sqrt_log_n":
        return math.sqrt(math.log(n))
    if rule == "n_pow_1_16":
        return n ** (1.0 / 16.0)
    raise ConfigurationError(f"unknown kappa rule {rule!r}")


@dataclass(frozen=True)
class Fixed:
    c: float


@dataclass(frozen=True)
class GmsBootstrap:
    """t-test moment selection (keep j iff xi_j >= -1) with a bootstrap that
    redraws the simulation shocks alongside the data."""

    kappa_rule: str = "sqrt_log_n"
    n_boot: int = 1000
    # "original" studentizes the root by the sample sd, "bootstrap" by the
    # resampled sd; the interval experiments use the latter.
    studentize: str = "original"

    def __post_init__(self):
        if self.kappa_rule not in KAPPA_RULES:
            raise ConfigurationError(f"unknown kappa rule {self.kappa_rule!r}")
        if self.n_boot < 1:
            raise ConfigurationError("need at least one bootstrap replication")


@dataclass(frozen=True)
class SmoothedBootstrap:
    mu: float
    n_boot: int = 1000
    r2: int = 100
    beta: Optional[float] = None  # defaults to the index spec's constant

    def __post_init__(self):
        if self.mu <= 0.0:
            raise ConfigurationError("mu must be positive")
        if self.n_boot < 1:
            raise ConfigurationError("need at least one bootstrap replication")


Method = Union[Fixed, GmsBootstrap, SmoothedBootstrap]


@dataclass(frozen=True)
class CriticalValueSpec:
    method: Method
    alpha: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError("alpha must lie in (0, 1)")


@dataclass(frozen=True)
class ConfidenceOutcome:
    statistic: float
    critical_value: float
    covered: bool
    selected: Optional[tuple] = None  # GMS selection set (0-based indices)


@dataclass(frozen=True)
class LevelSet:
    grid: np.ndarray       # (K, d) parameter points
    member: np.ndarray     # (K,) booleans
    level: float

    def points(self) -> np.ndarray:
        return self.grid[self.member]


def bootstrap_quantile(values, alpha: float) -> float:
    """ceil((1 - alpha) * B)-th order statistic (conservative convention)."""
    values = np.sort(np.asarray(values, dtype=float))
    b = values.shape[0]
    k = min(math.ceil((1.0 - alpha) * b), b)
    return float(values[k - 1])


def test_statistic(spec: IndexSpec, stats: MomentStats) -> float:
    """S(sqrt(n) mbar, Sigma); the QLR kind uses the determinant-floored
    covariance so the quadratic form stays well-posed."""
    root_n = math.sqrt(stats.n)
    if spec.kind == IndexKind.QLR:
        sigma = core.regularized_covariance(stats)
    else:
        sigma = stats.sigma
    return smoothing.eval_S(spec, root_n * stats.mbar, sigma)


def smoothed_statistic(spec: IndexSpec, stats: MomentStats, mu: float) -> float:
    """sqrt(n)^chi * S_mu(mbar, Sigma): the scaled smooth statistic with the
    smoothing level applied on the moment scale."""
    chi = spec.smooth_params.chi
    sigma = stats.sigma
    if spec.kind == IndexKind.QLR:
        sigma = core.regularized_covariance(stats)
    value = smoothing.eval_S_mu(spec, stats.mbar, sigma, mu).value
    return math.sqrt(stats.n) ** chi * value


def _index_on_root(spec: IndexSpec, root: np.ndarray, omega_sel: Optional[np.ndarray]) -> float:
    """Evaluate the index function on an already-studentized root vector."""
    sub = IndexSpec(spec.kind, root.shape[0])
    if spec.kind == IndexKind.QLR:
        return smoothing.eval_S(sub, root, omega_sel)
    return smoothing.eval_S(sub, root, np.eye(root.shape[0]))


def gms_cv_from_roots(spec: IndexSpec, roots: np.ndarray, alpha: float,
                      omega_sel: Optional[np.ndarray] = None) -> float:
    """Critical value from a (B, |selected|) matrix of studentized roots."""
    if roots.shape[1] == 0:
        return 0.0
    stats = [_index_on_root(spec, roots[b], omega_sel) for b in range(roots.shape[0])]
    return bootstrap_quantile(stats, alpha)


def gms_bootstrap_cv(
    model: MomentModel,
    data: Dataset,
    panel: SimPanel,
    theta,
    spec: IndexSpec,
    cv: GmsBootstrap,
    alpha: float,
    stream: Stream,
) -> tuple[float, tuple]:
    """Moment-selection bootstrap critical value.

    Selection is fixed on the original sample: keep j iff
    xi_j = kappa^{-1} sqrt(n) mbar_j / sd_j >= -1.  Each bootstrap
    replication resamples observations and draws fresh shocks; the root is
    the recentered studentized moment vector over the selected set only.
    Returns (critical value, selected indices); no selected moments means
    a critical value of zero.
    """
    stats = core.moment_stats(model, data, panel, theta)
    kappa = kappa_value(cv.kappa_rule, stats.n)
    xi = core.studentized_slackness(stats, kappa)
    selected = np.flatnonzero(xi >= -1.0)
    if selected.size == 0:
        return 0.0, ()

    omega_sel = None
    if spec.kind == IndexKind.QLR:
        sigma_t = core.regularized_covariance(stats)
        d_t = np.sqrt(np.diag(sigma_t))
        omega_t = sigma_t / np.outer(d_t, d_t)
        omega_sel = omega_t[np.ix_(selected, selected)]
        sd = d_t
    else:
        sd = np.sqrt(stats.vdiag)

    root_n = math.sqrt(stats.n)
    roots = np.empty((cv.n_boot, selected.size))
    for b in range(cv.n_boot):
        data_b, panel_b = core.bootstrap_resample(data, model, panel.n_draws, stream.child(b))
        rows_b = core.per_observation_moments(model, data_b, panel_b, theta)
        mstar = rows_b.mean(axis=0)
        if cv.studentize == "bootstrap":
            sd_b = np.sqrt(np.diag(core.covariance_from_rows(rows_b, mstar)))
            denom = sd_b[selected]
        else:
            denom = sd[selected]
        roots[b] = root_n * (mstar[selected] - stats.mbar[selected]) / denom
    return gms_cv_from_roots(spec, roots, alpha, omega_sel), tuple(int(j) for j in selected)


def smoothed_bootstrap_cv(
    model: MomentModel,
    data: Dataset,
    theta,
    spec: IndexSpec,
    cv: SmoothedBootstrap,
    n_draws: int,
    alpha: float,
    stream: Stream,
) -> float:
    """Bias-corrected bootstrap critical value for the smoothed statistic.

    One centering panel of r2 >> R draws per observation is simulated once;
    every bootstrap replication then resamples the data, draws a fresh
    R-panel, and records sqrt(n) * (S_mu(resampled) - S_mu(centering)).
    The returned value is the (1 - alpha) quantile plus sqrt(n) * mu * beta.
    """
    if cv.r2 <= n_draws:
        raise ConfigurationError("centering panel must use more draws than the main panel")
    beta = cv.beta if cv.beta is not None else spec.beta
    mu = cv.mu

    panel2 = core.simulate_panel(model, data, cv.r2, stream.child("centering"))
    stats2 = core.moment_stats(model, data, panel2, theta)
    center = smoothing.eval_S_mu(spec, stats2.mbar, stats2.sigma, mu).value

    root_n = math.sqrt(data.n)
    roots = np.empty(cv.n_boot)
    for b in range(cv.n_boot):
        data_b, panel_b = core.bootstrap_resample(data, model, n_draws, stream.child("boot", b))
        stats_b = core.moment_stats(model, data_b, panel_b, theta)
        value_b = smoothing.eval_S_mu(spec, stats_b.mbar, stats_b.sigma, mu).value
        roots[b] = root_n * (value_b - center)
    return bootstrap_quantile(roots, alpha) + root_n * mu * beta


def confidence_membership(
    theta,
    model: MomentModel,
    data: Dataset,
    panel: SimPanel,
    spec: IndexSpec,
    cv: CriticalValueSpec,
    stream: Stream,
) -> ConfidenceOutcome:
    """Does theta belong to the confidence set?  Dispatches the statistic
    (smoothed for SmoothedBootstrap, raw otherwise) and the critical value."""
    stats = core.moment_stats(model, data, panel, theta)
    method = cv.method
    selected = None
    if isinstance(method, Fixed):
        statistic = test_statistic(spec, stats)
        critical = method.c
    elif isinstance(method, GmsBootstrap):
        statistic = test_statistic(spec, stats)
        critical, selected = gms_bootstrap_cv(
            model, data, panel, theta, spec, method, cv.alpha, stream.child("gms")
        )
    else:
        statistic = smoothed_statistic(spec, stats, method.mu)
        critical = smoothed_bootstrap_cv(
            model, data, theta, spec, method, panel.n_draws, cv.alpha, stream.child("smooth")
        )
    return ConfidenceOutcome(
        statistic=float(statistic),
        critical_value=float(critical),
        covered=bool(statistic <= critical),
        selected=selected,
    )


def membership_from_rows(rows, spec: IndexSpec, cv: CriticalValueSpec,
                         stream: Stream, theta_label: str = "") -> ConfidenceOutcome:
    """Confidence-set membership from an n x J matrix of already-evaluated
    per-observation moments (the no-simulation path).

    The bootstrap resamples rows only; there are no simulation draws to
    refresh.  SmoothedBootstrap centers the root at the full-sample value
    since no higher-precision panel exists.
    """
    rows = np.asarray(rows, dtype=float)
    stats = core.stats_from_per_obs(rows)
    n = stats.n
    root_n = math.sqrt(n)
    method = cv.method
    selected = None

    if isinstance(method, Fixed):
        return ConfidenceOutcome(
            statistic=float(test_statistic(spec, stats)),
            critical_value=float(method.c),
            covered=bool(test_statistic(spec, stats) <= method.c),
            selected=None,
        )

    rng = stream.child("rows_boot").generator()
    idx = rng.integers(0, n, size=(method.n_boot, n))

    if isinstance(method, GmsBootstrap):
        statistic = test_statistic(spec, stats)
        kappa = kappa_value(method.kappa_rule, n)
        xi = core.studentized_slackness(stats, kappa)
        sel = np.flatnonzero(xi >= -1.0)
        if sel.size == 0:
            return ConfidenceOutcome(float(statistic), 0.0, bool(statistic <= 0.0), ())
        omega_sel = None
        if spec.kind == IndexKind.QLR:
            sigma_t = core.regularized_covariance(stats)
            d_t = np.sqrt(np.diag(sigma_t))
            omega_sel = (sigma_t / np.outer(d_t, d_t))[np.ix_(sel, sel)]
            sd = d_t
        else:
            sd = np.sqrt(stats.vdiag)
        roots = np.empty((method.n_boot, sel.size))
        for b in range(method.n_boot):
            rows_b = rows[idx[b]]
            mstar = rows_b.mean(axis=0)
            if method.studentize == "bootstrap":
                denom = np.sqrt(np.diag(core.covariance_from_rows(rows_b, mstar)))[sel]
            else:
                denom = sd[sel]
            roots[b] = root_n * (mstar[sel] - stats.mbar[sel]) / denom
        critical = gms_cv_from_roots(spec, roots, cv.alpha, omega_sel)
        selected = tuple(int(j) for j in sel)
        return ConfidenceOutcome(float(statistic), float(critical), bool(statistic <= critical), selected)

    # SmoothedBootstrap on rows
    mu = method.mu
    beta = method.beta if method.beta is not None else spec.beta
    statistic = smoothed_statistic(spec, stats, mu)
    center = smoothing.eval_S_mu(spec, stats.mbar, stats.sigma, mu).value
    peaks = np.empty(method.n_boot)
    for b in range(method.n_boot):
        stats_b = core.stats_from_per_obs(rows[idx[b]])
        value_b = smoothing.eval_S_mu(spec, stats_b.mbar, stats_b.sigma, mu).value
        peaks[b] = root_n * (value_b - center)
    critical = bootstrap_quantile(peaks, cv.alpha) + root_n * mu * beta
    return ConfidenceOutcome(float(statistic), float(critical), bool(statistic <= critical), None)


def interval_upper_endpoint(variant: str, mbar, sigma, n: int, **cv_inputs) -> float:
    """Right endpoint of a one-sided confidence interval for an
    intersection-of-upper-bounds model.

    variant "naive_fixed":  min_j mbar_j + c / sqrt(n)
    variant "cv_corrected": min_j (mbar_j + c_kappa * sigma_j / sqrt(n))
    variant "smoothed":     softmin_mu(mbar) + c_tilde / sqrt(n)
    """
    mbar = np.asarray(mbar, dtype=float)
    root_n = math.sqrt(n)
    if variant == "naive_fixed":
        return float(np.min(mbar) + cv_inputs["c"] / root_n)
    if variant == "cv_corrected":
        sigma = np.asarray(sigma, dtype=float)
        return float(np.min(mbar + cv_inputs["c_kappa"] * sigma / root_n))
    if variant == "smoothed":
        mu = cv_inputs["mu"]
        spec = IndexSpec(IndexKind.SOFT_MIN_BOUNDARY, mbar.shape[0])
        soft = smoothing.eval_S_mu(spec, mbar, None, mu).value
        return float(soft + cv_inputs["c_tilde"] / root_n)
    raise ConfigurationError(f"unknown endpoint variant {variant!r}")


def sum_plus_sq_statistic(mbar, vdiag, n: int) -> float:
    """Sum of squared positive studentized moments, with the degenerate
    convention: a zero-variance moment contributes 0 when mbar_j <= 0 and
    +inf when mbar_j > 0 (the pointwise limit)."""
    mbar = np.asarray(mbar, dtype=float)
    vdiag = np.asarray(vdiag, dtype=float)
    ok = vdiag > 0.0
    if np.any(~ok & (mbar > 0.0)):
        return math.inf
    z = np.sqrt(n) * mbar[ok] / np.sqrt(vdiag[ok])
    return float(np.sum(np.maximum(z, 0.0) ** 2))


def level_set_estimate(model: MomentModel, data: Dataset, panel: SimPanel, grid, c: float) -> LevelSet:
    """Grid membership of {theta : T_nR(theta) <= c} with the sum of squared
    positive parts as criterion."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[0] == 0:
        raise ValueError("grid is empty")
    member = np.zeros(grid.shape[0], dtype=bool)
    for k in range(grid.shape[0]):
        stats = core.moment_stats(model, data, panel, grid[k])
        t = sum_plus_sq_statistic(stats.mbar, stats.vdiag, stats.n)
        member[k] = t <= c
    return LevelSet(grid=grid, member=member, level=float(c))


def hausdorff_distance(a, b) -> float:
    """Max of the two directed sup-inf distances under the Euclidean norm."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("hausdorff distance needs nonempty sets")
    d = cdist(a, b)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))

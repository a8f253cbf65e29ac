"""Index functions for moment-inequality test statistics and their smooth
approximations.

An index function S(m, Sigma) aggregates a vector of (studentized) moments
into a scalar criterion.  Each non-smooth S comes with a family of smooth
surrogates S_mu whose uniform distance to S is bounded by beta * mu for a
known constant beta, and whose gradient is (K + alpha/mu)-Lipschitz.  The
constants are carried on the spec so downstream bias corrections can use
them without recomputation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

__all__ = [
    "IndexKind",
    "IndexSpec",
    "SmoothEval",
    "SmoothParams",
    "eval_S",
    "eval_S_mu",
    "approximation_gap",
    "gradient_check",
    "cone_projection_qlr",
    "qlr_active_set_enumeration",
    "smoothed_qlr",
    "nonneg_quadratic_minimize",
]


class ConditioningError(ValueError):
    """Covariance matrix too ill-conditioned for the requested statistic."""


class IndexKind:
    SUM_PLUS = "sum_plus"
    MAX_PLUS = "max_plus"
    SOFT_MIN_BOUNDARY = "soft_min_boundary"
    QLR = "qlr"
    SUM_PLUS_SQ = "sum_plus_sq"

    ALL = (SUM_PLUS, MAX_PLUS, SOFT_MIN_BOUNDARY, QLR, SUM_PLUS_SQ)


@dataclass(frozen=True)
class SmoothParams:
    """Constants (alpha, beta, K) of the smooth family plus the homogeneity
    degree chi of the underlying index function."""

    alpha: float | None
    beta: float | None
    lipschitz_k: float
    chi: int


@dataclass(frozen=True)
class IndexSpec:
    """Which index function is in play, for a fixed number of moments."""

    kind: str
    n_moments: int

    def __post_init__(self):
        if self.kind not in IndexKind.ALL:
            raise ValueError(f"unknown index kind {self.kind!r}")
        if self.n_moments < 1:
            raise ValueError("n_moments must be >= 1")

    @property
    def smooth_params(self) -> SmoothParams:
        j = self.n_moments
        if self.kind == IndexKind.SUM_PLUS:
            return SmoothParams(float(j), j * math.log(2.0), 0.0, 1)
        if self.kind == IndexKind.MAX_PLUS:
            return SmoothParams(1.0, math.log(j + 1.0), 0.0, 1)
        if self.kind == IndexKind.SOFT_MIN_BOUNDARY:
            # one-sided: min - mu*ln(J) <= smoothed <= min
            return SmoothParams(1.0, math.log(j), 0.0, 1)
        if self.kind == IndexKind.QLR:
            # beta is not certified for the smoothed dual; callers must not
            # rely on a hard gap bound for this kind.
            return SmoothParams(None, None, 0.0, 2)
        return SmoothParams(None, None, 0.0, 2)  # SUM_PLUS_SQ, never smoothed

    @property
    def beta(self) -> float:
        b = self.smooth_params.beta
        if b is None:
            raise ValueError(f"index kind {self.kind!r} has no certified beta")
        return b


@dataclass(frozen=True)
class SmoothEval:
    """Value and moment-gradient of a smooth index function."""

    value: float
    gradient: np.ndarray
    mu: float


def _studentize(m, sigma):
    m = np.asarray(m, dtype=float)
    sd = np.sqrt(np.diag(np.asarray(sigma, dtype=float)))
    if np.any(sd <= 0.0):
        bad = int(np.flatnonzero(sd <= 0.0)[0])
        raise ValueError(f"moment {bad} has nonpositive variance")
    return m, sd


def nonneg_quadratic_minimize(gram, lin, tol=1e-11, max_iter=None):
    """Minimize 0.5*x'Gx + c'x subject to x >= 0, for positive-definite G.

    Active-set iteration in the style of Lawson-Hanson; exact at the KKT
    point (complementary slackness to `tol`).  Falls back to scipy's nnls
    if the active set cycles.
    """
    gram = np.asarray(gram, dtype=float)
    lin = np.asarray(lin, dtype=float)
    n = lin.shape[0]
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    if max_iter is None:
        max_iter = 60 * n + 100

    for _ in range(max_iter):
        grad = gram @ x + lin
        candidates = ~passive & (grad < -tol)
        if not candidates.any():
            return x
        j = int(np.flatnonzero(candidates)[np.argmin(grad[candidates])])
        passive[j] = True
        # inner loop: restore feasibility of the passive block
        for _ in range(max_iter):
            idx = np.flatnonzero(passive)
            sol = np.linalg.solve(gram[np.ix_(idx, idx)], -lin[idx])
            if np.all(sol > 0.0):
                x = np.zeros(n)
                x[idx] = sol
                break
            xp = x[idx]
            mask = sol <= 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = xp[mask] / (xp[mask] - sol[mask])
            step = float(np.min(ratios))
            x = np.zeros(n)
            x[idx] = xp + step * (sol - xp)
            drop = idx[x[idx] <= tol]
            passive[drop] = False
            x[drop] = 0.0
        else:  # pragma: no cover - cycling guard
            break

    # fallback: reformulate as nnls  (G = L L', 0.5||L'x - b||^2 with b = solve(L, -c))
    chol = np.linalg.cholesky(gram)
    rhs = np.linalg.solve(chol, -lin)
    x, _ = optimize.nnls(chol.T, rhs)
    return x


def cone_projection_qlr(m, sigma):
    """Squared Mahalanobis distance from m to the cone {t : t <= 0}.

    inf over t <= 0 of (m - t)' Sigma^{-1} (m - t); zero iff m <= 0.
    """
    m = np.asarray(m, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    try:
        ginv = np.linalg.inv(sigma)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("covariance is singular") from exc
    slack = nonneg_quadratic_minimize(ginv, ginv @ m)
    resid = m + slack
    return float(resid @ ginv @ resid)


def qlr_active_set_enumeration(m, sigma, max_dim: int = 12):
    """Reference cone projection by exhaustive KKT enumeration.

    Tries every candidate active set A (coordinates with t_j = 0), solves
    the equality-constrained projection, and keeps the solutions whose
    slacks and multipliers are sign-feasible.  Exact but exponential in J;
    used as the independent oracle for the fast solver.
    """
    m = np.asarray(m, dtype=float)
    w = np.linalg.inv(np.asarray(sigma, dtype=float))
    j = m.shape[0]
    if j > max_dim:
        raise ValueError(f"enumeration oracle limited to J <= {max_dim}")
    best = math.inf
    for pattern in range(1 << j):
        active = np.array([(pattern >> i) & 1 == 1 for i in range(j)])
        resid = np.empty(j)
        resid[active] = m[active]
        free = ~active
        if free.any():
            rhs = -w[np.ix_(free, active)] @ m[active] if active.any() else np.zeros(free.sum())
            resid[free] = np.linalg.solve(w[np.ix_(free, free)], rhs)
        t = m - resid
        grad = w @ resid  # multipliers on the active face
        if np.all(t[free] <= 1e-10) and np.all(grad[active] >= -1e-10):
            best = min(best, float(resid @ w @ resid))
    return best


def smoothed_qlr(m, sigma, mu):
    """Smoothed cone distance by its dual: max over u >= 0 of
    m'u - ((1 + 2*mu)/4) u' Sigma u.  Returns (value, maximizer)."""
    m = np.asarray(m, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    scale = (1.0 + 2.0 * mu) / 2.0
    u = nonneg_quadratic_minimize(scale * sigma, -m)
    value = float(m @ u - 0.25 * (1.0 + 2.0 * mu) * (u @ sigma @ u))
    return value, u


def eval_S(spec: IndexSpec, m, sigma) -> float:
    """Evaluate the exact (non-smooth) index function."""
    kind = spec.kind
    if kind == IndexKind.SOFT_MIN_BOUNDARY:
        return float(np.min(np.asarray(m, dtype=float)))
    if kind == IndexKind.QLR:
        return cone_projection_qlr(m, sigma)
    m, sd = _studentize(m, sigma)
    z = m / sd
    if kind == IndexKind.SUM_PLUS:
        return float(np.sum(np.maximum(z, 0.0)))
    if kind == IndexKind.MAX_PLUS:
        return float(max(np.max(z), 0.0))
    # SUM_PLUS_SQ
    return float(np.sum(np.maximum(z, 0.0) ** 2))


def _softplus(x):
    # log(exp(x) + 1), stable for large |x|
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def eval_S_mu(spec: IndexSpec, m, sigma, mu: float) -> SmoothEval:
    """Evaluate the mu-smooth approximation and its gradient in m."""
    if mu <= 0.0:
        raise ValueError("mu must be positive")
    kind = spec.kind
    if kind == IndexKind.SUM_PLUS_SQ:
        raise ValueError("sum_plus_sq has no smooth counterpart")

    if kind == IndexKind.SOFT_MIN_BOUNDARY:
        m = np.asarray(m, dtype=float)
        shifted = -(m - np.min(m)) / mu
        w = np.exp(shifted)
        total = w.sum()
        value = float(np.min(m) - mu * np.log(total))
        return SmoothEval(value, w / total, mu)

    if kind == IndexKind.QLR:
        value, u = smoothed_qlr(m, sigma, mu)
        return SmoothEval(value, u, mu)

    m, sd = _studentize(m, sigma)
    z = m / (mu * sd)
    if kind == IndexKind.SUM_PLUS:
        value = float(mu * np.sum(_softplus(z)))
        grad = special.expit(z) / sd
        return SmoothEval(value, grad, mu)

    # MAX_PLUS: the "+1" term acts as an extra exponent at zero
    shift = max(float(np.max(z)), 0.0)
    expz = np.exp(z - shift)
    total = expz.sum() + np.exp(-shift)
    value = float(mu * (shift + np.log(total)))
    grad = expz / total / sd
    return SmoothEval(value, grad, mu)


def approximation_gap(spec: IndexSpec, m, sigma, mu: float) -> float:
    """S_mu(m, Sigma) - S(m, Sigma)."""
    return eval_S_mu(spec, m, sigma, mu).value - eval_S(spec, m, sigma)


def gradient_check(spec: IndexSpec, m, sigma, mu: float, h: float = 1e-5) -> float:
    """Compare the analytic gradient with central finite differences.

    Returns the max componentwise error relative to max(1, |gradient|).
    """
    m = np.asarray(m, dtype=float)
    grad = eval_S_mu(spec, m, sigma, mu).gradient
    worst = 0.0
    for j in range(m.shape[0]):
        bump = np.zeros_like(m)
        bump[j] = h
        fd = (
            eval_S_mu(spec, m + bump, sigma, mu).value
            - eval_S_mu(spec, m - bump, sigma, mu).value
        ) / (2.0 * h)
        err = abs(fd - grad[j]) / max(1.0, abs(grad[j]))
        worst = max(worst, err)
    return worst

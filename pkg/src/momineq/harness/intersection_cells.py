"""Vectorized replication engine for the intersection-bounds experiments.

The per-observation simulated moment for bound j is the mean of R
indicators 1{u < X_ij} whose conditional law given X is Binomial(R,
Phi(X_ij)) / R, independent across observations and bounds.  Drawing the
binomial counts directly is distributionally exact and avoids
materializing the n x R x J shock panel; the generic kernel path in
`momineq.core` remains the reference implementation and the two are
checked against each other in the test suite.

Within a replication the X sample is keyed only by (J, n, slack, rep), so
every (R, method) cell sees the same data: the analytic and simulated
columns of the coverage tables are paired by common random numbers.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

from ..inference import bootstrap_quantile, kappa_value
from ..models.intersection import IntersectionConfig, table1_critical_value
from ..streams import Stream
from .config import Cell

__all__ = ["intersection_rep", "softmin_rows"]

_CHUNK_ELEMENTS = 4_000_000


def softmin_rows(p: np.ndarray, mu: float) -> np.ndarray:
    """-mu * log(sum_j exp(-p_j / mu)) along the last axis, max-shifted."""
    low = p.min(axis=-1, keepdims=True)
    out = low[..., 0] - mu * np.log(np.exp(-(p - low) / mu).sum(axis=-1))
    return out


def _bounds_matrix(cfg: IntersectionConfig, stream: Stream):
    """Draw X and return (exact conditional bounds, analytic-path bounds).

    The two coincide unless a first stage is configured, in which case the
    analytic path sees the plug-in estimates instead of Phi(X)."""
    rng = stream.child("x").generator()
    x = rng.standard_normal((cfg.n_obs, cfg.n_moments)) + cfg.column_shifts()
    exact = ndtr(x)
    if cfg.first_stage is None:
        return exact, exact
    aux_rng = stream.child("first_stage").generator()
    aux = np.sort(aux_rng.standard_normal((cfg.n_moments, cfg.first_stage.n_aux)), axis=1)
    predicted = np.empty_like(x)
    for j in range(cfg.n_moments):
        predicted[:, j] = np.searchsorted(aux[j], x[:, j]) / cfg.first_stage.n_aux
    return exact, predicted


def _chunks(total: int, per_chunk: int):
    lo = 0
    while lo < total:
        hi = min(lo + per_chunk, total)
        yield lo, hi
        lo = hi


def intersection_rep(cell: Cell, cfg: IntersectionConfig, alpha: float, rep_stream: Stream):
    """One replication: (covered, upper endpoint) at theta_upper.

    rep_stream must be keyed by (model, J, n, slack, rep) only, so sibling
    cells share the data draw.
    """
    n, j = cfg.n_obs, cfg.n_moments
    root_n = math.sqrt(n)
    theta_u = cfg.theta_upper
    exact_bounds, analytic_bounds = _bounds_matrix(cfg, rep_stream.child("data"))

    if cell.n_draws is None:
        per_obs = analytic_bounds
    else:
        rng = rep_stream.child("panel", cell.n_draws).generator()
        per_obs = rng.binomial(cell.n_draws, exact_bounds) / cell.n_draws
    pbar = per_obs.mean(axis=0)

    method = cell.method
    if method.kind == "fixed":
        c = method.c if method.c is not None else table1_critical_value(j, alpha)
        endpoint = float(pbar.min() + c / root_n)
        return theta_u <= endpoint, endpoint

    sd = per_obs.std(axis=0)  # divisor n, matching the covariance convention
    n_boot = method.n_boot
    chunk = max(1, _CHUNK_ELEMENTS // (n * j))

    if method.kind == "gms":
        kappa = kappa_value(method.kappa_rule, n)
        xi = root_n * (theta_u - pbar) / np.where(sd > 0, sd, np.inf) / kappa
        selected = xi >= -1.0
        if not selected.any():
            cv = 0.0
        else:
            rng = rep_stream.child("boot", method.label, cell.n_draws or "ana").generator()
            peaks = np.empty(n_boot)
            for lo, hi in _chunks(n_boot, chunk):
                idx = rng.integers(0, n, size=(hi - lo, n))
                if cell.n_draws is None:
                    pstar = analytic_bounds[idx]
                else:
                    pstar = rng.binomial(cell.n_draws, exact_bounds[idx]) / cell.n_draws
                mstar = pstar.mean(axis=1)
                sdstar = pstar.std(axis=1)
                with np.errstate(divide="ignore", invalid="ignore"):
                    roots = root_n * (mstar - pbar) / sdstar
                roots = np.where(np.isfinite(roots), roots, -np.inf)
                block = roots[:, selected].max(axis=1)
                peaks[lo:hi] = np.where(np.isfinite(block), block, 0.0)
            cv = bootstrap_quantile(peaks, alpha)
        endpoint = float(np.min(pbar + cv * sd / root_n))
        return theta_u <= endpoint, endpoint

    # smoothed statistic with bias-corrected bootstrap
    mu = method.mu
    if cell.n_draws is None:
        center = softmin_rows(analytic_bounds.mean(axis=0), mu)
    else:
        if method.r2 <= cell.n_draws:
            raise ValueError("centering panel must use more draws than the main panel")
        rng2 = rep_stream.child("panel_r2", method.r2).generator()
        center_bounds = rng2.binomial(method.r2, exact_bounds) / method.r2
        center = softmin_rows(center_bounds.mean(axis=0), mu)

    rng = rep_stream.child("boot", method.label, cell.n_draws or "ana").generator()
    roots = np.empty(n_boot)
    for lo, hi in _chunks(n_boot, chunk):
        idx = rng.integers(0, n, size=(hi - lo, n))
        if cell.n_draws is None:
            pstar = analytic_bounds[idx]
        else:
            pstar = rng.binomial(cell.n_draws, exact_bounds[idx]) / cell.n_draws
        roots[lo:hi] = root_n * (center - softmin_rows(pstar.mean(axis=1), mu))
    cv = bootstrap_quantile(roots, alpha) + root_n * mu * math.log(j)
    endpoint = float(softmin_rows(pbar, mu) + cv / root_n)
    return theta_u <= endpoint, endpoint

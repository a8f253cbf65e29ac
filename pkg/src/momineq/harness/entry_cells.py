"""Vectorized replication engine for the entry-game experiments.

Sufficient-statistic shortcuts keep the cost per replication small:

* the data enter the 30 instrumented moments only through the per-cell
  counts (n_k, #{Y=(0,1)} in cell k), so a sample is drawn as a
  multinomial over covariate cells followed by binomial outcome splits;
* the frequency simulator pools the n_k * R draws of a covariate cell,
  and those draws enter only through the counts of the 3 x 3 rectangle
  partition cut at the entry thresholds, so one multinomial per cell
  suffices.

Both shortcuts are distributionally exact; the generic kernel path in
`momineq.core` is the reference implementation and the two are compared
in the test suite.

Conventions for small samples, matching the benchmark procedure whose
distortions the experiments document:

* the simulated entry probabilities of a covariate cell are estimated
  from the draws attached to that cell's observations; a cell with no
  observations leaves them undefined (0/0), the statistic cannot be
  evaluated, and the parameter is treated as rejected in that
  replication;
* the analytic arm has no such failure mode: an empty cell's moment
  function is identically zero and carries no information, so its two
  moments are dropped from the statistic, the selection step, and the
  bootstrap;
* bootstrap roots are studentized by the resampled standard deviations
  (the bootstrap-t convention the interval experiments use), while the
  moment-selection step and the quadratic-form weighting stay fixed at
  the original sample's values.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import MomentStats, regularized_covariance
from ..inference import bootstrap_quantile, kappa_value
from ..models.entry import (
    H1_CELLS,
    MULT_CELL,
    EntryConfig,
    entry_choice_probs,
    entry_population_outcome_prob,
    u_cell_probs,
)
from ..smoothing import nonneg_quadratic_minimize
from ..streams import Stream
from .config import Cell

__all__ = ["ENTRY_THETA_UPPER", "EntryTables", "entry_rep", "entry_level_set_members"]

# extreme point of the identified set that maximizes the competitive
# effect; coverage is evaluated here
ENTRY_THETA_UPPER = (0.8880, -0.4015)

H1_CELLS_ARR = np.array(H1_CELLS)


class _QlrSolver:
    """Cone-projection statistic with a precomputed inverse, for repeated
    evaluations against a fixed covariance."""

    def __init__(self, sigma):
        self.ginv = np.linalg.inv(np.asarray(sigma, dtype=float))

    def value(self, m):
        m = np.asarray(m, dtype=float)
        slack = nonneg_quadratic_minimize(self.ginv, self.ginv @ m)
        resid = m + slack
        return float(resid @ self.ginv @ resid)


class EntryTables:
    """Per-(config, evaluation point) constants shared across replications."""

    def __init__(self, cfg: EntryConfig, theta):
        self.cfg = cfg
        self.theta = np.asarray(theta, dtype=float)
        pts = cfg.support_points()
        self.n_support = cfg.n_support
        self.pz = cfg.support_probs()
        probs = [entry_choice_probs(pts[k], self.theta) for k in range(self.n_support)]
        self.h1 = np.array([p.h1 for p in probs])
        self.h2 = np.array([p.h2 for p in probs])
        self.cell_probs = np.stack(
            [u_cell_probs(pts[k], self.theta) for k in range(self.n_support)]
        )
        self.p01_true = np.array(
            [
                entry_population_outcome_prob(pts[k], cfg.theta, cfg.select_prob)
                for k in range(self.n_support)
            ]
        )


def _draw_counts(tables: EntryTables, n: int, stream: Stream):
    """Sample (cell sizes, (0,1)-outcome counts) for one replication."""
    rng = stream.generator()
    nk = rng.multinomial(n, tables.pz)
    c01 = rng.binomial(nk, tables.p01_true)
    return nk, c01


def _pooled_simulators(tables: EntryTables, nk, n_draws: int, stream: Stream):
    """Frequency-simulated (H1, H2) per covariate cell from the pooled
    n_k * R draws; empty cells are returned as nan."""
    rng = stream.generator()
    h1 = np.full(tables.n_support, np.nan)
    h2 = np.full(tables.n_support, np.nan)
    for k in range(tables.n_support):
        if nk[k] == 0:
            continue
        total = int(nk[k]) * n_draws
        counts = rng.multinomial(total, tables.cell_probs[k])
        h1[k] = counts[H1_CELLS_ARR].sum() / total
        h2[k] = h1[k] - counts[MULT_CELL] / total
    return h1, h2


def _moment_arrays(nk, c01, n, h1, h2):
    """Sample moments and within-cell second-moment sums given the (exact
    or simulated) entry probabilities."""
    rest = nk - c01
    k_support = nk.shape[0]
    mbar = np.empty(2 * k_support)
    mbar[0::2] = (c01 - nk * h1) / n
    mbar[1::2] = (nk * h2 - c01) / n
    s11 = c01 * (1.0 - h1) ** 2 + rest * h1**2
    s12 = c01 * (1.0 - h1) * (h2 - 1.0) + rest * (-h1) * h2
    s22 = c01 * (h2 - 1.0) ** 2 + rest * h2**2
    return mbar, np.stack([s11, s12, s22], axis=1)


def _assemble_sigma(mbar, blocks, n, alive_pairs):
    """Covariance (divisor n) restricted to the alive moment pairs."""
    idx = np.flatnonzero(np.repeat(alive_pairs, 2))
    sigma = np.zeros((idx.size, idx.size))
    pos = 0
    for k in np.flatnonzero(alive_pairs):
        s11, s12, s22 = blocks[k]
        sigma[pos, pos] = s11 / n
        sigma[pos, pos + 1] = sigma[pos + 1, pos] = s12 / n
        sigma[pos + 1, pos + 1] = s22 / n
        pos += 2
    m_alive = mbar[idx]
    sigma -= np.outer(m_alive, m_alive)
    return idx, m_alive, sigma


def _selection(m, vdiag, n, kappa_rule):
    kappa = kappa_value(kappa_rule, n)
    xi = math.sqrt(n) * m / np.sqrt(vdiag) / kappa
    return xi >= -1.0


def entry_rep(cell: Cell, tables: EntryTables, alpha: float, rep_stream: Stream):
    """One replication: (covered at theta, selection disagreement or None).

    The statistic is the cone-projection QLR against the determinant-
    floored covariance; the critical value is the moment-selection
    bootstrap quantile.  Simulated cells also report whether the selected
    set differs between the analytic and simulated studentized moments on
    the same data.
    """
    n = cell.n_obs
    method = cell.method
    nk, c01 = _draw_counts(tables, n, rep_stream.child("data"))
    alive = nk >= 1

    if cell.n_draws is None:
        h1, h2 = tables.h1, tables.h2
        disagree = None
    else:
        h1, h2 = _pooled_simulators(tables, nk, cell.n_draws, rep_stream.child("sims", cell.n_draws))
        disagree = _selection_disagreement(tables, nk, c01, n, h1, h2, alive, method.kappa_rule)
        if not alive.all():
            # some cell has no draws to simulate from: the statistic is
            # undefined and the parameter cannot be accepted
            return False, disagree

    mbar, blocks = _moment_arrays(nk, c01, n, np.where(alive, h1, 0.0), np.where(alive, h2, 0.0))
    idx, m_alive, sigma = _assemble_sigma(mbar, blocks, n, alive)
    vdiag = np.diag(sigma).copy()
    keep = vdiag > 0.0
    if not keep.all():
        idx, m_alive, vdiag = idx[keep], m_alive[keep], vdiag[keep]
        sigma = sigma[np.ix_(keep, keep)]

    stats = MomentStats(mbar=m_alive, sigma=sigma, n=n)
    sigma_t = regularized_covariance(stats)
    root_n = math.sqrt(n)
    statistic = _QlrSolver(sigma_t).value(root_n * m_alive)

    selected = np.flatnonzero(_selection(m_alive, vdiag, n, method.kappa_rule))
    if selected.size == 0:
        return statistic <= 0.0, disagree

    d_t = np.sqrt(np.diag(sigma_t))
    omega_t = sigma_t / np.outer(d_t, d_t)
    solver = _QlrSolver(omega_t[np.ix_(selected, selected)])

    boot = rep_stream.child("boot", method.label, cell.n_draws or "ana")
    mstar, vstar = _bootstrap_arrays(
        tables, nk, c01, n, h1, h2, cell.n_draws, method, boot, method.n_boot
    )
    mstar, vstar = mstar[:, idx], vstar[:, idx]
    peaks = np.empty(method.n_boot)
    for b in range(method.n_boot):
        ok = vstar[b] > 0.0
        sel_b = selected[ok[selected]]
        if sel_b.size == 0:
            peaks[b] = 0.0
            continue
        root = root_n * (mstar[b, sel_b] - m_alive[sel_b]) / np.sqrt(vstar[b, sel_b])
        if sel_b.size == selected.size:
            peaks[b] = solver.value(root)
        else:
            peaks[b] = _QlrSolver(omega_t[np.ix_(sel_b, sel_b)]).value(root)
    critical = bootstrap_quantile(peaks, alpha)
    return statistic <= critical, disagree


def _selection_disagreement(tables, nk, c01, n, h1_sim, h2_sim, alive, kappa_rule):
    """Do the analytic and simulated selected sets differ on this sample?
    Compared over the moments each arm can studentize."""
    sets = []
    for h1, h2 in ((tables.h1, tables.h2), (h1_sim, h2_sim)):
        mbar, blocks = _moment_arrays(nk, c01, n, np.where(alive, h1, 0.0), np.where(alive, h2, 0.0))
        idx, m_alive, sigma = _assemble_sigma(mbar, blocks, n, alive)
        keep = np.diag(sigma) > 0.0
        sel = _selection(m_alive[keep], np.diag(sigma)[keep], n, kappa_rule)
        sets.append(set(idx[keep][sel].tolist()))
    return sets[0] != sets[1]


def _bootstrap_arrays(tables, nk, c01, n, h1, h2, n_draws, method, stream: Stream, n_boot):
    """(B, 2K) bootstrap moments and diagonal variances.

    Observations are resampled as one multinomial over the (cell, outcome)
    categories; with the pooled simulators held fixed this reproduces the
    plain nonparametric bootstrap of the estimated moment rows.  With
    redraw_sims the cell simulators are re-estimated from fresh draws in
    every bootstrap replication (the critical-value correction).
    """
    rng = stream.generator()
    k_support = tables.n_support
    joint = np.empty(2 * k_support)
    joint[0::2] = c01 / n
    joint[1::2] = (nk - c01) / n
    counts = rng.multinomial(n, joint, size=n_boot)
    c01_star = counts[:, 0::2]
    rest_star = counts[:, 1::2]
    nk_star = c01_star + rest_star

    if n_draws is None or not method.redraw_sims:
        h1_b = np.broadcast_to(np.where(np.isnan(h1), 0.0, h1), (n_boot, k_support))
        h2_b = np.broadcast_to(np.where(np.isnan(h2), 0.0, h2), (n_boot, k_support))
    else:
        h1_b = np.zeros((n_boot, k_support))
        h2_b = np.zeros((n_boot, k_support))
        for k in range(k_support):
            trials = nk_star[:, k] * n_draws
            draws = rng.multinomial(trials, tables.cell_probs[k])
            with np.errstate(invalid="ignore"):
                h1_b[:, k] = np.where(trials > 0, draws[:, H1_CELLS_ARR].sum(axis=1) / np.maximum(trials, 1), 0.0)
                h2_b[:, k] = h1_b[:, k] - np.where(trials > 0, draws[:, MULT_CELL] / np.maximum(trials, 1), 0.0)

    mstar = np.empty((n_boot, 2 * k_support))
    mstar[:, 0::2] = (c01_star - nk_star * h1_b) / n
    mstar[:, 1::2] = (nk_star * h2_b - c01_star) / n
    s11 = c01_star * (1.0 - h1_b) ** 2 + rest_star * h1_b**2
    s22 = c01_star * (h2_b - 1.0) ** 2 + rest_star * h2_b**2
    vstar = np.empty((n_boot, 2 * k_support))
    vstar[:, 0::2] = s11 / n
    vstar[:, 1::2] = s22 / n
    vstar -= mstar**2
    return mstar, vstar


def entry_level_set_members(tables: EntryTables, n: int, grid, level: float,
                            stream: Stream) -> np.ndarray:
    """Grid membership of the level set of the sum of squared positive
    studentized moments, from one fresh sample with analytic moments.

    Vectorized over the grid: the sample enters only through the cell
    counts, and the moments at any theta are closed-form in them.
    """
    from scipy.special import ndtr

    cfg = tables.cfg
    pts = cfg.support_points()
    nk, c01 = _draw_counts(tables, n, stream.child("data"))
    grid = np.atleast_2d(np.asarray(grid, dtype=float))

    z1 = pts[:, 0][None, :]
    z2 = pts[:, 1][None, :]
    beta = grid[:, 0][:, None]
    delta = grid[:, 1][:, None]
    a = -z1 * beta
    a2 = a - delta
    b = -z2 * beta
    b2 = b - delta
    h1 = ndtr(a2) * (1.0 - ndtr(b))
    h2 = ndtr(a2) * (1.0 - ndtr(b2)) + ndtr(a) * (ndtr(b2) - ndtr(b))

    rest = (nk - c01)[None, :]
    c01_b = c01[None, :]
    nk_b = nk[None, :]
    m_up = (c01_b - nk_b * h1) / n
    m_lo = (nk_b * h2 - c01_b) / n
    v_up = (c01_b * (1.0 - h1) ** 2 + rest * h1**2) / n - m_up**2
    v_lo = (c01_b * (h2 - 1.0) ** 2 + rest * h2**2) / n - m_lo**2

    total = np.zeros(grid.shape[0])
    bad = np.zeros(grid.shape[0], dtype=bool)
    for m, v in ((m_up, v_up), (m_lo, v_lo)):
        ok = v > 0.0
        z = np.where(ok, np.sqrt(n) * m / np.sqrt(np.where(ok, v, 1.0)), 0.0)
        total += np.sum(np.maximum(z, 0.0) ** 2, axis=1)
        bad |= np.any(~ok & (m > 1e-12), axis=1)
    return (total <= level) & ~bad

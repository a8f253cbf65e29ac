"""Two-player entry game with multiple equilibria.

Each player enters when profitable: the monopoly payoff of player j is
z_j * beta + u_j and entry by the rival shifts it by delta < 0.  For some
shock realizations both (1,0) and (0,1) are pure-strategy equilibria; the
data-generating process then plays (1,0) with a fixed probability, but the
econometrician does not use that knowledge, which partially identifies
(beta, delta).  With covariates on a 15-point support and the instrument
indicators 1{Z = z_k}, the testable implications are 30 unconditional
moment inequalities bracketing P(Y = (0,1) | Z) between two entry
probabilities H2 <= P <= H1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from ..core import Dataset, MomentModel
from ..inference import LevelSet
from ..streams import Stream

__all__ = [
    "EntryConfig",
    "EntryObservation",
    "EntryProbabilities",
    "gen_entry_data",
    "equilibrium_outcomes",
    "entry_choice_probs",
    "entry_moment_model",
    "entry_population_outcome_prob",
    "outcome_probabilities",
    "identified_set_grid",
    "identified_set_member",
    "u_cell_probs",
    "H1_CELLS",
    "H2_CELLS",
]

# outcome codes
Y00, Y01, Y10, Y11 = 0, 1, 2, 3

# cells of the 3x3 shock partition (u1 bin * 3 + u2 bin) that make up the
# regions behind the two entry probabilities; the (0,1)-equilibrium region
# is H1 and loses only the multiplicity cell (1,1) -> index 4 to give H2.
H1_CELLS = (1, 2, 4, 5)
H2_CELLS = (1, 2, 5)
MULT_CELL = 4


@dataclass(frozen=True)
class EntryConfig:
    beta: float = 0.9
    delta: float = -0.5
    select_prob: float = 0.7
    z1_support: tuple = (-0.1, -0.5, 0.0, 0.5, 1.0)
    z1_probs: tuple = (0.1, 0.1, 0.1, 0.1, 0.6)
    z2_support: tuple = (-0.5, 0.0, 0.5)
    z2_probs: tuple = (0.1, 0.8, 0.1)

    def __post_init__(self):
        if self.delta >= 0.0:
            raise ValueError("delta must be negative")
        if not 0.0 <= self.select_prob <= 1.0:
            raise ValueError("select_prob must lie in [0, 1]")
        for probs in (self.z1_probs, self.z2_probs):
            if abs(sum(probs) - 1.0) > 1e-12:
                raise ValueError("marginal probabilities must sum to one")

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.beta, self.delta])

    @property
    def n_support(self) -> int:
        return len(self.z1_support) * len(self.z2_support)

    @property
    def n_moments(self) -> int:
        return 2 * self.n_support

    def support_points(self) -> np.ndarray:
        """(K, 2) array of covariate pairs, k = i1 * len(z2) + i2."""
        z1 = np.repeat(self.z1_support, len(self.z2_support))
        z2 = np.tile(self.z2_support, len(self.z1_support))
        return np.column_stack([z1, z2])

    def support_probs(self) -> np.ndarray:
        p1 = np.repeat(self.z1_probs, len(self.z2_probs))
        p2 = np.tile(self.z2_probs, len(self.z1_probs))
        return p1 * p2

    def z_index(self, z) -> int:
        pts = self.support_points()
        hit = np.flatnonzero(np.all(np.abs(pts - np.asarray(z, dtype=float)) < 1e-9, axis=1))
        if hit.size != 1:
            raise ValueError(f"covariate {z!r} is not on the support")
        return int(hit[0])


@dataclass(frozen=True)
class EntryObservation:
    y: tuple  # (y1, y2) in {0,1}^2
    z: tuple  # (z1, z2) on the support


@dataclass(frozen=True)
class EntryProbabilities:
    h1: float  # upper bound on P(Y=(0,1)|z)
    h2: float  # lower bound


def _cuts(z, theta):
    """Entry thresholds: (a, a2) for player 1 and (b, b2) for player 2,
    where a2 - a = b2 - b = -delta > 0."""
    beta, delta = float(theta[0]), float(theta[1])
    z = np.asarray(z, dtype=float)
    a = -z[..., 0] * beta
    b = -z[..., 1] * beta
    return a, a - delta, b, b - delta


def equilibrium_outcomes(u1, u2, z, theta, play_10) -> np.ndarray:
    """Outcome codes (0:(0,0), 1:(0,1), 2:(1,0), 3:(1,1)) for shock arrays
    at a common covariate point; play_10 is the boolean selection in the
    multiplicity region."""
    a, a2, b, b2 = _cuts(np.asarray(z, dtype=float), theta)
    return _outcome_codes(u1, u2, a, a2, b, b2, np.asarray(play_10, dtype=bool))


def _outcome_codes(u1, u2, a, a2, b, b2, play_10):
    """Vectorized pure-strategy Nash outcomes for delta < 0."""
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    lo1 = u1 <= a
    hi1 = u1 > a2
    lo2 = u2 <= b
    hi2 = u2 > b2
    mid1 = ~lo1 & ~hi1
    mid2 = ~lo2 & ~hi2

    out = np.empty(np.broadcast(u1, u2).shape, dtype=np.int8)
    out[...] = Y01
    out[lo1 & lo2] = Y00
    out[hi1 & hi2] = Y11
    out[(mid1 | hi1) & lo2] = Y10
    out[hi1 & mid2] = Y10
    mult = mid1 & mid2
    out[mult & play_10] = Y10
    out[mult & ~play_10] = Y01
    return out


def gen_entry_data(cfg: EntryConfig, n: int, stream: Stream) -> Dataset:
    """Draw covariates from the product law, bivariate standard normal
    shocks, and play the selected equilibrium."""
    pts = cfg.support_points()
    rng_z = stream.child("z").generator()
    z_idx = rng_z.choice(cfg.n_support, size=n, p=cfg.support_probs())
    rng_u = stream.child("u").generator()
    u = rng_u.standard_normal((n, 2))
    rng_s = stream.child("selection").generator()
    play_10 = rng_s.random(n) < cfg.select_prob

    z = pts[z_idx]
    a, a2, b, b2 = _cuts(z, cfg.theta)
    codes = _outcome_codes(u[:, 0], u[:, 1], a, a2, b, b2, play_10)
    y_pairs = ((0, 0), (0, 1), (1, 0), (1, 1))
    obs = tuple(
        EntryObservation(y_pairs[codes[i]], (float(z[i, 0]), float(z[i, 1]))) for i in range(n)
    )
    return Dataset(obs)


def entry_choice_probs(z, theta, mode: str = "analytic", n_draws: int = None,
                       stream: Stream = None) -> EntryProbabilities:
    """Entry-probability bounds at one covariate point.

    Analytic mode multiplies univariate normal cdfs over the defining
    rectangles; frequency mode averages the region indicators over
    simulated shocks.
    """
    a, a2, b, b2 = _cuts(np.asarray(z, dtype=float), theta)
    if mode == "analytic":
        h1 = ndtr(a2) * (1.0 - ndtr(b))
        h2 = ndtr(a2) * (1.0 - ndtr(b2)) + ndtr(a) * (ndtr(b2) - ndtr(b))
        return EntryProbabilities(float(h1), float(h2))
    if mode == "frequency":
        if n_draws is None or stream is None:
            raise ValueError("frequency mode needs n_draws and a stream")
        u = stream.generator().standard_normal((n_draws, 2))
        in_h1 = (u[:, 0] <= a2) & (u[:, 1] > b)
        in_h2 = in_h1 & ~((u[:, 0] > a) & (u[:, 1] <= b2))
        return EntryProbabilities(float(in_h1.mean()), float(in_h2.mean()))
    raise ValueError(f"unknown mode {mode!r}")


def u_cell_probs(z, theta) -> np.ndarray:
    """Probabilities of the 3x3 shock rectangles cut at the entry
    thresholds (u1 bin * 3 + u2 bin); sufficient statistics for every
    region indicator the model uses."""
    a, a2, b, b2 = _cuts(np.asarray(z, dtype=float), theta)
    p1 = np.array([ndtr(a), ndtr(a2) - ndtr(a), 1.0 - ndtr(a2)])
    p2 = np.array([ndtr(b), ndtr(b2) - ndtr(b), 1.0 - ndtr(b2)])
    return np.outer(p1, p2).ravel()


def entry_moment_model(cfg: EntryConfig) -> MomentModel:
    """The 2K = 30 instrumented inequalities
    E[(1{Y=(0,1)} - H1(Z)) 1{Z=z_k}] <= 0 and
    E[(H2(Z) - 1{Y=(0,1)}) 1{Z=z_k}] <= 0,
    with per-draw indicator kernels so a simulation panel yields the
    frequency-simulator versions of H1 and H2."""
    pts = cfg.support_points()
    n_support = cfg.n_support

    def kernel(obs, u, theta):
        k = cfg.z_index(obs.z)
        a, a2, b, b2 = _cuts(np.asarray(obs.z, dtype=float), theta)
        y01 = 1.0 if obs.y == (0, 1) else 0.0
        in_h1 = 1.0 if (u[0] <= a2 and u[1] > b) else 0.0
        in_h2 = in_h1 if not (u[0] > a and u[1] <= b2) else 0.0
        vec = np.zeros(2 * n_support)
        vec[2 * k] = y01 - in_h1
        vec[2 * k + 1] = in_h2 - y01
        return vec

    def shock_sampler(obs, rng):
        return rng.standard_normal(2)

    def analytic_moment(obs, theta):
        k = cfg.z_index(obs.z)
        probs = entry_choice_probs(obs.z, theta)
        y01 = 1.0 if obs.y == (0, 1) else 0.0
        vec = np.zeros(2 * n_support)
        vec[2 * k] = y01 - probs.h1
        vec[2 * k + 1] = probs.h2 - y01
        return vec

    return MomentModel(
        n_moments=2 * n_support,
        dim_theta=2,
        kernel=kernel,
        shock_sampler=shock_sampler,
        analytic_moment=analytic_moment,
    )


def entry_population_outcome_prob(z, theta_true, select_prob: float) -> float:
    """P(Y = (0,1) | z) under the true parameter and selection rule:
    the mass where (0,1) is the unique equilibrium plus the unselected
    share of the multiplicity region."""
    probs = entry_choice_probs(z, theta_true)
    cells = u_cell_probs(z, theta_true)
    return probs.h2 + (1.0 - select_prob) * float(cells[MULT_CELL])


def outcome_probabilities(z, theta, select_prob: float) -> np.ndarray:
    """Population outcome distribution (p00, p01, p10, p11) at one z."""
    cells = u_cell_probs(z, theta)
    p00 = cells[0]
    p11 = cells[8]
    p01 = entry_population_outcome_prob(z, theta, select_prob)
    return np.array([p00, p01, 1.0 - p00 - p01 - p11, p11])


def identified_set_member(cfg: EntryConfig, theta_grid) -> np.ndarray:
    """Population membership H2(z;theta) <= P((0,1)|z) <= H1(z;theta) at
    every support point, for each grid row."""
    grid = np.atleast_2d(np.asarray(theta_grid, dtype=float))
    pts = cfg.support_points()
    p01 = np.array(
        [entry_population_outcome_prob(pts[k], cfg.theta, cfg.select_prob) for k in range(len(pts))]
    )
    member = np.empty(grid.shape[0], dtype=bool)
    for g in range(grid.shape[0]):
        a, a2, b, b2 = _cuts(pts, grid[g])
        h1 = ndtr(a2) * (1.0 - ndtr(b))
        h2 = ndtr(a2) * (1.0 - ndtr(b2)) + ndtr(a) * (ndtr(b2) - ndtr(b))
        member[g] = bool(np.all(h2 <= p01 + 1e-12) and np.all(p01 <= h1 + 1e-12))
    return member


def identified_set_grid(cfg: EntryConfig, theta_grid) -> LevelSet:
    """Analytic identified set evaluated on a parameter grid."""
    grid = np.atleast_2d(np.asarray(theta_grid, dtype=float))
    if grid.shape[0] == 0:
        raise ValueError("grid is empty")
    return LevelSet(grid=grid, member=identified_set_member(cfg, grid), level=0.0)

"""Moment-model abstraction: simulated panels, sample moments, covariance
estimation, studentization, and bootstrap resampling.

Observation records are opaque here; concrete models (see `momineq.models`)
decide their own layout.  Every operation is a pure function of its inputs
and an explicit random `Stream`, so values can be shared freely across
parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .streams import Stream

__all__ = [
    "MomentModel",
    "Dataset",
    "SimPanel",
    "MomentStats",
    "ConformanceError",
    "DegenerateMomentError",
    "DegenerateSampleError",
    "simulate_panel",
    "sample_moments",
    "per_observation_moments",
    "analytic_per_observation_moments",
    "covariance",
    "moment_stats",
    "stats_from_per_obs",
    "covariance_from_rows",
    "regularized_covariance",
    "studentized_slackness",
    "bootstrap_resample",
]

# determinant floor of the Andrews-Barwick covariance adjustment
DET_FLOOR = 0.012


class ConformanceError(ValueError):
    """Inputs that should describe the same sample do not line up."""


class DegenerateMomentError(ValueError):
    """A moment has zero estimated variance; downstream studentization
    would divide by zero."""


class DegenerateSampleError(ValueError):
    """Sample too small for the requested estimator."""


@dataclass(frozen=True)
class MomentModel:
    """A J-vector of moment kernels with a conditional shock simulator.

    kernel(x, u, theta) returns the J per-draw moment contributions;
    shock_sampler(x, rng) draws one shock from P(.|x); analytic_moment,
    when available, is the exact conditional expectation of the kernel
    over the shock law.
    """

    n_moments: int
    dim_theta: int
    kernel: Callable[[Any, Any, np.ndarray], np.ndarray]
    shock_sampler: Callable[[Any, np.random.Generator], Any]
    analytic_moment: Optional[Callable[[Any, np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class Dataset:
    """An i.i.d. sample of opaque observation records."""

    observations: tuple

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(self.observations))
        if len(self.observations) < 1:
            raise DegenerateSampleError("dataset is empty")

    @property
    def n(self) -> int:
        return len(self.observations)


@dataclass(frozen=True)
class SimPanel:
    """n x R panel of shocks; row i is conditioned on observation i."""

    draws: tuple  # draws[i][r]
    n_draws: int

    def __post_init__(self):
        object.__setattr__(self, "draws", tuple(tuple(row) for row in self.draws))
        if self.n_draws < 1:
            raise ValueError("need at least one draw per observation")

    @property
    def n(self) -> int:
        return len(self.draws)


@dataclass(frozen=True)
class MomentStats:
    """Sample moment vector and covariance pieces at a fixed parameter."""

    mbar: np.ndarray
    sigma: np.ndarray
    vdiag: np.ndarray = field(default=None)
    omega: np.ndarray = field(default=None)
    n: int = 0

    def __post_init__(self):
        mbar = np.asarray(self.mbar, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        object.__setattr__(self, "mbar", mbar)
        object.__setattr__(self, "sigma", sigma)
        if self.vdiag is None:
            object.__setattr__(self, "vdiag", np.diag(sigma).copy())
        if self.omega is None:
            v = self.vdiag
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(v > 0.0, 1.0 / np.sqrt(np.where(v > 0, v, 1.0)), 0.0)
            omega = sigma * np.outer(scale, scale)
            omega[np.diag_indices_from(omega)] = np.where(v > 0.0, 1.0, 0.0)
            object.__setattr__(self, "omega", omega)

    @property
    def n_moments(self) -> int:
        return self.mbar.shape[0]


def simulate_panel(model: MomentModel, data: Dataset, n_draws: int, stream: Stream) -> SimPanel:
    """Draw an n x R panel of shocks, row i from P(.|X_i).

    Each row uses its own substream keyed by the observation index, so the
    panel is reproducible independently of traversal order.
    """
    if n_draws < 1:
        raise ValueError("need at least one draw per observation")
    rows = []
    for i, obs in enumerate(data.observations):
        rng = stream.child(i).generator()
        rows.append(tuple(model.shock_sampler(obs, rng) for _ in range(n_draws)))
    return SimPanel(tuple(rows), n_draws)


def per_observation_moments(model: MomentModel, data: Dataset, panel: SimPanel, theta) -> np.ndarray:
    """n x J matrix of within-observation simulation averages of the kernel."""
    if panel.n != data.n:
        raise ConformanceError(f"panel has {panel.n} rows but data has {data.n}")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    out = np.empty((data.n, model.n_moments))
    for i, obs in enumerate(data.observations):
        acc = np.zeros(model.n_moments)
        for u in panel.draws[i]:
            acc += np.asarray(model.kernel(obs, u, theta), dtype=float)
        out[i] = acc / panel.n_draws
    return out


def analytic_per_observation_moments(model: MomentModel, data: Dataset, theta) -> np.ndarray:
    """n x J matrix of exact conditional moments (needs analytic_moment)."""
    if model.analytic_moment is None:
        raise ValueError("model has no analytic moment")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    return np.stack(
        [np.asarray(model.analytic_moment(obs, theta), dtype=float) for obs in data.observations]
    )


def sample_moments(model: MomentModel, data: Dataset, panel: SimPanel, theta) -> np.ndarray:
    """(nR)^{-1} sum_i sum_r M(X_i, u_ir, theta), componentwise."""
    return per_observation_moments(model, data, panel, theta).mean(axis=0)


def covariance_from_rows(rows: np.ndarray, mbar: np.ndarray) -> np.ndarray:
    n = rows.shape[0]
    if n < 2:
        raise DegenerateSampleError("covariance needs n >= 2")
    centered = rows - mbar
    return centered.T @ centered / n  # divisor n, not n-1


def covariance(model: MomentModel, data: Dataset, panel: SimPanel, theta, mbar) -> np.ndarray:
    """Sample covariance of the within-observation moment averages,
    with divisor n."""
    rows = per_observation_moments(model, data, panel, theta)
    return covariance_from_rows(rows, np.asarray(mbar, dtype=float))


def stats_from_per_obs(rows: np.ndarray) -> MomentStats:
    """Build MomentStats from an n x J matrix of per-observation moments."""
    rows = np.asarray(rows, dtype=float)
    mbar = rows.mean(axis=0)
    sigma = covariance_from_rows(rows, mbar)
    return MomentStats(mbar=mbar, sigma=sigma, n=rows.shape[0])


def moment_stats(model: MomentModel, data: Dataset, panel: SimPanel, theta) -> MomentStats:
    """Sample moments plus covariance pieces in one pass."""
    return stats_from_per_obs(per_observation_moments(model, data, panel, theta))


def regularized_covariance(stats: MomentStats) -> np.ndarray:
    """Covariance with the determinant-floor diagonal adjustment:
    Sigma + max(0.012 - det(Omega), 0) * diag(Sigma)."""
    if np.any(stats.vdiag <= 0.0):
        bad = int(np.flatnonzero(stats.vdiag <= 0.0)[0])
        raise DegenerateMomentError(f"moment {bad} has zero variance")
    bump = max(DET_FLOOR - float(np.linalg.det(stats.omega)), 0.0)
    return stats.sigma + bump * np.diag(stats.vdiag)


def studentized_slackness(stats: MomentStats, kappa: float) -> np.ndarray:
    """xi_j = kappa^{-1} sqrt(n) mbar_j / sigma_j."""
    if kappa <= 0.0:
        raise ValueError("kappa must be positive")
    if np.any(stats.vdiag <= 0.0):
        bad = int(np.flatnonzero(stats.vdiag <= 0.0)[0])
        raise DegenerateMomentError(f"moment {bad} has zero variance")
    return np.sqrt(stats.n) * stats.mbar / np.sqrt(stats.vdiag) / kappa


def bootstrap_resample(
    data: Dataset, model: MomentModel, n_draws: int, stream: Stream
) -> tuple[Dataset, SimPanel]:
    """Resample observations with replacement and draw a fresh simulation
    panel conditioned on the resampled records.

    Simulation draws are never reused across bootstrap replications; each
    resampled observation gets new shocks from P(.|X*_i).
    """
    rng = stream.child("indices").generator()
    idx = rng.integers(0, data.n, size=data.n)
    resampled = Dataset(tuple(data.observations[i] for i in idx))
    panel = simulate_panel(model, resampled, n_draws, stream.child("panel"))
    return resampled, panel

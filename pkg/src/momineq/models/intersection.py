"""Intersection-of-upper-bounds model.

A scalar parameter is restricted by J inequalities
theta - E[1{u_j < X_j}] <= 0 with X and u independent standard normal
J-vectors, so every bound equals 1/2 and the identified set is
(-inf, 1/2].  Optional twists: the first few bounds can be made locally
slack by shifting the mean of their X column by 1/sqrt(n), and the exact
conditional moment Phi(X_j) can be replaced by a plug-in estimate from an
independent first-stage sample ("predicted variables").
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr, ndtri

from ..core import Dataset, MomentModel
from ..inference import bootstrap_quantile
from ..streams import Stream

__all__ = [
    "FirstStage",
    "IntersectionConfig",
    "IntersectionObservation",
    "gen_intersection_data",
    "intersection_moment_model",
    "table1_critical_value",
]


@dataclass(frozen=True)
class FirstStage:
    """Auxiliary sample size for the predicted-moment variant."""

    n_aux: int

    def __post_init__(self):
        if self.n_aux < 2:
            raise ValueError("first-stage sample needs n_aux >= 2")


@dataclass(frozen=True)
class IntersectionConfig:
    n_moments: int
    n_obs: int
    slack_count: int = 0
    slack_shift: Optional[float] = None  # defaults to 1/sqrt(n)
    first_stage: Optional[FirstStage] = None

    def __post_init__(self):
        if not 0 <= self.slack_count <= self.n_moments:
            raise ValueError("slack_count must lie in [0, J]")
        if self.slack_shift is None:
            object.__setattr__(self, "slack_shift", 1.0 / math.sqrt(self.n_obs))

    @property
    def theta_upper(self) -> float:
        """Right endpoint of the identified set: min_j E[Phi(X_j)].

        Shifted columns have E[Phi(X_j + d)] = Phi(d / sqrt(2)) > 1/2, so
        the minimum stays at the unshifted bounds whenever any exist.
        """
        if self.slack_count >= self.n_moments:
            return float(ndtr(self.slack_shift / math.sqrt(2.0)))
        return 0.5

    def column_shifts(self) -> np.ndarray:
        shifts = np.zeros(self.n_moments)
        shifts[: self.slack_count] = self.slack_shift
        return shifts


@dataclass(frozen=True)
class IntersectionObservation:
    x: np.ndarray                       # (J,)
    predicted: Optional[np.ndarray] = None  # first-stage estimates of Phi(x)


def gen_intersection_data(cfg: IntersectionConfig, stream: Stream) -> Dataset:
    """Draw the i.i.d. sample; columns below slack_count get the mean shift.

    With a first stage configured, an independent auxiliary sample of
    n_aux standard normals per bound is drawn and the empirical cdf values
    at each X_{i,j} are stored as the predicted moments (error of order
    n_aux^{-1/2})."""
    rng = stream.child("x").generator()
    x = rng.standard_normal((cfg.n_obs, cfg.n_moments)) + cfg.column_shifts()
    predicted = None
    if cfg.first_stage is not None:
        aux_rng = stream.child("first_stage").generator()
        aux = np.sort(aux_rng.standard_normal((cfg.n_moments, cfg.first_stage.n_aux)), axis=1)
        predicted = np.empty_like(x)
        for j in range(cfg.n_moments):
            predicted[:, j] = np.searchsorted(aux[j], x[:, j]) / cfg.first_stage.n_aux
    obs = tuple(
        IntersectionObservation(x[i].copy(), None if predicted is None else predicted[i].copy())
        for i in range(cfg.n_obs)
    )
    return Dataset(obs)


def intersection_moment_model(cfg: IntersectionConfig) -> MomentModel:
    """J-moment model with kernel theta - 1{u < x} and exact conditional
    moment theta - Phi(x); shocks are standard normal and independent of x."""
    j = cfg.n_moments

    def kernel(obs, u, theta):
        return theta[0] - (u < obs.x).astype(float)

    def shock_sampler(obs, rng):
        return rng.standard_normal(j)

    def analytic_moment(obs, theta):
        return theta[0] - ndtr(obs.x)

    return MomentModel(
        n_moments=j,
        dim_theta=1,
        kernel=kernel,
        shock_sampler=shock_sampler,
        analytic_moment=analytic_moment,
    )


def table1_critical_value(
    n_moments: int,
    alpha: float,
    mode: str = "exact",
    stream: Optional[Stream] = None,
    draws: int = 100_000,
) -> float:
    """(1 - alpha) quantile of the max of J independent N(0, Var(Phi(X)))
    variables, Var(Phi(X)) = 1/12 by the probability integral transform.

    The exact mode inverts P(max <= c) = Phi(c * sqrt(12))^J in closed
    form; the simulation mode mirrors a Monte Carlo approximation of the
    same quantile.
    """
    if n_moments < 1:
        raise ValueError("need at least one moment")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    sd = math.sqrt(1.0 / 12.0)
    if mode == "exact":
        return float(ndtri((1.0 - alpha) ** (1.0 / n_moments)) * sd)
    if mode == "simulate":
        if stream is None:
            raise ValueError("simulation mode needs a stream")
        rng = stream.generator()
        peaks = rng.standard_normal((draws, n_moments)).max(axis=1) * sd
        return bootstrap_quantile(peaks, alpha)
    raise ValueError(f"unknown mode {mode!r}")

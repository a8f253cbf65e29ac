"""Cell execution: replication loops, worker pools, and aggregation.

Replication k of a cell draws all of its randomness from a substream
keyed by (model, design, k) -- never by the worker that happens to run
it -- so results are identical for any `jobs` setting.  Cells that share
a design (same J, n, slack) also share the data substream, which pairs
the analytic and simulated columns of the coverage tables by common
random numbers.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import MomentStats, studentized_slackness
from ..models.entry import EntryConfig
from ..models.intersection import FirstStage, IntersectionConfig
from ..streams import Stream
from .config import Cell, ExperimentConfig
from .entry_cells import ENTRY_THETA_UPPER, EntryTables, entry_rep
from .intersection_cells import intersection_rep

__all__ = ["CellResult", "run_coverage_cell", "run_experiment", "selection_disagreement", "default_jobs"]


@dataclass(frozen=True)
class CellResult:
    """Aggregated Monte Carlo outputs for one cell."""

    model: str
    n_obs: int
    n_draws: Optional[int]
    n_moments: int
    method: str
    mu: Optional[float]
    kappa_rule: Optional[str]
    reps: int
    coverage: float
    median_excess_length: Optional[float]
    selection_disagreements: Optional[int]
    seed: int
    wall_seconds: float


def default_jobs() -> int:
    return max(1, min(4, os.cpu_count() or 1))


def selection_disagreement(analytic_stats: MomentStats, simulated_stats: MomentStats,
                           kappa: float) -> bool:
    """True iff the t-test selection sets {j : xi_j >= -1} differ."""
    if analytic_stats.n_moments != simulated_stats.n_moments:
        raise ValueError("stats must cover the same moments")
    sel_a = studentized_slackness(analytic_stats, kappa) >= -1.0
    sel_s = studentized_slackness(simulated_stats, kappa) >= -1.0
    return bool(np.any(sel_a != sel_s))


def _intersection_cfg(cell: Cell, params: dict) -> IntersectionConfig:
    first_stage = params.get("first_stage")
    return IntersectionConfig(
        n_moments=cell.n_moments,
        n_obs=cell.n_obs,
        slack_count=cell.slack_count,
        first_stage=None if first_stage is None else FirstStage(int(first_stage)),
    )


def _entry_cfg(params: dict) -> EntryConfig:
    keys = ("beta", "delta", "select_prob")
    return EntryConfig(**{k: params[k] for k in keys if k in params})


def _run_block(cell: Cell, params: dict, alpha: float, master_seed: int, lo: int, hi: int):
    """Replications [lo, hi) of one cell; returns per-rep arrays."""
    master = Stream.from_seed(master_seed)
    size = hi - lo
    covered = np.zeros(size, dtype=bool)
    endpoint = np.full(size, np.nan)
    disagree = np.full(size, -1, dtype=np.int8)

    if cell.model == "intersection":
        cfg = _intersection_cfg(cell, params)
        for k in range(lo, hi):
            rep_stream = master.child(
                "intersection", cell.n_moments, cell.n_obs, cell.slack_count, k
            )
            cov, end = intersection_rep(cell, cfg, alpha, rep_stream)
            covered[k - lo] = cov
            endpoint[k - lo] = end
    else:
        tables = EntryTables(_entry_cfg(params), params.get("theta", ENTRY_THETA_UPPER))
        for k in range(lo, hi):
            rep_stream = master.child("entry", cell.n_obs, k)
            cov, dis = entry_rep(cell, tables, alpha, rep_stream)
            covered[k - lo] = cov
            if dis is not None:
                disagree[k - lo] = int(dis)
    return covered, endpoint, disagree


def run_coverage_cell(
    cell: Cell,
    reps: int,
    alpha: float,
    master_seed: int,
    jobs: int = 1,
    params: Optional[dict] = None,
) -> CellResult:
    """Run every replication of one cell and aggregate.

    Coverage is the fraction of replications whose evaluation point lies in
    the confidence set; interval cells also report the median upper
    endpoint minus the identified set's right endpoint.
    """
    params = params or {}
    start = time.perf_counter()
    blocks = _partition(reps, jobs)
    results = []
    if jobs <= 1 or len(blocks) == 1:
        results = [_run_block(cell, params, alpha, master_seed, lo, hi) for lo, hi in blocks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_run_block, cell, params, alpha, master_seed, lo, hi)
                for lo, hi in blocks
            ]
            results = [f.result() for f in futures]
    covered = np.concatenate([r[0] for r in results])
    endpoint = np.concatenate([r[1] for r in results])
    disagree = np.concatenate([r[2] for r in results])

    if cell.model == "intersection":
        cfg = _intersection_cfg(cell, params)
        excess = float(np.median(endpoint) - cfg.theta_upper)
        count = None
    else:
        excess = None
        count = int((disagree == 1).sum()) if (disagree >= 0).any() else None

    return CellResult(
        model=cell.model,
        n_obs=cell.n_obs,
        n_draws=cell.n_draws,
        n_moments=cell.n_moments,
        method=_method_label(cell),
        mu=cell.method.mu,
        kappa_rule=cell.method.kappa_rule if cell.method.kind == "gms" else None,
        reps=reps,
        coverage=float(covered.mean()),
        median_excess_length=excess,
        selection_disagreements=count,
        seed=master_seed,
        wall_seconds=time.perf_counter() - start,
    )


def _method_label(cell: Cell) -> str:
    if cell.method.kind == "fixed" and cell.n_draws is None:
        return "analytic"
    return cell.method.label


def _partition(reps: int, jobs: int):
    per_block = max(1, math.ceil(reps / (max(1, jobs) * 4)))
    return [(lo, min(lo + per_block, reps)) for lo in range(0, reps, per_block)]


def run_experiment(config: ExperimentConfig, jobs: Optional[int] = None,
                   params: Optional[dict] = None) -> list:
    """Run every cell of an experiment grid."""
    jobs = jobs if jobs is not None else config.parallelism
    return [
        run_coverage_cell(cell, config.reps, config.alpha, config.master_seed, jobs, params)
        for cell in config.cells()
    ]

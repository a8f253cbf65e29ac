"""Result export: a flat CSV per cell plus a structured sidecar for
provenance.

The CSV is a pure function of the results (floats serialized by shortest
round-trip repr), so re-exporting the same results -- or rerunning with a
different worker count -- yields byte-identical files.  Wall-clock
timings are inherently nondeterministic and therefore live only in the
sidecar; the wall_seconds column of the CSV is left empty.
"""

from __future__ import annotations

import json
import os
from typing import Iterable, Optional

from .runner import CellResult

__all__ = ["CSV_HEADER", "export_results", "result_rows"]

CSV_HEADER = (
    "model,n,R,J,method,mu,kappa,reps,coverage,"
    "median_excess_length,selection_disagreements,seed,wall_seconds"
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def result_rows(results: Iterable[CellResult]) -> list:
    rows = []
    for r in results:
        rows.append(
            ",".join(
                _fmt(v)
                for v in (
                    r.model,
                    r.n_obs,
                    r.n_draws,
                    r.n_moments,
                    r.method,
                    r.mu,
                    r.kappa_rule,
                    r.reps,
                    r.coverage,
                    r.median_excess_length,
                    r.selection_disagreements,
                    r.seed,
                    None,  # wall time is provenance, not a result
                )
            )
        )
    return rows


def export_results(results, path: str, fmt: str = "csv", config: Optional[dict] = None) -> None:
    """Write results to `path`; fmt is "csv" or "structured-text".

    A sidecar `<path>.meta.json` stores the run configuration and the
    measured per-cell wall times.
    """
    results = list(results)
    try:
        if fmt == "csv":
            body = "\n".join([CSV_HEADER] + result_rows(results)) + "\n"
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(body)
        elif fmt == "structured-text":
            payload = [r.__dict__ for r in results]
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
        else:
            raise ValueError(f"unknown export format {fmt!r}")
        sidecar = {
            "config": config,
            "wall_seconds": {f"cell_{i}": r.wall_seconds for i, r in enumerate(results)},
        }
        with open(path + ".meta.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path!r}: {exc}") from exc

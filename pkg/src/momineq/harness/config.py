"""Experiment configuration records and their plain-text (JSON) form.

Config files are JSON objects whose keys match the field names of
`ExperimentConfig` exactly; unknown keys are rejected by name so typos
surface immediately.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

__all__ = ["MethodSpec", "Cell", "ExperimentConfig", "ConfigError", "load_config"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MethodSpec:
    """How a cell's critical value is computed.

    kind "fixed"  : constant critical value (c=None means the closed-form
                    least-favorable constant for the intersection model);
    kind "gms"    : moment-selection bootstrap (interval experiments use
                    bootstrap-sd studentization, the entry game the QLR form);
    kind "smooth" : mu-smooth statistic with bias-corrected bootstrap.
    """

    kind: str
    c: Optional[float] = None
    kappa_rule: str = "sqrt_log_n"
    n_boot: int = 1000
    mu: Optional[float] = None
    r2: int = 100
    redraw_sims: bool = True

    def __post_init__(self):
        if self.kind not in ("fixed", "gms", "smooth"):
            raise ConfigError(f"unknown method kind {self.kind!r}")
        if self.kind == "smooth" and (self.mu is None or self.mu <= 0.0):
            raise ConfigError("smooth method needs mu > 0")

    @property
    def label(self) -> str:
        if self.kind == "fixed":
            return "naive"
        if self.kind == "gms":
            return "cv_correction"
        return f"smooth_mu{self.mu:g}"


@dataclass(frozen=True)
class Cell:
    """One Monte Carlo cell: a (model, n, R, J, method) combination.
    n_draws None means the analytic-moment arm."""

    model: str
    n_obs: int
    n_draws: Optional[int]
    n_moments: int
    method: MethodSpec
    slack_count: int = 0

    def __post_init__(self):
        if self.model not in ("intersection", "entry"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.n_draws is not None and self.n_draws < 1:
            raise ConfigError("n_draws must be >= 1 or None")


_FIELDS = (
    "model",
    "n_values",
    "r_values",
    "j_values",
    "reps",
    "alpha",
    "methods",
    "master_seed",
    "parallelism",
)


@dataclass
class ExperimentConfig:
    model: str
    n_values: list
    r_values: list          # entries may be null/"analytic" for the exact arm
    j_values: list
    reps: int
    alpha: float = 0.05
    methods: list = field(default_factory=lambda: [MethodSpec("fixed")])
    master_seed: int = 0
    parallelism: int = 1

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        for grid_name in ("n_values", "j_values"):
            for v in getattr(self, grid_name):
                if int(v) < 1:
                    raise ConfigError(f"{grid_name} entries must be positive")
        self.methods = [
            m if isinstance(m, MethodSpec) else MethodSpec(**m) for m in self.methods
        ]

    def cells(self) -> list:
        """Cartesian grid of cells, analytic arms encoded as n_draws=None."""
        out = []
        for j in self.j_values:
            for n in self.n_values:
                for r in self.r_values:
                    draws = None if r in (None, "analytic") else int(r)
                    for method in self.methods:
                        out.append(
                            Cell(
                                model=self.model,
                                n_obs=int(n),
                                n_draws=draws,
                                n_moments=int(j),
                                method=method,
                            )
                        )
        return out

    def to_json(self) -> str:
        payload = {k: v for k, v in asdict(self).items()}
        return json.dumps(payload, indent=2, sort_keys=True)


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")
    missing = [k for k in ("model", "n_values", "r_values", "j_values", "reps") if k not in raw]
    if missing:
        raise ConfigError(f"missing config key {missing[0]!r}")
    return ExperimentConfig(**raw)

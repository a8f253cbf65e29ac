from .config import Cell, ConfigError, ExperimentConfig, MethodSpec, load_config
from .export import CSV_HEADER, export_results, result_rows
from .runner import (
    CellResult,
    default_jobs,
    run_coverage_cell,
    run_experiment,
    selection_disagreement,
)
from .tables import (
    TABLE_IDS,
    default_theta_grid,
    entry_levelset_consistency,
    reproduce_table,
    table_cells,
)

__all__ = [
    "CSV_HEADER",
    "Cell",
    "CellResult",
    "ConfigError",
    "ExperimentConfig",
    "MethodSpec",
    "TABLE_IDS",
    "default_jobs",
    "default_theta_grid",
    "entry_levelset_consistency",
    "export_results",
    "load_config",
    "reproduce_table",
    "result_rows",
    "run_coverage_cell",
    "run_experiment",
    "selection_disagreement",
    "table_cells",
]

from .engine import (
    IMAGE_1,
    IMAGE_2,
    TERMINATIONS,
    RunResult,
    run_a2r2,
    run_ablated,
)
from .strategies import run_best_of_n, run_cot, run_direct, run_strategy
from .audit import audit_rounds, format_audit_table
from .runner import (
    BatchReport,
    InstanceOutcome,
    format_sweep_table,
    run_batch,
    run_sweep,
)

__all__ = [
    "BatchReport",
    "IMAGE_1",
    "IMAGE_2",
    "InstanceOutcome",
    "RunResult",
    "TERMINATIONS",
    "audit_rounds",
    "format_audit_table",
    "format_sweep_table",
    "run_a2r2",
    "run_ablated",
    "run_batch",
    "run_best_of_n",
    "run_cot",
    "run_direct",
    "run_strategy",
    "run_sweep",
]

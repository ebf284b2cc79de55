"""Batch orchestration: run a whole dataset, write summaries, sweep budgets.

Instances run on a bounded worker pool but all outputs are written in
dataset order and contain no timestamps, so two runs over the same inputs
with the same configuration produce byte-identical summary files.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

from ..backend.base import Backend, BackendError
from ..core.artifacts import instance_dir, write_summary
from ..core.config import RunConfig, dump_config
from ..core.dataset import Dataset
from ..core.types import A2R2Error, Instance
from ..metrics.snapshot import REPORT_COLUMNS
from ..metrics.textual import token_levenshtein
from ..render.service import RenderService
from .engine import RunResult
from .strategies import run_strategy

logger = logging.getLogger(__name__)

SUMMARY_FILENAME = "run-summary.jsonl"
METRICS_FILENAME = "metrics.csv"
CONFIG_FILENAME = "config.yaml"

CSV_COLUMNS = ("id",) + REPORT_COLUMNS + ("m_rouge", "residual_tokens")


@dataclass(frozen=True)
class InstanceOutcome:
    instance_id: str
    result: Optional[RunResult] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.result is not None


@dataclass(frozen=True)
class BatchReport:
    outcomes: tuple[InstanceOutcome, ...]
    aggregate: Optional[dict]
    summary_path: Optional[Path]
    metrics_path: Optional[Path]

    @property
    def failures(self) -> tuple[InstanceOutcome, ...]:
        return tuple(o for o in self.outcomes if not o.ok)


def _residual_tokens(result: RunResult, instance: Instance) -> Optional[int]:
    if instance.ground_truth is None:
        return None
    return token_levenshtein(result.final.tokens, instance.ground_truth.tokens)


def _summary_row(outcome: InstanceOutcome, instance: Instance) -> dict:
    row: dict = {"id": outcome.instance_id}
    if outcome.result is None:
        row["error"] = outcome.error
        return row
    result = outcome.result
    row.update(
        {
            "strategy": result.strategy,
            "termination": result.termination,
            "rounds": len(result.rounds),
            "final_latex": result.final.source,
            "metrics": result.final_metrics,
            "residual_tokens": _residual_tokens(result, instance),
        }
    )
    return row


def _run_one(
    instance: Instance,
    config: RunConfig,
    backend: Backend,
    render_service: RenderService,
    out_dir: Optional[Path],
) -> InstanceOutcome:
    target = instance_dir(out_dir, instance.id) if out_dir is not None else None
    try:
        result = run_strategy(instance, config, backend, render_service, out_dir=target)
        return InstanceOutcome(instance_id=instance.id, result=result)
    except BackendError as exc:
        logger.error("instance %s aborted: %s", instance.id, exc)
        return InstanceOutcome(instance_id=instance.id, error=str(exc))
    except A2R2Error as exc:
        logger.error("instance %s failed: %s", instance.id, exc)
        return InstanceOutcome(instance_id=instance.id, error=str(exc))


def _aggregate(rows: list[dict]) -> Optional[dict]:
    numeric = [row for row in rows if row.get("metrics")]
    if not numeric:
        return None
    agg: dict = {"instances": len(numeric)}
    for column in REPORT_COLUMNS + ("m_rouge",):
        agg[column] = sum(row["metrics"][column] for row in numeric) / len(numeric)
    residuals = [
        row["residual_tokens"] for row in numeric if row.get("residual_tokens") is not None
    ]
    if residuals:
        agg["residual_tokens"] = sum(residuals) / len(residuals)
    return agg


def _write_metrics_csv(path: Path, rows: list[dict], aggregate: Optional[dict]) -> None:
    lines = [",".join(CSV_COLUMNS)]

    def fmt(value) -> str:
        if value is None:
            return ""
        if isinstance(value, float):
            return f"{value:.4f}"
        return str(value)

    for row in rows:
        if not row.get("metrics"):
            continue
        cells = [row["id"]]
        for column in REPORT_COLUMNS + ("m_rouge",):
            cells.append(fmt(row["metrics"][column]))
        cells.append(fmt(row.get("residual_tokens")))
        lines.append(",".join(cells))
    if aggregate is not None:
        cells = ["MEAN"]
        for column in REPORT_COLUMNS + ("m_rouge",):
            cells.append(fmt(aggregate.get(column)))
        cells.append(fmt(aggregate.get("residual_tokens")))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_batch(
    dataset: Dataset,
    config: RunConfig,
    backend: Backend,
    render_service: RenderService,
    out_dir: Optional[Path] = None,
) -> BatchReport:
    """Run every dataset instance and write summary artifacts.

    The backend sees each instance through observe_instance before any run
    starts (a no-op for real backends). Failures abort only their own
    instance; partial round records stay on disk.
    """
    instances = list(dataset)
    for instance in instances:
        backend.observe_instance(instance)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        dump_config(config, out_dir / CONFIG_FILENAME)

    if config.parallel_workers == 1 or len(instances) <= 1:
        outcomes = [
            _run_one(instance, config, backend, render_service, out_dir)
            for instance in instances
        ]
    else:
        with ThreadPoolExecutor(max_workers=config.parallel_workers) as pool:
            outcomes = list(
                pool.map(
                    lambda inst: _run_one(inst, config, backend, render_service, out_dir),
                    instances,
                )
            )

    rows = [
        _summary_row(outcome, instance)
        for outcome, instance in zip(outcomes, instances)
    ]
    aggregate = _aggregate(rows)

    summary_path = metrics_path = None
    if out_dir is not None:
        summary_path = out_dir / SUMMARY_FILENAME
        write_summary(summary_path, rows)
        metrics_path = out_dir / METRICS_FILENAME
        _write_metrics_csv(metrics_path, rows, aggregate)

    return BatchReport(
        outcomes=tuple(outcomes),
        aggregate=aggregate,
        summary_path=summary_path,
        metrics_path=metrics_path,
    )


def run_sweep(
    dataset: Dataset,
    config: RunConfig,
    render_service: RenderService,
    round_limits: Sequence[int],
    backend_factory: Callable[[RunConfig], Backend],
    out_dir: Optional[Path] = None,
) -> list[dict]:
    """Re-run the dataset at several round budgets.

    Each budget gets a fresh backend so scripted state cannot leak between
    sweeps. Returns one row per budget: the aggregate metric means plus the
    mean residual token distance.
    """
    rows: list[dict] = []
    for limit in round_limits:
        sweep_config = config.replace(t_max=limit)
        backend = backend_factory(sweep_config)
        try:
            target = Path(out_dir) / f"rounds_{limit}" if out_dir is not None else None
            report = run_batch(dataset, sweep_config, backend, render_service, target)
        finally:
            backend.close()
        row: dict = {"t_max": limit}
        if report.aggregate:
            row.update(report.aggregate)
        row["failures"] = len(report.failures)
        rows.append(row)
    return rows


def format_sweep_table(rows: list[dict]) -> str:
    columns = ["t_max", "residual_tokens"] + [c for c in REPORT_COLUMNS]
    lines = ["  ".join(f"{c:>15}" for c in columns)]
    for row in rows:
        cells = []
        for column in columns:
            value = row.get(column)
            if isinstance(value, float):
                cells.append(f"{value:>15.4f}")
            else:
                cells.append(f"{str(value) if value is not None else '-':>15}")
        lines.append("  ".join(cells))
    return "\n".join(lines)

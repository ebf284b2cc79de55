"""Command-line interface.

Experiment parameters live in one YAML config (see README for the key
tree); flags are reserved for paths, the seed, verbosity and ``-o
key=value`` overrides. Exit codes: 0 success, 1 partial per-instance
failures, 2 configuration or startup error.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import __version__
from .backend import create_backend
from .core.artifacts import read_rounds
from .core.config import ConfigError, RunConfig, load_config
from .core.dataset import DatasetError, load_dataset
from .core.types import A2R2Error, Instance, LatexDoc, RasterImage
from .curation import (
    CurationError,
    CurationWeights,
    final_scores,
    normalize_edit,
    read_scores,
    select_subset,
    write_provenance,
    write_selection,
)
from .loop.audit import audit_rounds, format_audit_table
from .loop.runner import (
    _write_metrics_csv,
    format_sweep_table,
    run_batch,
    run_sweep,
)
from .loop.strategies import run_strategy
from .metrics.snapshot import REPORT_COLUMNS, score_pair
from .render.service import RenderService, ToolchainError

logger = logging.getLogger(__name__)

STARTUP_ERRORS = (ConfigError, DatasetError, ToolchainError, CurationError)


def _fail_startup(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


def common_options(fn):
    fn = click.option(
        "--config", "config_path", default=None,
        type=click.Path(exists=True, dir_okay=False),
        help="YAML config file.",
    )(fn)
    fn = click.option(
        "-o", "--override", "overrides", multiple=True, metavar="KEY=VALUE",
        help="Config override, dotted keys allowed (render.dpi=150).",
    )(fn)
    fn = click.option("--seed", type=int, default=None, help="Run seed.")(fn)
    fn = click.option("-v", "--verbose", is_flag=True, help="Info-level logging.")(fn)
    return fn


def _setup(config_path, overrides, seed, verbose) -> RunConfig:
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(config_path, list(overrides))
    except STARTUP_ERRORS as exc:
        _fail_startup(str(exc))
    if seed is not None:
        config = config.replace(seed=seed)
    return config


def _services(config: RunConfig):
    try:
        backend = create_backend(config)
        render_service = RenderService()
    except STARTUP_ERRORS as exc:
        _fail_startup(str(exc))
    return backend, render_service


def _load_dataset_or_die(path):
    try:
        dataset = load_dataset(path)
    except STARTUP_ERRORS as exc:
        _fail_startup(str(exc))
    for err in dataset.load_errors:
        logger.warning("dataset line %d (%s): %s", err.line_number, err.instance_id, err.message)
    return dataset


@click.group()
@click.version_option(version=__version__, prog_name="a2r2")
def cli() -> None:
    """Formula image to LaTeX conversion with iterative visual refinement."""


# ------------------------------------------------------------------- infer


@cli.command()
@click.option("--image", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--latex", default=None, help="Ground-truth LaTeX (enables metrics).")
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False))
@common_options
def infer(image, latex, out_dir, config_path, overrides, seed, verbose) -> None:
    """Convert one image; prints the final LaTeX."""
    config = _setup(config_path, overrides, seed, verbose)
    backend, render_service = _services(config)
    instance = Instance(
        id=Path(image).stem,
        image=RasterImage.from_file(image),
        ground_truth=LatexDoc(latex) if latex else None,
    )
    try:
        backend.observe_instance(instance)
    except A2R2Error as exc:
        _fail_startup(str(exc))
    try:
        result = run_strategy(
            instance, config, backend, render_service,
            out_dir=Path(out_dir) if out_dir else None,
        )
    except A2R2Error as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(result.final.source)
    click.echo(f"termination: {result.termination} after {len(result.rounds)} round(s)", err=True)
    if result.final_metrics is not None:
        for key in REPORT_COLUMNS:
            click.echo(f"{key}: {result.final_metrics[key]:.2f}", err=True)


# ------------------------------------------------------------------- batch


@cli.command()
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@common_options
def batch(dataset, out_dir, config_path, overrides, seed, verbose) -> None:
    """Run the configured strategy over a dataset."""
    config = _setup(config_path, overrides, seed, verbose)
    backend, render_service = _services(config)
    data = _load_dataset_or_die(dataset)
    try:
        report = run_batch(data, config, backend, render_service, Path(out_dir))
    except A2R2Error as exc:
        _fail_startup(str(exc))
    click.echo(f"summary: {report.summary_path}")
    if report.aggregate:
        for column in REPORT_COLUMNS:
            click.echo(f"{column}: {report.aggregate[column]:.2f}")
    for outcome in report.failures:
        click.echo(f"failed: {outcome.instance_id}: {outcome.error}", err=True)
    if report.failures or data.load_errors:
        sys.exit(1)


# ----------------------------------------------------------------- metrics


@cli.command()
@click.option("--pred", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Predictions JSONL with id and latex fields.")
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_csv", default=None, type=click.Path(dir_okay=False))
@common_options
def metrics(pred, dataset, out_csv, config_path, overrides, seed, verbose) -> None:
    """Score predictions against dataset ground truth (all seven metrics)."""
    config = _setup(config_path, overrides, seed, verbose)
    try:
        render_service = RenderService()
    except STARTUP_ERRORS as exc:
        _fail_startup(str(exc))
    data = _load_dataset_or_die(dataset)
    predictions: dict[str, str] = {}
    line_number = 0
    try:
        with open(pred, encoding="utf-8") as fh:
            for line_number, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                predictions[str(row["id"])] = str(row["latex"])
    except (OSError, ValueError, KeyError) as exc:
        _fail_startup(f"bad predictions file line {line_number}: {exc}")

    rows = []
    failures = []
    for instance in data:
        if instance.ground_truth is None:
            failures.append((instance.id, "no ground truth"))
            continue
        if instance.id not in predictions:
            failures.append((instance.id, "no prediction"))
            continue
        cand = LatexDoc(predictions[instance.id])
        cand_render = render_service.render_latex(cand, config.render)
        ref_render = render_service.render_latex(instance.ground_truth, config.render)
        snapshot = score_pair(
            cand,
            instance.ground_truth,
            cand_render.image if cand_render.ok else None,
            ref_render.image if ref_render.ok else None,
        )
        rows.append({"id": instance.id, "metrics": snapshot.as_dict()})

    if not rows:
        _fail_startup("no instance could be scored")
    aggregate = {
        column: sum(r["metrics"][column] for r in rows) / len(rows)
        for column in rows[0]["metrics"]
    }
    for column in REPORT_COLUMNS:
        click.echo(f"{column}: {aggregate[column]:.2f}")
    if out_csv:
        _write_metrics_csv(Path(out_csv), rows, {**aggregate, "instances": len(rows)})
        click.echo(f"wrote {out_csv}")
    for instance_id, reason in failures:
        click.echo(f"skipped: {instance_id}: {reason}", err=True)
    if failures or data.load_errors:
        sys.exit(1)


# ------------------------------------------------------------------ curate


@cli.command()
@click.option("--scores", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", required=True, type=int)
@click.option("--direction", type=click.Choice(["asc", "desc"]), default="asc",
              show_default=True,
              help="asc keeps the lowest-scoring (hardest) instances.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--model-weights", default=None,
              help="Comma list overriding the per-model weights.")
@common_options
def curate(scores, k, direction, out_dir, model_weights,
           config_path, overrides, seed, verbose) -> None:
    """Select a difficulty-ranked subset from a scores file."""
    _setup(config_path, overrides, seed, verbose)
    try:
        weights = CurationWeights()
        if model_weights:
            weights = CurationWeights(
                model_weights=tuple(float(x) for x in model_weights.split(","))
            )
        records = normalize_edit(read_scores(scores))
        finals = final_scores(records, weights)
        selected = select_subset(finals, k, direction)
    except (CurationError, ValueError) as exc:
        _fail_startup(str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_selection(out / "selection.txt", selected)
    write_provenance(out / "provenance.json", weights, direction, len(finals), len(selected))
    click.echo(f"selected {len(selected)} of {len(finals)} instances ({direction})")
    for iid in selected[:5]:
        click.echo(f"  {iid}")
    if len(selected) > 5:
        click.echo("  ...")


# ------------------------------------------------------------------- sweep


@cli.command()
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--rounds", required=True, help="Comma list of round budgets, e.g. 1,2,3,5.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@common_options
def sweep(dataset, rounds, out_dir, config_path, overrides, seed, verbose) -> None:
    """Run the whole dataset once per round budget."""
    config = _setup(config_path, overrides, seed, verbose)
    try:
        limits = [int(x) for x in rounds.split(",") if x.strip()]
        if not limits or any(limit < 1 for limit in limits):
            raise ValueError(f"round budgets must be >= 1, got {rounds!r}")
    except ValueError as exc:
        _fail_startup(str(exc))
    try:
        render_service = RenderService()
    except STARTUP_ERRORS as exc:
        _fail_startup(str(exc))
    data = _load_dataset_or_die(dataset)
    try:
        table = run_sweep(
            data, config, render_service, limits,
            backend_factory=create_backend, out_dir=Path(out_dir),
        )
    except A2R2Error as exc:
        _fail_startup(str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(
        json.dumps(table, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    click.echo(format_sweep_table(table))
    if any(row.get("failures") for row in table) or data.load_errors:
        sys.exit(1)


# ------------------------------------------------------------------ ablate


@cli.command()
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@common_options
def ablate(dataset, out_dir, config_path, overrides, seed, verbose) -> None:
    """Run the full loop and its no-localization/no-verification variant."""
    config = _setup(config_path, overrides, seed, verbose)
    if config.strategy != "a2r2":
        _fail_startup("ablate only applies to the a2r2 strategy")
    try:
        render_service = RenderService()
    except STARTUP_ERRORS as exc:
        _fail_startup(str(exc))
    data = _load_dataset_or_die(dataset)
    out = Path(out_dir)
    reports = {}
    try:
        for label, arm in (
            ("full", config.replace(ablate_al_fv=False)),
            ("ablated", config.replace(ablate_al_fv=True)),
        ):
            backend = create_backend(arm)
            try:
                reports[label] = run_batch(data, arm, backend, render_service, out / label)
            finally:
                backend.close()
    except A2R2Error as exc:
        _fail_startup(str(exc))
    for label, report in reports.items():
        agg = report.aggregate or {}
        match = agg.get("match")
        if match is None:
            click.echo(f"{label}: no scored instances")
        else:
            click.echo(f"{label}: mean pixel match {match:.2f}")
    if any(report.failures for report in reports.values()) or data.load_errors:
        sys.exit(1)


# ------------------------------------------------------------------- audit


@cli.command()
@click.option("--run-dir", "run_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@common_options
def audit(run_dir, config_path, overrides, seed, verbose) -> None:
    """Per-round fabricated-feedback rates for a finished run directory."""
    _setup(config_path, overrides, seed, verbose)
    runs = _collect_runs(Path(run_dir))
    if not runs:
        click.echo("no runs found", err=True)
        sys.exit(1)
    rows = audit_rounds(rounds for _, rounds in runs)
    if not rows:
        click.echo("no comparison feedback to audit", err=True)
        sys.exit(1)
    click.echo(format_audit_table(rows))
    out = Path(run_dir) / "audit.json"
    out.write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    click.echo(f"wrote {out}")


def _collect_runs(run_dir: Path):
    runs = []
    for child in sorted(run_dir.iterdir()):
        if not child.is_dir():
            continue
        try:
            records = read_rounds(child)
        except (OSError, ValueError, KeyError) as exc:
            logger.warning("unreadable run %s: %s", child.name, exc)
            continue
        if records:
            runs.append((child.name, records))
    return runs


# ------------------------------------------------------------------ report


@cli.command()
@click.option("--run-dir", "run_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@common_options
def report(run_dir, config_path, overrides, seed, verbose) -> None:
    """Human-readable per-instance timelines for a run directory."""
    _setup(config_path, overrides, seed, verbose)
    base = Path(run_dir)
    runs = _collect_runs(base)
    if not runs:
        click.echo("no runs found", err=True)
        sys.exit(1)
    missing = []
    for name, records in runs:
        click.echo(f"== {name} ==")
        for record in records:
            status = "ok" if record.render_ok else "compile failed"
            n_diff = len(record.diff.items) if record.diff else 0
            n_verified = len(record.verified_diff.items) if record.verified_diff else 0
            line = (
                f"  round {record.round}: render {status}, "
                f"{n_diff} reported, {n_verified} verified"
            )
            if record.region_box:
                line += f", box {record.region_box}"
            if record.used_fallback_regions:
                line += ", fallback regions"
            if record.no_progress:
                line += ", no progress"
            if record.metrics:
                line += f", pixel match {record.metrics['match']:.1f}"
            click.echo(line)
            click.echo(f"    {record.hypothesis}")
        final_path = base / name / "final.tex"
        if final_path.exists():
            click.echo(f"  final: {final_path.read_text(encoding='utf-8').strip()}")
        else:
            missing.append(str(final_path))
        overlays = sorted((base / name).glob("overlay_*.png"))
        if overlays:
            click.echo(f"  overlays: {', '.join(p.name for p in overlays)}")
    for path in missing:
        click.echo(f"missing artifact: {path}", err=True)


def main() -> None:
    cli(prog_name="a2r2")


if __name__ == "__main__":
    main()

"""Single-shot baseline strategies: direct, chain-of-thought, best-of-N.

Each baseline produces a RunResult with exactly one round so batch
reporting treats every strategy uniformly. Baselines never compare or
refine; their termination is always "t_max".
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from ..backend.base import Backend
from ..core.config import COT_SUFFIX, RunConfig
from ..core.types import Instance, LatexDoc
from ..metrics.visual import cw_ssim
from ..render.service import RenderService
from .engine import (
    IMAGE_1,
    RunResult,
    _Emitter,
    _round_metrics,
    render_ground_truth,
    run_a2r2,
)


def _single_round_result(
    instance: Instance,
    config: RunConfig,
    render_service: RenderService,
    strategy: str,
    final: LatexDoc,
    out_dir: Optional[Path],
    notes: tuple[str, ...] = (),
) -> RunResult:
    gt_render = render_ground_truth(instance, config, render_service)
    render = render_service.render_latex(final, config.render)
    emitter = _Emitter(out_dir, save_overlays=False)
    emitter.emit(
        {
            "round": 0,
            "hypothesis": final.source,
            "render_ok": render.ok,
            "render_digest": render.image.digest() if render.ok else None,
            "render_failure_log": None if render.ok else (render.failure_log or ""),
            "metrics": _round_metrics(final, render, instance, gt_render),
            "notes": notes,
        },
        render,
    )
    emitter.finish(final)
    return RunResult(
        instance_id=instance.id,
        strategy=strategy,
        final=final,
        rounds=tuple(emitter.rounds),
        termination="t_max",
    )


def run_direct(
    instance: Instance,
    config: RunConfig,
    backend: Backend,
    render_service: RenderService,
    out_dir: Optional[Path] = None,
) -> RunResult:
    prompt = config.prompts.format("generation", image=IMAGE_1)
    final = backend.generate(instance.image, prompt)
    return _single_round_result(
        instance, config, render_service, "direct", final, out_dir
    )


def run_cot(
    instance: Instance,
    config: RunConfig,
    backend: Backend,
    render_service: RenderService,
    out_dir: Optional[Path] = None,
) -> RunResult:
    prompt = config.prompts.format("generation", image=IMAGE_1)
    prompt = f"{prompt}\n\n{COT_SUFFIX}"
    final = backend.generate(instance.image, prompt)
    return _single_round_result(instance, config, render_service, "cot", final, out_dir)


def run_best_of_n(
    instance: Instance,
    config: RunConfig,
    backend: Backend,
    render_service: RenderService,
    out_dir: Optional[Path] = None,
) -> RunResult:
    """Sample N transcriptions, keep the one whose render is closest to the
    input image under cw_ssim. Samples that fail to compile score 0; ties
    keep the lowest sample index."""
    prompt = config.prompts.format("generation", image=IMAGE_1)
    samples: list[LatexDoc] = []
    scores: list[float] = []
    for _ in range(config.n_samples):
        doc = backend.generate(instance.image, prompt)
        samples.append(doc)
        render = render_service.render_latex(doc, config.render)
        scores.append(cw_ssim(render.image, instance.image) if render.ok else 0.0)
    best = max(range(len(samples)), key=lambda i: scores[i])
    notes = (
        f"best_of_n selected sample {best} of {config.n_samples} "
        f"(score {scores[best]:.4f})",
    )
    return _single_round_result(
        instance, config, render_service, "best_of_n", samples[best], out_dir, notes
    )


def run_strategy(
    instance: Instance,
    config: RunConfig,
    backend: Backend,
    render_service: RenderService,
    out_dir: Optional[Path] = None,
) -> RunResult:
    """Dispatch on config.strategy (the loop honours config.ablate_al_fv)."""
    if config.strategy == "a2r2":
        return run_a2r2(instance, config, backend, render_service, out_dir=out_dir)
    if config.strategy == "direct":
        return run_direct(instance, config, backend, render_service, out_dir=out_dir)
    if config.strategy == "cot":
        return run_cot(instance, config, backend, render_service, out_dir=out_dir)
    if config.strategy == "best_of_n":
        return run_best_of_n(instance, config, backend, render_service, out_dir=out_dir)
    raise ValueError(f"unknown strategy {config.strategy!r}")

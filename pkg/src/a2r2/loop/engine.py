"""The iterative transcription loop.

Round ``t`` renders the current hypothesis, compares the render with the
input image, localizes the reported differences through attention, has the
backend verify them against the cropped regions, and refines the
hypothesis. The final round (``t == t_max``) still renders, compares and
verifies so its record is complete, but never refines: the budget is spent.

Per-round records are persisted as they complete, so an aborted run leaves
its partial history on disk.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..attnloc import NoSalientRegion, localize_verbose, overlay_mask
from ..backend.base import AttentionUnavailable, Backend, resolve_layer_range
from ..core.artifacts import IterationRecord, write_final, write_round
from ..core.config import RunConfig
from ..core.types import Instance, LatexDoc, RasterImage
from ..diff import DiffItem, DiffReport, format_diff
from ..metrics.snapshot import score_pair
from ..render.service import RenderResult, RenderService

logger = logging.getLogger(__name__)

TERMINATIONS = ("no_differences", "t_max", "no_progress", "compile_dead_end")

# image placeholders expand to positional markers; payloads travel separately
IMAGE_1 = "[IMAGE 1]"
IMAGE_2 = "[IMAGE 2]"

_NO_PROGRESS_LIMIT = 2


@dataclass(frozen=True)
class RunResult:
    instance_id: str
    strategy: str
    final: LatexDoc
    rounds: tuple[IterationRecord, ...]
    termination: str

    def __post_init__(self) -> None:
        if self.termination not in TERMINATIONS:
            raise ValueError(f"unknown termination {self.termination!r}")
        if not self.rounds:
            raise ValueError("a run must hold at least one round")
        for expected, record in enumerate(self.rounds):
            if record.round != expected:
                raise ValueError(
                    f"round indices must be consecutive from 0; "
                    f"got {record.round} at position {expected}"
                )
        object.__setattr__(self, "rounds", tuple(self.rounds))

    @property
    def final_metrics(self) -> Optional[dict]:
        return self.rounds[-1].metrics


def _first_line(text: str) -> str:
    for line in text.splitlines():
        line = line.strip()
        if line:
            return line
    return "(empty compiler log)"


def _compile_failure_diff(result: RenderResult) -> DiffReport:
    log = result.failure_log or ""
    return DiffReport(
        items=(
            DiffItem(index=1, description=f"compilation error: {_first_line(log)}"),
        ),
        raw_text=log,
    )


def render_ground_truth(
    instance: Instance, config: RunConfig, render_service: RenderService
) -> Optional[RasterImage]:
    if instance.ground_truth is None:
        return None
    result = render_service.render_latex(instance.ground_truth, config.render)
    if not result.ok:
        logger.warning(
            "ground truth for %s does not compile; visual metrics will be 0",
            instance.id,
        )
        return None
    return result.image


def _round_metrics(
    hypothesis: LatexDoc,
    render: RenderResult,
    instance: Instance,
    gt_render: Optional[RasterImage],
) -> Optional[dict]:
    if instance.ground_truth is None:
        return None
    snapshot = score_pair(
        hypothesis,
        instance.ground_truth,
        render.image if render.ok else None,
        gt_render,
    )
    return snapshot.as_dict()


class _Emitter:
    """Builds records and persists per-round artifacts as the loop runs."""

    def __init__(self, out_dir: Optional[Path], save_overlays: bool):
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.save_overlays = save_overlays
        self.rounds: list[IterationRecord] = []

    def emit(
        self,
        kwargs: dict,
        render: RenderResult,
        regions: Optional[tuple[RasterImage, RasterImage]] = None,
    ) -> IterationRecord:
        record = IterationRecord(**kwargs)
        self.rounds.append(record)
        if self.out_dir is not None:
            write_round(
                self.out_dir,
                record,
                render.image if render.ok else None,
                regions=regions,
            )
        return record

    def overlay(self, round_index: int, image: RasterImage, mask, box) -> None:
        if self.out_dir is None or not self.save_overlays:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        overlay_mask(image, mask, box).save(self.out_dir / f"overlay_{round_index}.png")

    def finish(self, final: LatexDoc) -> None:
        if self.out_dir is not None:
            write_final(self.out_dir, final.source)


def run_a2r2(
    instance: Instance,
    config: RunConfig,
    backend: Backend,
    render_service: RenderService,
    out_dir: Optional[Path] = None,
) -> RunResult:
    """Run the full loop (or its verification-ablated variant) on one instance."""
    ablate = config.ablate_al_fv
    prompts = config.prompts
    strategy = "a2r2_ablated" if ablate else "a2r2"

    hypothesis = backend.generate(
        instance.image, prompts.format("generation", image=IMAGE_1)
    )
    gt_render = render_ground_truth(instance, config, render_service)
    emitter = _Emitter(out_dir, config.save_overlays)
    layer_range: Optional[tuple[int, int]] = None
    termination: Optional[str] = None
    streak = 0

    for t in range(config.t_max + 1):
        render = render_service.render_latex(hypothesis, config.render)
        kwargs: dict = {
            "round": t,
            "hypothesis": hypothesis.source,
            "render_ok": render.ok,
            "render_digest": render.image.digest() if render.ok else None,
            "render_failure_log": None if render.ok else (render.failure_log or ""),
            "metrics": _round_metrics(hypothesis, render, instance, gt_render),
        }
        regions_used: Optional[tuple[RasterImage, RasterImage]] = None
        verified: Optional[DiffReport] = None
        region_a: Optional[RasterImage] = None
        region_b: Optional[RasterImage] = None

        if not render.ok:
            # the compiler log substitutes for the comparison; verification
            # has no rendering to inspect, so it is skipped
            diff = _compile_failure_diff(render)
            verified = diff
            kwargs.update(
                diff=diff,
                verified_diff=verified,
                verification_ran=False,
                notes=("differences synthesized from compiler output",),
            )
            region_a = instance.image
            region_b = RasterImage.blank(8, 8)
            if t == config.t_max:
                emitter.emit(kwargs, render)
                termination = "compile_dead_end"
                break
        else:
            diff = backend.compare(
                instance.image,
                render.image,
                prompts.format("comparison", image_a=IMAGE_1, image_b=IMAGE_2),
            )
            kwargs["diff"] = diff
            if diff.empty:
                kwargs.update(verified_diff=None, verification_ran=False)
                emitter.emit(kwargs, render)
                termination = "no_differences"
                break

            if ablate:
                # ablation: trust the comparison verbatim, refine on the
                # full images
                verified = diff
                kwargs.update(verified_diff=verified, verification_ran=False)
                region_a, region_b = instance.image, render.image
            else:
                if layer_range is None:
                    layer_range = resolve_layer_range(
                        config.layer_range, backend.capabilities()
                    )
                try:
                    stack = backend.fetch_attention(
                        instance.image, format_diff(diff), layer_range
                    )
                    region_a, region_b, box, mask = localize_verbose(
                        instance.image,
                        render.image,
                        stack,
                        percentile=config.percentile,
                        dilation_kernel=config.dilation_kernel,
                    )
                    kwargs.update(
                        region_box=(box.x, box.y, box.w, box.h),
                        attention_grid=(stack.grid_h, stack.grid_w),
                        used_fallback_regions=False,
                    )
                    emitter.overlay(t, instance.image, mask, box)
                except (AttentionUnavailable, NoSalientRegion) as exc:
                    logger.info(
                        "localization unavailable for %s round %d (%s); "
                        "verifying on whole images",
                        instance.id, t, exc,
                    )
                    region_a, region_b = instance.image, render.image
                    kwargs.update(used_fallback_regions=True)
                verified = backend.verify(
                    diff,
                    region_a,
                    region_b,
                    prompts.format(
                        "verification",
                        diff=format_diff(diff),
                        image_a=IMAGE_1,
                        image_b=IMAGE_2,
                    ),
                )
                kwargs.update(verified_diff=verified, verification_ran=True)
                regions_used = (region_a, region_b)
                if verified.empty:
                    emitter.emit(kwargs, render, regions=regions_used)
                    termination = "no_differences"
                    break

            if t == config.t_max:
                emitter.emit(kwargs, render, regions=regions_used)
                termination = "t_max"
                break

        new_hypothesis = backend.refine(
            hypothesis,
            region_a,
            region_b,
            verified,
            prompts.format(
                "refinement",
                latex=hypothesis.source,
                image_a=IMAGE_1,
                image_b=IMAGE_2,
                diff=format_diff(verified),
            ),
        )
        no_progress = new_hypothesis.source == hypothesis.source
        kwargs["no_progress"] = no_progress
        emitter.emit(kwargs, render, regions=regions_used)
        hypothesis = new_hypothesis
        if no_progress:
            streak += 1
            if streak >= _NO_PROGRESS_LIMIT:
                termination = "no_progress" if render.ok else "compile_dead_end"
                break
        else:
            streak = 0

    assert termination is not None, "loop must terminate explicitly"
    emitter.finish(hypothesis)
    return RunResult(
        instance_id=instance.id,
        strategy=strategy,
        final=hypothesis,
        rounds=tuple(emitter.rounds),
        termination=termination,
    )


def run_ablated(
    instance: Instance,
    config: RunConfig,
    backend: Backend,
    render_service: RenderService,
    out_dir: Optional[Path] = None,
) -> RunResult:
    """The loop without attention localization and feedback verification."""
    return run_a2r2(
        instance,
        config.replace(ablate_al_fv=True),
        backend,
        render_service,
        out_dir=out_dir,
    )

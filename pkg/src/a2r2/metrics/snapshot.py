"""Per-instance metric snapshot across all seven reported measures."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

from ..core.types import LatexDoc, RasterImage
from .textual import bleu4, edit_distance, m_rouge, rouge_l, rouge_n
from .visual import cw_ssim, pixel_match


@dataclass(frozen=True)
class MetricSnapshot:
    """The seven reported columns plus m-ROUGE, each in [0, 100].

    edit_distance is normalized (lower is better); everything else is
    higher-is-better.
    """

    rouge1: float
    rouge2: float
    rougeL: float
    m_rouge: float
    bleu4: float
    edit_distance: float
    match: float
    cw_ssim: float

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not (0.0 <= value <= 100.0):
                raise ValueError(f"{f.name}={value} outside [0, 100]")

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# Table-style column order: textual metrics first, then visual.
REPORT_COLUMNS = (
    "rouge1",
    "rouge2",
    "rougeL",
    "bleu4",
    "edit_distance",
    "match",
    "cw_ssim",
)


def score_pair(
    cand: LatexDoc,
    ref: LatexDoc,
    cand_render: Optional[RasterImage],
    ref_render: Optional[RasterImage],
) -> MetricSnapshot:
    """Score a candidate against its reference.

    A missing candidate render (compile failure) zeroes the visual metrics;
    textual metrics are always computed.
    """
    if cand_render is not None and ref_render is not None:
        match = pixel_match(cand_render, ref_render)
        wavelet = cw_ssim(cand_render, ref_render)
    else:
        match = 0.0
        wavelet = 0.0
    return MetricSnapshot(
        rouge1=rouge_n(cand.tokens, ref.tokens, 1),
        rouge2=rouge_n(cand.tokens, ref.tokens, 2),
        rougeL=rouge_l(cand.tokens, ref.tokens),
        m_rouge=m_rouge(cand.tokens, ref.tokens),
        bleu4=bleu4(cand.tokens, ref.tokens),
        edit_distance=edit_distance(cand.source, ref.source),
        match=match,
        cw_ssim=wavelet,
    )

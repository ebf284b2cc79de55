from .snapshot import REPORT_COLUMNS, MetricSnapshot, score_pair
from .textual import (
    bleu4,
    edit_distance,
    lcs_length,
    levenshtein,
    m_rouge,
    rouge_l,
    rouge_n,
    token_levenshtein,
)
from .visual import CanvasPair, canvas_pair, cw_ssim, pixel_match

__all__ = [
    "REPORT_COLUMNS",
    "MetricSnapshot",
    "score_pair",
    "bleu4",
    "edit_distance",
    "lcs_length",
    "levenshtein",
    "m_rouge",
    "rouge_l",
    "rouge_n",
    "token_levenshtein",
    "CanvasPair",
    "canvas_pair",
    "cw_ssim",
    "pixel_match",
]

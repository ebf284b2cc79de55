"""Dataset difficulty curation.

Each instance is scored per model from textual similarity (mean ROUGE and
BLEU), an inverted normalized edit distance, and a judge model's visual
score; per-model scores are combined across models with capacity weights
and the subset is selected from the resulting ranking.

Score composition per instance i and model j::

    S_ij       = alpha * R_ij + beta * B_ij + gamma * (1 - Dnorm_ij)
    S_ij_final = S_ij + judge_coeff * (G_ij / 10)
    S_i        = sum_j w_j * S_ij_final

``R`` and ``B`` live in [0, 1]; ``Dnorm`` is the min-max normalization of
the raw edit distances over every instance and model together; ``G`` is a
0..10 judge score.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .core.types import A2R2Error

logger = logging.getLogger(__name__)


class CurationError(A2R2Error):
    """Malformed curation inputs."""


@dataclass(frozen=True)
class ModelScores:
    """One model's measurements for one instance."""

    rouge_m: float
    bleu: float
    edit_raw: float
    judge: Optional[float] = None
    edit_norm: Optional[float] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.rouge_m <= 1.0:
            raise CurationError(f"rouge_m={self.rouge_m} outside [0, 1]")
        if not 0.0 <= self.bleu <= 1.0:
            raise CurationError(f"bleu={self.bleu} outside [0, 1]")
        if self.edit_raw < 0.0:
            raise CurationError(f"edit_raw={self.edit_raw} must be non-negative")
        if self.judge is not None and not 0.0 <= self.judge <= 10.0:
            raise CurationError(f"judge={self.judge} outside [0, 10]")
        if self.edit_norm is not None and not 0.0 <= self.edit_norm <= 1.0:
            raise CurationError(f"edit_norm={self.edit_norm} outside [0, 1]")


@dataclass(frozen=True)
class CurationRecord:
    instance_id: str
    models: Mapping[str, ModelScores]

    def __post_init__(self) -> None:
        if not self.models:
            raise CurationError(f"record {self.instance_id!r} has no model entries")
        object.__setattr__(self, "models", dict(self.models))


@dataclass(frozen=True)
class CurationWeights:
    alpha: float = 0.4
    beta: float = 0.4
    gamma: float = 0.2
    judge_coeff: float = 0.5
    model_weights: tuple[float, ...] = (0.30, 0.40, 0.30)

    def __post_init__(self) -> None:
        parts = (self.alpha, self.beta, self.gamma, self.judge_coeff, *self.model_weights)
        if any(p < 0 for p in parts):
            raise CurationError("curation weights must be non-negative")
        if not math.isclose(self.alpha + self.beta + self.gamma, 1.0, abs_tol=1e-9):
            raise CurationError(
                f"alpha+beta+gamma must equal 1, got {self.alpha + self.beta + self.gamma}"
            )
        if not math.isclose(sum(self.model_weights), 1.0, abs_tol=1e-9):
            raise CurationError(
                f"model weights must sum to 1, got {sum(self.model_weights)}"
            )
        object.__setattr__(self, "model_weights", tuple(self.model_weights))


def _common_model_ids(records: Sequence[CurationRecord]) -> list[str]:
    """Every record must carry the same model set; order is sorted ids."""
    if not records:
        raise CurationError("no curation records")
    expected = set(records[0].models)
    for record in records[1:]:
        if set(record.models) != expected:
            raise CurationError(
                f"record {record.instance_id!r} has models {sorted(record.models)}, "
                f"expected {sorted(expected)}"
            )
    return sorted(expected)


def normalize_edit(records: Sequence[CurationRecord]) -> list[CurationRecord]:
    """Min-max normalize raw edit distances over all instances and models.

    When every distance is identical there is no spread to normalize; all
    normalized values become 0 and a warning is logged.
    """
    _common_model_ids(records)
    values = [
        entry.edit_raw for record in records for entry in record.models.values()
    ]
    lo, hi = min(values), max(values)
    if lo == hi:
        logger.warning(
            "all %d edit distances equal (%s); normalized values set to 0",
            len(values), lo,
        )
    span = hi - lo
    out = []
    for record in records:
        models = {
            model_id: ModelScores(
                rouge_m=entry.rouge_m,
                bleu=entry.bleu,
                edit_raw=entry.edit_raw,
                judge=entry.judge,
                edit_norm=0.0 if span == 0 else (entry.edit_raw - lo) / span,
            )
            for model_id, entry in record.models.items()
        }
        out.append(CurationRecord(instance_id=record.instance_id, models=models))
    return out


def composite_score(
    rouge_m: float, bleu: float, edit_norm: float, weights: CurationWeights
) -> float:
    for name, value in (("rouge_m", rouge_m), ("bleu", bleu), ("edit_norm", edit_norm)):
        if not 0.0 <= value <= 1.0:
            raise CurationError(f"{name}={value} outside [0, 1]")
    return weights.alpha * rouge_m + weights.beta * bleu + weights.gamma * (1.0 - edit_norm)


def final_scores(
    records: Sequence[CurationRecord], weights: CurationWeights = CurationWeights()
) -> dict[str, float]:
    """Fuse judge scores and aggregate across models.

    Model weights apply to models in sorted-id order and must match the
    model count. Instances missing any judge score are excluded with a
    warning rather than imputed.
    """
    model_ids = _common_model_ids(records)
    if len(model_ids) != len(weights.model_weights):
        raise CurationError(
            f"{len(weights.model_weights)} model weights for {len(model_ids)} models"
        )
    scores: dict[str, float] = {}
    for record in records:
        if record.instance_id in scores:
            raise CurationError(f"duplicate instance id {record.instance_id!r}")
        entries = [record.models[model_id] for model_id in model_ids]
        if any(entry.edit_norm is None for entry in entries):
            raise CurationError(
                f"record {record.instance_id!r} lacks normalized edit distances; "
                "run normalize_edit first"
            )
        if any(entry.judge is None for entry in entries):
            logger.warning(
                "instance %s excluded: missing judge score", record.instance_id
            )
            continue
        total = 0.0
        for entry, model_weight in zip(entries, weights.model_weights):
            s = composite_score(entry.rouge_m, entry.bleu, entry.edit_norm, weights)
            s_final = s + weights.judge_coeff * (entry.judge / 10.0)
            total += model_weight * s_final
        scores[record.instance_id] = total
    return scores


def select_subset(
    scores: Mapping[str, float], k: int, direction: str = "asc"
) -> list[str]:
    """Order instances by score and keep the first k.

    Ascending keeps the lowest-scoring (hardest) instances; descending the
    highest. Ties break by instance id, ascending, in both directions.
    """
    if direction not in ("asc", "desc"):
        raise CurationError(f"direction must be 'asc' or 'desc', got {direction!r}")
    if k < 0 or k > len(scores):
        raise CurationError(f"k={k} outside 0..{len(scores)}")
    sign = 1.0 if direction == "asc" else -1.0
    ordered = sorted(scores, key=lambda iid: (sign * scores[iid], iid))
    return ordered[:k]


# ----------------------------------------------------------------- file I/O


def _record_to_dict(record: CurationRecord) -> dict:
    return {
        "instance_id": record.instance_id,
        "models": {
            model_id: {
                key: value
                for key, value in (
                    ("rouge_m", entry.rouge_m),
                    ("bleu", entry.bleu),
                    ("edit_raw", entry.edit_raw),
                    ("judge", entry.judge),
                    ("edit_norm", entry.edit_norm),
                )
                if value is not None
            }
            for model_id, entry in record.models.items()
        },
    }


def _record_from_dict(data: dict, line_number: int) -> CurationRecord:
    try:
        models = {
            model_id: ModelScores(
                rouge_m=float(entry["rouge_m"]),
                bleu=float(entry["bleu"]),
                edit_raw=float(entry["edit_raw"]),
                judge=None if entry.get("judge") is None else float(entry["judge"]),
                edit_norm=(
                    None if entry.get("edit_norm") is None else float(entry["edit_norm"])
                ),
            )
            for model_id, entry in data["models"].items()
        }
        return CurationRecord(instance_id=str(data["instance_id"]), models=models)
    except (KeyError, TypeError, ValueError) as exc:
        raise CurationError(f"scores line {line_number}: {exc}") from exc


def read_scores(path) -> list[CurationRecord]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CurationError(f"scores line {line_number}: {exc}") from exc
            records.append(_record_from_dict(data, line_number))
    return records


def write_scores(path, records: Sequence[CurationRecord]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(_record_to_dict(record), sort_keys=True) + "\n")


def write_selection(path, ids: Sequence[str]) -> None:
    Path(path).write_text("".join(f"{iid}\n" for iid in ids), encoding="utf-8")


def write_provenance(
    path,
    weights: CurationWeights,
    direction: str,
    pool_size: int,
    k: int,
) -> None:
    payload = {
        "pool_size": pool_size,
        "selected": k,
        "direction": direction,
        "direction_note": (
            "asc keeps the lowest composite scores (hardest instances); "
            "desc keeps the highest. Both orderings are supported because "
            "either reading of the ranking convention is defensible; "
            "the default is asc."
        ),
        "weights": {
            "alpha": weights.alpha,
            "beta": weights.beta,
            "gamma": weights.gamma,
            "judge_coeff": weights.judge_coeff,
            "model_weights": list(weights.model_weights),
        },
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

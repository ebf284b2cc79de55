"""Hallucination audit over comparison feedback.

For each loop round, the audit measures what fraction of reported
differences were fabricated. The scripted backend tags its items, so runs
against it carry ground-truth flags; items without flags can be classified
by a caller-supplied function (for example a judge model), and items that
stay unclassified are excluded from both numerator and denominator.

Rows are displayed one-based: loop round ``t`` appears as round ``t + 1``.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional

from ..backend.base import JudgeParseError
from ..core.artifacts import IterationRecord
from ..diff import DiffItem

Classifier = Callable[[DiffItem, IterationRecord], Optional[bool]]


def audit_rounds(
    runs: Iterable[Iterable[IterationRecord]],
    classify: Optional[Classifier] = None,
) -> list[dict]:
    """Aggregate per-round fabrication rates across many runs.

    Only rounds whose comparison actually ran contribute (compile-failure
    rounds synthesize their diff from the compiler, not from feedback).
    Returns one row per round index that saw at least one classified item:
    ``{"round", "items", "fabricated", "excluded", "rate"}`` with ``rate``
    in percent.
    """
    counted: dict[int, dict[str, int]] = {}
    for records in runs:
        for record in records:
            if not record.render_ok or record.diff is None:
                continue
            bucket = counted.setdefault(
                record.round, {"items": 0, "fabricated": 0, "excluded": 0}
            )
            for item in record.diff.items:
                flag: Optional[bool] = item.fabricated
                if flag is None and classify is not None:
                    try:
                        flag = classify(item, record)
                    except JudgeParseError:
                        flag = None
                if flag is None:
                    bucket["excluded"] += 1
                    continue
                bucket["items"] += 1
                if flag:
                    bucket["fabricated"] += 1
    rows = []
    for round_index in sorted(counted):
        bucket = counted[round_index]
        if bucket["items"] == 0 and bucket["excluded"] == 0:
            continue
        rate = (
            100.0 * bucket["fabricated"] / bucket["items"] if bucket["items"] else 0.0
        )
        rows.append(
            {
                "round": round_index + 1,
                "items": bucket["items"],
                "fabricated": bucket["fabricated"],
                "excluded": bucket["excluded"],
                "rate": rate,
            }
        )
    return rows


def format_audit_table(rows: list[dict]) -> str:
    lines = ["round  items  fabricated  excluded  rate"]
    for row in rows:
        lines.append(
            f"{row['round']:>5}  {row['items']:>5}  {row['fabricated']:>10}  "
            f"{row['excluded']:>8}  {row['rate']:.1f}%"
        )
    return "\n".join(lines)

"""Difference reports exchanged with the comparison/verification roles.

The comparison prompt imposes a numbered-list protocol with the exact
sentinel line ``NO DIFFERENCES`` for the empty case. Anything that parses as
neither becomes a single opaque item carrying the raw text, so downstream
stages never lose model feedback.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

NO_DIFFERENCES_SENTINEL = "NO DIFFERENCES"

_ITEM_RE = re.compile(r"^\s*(\d+)\s*[.):]\s*(.+?)\s*$")
_SOURCE_MARK_RE = re.compile(r"^\((\d+)\)\s*(.*)$")


@dataclass(frozen=True)
class DiffItem:
    index: int
    description: str
    # provenance index in the report this item was filtered from; not part
    # of item identity
    source_index: Optional[int] = field(default=None, compare=False)
    # set only by the scripted backend, for audit ground truth
    fabricated: Optional[bool] = None

    def as_dict(self) -> dict:
        out: dict = {"index": self.index, "description": self.description}
        if self.source_index is not None:
            out["source_index"] = self.source_index
        if self.fabricated is not None:
            out["fabricated"] = self.fabricated
        return out


@dataclass(frozen=True)
class DiffReport:
    items: tuple[DiffItem, ...]
    raw_text: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        for expected, item in enumerate(self.items, start=1):
            if item.index != expected:
                raise ValueError(
                    f"diff item indices must be consecutive from 1, "
                    f"got {item.index} at position {expected}"
                )

    @property
    def empty(self) -> bool:
        return len(self.items) == 0

    def as_dict(self) -> dict:
        return {"items": [item.as_dict() for item in self.items], "raw_text": self.raw_text}

    @classmethod
    def from_dict(cls, data: dict) -> "DiffReport":
        items = tuple(
            DiffItem(
                index=entry["index"],
                description=entry["description"],
                source_index=entry.get("source_index"),
                fabricated=entry.get("fabricated"),
            )
            for entry in data.get("items", [])
        )
        return cls(items=items, raw_text=data.get("raw_text", ""))

    @classmethod
    def empty_report(cls, raw_text: str = NO_DIFFERENCES_SENTINEL) -> "DiffReport":
        return cls(items=(), raw_text=raw_text)


def parse_diff(text: str) -> DiffReport:
    """Parse model output into a DiffReport.

    Numbered lines win over the sentinel if both somehow appear; items are
    re-indexed consecutively from 1 in order of appearance. A leading
    ``(k)`` in a description is recorded as the item's source index (the
    verification prompt asks for original numbering in parentheses).
    """
    stripped = text.strip()
    if not stripped:
        return DiffReport.empty_report(raw_text=text)
    items: list[DiffItem] = []
    saw_sentinel = False
    for line in stripped.splitlines():
        if line.strip() == NO_DIFFERENCES_SENTINEL:
            saw_sentinel = True
            continue
        match = _ITEM_RE.match(line)
        if match is None:
            continue
        description = match.group(2)
        source_index: Optional[int] = None
        source_match = _SOURCE_MARK_RE.match(description)
        if source_match and source_match.group(2):
            source_index = int(source_match.group(1))
            description = source_match.group(2).strip()
        items.append(
            DiffItem(index=len(items) + 1, description=description, source_index=source_index)
        )
    if items:
        return DiffReport(items=tuple(items), raw_text=text)
    if saw_sentinel:
        return DiffReport.empty_report(raw_text=text)
    return DiffReport(
        items=(DiffItem(index=1, description=stripped),), raw_text=text
    )


def format_diff(report: DiffReport) -> str:
    """Render a report back to its numbered-list textual form."""
    if report.empty:
        return NO_DIFFERENCES_SENTINEL
    return "\n".join(f"{item.index}. {item.description}" for item in report.items)

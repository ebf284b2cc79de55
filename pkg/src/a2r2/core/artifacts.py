"""Per-round artifact records and the on-disk run layout.

Each instance run writes into ``<run_dir>/<instance_id>/``:

* ``round_<k>.json``   serialized IterationRecord
* ``round_<k>.png``    the round's render (omitted when compilation failed)
* ``region_a.png`` / ``region_b.png``  crops from the last localized round
* ``final.tex``        the final hypothesis
* ``overlay_<k>.png``  saliency overlays, only when enabled

Summaries contain no timestamps or host-specific paths so equal runs are
byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from ..diff import DiffReport
from .types import RasterImage


@dataclass(frozen=True)
class IterationRecord:
    """Everything observed during one loop round."""

    round: int
    hypothesis: str
    render_ok: bool
    render_digest: Optional[str] = None
    render_failure_log: Optional[str] = None
    diff: Optional[DiffReport] = None
    verified_diff: Optional[DiffReport] = None
    verification_ran: bool = False
    region_box: Optional[tuple[int, int, int, int]] = None
    attention_grid: Optional[tuple[int, int]] = None
    used_fallback_regions: bool = False
    metrics: Optional[dict] = None
    no_progress: bool = False
    notes: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.round < 0:
            raise ValueError("round must be non-negative")
        if self.render_ok and self.render_digest is None:
            raise ValueError("successful render requires a digest")
        if not self.render_ok and self.render_failure_log is None:
            raise ValueError("failed render requires a failure log")
        object.__setattr__(self, "notes", tuple(self.notes))

    def as_dict(self) -> dict:
        render: dict = {"ok": self.render_ok}
        if self.render_ok:
            render["digest"] = self.render_digest
        else:
            render["failure_log"] = self.render_failure_log
        out: dict = {
            "round": self.round,
            "hypothesis": self.hypothesis,
            "render": render,
            "diff": self.diff.as_dict() if self.diff is not None else None,
            "verified_diff": (
                self.verified_diff.as_dict() if self.verified_diff is not None else None
            ),
            "verification_ran": self.verification_ran,
            "localization": None,
            "metrics": self.metrics,
            "no_progress": self.no_progress,
            "notes": list(self.notes),
        }
        if self.region_box is not None or self.used_fallback_regions:
            out["localization"] = {
                "box": list(self.region_box) if self.region_box else None,
                "grid": list(self.attention_grid) if self.attention_grid else None,
                "fallback": self.used_fallback_regions,
            }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "IterationRecord":
        render = data["render"]
        loc = data.get("localization") or {}
        box = loc.get("box")
        grid = loc.get("grid")
        return cls(
            round=data["round"],
            hypothesis=data["hypothesis"],
            render_ok=render["ok"],
            render_digest=render.get("digest"),
            render_failure_log=render.get("failure_log"),
            diff=DiffReport.from_dict(data["diff"]) if data.get("diff") else None,
            verified_diff=(
                DiffReport.from_dict(data["verified_diff"])
                if data.get("verified_diff")
                else None
            ),
            verification_ran=data.get("verification_ran", False),
            region_box=tuple(box) if box else None,
            attention_grid=tuple(grid) if grid else None,
            used_fallback_regions=loc.get("fallback", False),
            metrics=data.get("metrics"),
            no_progress=data.get("no_progress", False),
            notes=tuple(data.get("notes", ())),
        )


def _dump_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def instance_dir(run_dir: Path, instance_id: str) -> Path:
    # instance ids come from user data; keep them filesystem-safe
    safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in instance_id)
    return Path(run_dir) / safe


def write_round(
    out_dir: Path,
    record: IterationRecord,
    render: Optional[RasterImage],
    regions: Optional[tuple[RasterImage, RasterImage]] = None,
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    _dump_json(out_dir / f"round_{record.round}.json", record.as_dict())
    if render is not None:
        render.save(out_dir / f"round_{record.round}.png")
    if regions is not None:
        regions[0].save(out_dir / "region_a.png")
        regions[1].save(out_dir / "region_b.png")


def write_final(out_dir: Path, source: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "final.tex").write_text(source + "\n", encoding="utf-8")


def read_rounds(out_dir: Path) -> list[IterationRecord]:
    """Load all round records for one instance, ordered by round."""
    records = []
    for path in sorted(Path(out_dir).glob("round_*.json")):
        try:
            k = int(path.stem.split("_", 1)[1])
        except ValueError:
            continue
        data = json.loads(path.read_text(encoding="utf-8"))
        record = IterationRecord.from_dict(data)
        if record.round != k:
            raise ValueError(f"{path} holds round {record.round}, expected {k}")
        records.append(record)
    records.sort(key=lambda r: r.round)
    return records


def write_summary(path: Path, rows: Sequence[dict]) -> None:
    """Write the run summary as JSONL, one row per instance, dataset order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def read_summary(path: Path) -> list[dict]:
    rows = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows

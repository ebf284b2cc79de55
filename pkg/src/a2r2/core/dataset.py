"""Dataset loading.

Format: JSON-Lines, one object per line with fields ``id`` (string),
``image`` (path to a PNG, resolved relative to the dataset file), and
optionally ``latex`` (the reference source). Malformed lines are fatal and
name the offending line number; a missing image *file* is a per-record load
error that is collected without aborting the rest of the file.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from .types import A2R2Error, Instance, LatexDoc, RasterImage


class DatasetError(A2R2Error):
    """Malformed dataset file."""


@dataclass(frozen=True)
class RecordLoadError:
    line_number: int
    instance_id: str
    message: str


class Dataset(Sequence):
    """Instances in file order plus any per-record load errors."""

    def __init__(self, instances: list[Instance], load_errors: list[RecordLoadError]):
        self._instances = list(instances)
        self.load_errors = list(load_errors)

    def __len__(self) -> int:
        return len(self._instances)

    def __getitem__(self, index):
        return self._instances[index]

    def by_id(self, instance_id: str) -> Instance:
        for inst in self._instances:
            if inst.id == instance_id:
                return inst
        raise KeyError(instance_id)


def load_dataset(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    base = path.parent
    instances: list[Instance] = []
    errors: list[RecordLoadError] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise DatasetError(f"line {lineno}: record must be an object")
            for field_name in ("id", "image"):
                if field_name not in record:
                    raise DatasetError(f"line {lineno}: missing required field {field_name!r}")
            instance_id = str(record["id"])
            if instance_id in seen_ids:
                raise DatasetError(f"line {lineno}: duplicate id {instance_id!r}")
            seen_ids.add(instance_id)
            image_path = base / record["image"]
            try:
                image = RasterImage.from_file(image_path)
            except (OSError, ValueError) as exc:
                errors.append(RecordLoadError(lineno, instance_id, f"cannot load image {image_path}: {exc}"))
                continue
            latex = record.get("latex")
            ground_truth = LatexDoc(str(latex)) if latex is not None else None
            instances.append(Instance(id=instance_id, image=image, ground_truth=ground_truth))
    return Dataset(instances, errors)


def write_dataset(path, records: list[dict]) -> None:
    """Write a dataset JSONL (images must already exist on disk)."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

import json

import pytest

from a2r2.core.dataset import DatasetError, load_dataset, write_dataset
from a2r2.core.types import LatexDoc, RasterImage


def _write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _png(tmp_path, name="img.png"):
    target = tmp_path / name
    RasterImage.blank(6, 4).save(target)
    return name


def test_round_trip(tmp_path):
    name = _png(tmp_path)
    records = [
        {"id": "a", "image": name, "latex": "x + 1"},
        {"id": "b", "image": name},
    ]
    write_dataset(tmp_path / "ds.jsonl", records)
    ds = load_dataset(tmp_path / "ds.jsonl")
    assert len(ds) == 2
    assert ds[0].ground_truth == LatexDoc("x + 1")
    assert ds[1].ground_truth is None
    assert ds.by_id("b").id == "b"
    assert not ds.load_errors


def test_malformed_json_is_fatal_and_names_the_line(tmp_path):
    name = _png(tmp_path)
    _write_lines(
        tmp_path / "ds.jsonl",
        [json.dumps({"id": "a", "image": name}), "{not json"],
    )
    with pytest.raises(DatasetError, match="line 2"):
        load_dataset(tmp_path / "ds.jsonl")


def test_missing_required_field_is_fatal(tmp_path):
    _write_lines(tmp_path / "ds.jsonl", [json.dumps({"id": "a"})])
    with pytest.raises(DatasetError, match="line 1.*image"):
        load_dataset(tmp_path / "ds.jsonl")


def test_duplicate_id_is_fatal(tmp_path):
    name = _png(tmp_path)
    row = json.dumps({"id": "a", "image": name})
    _write_lines(tmp_path / "ds.jsonl", [row, row])
    with pytest.raises(DatasetError, match="duplicate id"):
        load_dataset(tmp_path / "ds.jsonl")


def test_missing_image_file_is_collected_not_fatal(tmp_path):
    name = _png(tmp_path)
    _write_lines(
        tmp_path / "ds.jsonl",
        [
            json.dumps({"id": "a", "image": name}),
            json.dumps({"id": "gone", "image": "missing.png"}),
            json.dumps({"id": "c", "image": name}),
        ],
    )
    ds = load_dataset(tmp_path / "ds.jsonl")
    assert [inst.id for inst in ds] == ["a", "c"]
    assert len(ds.load_errors) == 1
    err = ds.load_errors[0]
    assert err.line_number == 2
    assert err.instance_id == "gone"


def test_blank_lines_are_ignored(tmp_path):
    name = _png(tmp_path)
    _write_lines(
        tmp_path / "ds.jsonl",
        ["", json.dumps({"id": "a", "image": name}), "   "],
    )
    assert len(load_dataset(tmp_path / "ds.jsonl")) == 1


def test_eleven_hundred_records_load_without_loss(tmp_path):
    name = _png(tmp_path)
    records = [
        {"id": f"inst{i:04d}", "image": name, "latex": f"x + {i}"}
        for i in range(1100)
    ]
    write_dataset(tmp_path / "ds.jsonl", records)
    ds = load_dataset(tmp_path / "ds.jsonl")
    assert len(ds) == 1100
    assert [inst.id for inst in ds] == [r["id"] for r in records]

from __future__ import annotations

from pathlib import Path

import pytest

from a2r2.core.config import RunConfig
from a2r2.core.dataset import load_dataset, write_dataset
from a2r2.core.types import Instance, LatexDoc
from a2r2.render.service import RenderService

# Small compile-safe corpus; every token class the scripted backend can
# substitute (letters, digits, greek commands) appears somewhere.
FORMULAS = (
    r"x ^ 2 + \alpha y - 3 z",
    r"a + b - c \cdot d + e ^ 2 - f _ 3",
    r"\frac { p + 7 } { q - 2 }",
    r"\sum _ { k = 1 } ^ { n } k ^ 2",
    r"\beta x + \gamma y = 9",
    r"( u + v ) ^ 3 - w _ 5",
    r"m \cdot n + 4 p - \lambda",
    r"r ^ 2 + s ^ 2 - 2 r s \cos \theta",
    r"\sqrt { h + 6 } - j k",
    r"\pi d + 8 t _ 1 - \mu",
)


@pytest.fixture(scope="session")
def render_service(tmp_path_factory) -> RenderService:
    cache = tmp_path_factory.mktemp("render-cache")
    return RenderService(cache_dir=cache)


@pytest.fixture(scope="session")
def instance_factory(render_service):
    """Build an Instance whose image is the rendered ground truth."""

    def make(formula: str, instance_id: str = "inst") -> Instance:
        doc = LatexDoc(formula)
        result = render_service.render_latex(doc)
        assert result.ok, f"fixture formula failed to render: {result.failure_log}"
        return Instance(id=instance_id, image=result.image, ground_truth=doc)

    return make


@pytest.fixture
def run_config():
    def make(**overrides) -> RunConfig:
        values = {"backend_endpoint": "mock:", "parallel_workers": 1}
        values.update(overrides)
        return RunConfig(**values)

    return make


@pytest.fixture()
def dataset_on_disk(tmp_path, render_service):
    """Write a small image+JSONL dataset; returns (jsonl path, records)."""

    def make(formulas, directory: Path | None = None):
        base = directory or tmp_path
        base.mkdir(parents=True, exist_ok=True)
        records = []
        for i, formula in enumerate(formulas):
            doc = LatexDoc(formula)
            result = render_service.render_latex(doc)
            assert result.ok, result.failure_log
            name = f"img_{i}.png"
            result.image.save(base / name)
            records.append({"id": f"inst{i}", "image": name, "latex": formula})
        path = base / "dataset.jsonl"
        write_dataset(path, records)
        return path, records

    return make


@pytest.fixture()
def small_dataset(dataset_on_disk):
    path, _ = dataset_on_disk(FORMULAS[:3])
    return load_dataset(path)

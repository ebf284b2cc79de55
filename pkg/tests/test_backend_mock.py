import numpy as np
import pytest

from a2r2.attnloc import reduce_attention
from a2r2.backend.base import (
    AttentionUnavailable,
    BackendRequest,
    Capabilities,
    JudgeParseError,
    ProtocolError,
    central_layer_range,
    extract_latex_reply,
    parse_judge_score,
    resolve_layer_range,
)
from a2r2.backend.factory import create_backend
from a2r2.backend.scripted import (
    BREAK_TOKEN,
    FABRICATED_PHRASES,
    ScriptedBackend,
    ScriptedBackendError,
)
from a2r2.core.config import ConfigError, RunConfig
from a2r2.core.tokenizer import tokenize_latex
from a2r2.core.types import Instance, LatexDoc, RasterImage
from a2r2.diff import DiffItem, DiffReport

FORMULA = r"a + b - c \cdot d + e ^ 2 - f _ 3"


def _instance(formula=FORMULA, instance_id="inst0", size=48):
    # unique size -> unique digest, so scripts never collide between tests
    arr = np.full((size, size + 13), 255, dtype=np.uint8)
    arr[size // 2, : size // 3] = 0
    return Instance(id=instance_id, image=RasterImage(arr), ground_truth=LatexDoc(formula))


def _token_mismatches(a, b):
    ta, tb = tokenize_latex(a), tokenize_latex(b)
    assert len(ta) == len(tb)
    return sum(1 for x, y in zip(ta, tb) if x != y)


# -------------------------------------------------------------- base helpers


def test_central_layer_range_values():
    assert central_layer_range(40) == (18, 22)
    assert central_layer_range(1) == (0, 0)
    assert central_layer_range(8) == (4, 4)
    assert central_layer_range(16) == (7, 8)


def test_resolve_layer_range():
    caps = Capabilities(attention=True, layers=40)
    assert resolve_layer_range(None, caps) == (18, 22)
    assert resolve_layer_range((3, 9), caps) == (3, 9)
    with pytest.raises(ValueError):
        resolve_layer_range((30, 40), caps)


def test_capabilities_validation():
    with pytest.raises(ValueError):
        Capabilities(attention=True, layers=0)


def test_backend_request_validation():
    img = RasterImage.blank(8, 8)
    BackendRequest(role="generation", prompt="p", images=(img,))
    with pytest.raises(ValueError):
        BackendRequest(role="generation", prompt="p", images=(img, img))
    with pytest.raises(ValueError):
        BackendRequest(role="verification", prompt="p", images=(img, img))  # no context
    with pytest.raises(ValueError):
        BackendRequest(role="generation", prompt="p", images=(img,), want_attention=True)
    with pytest.raises(ValueError):
        BackendRequest(role="nonsense", prompt="p", images=(img,))
    with pytest.raises(ValueError):
        BackendRequest(role="generation", prompt="p", images=(img,), layer_range=(5, 2))


def test_extract_latex_reply():
    assert extract_latex_reply("```latex\nx + 1\n```") == "x + 1"
    assert extract_latex_reply("thinking...\n```\na\n```\nmore\n```latex\nb\n```") == "b"
    assert extract_latex_reply("  x ^ 2  ") == "x ^ 2"


def test_parse_judge_score():
    assert parse_judge_score("7") == 7.0
    assert parse_judge_score("I would rate this 8.5 out of 10") == 8.5
    assert parse_judge_score("15") == 10.0  # clamped
    with pytest.raises(JudgeParseError):
        parse_judge_score("no score here")


# ------------------------------------------------------------------ factory


def test_factory_builds_mock_with_config_seed():
    backend = create_backend(RunConfig(backend_endpoint="mock:?errors=2", seed=7))
    assert isinstance(backend, ScriptedBackend)
    assert backend.seed == 7
    assert backend.errors == 2


def test_factory_query_seed_wins_over_config_seed():
    backend = create_backend(RunConfig(backend_endpoint="mock:?seed=3", seed=7))
    assert backend.seed == 3


def test_factory_rejects_unknown_scheme():
    with pytest.raises(ConfigError):
        create_backend(RunConfig(backend_endpoint="ftp://nowhere"))


def test_from_query_rejects_unknown_params():
    with pytest.raises(ValueError):
        ScriptedBackend.from_query("errors=1&typo=2")


def test_from_query_parses_everything():
    backend = ScriptedBackend.from_query(
        "seed=5&errors=3&sample_errors=1,0,2&fix_per_round=2&halluc_rate=0.25"
        "&churn=1&layers=24&attention=0&break_compile=1"
    )
    assert (backend.seed, backend.errors, backend.fix_per_round) == (5, 3, 2)
    assert backend.sample_errors == (1, 0, 2)
    assert backend.halluc_rate == 0.25
    assert backend.churn and backend.break_compile
    assert not backend.attention
    assert backend.capabilities() == Capabilities(attention=False, layers=24)


# ------------------------------------------------------------------ scripts


def test_unobserved_image_is_an_error():
    backend = ScriptedBackend()
    with pytest.raises(ScriptedBackendError):
        backend.generate(RasterImage.blank(10, 10), "p")


def test_instance_without_ground_truth_is_an_error():
    backend = ScriptedBackend()
    inst = Instance(id="x", image=RasterImage.blank(10, 10), ground_truth=None)
    with pytest.raises(ScriptedBackendError):
        backend.observe_instance(inst)


def test_generate_clean_when_errors_zero():
    backend = ScriptedBackend(errors=0)
    inst = _instance()
    backend.observe_instance(inst)
    doc = backend.generate(inst.image, "p")
    assert doc.source == FORMULA


def test_generate_injects_exact_error_count():
    backend = ScriptedBackend(errors=2)
    inst = _instance()
    backend.observe_instance(inst)
    doc = backend.generate(inst.image, "p")
    assert _token_mismatches(FORMULA, doc.source) == 2


def test_substitutions_keep_token_class():
    backend = ScriptedBackend(errors=5, seed=3)
    inst = _instance(r"\alpha + 7 x - \beta y ^ 2", size=52)
    backend.observe_instance(inst)
    doc = backend.generate(inst.image, "p")
    original = tokenize_latex(inst.ground_truth.source)
    mutated = tokenize_latex(doc.source)
    for before, after in zip(original, mutated):
        if before == after:
            continue
        if before.startswith("\\"):
            assert after.startswith("\\")
        elif before.isdigit():
            assert after.isdigit()
        else:
            assert after.isalpha() and len(after) == 1


def test_sample_errors_cycle_per_generation_call():
    backend = ScriptedBackend(sample_errors=(2, 0, 1))
    inst = _instance()
    backend.observe_instance(inst)
    counts = [
        _token_mismatches(FORMULA, backend.generate(inst.image, "p").source)
        for _ in range(4)
    ]
    assert counts == [2, 0, 1, 2]


def test_error_count_capped_by_eligible_tokens():
    backend = ScriptedBackend(errors=99)
    inst = _instance(r"x + 1", size=50)
    backend.observe_instance(inst)
    doc = backend.generate(inst.image, "p")
    assert _token_mismatches(r"x + 1", doc.source) == 2  # x and 1 only


def test_break_compile_uses_break_token():
    backend = ScriptedBackend(errors=1, break_compile=True)
    inst = _instance()
    backend.observe_instance(inst)
    doc = backend.generate(inst.image, "p")
    assert BREAK_TOKEN in tokenize_latex(doc.source)


# ----------------------------------------------------------- compare/verify


def _observed_backend(**kwargs):
    backend = ScriptedBackend(**kwargs)
    inst = _instance()
    backend.observe_instance(inst)
    return backend, inst


def test_compare_reports_each_live_substitution():
    backend, inst = _observed_backend(errors=2)
    backend.generate(inst.image, "p")
    report = backend.compare(inst.image, inst.image, "p")
    assert len(report.items) == 2
    for item in report.items:
        assert item.fabricated is False
        assert "(token " in item.description


def test_compare_clean_hypothesis_is_empty():
    backend, inst = _observed_backend(errors=0)
    backend.generate(inst.image, "p")
    report = backend.compare(inst.image, inst.image, "p")
    assert report.empty
    assert report.raw_text == "NO DIFFERENCES"


def test_fabricated_item_comes_first():
    backend, inst = _observed_backend(errors=2, halluc_rate=1.0)
    backend.generate(inst.image, "p")
    report = backend.compare(inst.image, inst.image, "p")
    assert len(report.items) == 3
    assert report.items[0].fabricated is True
    assert report.items[0].description in FABRICATED_PHRASES
    assert all(item.fabricated is False for item in report.items[1:])


def test_verify_drops_fabricated_and_records_source_index():
    backend, inst = _observed_backend(errors=2, halluc_rate=1.0)
    backend.generate(inst.image, "p")
    raw = backend.compare(inst.image, inst.image, "p")
    verified = backend.verify(raw, inst.image, inst.image, "p")
    assert len(verified.items) == 2
    assert [item.source_index for item in verified.items] == [2, 3]
    assert [item.index for item in verified.items] == [1, 2]
    assert all(item.fabricated is False for item in verified.items)


def test_verify_is_idempotent():
    backend, inst = _observed_backend(errors=2, halluc_rate=1.0)
    backend.generate(inst.image, "p")
    raw = backend.compare(inst.image, inst.image, "p")
    once = backend.verify(raw, inst.image, inst.image, "p")
    twice = backend.verify(once, inst.image, inst.image, "p")
    assert twice.items == once.items
    assert [item.source_index for item in twice.items] == [
        item.source_index for item in once.items
    ]


def test_verify_all_fabricated_is_empty():
    backend, inst = _observed_backend(errors=0, halluc_rate=1.0)
    backend.generate(inst.image, "p")
    raw = backend.compare(inst.image, inst.image, "p")
    assert len(raw.items) == 1 and raw.items[0].fabricated
    verified = backend.verify(raw, inst.image, inst.image, "p")
    assert verified.empty


# ------------------------------------------------------------------- refine


def test_refine_fixes_up_to_budget():
    backend, inst = _observed_backend(errors=3, fix_per_round=2)
    hypothesis = backend.generate(inst.image, "p")
    raw = backend.compare(inst.image, inst.image, "p")
    refined = backend.refine(hypothesis, inst.image, inst.image, raw, "p")
    assert _token_mismatches(FORMULA, refined.source) == 1


def test_refine_full_budget_restores_ground_truth():
    backend, inst = _observed_backend(errors=2, fix_per_round=5)
    hypothesis = backend.generate(inst.image, "p")
    raw = backend.compare(inst.image, inst.image, "p")
    refined = backend.refine(hypothesis, inst.image, inst.image, raw, "p")
    assert refined.source == FORMULA


def test_refine_on_fabricated_item_corrupts_a_correct_token():
    backend, inst = _observed_backend(errors=0, halluc_rate=1.0, fix_per_round=1)
    hypothesis = backend.generate(inst.image, "p")
    assert hypothesis.source == FORMULA
    raw = backend.compare(inst.image, inst.image, "p")  # one fabricated item
    refined = backend.refine(hypothesis, inst.image, inst.image, raw, "p")
    assert _token_mismatches(FORMULA, refined.source) == 1


def test_churn_appends_neutral_suffix():
    backend, inst = _observed_backend(errors=1, fix_per_round=0, churn=True)
    hypothesis = backend.generate(inst.image, "p")
    raw = backend.compare(inst.image, inst.image, "p")
    refined = backend.refine(hypothesis, inst.image, inst.image, raw, "p")
    assert refined.source == hypothesis.source + " {}"
    again = backend.refine(refined, inst.image, inst.image, raw, "p")
    assert again.source == hypothesis.source + " {} {}"


def test_refine_with_unknown_hypothesis_is_an_error():
    backend, inst = _observed_backend(errors=1)
    backend.generate(inst.image, "p")
    with pytest.raises(ScriptedBackendError):
        backend.refine(
            LatexDoc("never generated"), inst.image, inst.image,
            DiffReport.empty_report(), "p",
        )


def test_compile_error_item_removes_break_token():
    backend, inst = _observed_backend(errors=2, break_compile=True, fix_per_round=1)
    hypothesis = backend.generate(inst.image, "p")
    assert BREAK_TOKEN in hypothesis.source
    diff = DiffReport(
        items=(DiffItem(index=1, description="compilation error: Expected token"),),
        raw_text="",
    )
    refined = backend.refine(hypothesis, inst.image, inst.image, diff, "p")
    assert BREAK_TOKEN not in refined.source
    assert _token_mismatches(FORMULA, refined.source) == 1  # other error remains


# ---------------------------------------------------------------- attention


def test_attention_dims_and_layers():
    backend, inst = _observed_backend(errors=1)
    backend.generate(inst.image, "p")
    stack = backend.fetch_attention(inst.image, "the exponent differs", (18, 22))
    assert stack.values.shape[1] == 5
    assert stack.values.shape[2] == 8
    assert stack.layers == tuple(range(18, 23))
    assert stack.n_tokens == len(tokenize_latex("the exponent differs"))


def test_attention_peak_is_scale_invariant_across_slices():
    backend, inst = _observed_backend(errors=1)
    backend.generate(inst.image, "p")
    stack = backend.fetch_attention(inst.image, "difference text", (18, 22))
    reduced = reduce_attention(stack)
    peak = np.unravel_index(np.argmax(reduced.values), reduced.values.shape)
    for t in range(stack.n_tokens):
        for l in range(stack.values.shape[1]):
            for h in range(stack.n_heads):
                slice_peak = np.unravel_index(
                    np.argmax(stack.values[t, l, h]), reduced.values.shape
                )
                assert slice_peak == peak


def test_attention_peak_tracks_error_position():
    backend, inst = _observed_backend(errors=1, seed=2)
    backend.generate(inst.image, "p")
    with_error = backend.fetch_attention(inst.image, "q", (18, 22))
    row_e, col_e = np.unravel_index(
        np.argmax(reduce_attention(with_error).values),
        (with_error.grid_h, with_error.grid_w),
    )
    backend.errors = 0
    backend.generate(inst.image, "p")  # clean regeneration clears live errors
    clean = backend.fetch_attention(inst.image, "q", (18, 22))
    row_c, col_c = np.unravel_index(
        np.argmax(reduce_attention(clean).values), (clean.grid_h, clean.grid_w)
    )
    assert (row_c, col_c) == (clean.grid_h // 2, clean.grid_w // 2)
    assert (row_e, col_e) != (row_c, col_c) or col_e == clean.grid_w // 2


def test_attention_unavailable_when_disabled():
    backend = ScriptedBackend(attention=False)
    inst = _instance()
    backend.observe_instance(inst)
    with pytest.raises(AttentionUnavailable):
        backend.fetch_attention(inst.image, "q", (0, 0))


def test_attention_layer_range_validated():
    backend, inst = _observed_backend(layers=10)
    with pytest.raises(ProtocolError):
        backend.fetch_attention(inst.image, "q", (5, 10))


# -------------------------------------------------------------------- judge


def test_judge_identical_images_scores_ten():
    backend = ScriptedBackend()
    img = _instance().image
    assert backend.judge_similarity(img, img, "p") == 10.0


def test_judge_score_decreases_with_difference():
    backend = ScriptedBackend()
    base = np.full((40, 40), 255, dtype=np.uint8)
    a = RasterImage(base)
    half = base.copy()
    half[:, :20] = 0
    b = RasterImage(half)
    assert backend.judge_similarity(a, b, "p") == 5.0


# ------------------------------------------------------------- determinism


def _run_session(seed):
    backend = ScriptedBackend(seed=seed, errors=2, halluc_rate=0.5, fix_per_round=1)
    inst = _instance()
    backend.observe_instance(inst)
    hypothesis = backend.generate(inst.image, "p")
    raw = backend.compare(inst.image, inst.image, "p")
    verified = backend.verify(raw, inst.image, inst.image, "p")
    if not verified.empty:
        backend.refine(hypothesis, inst.image, inst.image, verified, "p")
    backend.judge_similarity(inst.image, inst.image, "p")
    return backend.transcript_json()


def test_same_seed_same_transcript():
    assert _run_session(0) == _run_session(0)


def test_different_seed_changes_transcript():
    assert _run_session(0) != _run_session(1)


def test_transcript_records_roles_in_order():
    backend, inst = _observed_backend(errors=1)
    backend.generate(inst.image, "p")
    backend.compare(inst.image, inst.image, "p")
    roles = [entry["role"] for entry in backend.transcript]
    assert roles == ["generation", "comparison"]
    assert [entry["n"] for entry in backend.transcript] == [0, 1]

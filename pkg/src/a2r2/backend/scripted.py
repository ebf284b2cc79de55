"""Deterministic scripted backend for tests, demos and offline runs.

Selected with endpoint URIs of the form ``mock:?seed=0&errors=2``. The
backend learns each instance's ground truth through ``observe_instance``
(keyed by the image digest) and then behaves like a flawed but consistent
model:

* ``generate`` returns the ground truth with ``errors`` token substitutions
  injected at deterministic positions (letters, digits and greek commands
  only, so the result still compiles);
* ``compare`` reports exactly the still-live substitutions; with
  probability ``halluc_rate`` it prepends one fabricated difference;
* ``verify`` drops fabricated items and keeps genuine ones, preserving
  order and recording each item's index in the incoming report;
* ``refine`` repairs up to ``fix_per_round`` reported items per call.
  Acting on a fabricated item corrupts one previously-correct token, which
  is what makes skipping verification measurably worse.

Query parameters:

==================  =======================================================
``seed``            base RNG seed (default 0)
``errors``          substitutions per generated sample (default 0)
``sample_errors``   comma list overriding ``errors`` per generation call
``fix_per_round``   repair budget per refine call (default 1)
``halluc_rate``     fabrication probability per comparison (default 0)
``churn``           1: every refine appends a render-neutral ``{}`` so the
                    hypothesis always changes textually (default 0)
``layers``          advertised decoder depth (default 40)
``attention``       0: advertise no attention support (default 1)
``break_compile``   1: the first substitution breaks compilation (default 0)
==================  =======================================================
"""

from __future__ import annotations

import hashlib
import json
import random
import re
import threading
from dataclasses import dataclass, field
from typing import Optional
from urllib.parse import parse_qsl

import numpy as np

from ..attnloc import AttentionStack
from ..core.tokenizer import token_spans, tokenize_latex
from ..core.types import Instance, LatexDoc, RasterImage
from ..diff import DiffItem, DiffReport, NO_DIFFERENCES_SENTINEL, format_diff
from .base import (
    AttentionUnavailable,
    Backend,
    BackendError,
    Capabilities,
    EmptyGeneration,
    ProtocolError,
    extract_latex_reply,
    parse_judge_score,
)

GREEK_COMMANDS = (
    "\\alpha", "\\beta", "\\gamma", "\\delta", "\\epsilon", "\\theta",
    "\\lambda", "\\mu", "\\nu", "\\pi", "\\rho", "\\sigma", "\\tau",
    "\\phi", "\\psi", "\\omega",
)
_LETTERS = "abcdefghijklmnopqrstuvwxyz"
_DIGITS = "0123456789"

# a bare \frac with no arguments kills every TeX toolchain we support
BREAK_TOKEN = "\\frac"

FABRICATED_PHRASES = (
    "a spurious prime mark appears near the rightmost symbol",
    "an extra thin space appears between the first two terms",
    "a stray dot appears above the expression",
    "the outer parenthesis looks slightly larger in the rendering",
)

_GENUINE_RE = re.compile(
    r"^the rendering shows '(.*)' where the original shows '(.*)' \(token (\d+)\)$"
)
_COMPILE_RE = re.compile(r"^compilation error", re.IGNORECASE)

_ATTN_HEADS = 8
_ATTN_MAX_TOKENS = 32


def _token_is_substitutable(token: str) -> bool:
    if token in GREEK_COMMANDS:
        return True
    if len(token) == 1 and token.isalpha():
        return True
    return token.isdigit()


@dataclass
class _Injection:
    position: int
    original: str
    replacement: str


@dataclass
class _InstanceScript:
    instance_id: str
    gt_source: str
    spans: list[tuple[str, int, int]]
    eligible: tuple[int, ...]
    live: dict[int, _Injection] = field(default_factory=dict)
    churn_count: int = 0
    generation_calls: int = 0
    compare_calls: int = 0
    corrupt_calls: int = 0

    def current_source(self) -> str:
        pieces: list[str] = []
        cursor = 0
        for position, (_, start, end) in enumerate(self.spans):
            pieces.append(self.gt_source[cursor:start])
            injection = self.live.get(position)
            pieces.append(injection.replacement if injection else self.gt_source[start:end])
            cursor = end
        pieces.append(self.gt_source[cursor:])
        return "".join(pieces) + " {}" * self.churn_count


class ScriptedBackendError(BackendError):
    """The scripted backend was asked something outside its script."""


class ScriptedBackend(Backend):
    def __init__(
        self,
        seed: int = 0,
        errors: int = 0,
        sample_errors: Optional[tuple[int, ...]] = None,
        fix_per_round: int = 1,
        halluc_rate: float = 0.0,
        churn: bool = False,
        layers: int = 40,
        attention: bool = True,
        break_compile: bool = False,
    ) -> None:
        if errors < 0 or fix_per_round < 0:
            raise ValueError("errors and fix_per_round must be non-negative")
        if not 0.0 <= halluc_rate <= 1.0:
            raise ValueError("halluc_rate must lie in [0, 1]")
        self.seed = seed
        self.errors = errors
        self.sample_errors = sample_errors
        self.fix_per_round = fix_per_round
        self.halluc_rate = halluc_rate
        self.churn = churn
        self.layers = layers
        self.attention = attention
        self.break_compile = break_compile
        self._scripts: dict[str, _InstanceScript] = {}
        self._transcript: list[dict] = []
        self._lock = threading.RLock()

    @classmethod
    def from_query(cls, query: str, default_seed: int = 0) -> "ScriptedBackend":
        params = dict(parse_qsl(query, keep_blank_values=True))
        known = {
            "seed", "errors", "sample_errors", "fix_per_round", "halluc_rate",
            "churn", "layers", "attention", "break_compile",
        }
        unknown = set(params) - known
        if unknown:
            raise ValueError(f"unknown mock parameters: {sorted(unknown)}")
        sample_errors = None
        if params.get("sample_errors"):
            sample_errors = tuple(int(x) for x in params["sample_errors"].split(","))
        return cls(
            seed=int(params.get("seed", default_seed)),
            errors=int(params.get("errors", 0)),
            sample_errors=sample_errors,
            fix_per_round=int(params.get("fix_per_round", 1)),
            halluc_rate=float(params.get("halluc_rate", 0.0)),
            churn=params.get("churn", "0") not in ("0", "", "false"),
            layers=int(params.get("layers", 40)),
            attention=params.get("attention", "1") not in ("0", "false"),
            break_compile=params.get("break_compile", "0") not in ("0", "", "false"),
        )

    # ---------------------------------------------------------------- RNG

    def _rng(self, *key: object) -> random.Random:
        material = "|".join(str(part) for part in (self.seed, *key))
        digest = hashlib.sha256(material.encode("utf-8")).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    # ---------------------------------------------------------- transcript

    @property
    def transcript(self) -> tuple[dict, ...]:
        with self._lock:
            return tuple(self._transcript)

    def transcript_json(self) -> str:
        with self._lock:
            return json.dumps(self._transcript, sort_keys=True, ensure_ascii=False)

    def _record(self, role: str, prompt: str, images: tuple[RasterImage, ...],
                text_context: str, response: str) -> None:
        entry = {
            "n": len(self._transcript),
            "role": role,
            "prompt": prompt,
            "images": [img.digest() for img in images],
            "text_context": text_context,
            "response": response,
        }
        self._transcript.append(entry)

    # ------------------------------------------------------------- scripts

    def observe_instance(self, instance: Instance) -> None:
        if instance.ground_truth is None:
            raise ScriptedBackendError(
                f"instance {instance.id!r} has no ground-truth LaTeX; the "
                "scripted backend only answers for observed instances"
            )
        with self._lock:
            digest = instance.image.digest()
            if digest in self._scripts:
                return
            source = instance.ground_truth.source
            spans = token_spans(source)
            eligible = tuple(
                pos for pos, (token, _, _) in enumerate(spans)
                if _token_is_substitutable(token)
            )
            self._scripts[digest] = _InstanceScript(
                instance_id=instance.id,
                gt_source=source,
                spans=spans,
                eligible=eligible,
            )

    def _script_for_image(self, image: RasterImage) -> _InstanceScript:
        script = self._scripts.get(image.digest())
        if script is None:
            raise ScriptedBackendError(
                "no script for this image; call observe_instance first"
            )
        return script

    def _script_for_hypothesis(self, hypothesis: LatexDoc) -> _InstanceScript:
        for script in self._scripts.values():
            if script.current_source() == hypothesis.source:
                return script
        raise ScriptedBackendError(
            "hypothesis does not match any scripted instance state"
        )

    # -------------------------------------------------------------- roles

    def capabilities(self) -> Capabilities:
        return Capabilities(attention=self.attention, layers=self.layers)

    def _replacement_for(self, token: str, rng: random.Random) -> str:
        if token in GREEK_COMMANDS:
            return rng.choice([g for g in GREEK_COMMANDS if g != token])
        if token.isdigit():
            return rng.choice([d for d in _DIGITS if d != token])
        return rng.choice([c for c in _LETTERS if c != token.lower()])

    def generate(self, image: RasterImage, prompt: str) -> LatexDoc:
        with self._lock:
            script = self._script_for_image(image)
            sample = script.generation_calls
            script.generation_calls += 1
            if self.sample_errors:
                count = self.sample_errors[sample % len(self.sample_errors)]
            else:
                count = self.errors
            count = min(count, len(script.eligible))
            rng = self._rng("inject", image.digest(), sample)
            script.live = {}
            script.churn_count = 0
            for order, position in enumerate(sorted(rng.sample(script.eligible, count))):
                original = script.spans[position][0]
                if self.break_compile and order == 0:
                    replacement = BREAK_TOKEN
                else:
                    replacement = self._replacement_for(original, rng)
                script.live[position] = _Injection(position, original, replacement)
            source = script.current_source()
            response = f"```latex\n{source}\n```"
            self._record("generation", prompt, (image,), "", response)
        text = extract_latex_reply(response)
        if not text:
            raise EmptyGeneration("scripted generation was empty")
        return LatexDoc(text)

    def compare(self, image: RasterImage, rendered: RasterImage, prompt: str) -> DiffReport:
        with self._lock:
            script = self._script_for_image(image)
            call = script.compare_calls
            script.compare_calls += 1
            rng = self._rng("halluc", image.digest(), call)
            items: list[DiffItem] = []
            if self.halluc_rate > 0 and rng.random() < self.halluc_rate:
                phrase = FABRICATED_PHRASES[
                    rng.randrange(len(FABRICATED_PHRASES))
                ]
                items.append(DiffItem(index=1, description=phrase, fabricated=True))
            for position in sorted(script.live):
                injection = script.live[position]
                items.append(
                    DiffItem(
                        index=len(items) + 1,
                        description=(
                            f"the rendering shows '{injection.replacement}' where the "
                            f"original shows '{injection.original}' (token {position})"
                        ),
                        fabricated=False,
                    )
                )
            report = (
                DiffReport.empty_report()
                if not items
                else DiffReport(items=tuple(items), raw_text="")
            )
            if not report.empty:
                report = DiffReport(items=report.items, raw_text=format_diff(report))
            self._record("comparison", prompt, (image, rendered), "", report.raw_text)
            return report

    def verify(
        self,
        diff: DiffReport,
        region_a: RasterImage,
        region_b: RasterImage,
        prompt: str,
    ) -> DiffReport:
        with self._lock:
            kept: list[DiffItem] = []
            for item in diff.items:
                if item.fabricated or item.description in FABRICATED_PHRASES:
                    continue
                kept.append(
                    DiffItem(
                        index=len(kept) + 1,
                        description=item.description,
                        source_index=(
                            item.source_index if item.source_index is not None else item.index
                        ),
                        fabricated=item.fabricated,
                    )
                )
            if kept:
                report = DiffReport(items=tuple(kept), raw_text="")
                report = DiffReport(items=report.items, raw_text=format_diff(report))
            else:
                report = DiffReport.empty_report()
            self._record(
                "verification", prompt, (region_a, region_b),
                format_diff(diff), report.raw_text,
            )
            return report

    def refine(
        self,
        hypothesis: LatexDoc,
        region_a: RasterImage,
        region_b: RasterImage,
        verified: DiffReport,
        prompt: str,
    ) -> LatexDoc:
        with self._lock:
            script = self._script_for_hypothesis(hypothesis)
            actions = 0
            for item in verified.items:
                if actions >= self.fix_per_round:
                    break
                if self._refine_item(script, item):
                    actions += 1
            if self.churn:
                script.churn_count += 1
            source = script.current_source()
            response = f"```latex\n{source}\n```"
            self._record(
                "refinement", prompt, (region_a, region_b),
                format_diff(verified), response,
            )
        text = extract_latex_reply(response)
        if not text:
            raise EmptyGeneration("scripted refinement was empty")
        return LatexDoc(text)

    def _refine_item(self, script: _InstanceScript, item: DiffItem) -> bool:
        """Apply one reported difference; returns True if anything changed."""
        genuine = _GENUINE_RE.match(item.description)
        if genuine:
            position = int(genuine.group(3))
            if position in script.live:
                del script.live[position]
                return True
            return False
        if _COMPILE_RE.match(item.description):
            for position, injection in sorted(script.live.items()):
                if injection.replacement == BREAK_TOKEN:
                    del script.live[position]
                    return True
            return False
        if item.fabricated or item.description in FABRICATED_PHRASES:
            # acting on an invented difference damages a correct token
            free = [p for p in script.eligible if p not in script.live]
            if not free:
                return False
            rng = self._rng("corrupt", script.instance_id, script.corrupt_calls)
            script.corrupt_calls += 1
            position = rng.choice(free)
            original = script.spans[position][0]
            script.live[position] = _Injection(
                position, original, self._replacement_for(original, rng)
            )
            return True
        return False

    def fetch_attention(
        self,
        image: RasterImage,
        query_text: str,
        layer_range: tuple[int, int],
    ) -> AttentionStack:
        with self._lock:
            if not self.attention:
                raise AttentionUnavailable("scripted backend configured without attention")
            script = self._script_for_image(image)
            lo, hi = layer_range
            if lo < 0 or hi >= self.layers:
                raise ProtocolError(
                    f"layer range {layer_range} outside 0..{self.layers - 1}"
                )
            grid_h = min(32, max(4, image.height // 14))
            grid_w = min(32, max(4, image.width // 14))
            if script.live:
                position = min(script.live)
                fraction = (position + 0.5) / max(1, len(script.spans))
                peak_col = min(grid_w - 1, max(0, int(fraction * grid_w)))
            else:
                peak_col = grid_w // 2
            peak_row = grid_h // 2
            rows = np.arange(grid_h, dtype=np.float64)[:, None]
            cols = np.arange(grid_w, dtype=np.float64)[None, :]
            sigma = max(grid_h, grid_w) / 4.0
            base = np.exp(
                -((rows - peak_row) ** 2 + (cols - peak_col) ** 2) / (2.0 * sigma**2)
            )
            n_tokens = min(_ATTN_MAX_TOKENS, max(1, len(tokenize_latex(query_text))))
            n_layers = hi - lo + 1
            mix = (
                np.arange(n_tokens)[:, None, None]
                + np.arange(n_layers)[None, :, None]
                + np.arange(_ATTN_HEADS)[None, None, :]
            ).astype(np.float64)
            # per-slice positive scale; scaling never moves the argmax
            scales = 0.5 + (0.1 * mix) % 0.7
            values = scales[..., None, None] * base[None, None, None, :, :]
            return AttentionStack(values=values, layers=tuple(range(lo, hi + 1)))

    def judge_similarity(
        self, reference: RasterImage, candidate: RasterImage, prompt: str
    ) -> float:
        # local import: metrics sits above backend in the module graph
        from ..metrics.visual import BINARIZE_THRESHOLD, canvas_pair

        with self._lock:
            pair = canvas_pair(reference, candidate)
            a = pair.a.pixels >= BINARIZE_THRESHOLD
            b = pair.b.pixels >= BINARIZE_THRESHOLD
            fraction = float(np.mean(a == b))
            score = 10 if fraction == 1.0 else int(np.floor(fraction * 10.0 + 0.5))
            response = str(score)
            self._record("judge", prompt, (reference, candidate), "", response)
        return parse_judge_score(response)

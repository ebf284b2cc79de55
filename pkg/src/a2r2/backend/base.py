"""Abstract backend contract shared by the HTTP client and the scripted stand-in.

A backend answers role-tagged inference requests. Roles and their image
arity are fixed:

==============  ======  =====================================
role            images  extra context
==============  ======  =====================================
generation      1       optional strategy suffix in prompt
comparison      2       input image, rendered hypothesis
verification    2       region crops; diff text in context
refinement      2       region crops; hypothesis + diff text
judge           2       ground-truth render, candidate render
attention       1       diff text as the query tokens
==============  ======  =====================================
"""

from __future__ import annotations

import logging
import math
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

from ..core.types import A2R2Error, Instance, LatexDoc, RasterImage
from ..diff import DiffReport

logger = logging.getLogger(__name__)

ROLE_IMAGE_ARITY = {
    "generation": 1,
    "comparison": 2,
    "verification": 2,
    "refinement": 2,
    "judge": 2,
    "attention": 1,
}

_ROLES_NEEDING_CONTEXT = frozenset({"verification", "refinement", "attention"})


class BackendError(A2R2Error):
    """Base class for backend failures."""


class BackendUnavailable(BackendError):
    """The backend cannot be reached or keeps failing after retries."""


class ProtocolError(BackendError):
    """The backend answered with a malformed or inconsistent payload."""


class EmptyGeneration(BackendError):
    """A generation/refinement call produced no usable LaTeX."""


class AttentionUnavailable(BackendError):
    """The backend cannot expose attention for this request."""


class JudgeParseError(BackendError):
    """The judge reply contained no score."""


@dataclass(frozen=True)
class Capabilities:
    attention: bool
    layers: int

    def __post_init__(self) -> None:
        if self.layers < 1:
            raise ValueError("layers must be >= 1")


@dataclass(frozen=True)
class BackendRequest:
    role: str
    prompt: str
    images: tuple[RasterImage, ...]
    text_context: str = ""
    want_attention: bool = False
    layer_range: Optional[tuple[int, int]] = None

    def __post_init__(self) -> None:
        if self.role not in ROLE_IMAGE_ARITY:
            raise ValueError(f"unknown role {self.role!r}")
        expected = ROLE_IMAGE_ARITY[self.role]
        if len(self.images) != expected:
            raise ValueError(
                f"role {self.role!r} takes {expected} image(s), got {len(self.images)}"
            )
        if self.role in _ROLES_NEEDING_CONTEXT and not self.text_context:
            raise ValueError(f"role {self.role!r} requires text_context")
        if self.want_attention and self.role != "attention":
            raise ValueError("want_attention is reserved for the attention role")
        if self.layer_range is not None:
            lo, hi = self.layer_range
            if lo < 0 or hi < lo:
                raise ValueError(f"invalid layer range {self.layer_range}")
        object.__setattr__(self, "images", tuple(self.images))


def central_layer_range(n_layers: int) -> tuple[int, int]:
    """Default layer window: the central one-eighth of the stack.

    The window holds ceil(n/8) layers centred on floor(n/2); for a 40-layer
    model that is layers 18..22 inclusive.
    """
    if n_layers < 1:
        raise ValueError("n_layers must be >= 1")
    count = math.ceil(n_layers / 8)
    start = n_layers // 2 - count // 2
    start = max(0, min(start, n_layers - count))
    return (start, start + count - 1)


def resolve_layer_range(
    configured: Optional[tuple[int, int]], capabilities: Capabilities
) -> tuple[int, int]:
    """Pick the layer window: an explicit configuration always wins."""
    if configured is not None:
        lo, hi = configured
        if hi >= capabilities.layers:
            raise ValueError(
                f"layer range {configured} exceeds model depth {capabilities.layers}"
            )
        return (lo, hi)
    return central_layer_range(capabilities.layers)


_FENCE_RE = re.compile(r"```(?:[a-zA-Z]*)\n(.*?)```", re.DOTALL)
_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?")


def extract_latex_reply(text: str) -> str:
    """Pull the LaTeX payload out of a model reply.

    Replies may wrap the source in markdown fences and surround it with
    prose (chain-of-thought in particular). The last fenced block wins;
    otherwise the whole reply is taken verbatim.
    """
    fences = _FENCE_RE.findall(text)
    if fences:
        return fences[-1].strip()
    return text.strip()


def parse_judge_score(text: str) -> float:
    """Extract the first numeric score from a judge reply, clamped to [0, 10]."""
    match = _NUMBER_RE.search(text)
    if match is None:
        raise JudgeParseError(f"judge reply contains no score: {text!r}")
    score = float(match.group(0))
    if score < 0.0 or score > 10.0:
        logger.warning("judge score %s outside [0, 10]; clamping", score)
        score = min(10.0, max(0.0, score))
    return score


class Backend(ABC):
    """Role-tagged inference surface used by the loop and the evaluators."""

    @abstractmethod
    def capabilities(self) -> Capabilities:
        raise NotImplementedError

    @abstractmethod
    def generate(self, image: RasterImage, prompt: str) -> LatexDoc:
        """Transcribe the formula image; raises EmptyGeneration on blank output."""
        raise NotImplementedError

    @abstractmethod
    def compare(self, image: RasterImage, rendered: RasterImage, prompt: str) -> DiffReport:
        raise NotImplementedError

    @abstractmethod
    def verify(
        self,
        diff: DiffReport,
        region_a: RasterImage,
        region_b: RasterImage,
        prompt: str,
    ) -> DiffReport:
        raise NotImplementedError

    @abstractmethod
    def refine(
        self,
        hypothesis: LatexDoc,
        region_a: RasterImage,
        region_b: RasterImage,
        verified: DiffReport,
        prompt: str,
    ) -> LatexDoc:
        raise NotImplementedError

    @abstractmethod
    def fetch_attention(
        self,
        image: RasterImage,
        query_text: str,
        layer_range: tuple[int, int],
    ):
        """Return an attention stack for the query; see a2r2.attnloc.AttentionStack."""
        raise NotImplementedError

    @abstractmethod
    def judge_similarity(
        self, reference: RasterImage, candidate: RasterImage, prompt: str
    ) -> float:
        raise NotImplementedError

    def observe_instance(self, instance: Instance) -> None:
        """Hook for test doubles that need the ground truth; no-op otherwise."""

    def close(self) -> None:
        """Release any connections; default backends hold none."""

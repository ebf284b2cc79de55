"""HTTP client for vision-language inference servers.

Wire protocol (JSON over HTTP):

``POST <base>/v1/infer``
    request  ``{"role", "prompt", "images": [<base64 PNG>, ...],
    "text_context", "want_attention", "layer_range": [lo, hi] | null}``
    response ``{"text": str, "attention"?: {"dims": [tokens, layers, heads,
    grid_h, grid_w], "data": <base64 little-endian float32>,
    "tokens": [str, ...]}}``

``GET <base>/v1/capabilities``
    response ``{"attention": bool, "layers": int}``

Transient failures (connection errors, timeouts, 5xx) are retried with
exponential backoff; requests are stateless so retries cannot duplicate
side effects. 4xx responses and malformed payloads are not retried.
"""

from __future__ import annotations

import base64
import logging
import math
import time
from typing import Optional

import numpy as np
import requests

from ..attnloc import AttentionStack
from ..core.types import LatexDoc, RasterImage
from ..diff import DiffItem, DiffReport, format_diff, parse_diff
from .base import (
    AttentionUnavailable,
    Backend,
    BackendRequest,
    BackendUnavailable,
    Capabilities,
    EmptyGeneration,
    ProtocolError,
    extract_latex_reply,
    parse_judge_score,
)

logger = logging.getLogger(__name__)


def encode_attention_payload(stack: AttentionStack) -> dict:
    """Serialize a stack into the wire format (used by test servers)."""
    data = stack.values.astype("<f4").tobytes()
    return {
        "dims": list(stack.values.shape),
        "data": base64.b64encode(data).decode("ascii"),
        "tokens": [f"t{i}" for i in range(stack.n_tokens)],
    }


def decode_attention_payload(payload: dict, layer_range: tuple[int, int]) -> AttentionStack:
    try:
        dims = [int(d) for d in payload["dims"]]
        raw = base64.b64decode(payload["data"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed attention payload: {exc}") from exc
    if len(dims) != 5:
        raise ProtocolError(f"attention dims must have rank 5, got {dims}")
    expected = math.prod(dims) * 4
    if len(raw) != expected:
        raise ProtocolError(
            f"attention data holds {len(raw)} bytes, dims {dims} require {expected}"
        )
    values = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float64)
    lo, hi = layer_range
    if dims[1] != hi - lo + 1:
        raise ProtocolError(
            f"attention has {dims[1]} layers, requested range {lo}..{hi}"
        )
    try:
        return AttentionStack(values=values, layers=tuple(range(lo, hi + 1)))
    except ValueError as exc:
        raise ProtocolError(f"invalid attention values: {exc}") from exc


def _image_b64(image: RasterImage) -> str:
    return base64.b64encode(image.to_png_bytes()).decode("ascii")


class HttpBackend(Backend):
    def __init__(
        self,
        base_url: str,
        retry_attempts: int = 3,
        retry_backoff: float = 0.5,
        timeout: float = 120.0,
    ) -> None:
        if retry_attempts < 1:
            raise ValueError("retry_attempts must be >= 1")
        self.base_url = base_url.rstrip("/")
        self.retry_attempts = retry_attempts
        self.retry_backoff = retry_backoff
        self.timeout = timeout
        self._session = requests.Session()
        self._capabilities: Optional[Capabilities] = None

    # ------------------------------------------------------------ plumbing

    def _request_with_retry(self, method: str, url: str, **kwargs) -> requests.Response:
        last_error: Optional[Exception] = None
        for attempt in range(self.retry_attempts):
            if attempt:
                delay = self.retry_backoff * (2 ** (attempt - 1))
                logger.warning(
                    "backend retry %d/%d after %.2fs: %s",
                    attempt, self.retry_attempts - 1, delay, last_error,
                )
                time.sleep(delay)
            try:
                response = self._session.request(
                    method, url, timeout=self.timeout, **kwargs
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = BackendUnavailable(
                    f"{url} answered {response.status_code}"
                )
                continue
            if response.status_code >= 400:
                raise ProtocolError(
                    f"{url} answered {response.status_code}: {response.text[:200]}"
                )
            return response
        raise BackendUnavailable(f"backend unreachable after {self.retry_attempts} attempts: {last_error}")

    def _infer(self, request: BackendRequest) -> dict:
        payload = {
            "role": request.role,
            "prompt": request.prompt,
            "images": [_image_b64(image) for image in request.images],
            "text_context": request.text_context,
            "want_attention": request.want_attention,
            "layer_range": list(request.layer_range) if request.layer_range else None,
        }
        response = self._request_with_retry(
            "POST", f"{self.base_url}/v1/infer", json=payload
        )
        try:
            body = response.json()
        except ValueError as exc:
            raise ProtocolError(f"non-JSON inference response: {exc}") from exc
        if "text" not in body or not isinstance(body["text"], str):
            raise ProtocolError("inference response lacks a text field")
        return body

    # --------------------------------------------------------------- roles

    def capabilities(self) -> Capabilities:
        if self._capabilities is None:
            response = self._request_with_retry(
                "GET", f"{self.base_url}/v1/capabilities"
            )
            try:
                body = response.json()
                self._capabilities = Capabilities(
                    attention=bool(body["attention"]), layers=int(body["layers"])
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise ProtocolError(f"malformed capabilities: {exc}") from exc
        return self._capabilities

    def generate(self, image: RasterImage, prompt: str) -> LatexDoc:
        body = self._infer(BackendRequest("generation", prompt, (image,)))
        text = extract_latex_reply(body["text"])
        if not text:
            raise EmptyGeneration("backend returned an empty generation")
        return LatexDoc(text)

    def compare(self, image: RasterImage, rendered: RasterImage, prompt: str) -> DiffReport:
        body = self._infer(BackendRequest("comparison", prompt, (image, rendered)))
        return parse_diff(body["text"])

    def verify(
        self,
        diff: DiffReport,
        region_a: RasterImage,
        region_b: RasterImage,
        prompt: str,
    ) -> DiffReport:
        body = self._infer(
            BackendRequest(
                "verification", prompt, (region_a, region_b),
                text_context=format_diff(diff),
            )
        )
        parsed = parse_diff(body["text"])
        # the model may confirm anything, but the contract is a subset of
        # the incoming items: resolve each reply onto an input index or
        # drop it
        valid = {item.index for item in diff.items}
        kept: list[DiffItem] = []
        seen: set[int] = set()
        for item in parsed.items:
            source = item.source_index if item.source_index is not None else item.index
            if source not in valid or source in seen:
                continue
            seen.add(source)
            kept.append(
                DiffItem(
                    index=len(kept) + 1,
                    description=item.description,
                    source_index=source,
                )
            )
        if not kept:
            return DiffReport.empty_report(raw_text=body["text"])
        return DiffReport(items=tuple(kept), raw_text=body["text"])

    def refine(
        self,
        hypothesis: LatexDoc,
        region_a: RasterImage,
        region_b: RasterImage,
        verified: DiffReport,
        prompt: str,
    ) -> LatexDoc:
        body = self._infer(
            BackendRequest(
                "refinement", prompt, (region_a, region_b),
                text_context=f"{hypothesis.source}\n---\n{format_diff(verified)}",
            )
        )
        text = extract_latex_reply(body["text"])
        if not text:
            raise EmptyGeneration("backend returned an empty refinement")
        return LatexDoc(text)

    def fetch_attention(
        self,
        image: RasterImage,
        query_text: str,
        layer_range: tuple[int, int],
    ) -> AttentionStack:
        if not self.capabilities().attention:
            raise AttentionUnavailable("backend does not expose attention")
        body = self._infer(
            BackendRequest(
                "attention", "", (image,),
                text_context=query_text,
                want_attention=True,
                layer_range=layer_range,
            )
        )
        if "attention" not in body or body["attention"] is None:
            raise AttentionUnavailable("backend answered without attention data")
        return decode_attention_payload(body["attention"], layer_range)

    def judge_similarity(
        self, reference: RasterImage, candidate: RasterImage, prompt: str
    ) -> float:
        body = self._infer(BackendRequest("judge", prompt, (reference, candidate)))
        return parse_judge_score(body["text"])

    def close(self) -> None:
        self._session.close()

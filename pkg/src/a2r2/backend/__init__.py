from ..diff import (
    NO_DIFFERENCES_SENTINEL,
    DiffItem,
    DiffReport,
    format_diff,
    parse_diff,
)
from .base import (
    AttentionUnavailable,
    Backend,
    BackendError,
    BackendRequest,
    BackendUnavailable,
    Capabilities,
    EmptyGeneration,
    JudgeParseError,
    ProtocolError,
    central_layer_range,
    extract_latex_reply,
    parse_judge_score,
    resolve_layer_range,
)
from .factory import create_backend
from .http import HttpBackend, decode_attention_payload, encode_attention_payload
from .scripted import ScriptedBackend

__all__ = [
    "AttentionUnavailable",
    "Backend",
    "BackendError",
    "BackendRequest",
    "BackendUnavailable",
    "Capabilities",
    "DiffItem",
    "DiffReport",
    "EmptyGeneration",
    "HttpBackend",
    "JudgeParseError",
    "NO_DIFFERENCES_SENTINEL",
    "ProtocolError",
    "ScriptedBackend",
    "central_layer_range",
    "create_backend",
    "decode_attention_payload",
    "encode_attention_payload",
    "extract_latex_reply",
    "format_diff",
    "parse_diff",
    "parse_judge_score",
    "resolve_layer_range",
]

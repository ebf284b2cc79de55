from .service import (
    PREAMBLE,
    RenderResult,
    RenderService,
    Toolchain,
    ToolchainError,
    normalize_canvas,
    probe_toolchain,
    strip_delimiters,
    wrap_source,
)

__all__ = [
    "PREAMBLE",
    "RenderResult",
    "RenderService",
    "Toolchain",
    "ToolchainError",
    "normalize_canvas",
    "probe_toolchain",
    "strip_delimiters",
    "wrap_source",
]

"""Shared domain types: grayscale rasters, LaTeX documents, dataset rows.

Everything here is immutable after construction so instances can be shared
freely across worker threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from PIL import Image

from .tokenizer import tokenize_latex


class A2R2Error(Exception):
    """Base class for errors raised by this package."""


@dataclass(frozen=True)
class RasterImage:
    """A row-major 8-bit grayscale raster.

    ``pixels`` has shape (height, width), dtype uint8, and is frozen
    (non-writeable). ``dpi`` is the render resolution when the image came out
    of the renderer; source images loaded from disk have ``dpi=None``.
    """

    pixels: np.ndarray
    dpi: Optional[float] = None

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels, dtype=np.uint8)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D grayscale array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image dimensions must be >= 1, got {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def digest(self) -> str:
        """SHA-256 over dimensions and raw pixel bytes."""
        h = hashlib.sha256()
        h.update(f"{self.width}x{self.height}:".encode())
        h.update(self.pixels.tobytes())
        return h.hexdigest()

    @classmethod
    def blank(cls, width: int, height: int, value: int = 255) -> "RasterImage":
        return cls(np.full((height, width), value, dtype=np.uint8))

    @classmethod
    def from_pil(cls, img: Image.Image, dpi: Optional[float] = None) -> "RasterImage":
        """Convert any PIL image to grayscale by channel-luminance average.

        Alpha, when present, is composited over white first. RGB channels are
        averaged with equal weight (rendered LaTeX carries no chroma signal).
        """
        if img.mode in ("LA", "RGBA", "PA", "P"):
            img = img.convert("RGBA")
            canvas = Image.new("RGBA", img.size, (255, 255, 255, 255))
            img = Image.alpha_composite(canvas, img).convert("RGB")
        if img.mode == "L":
            arr = np.asarray(img, dtype=np.uint8)
        else:
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
            arr = np.floor(rgb.mean(axis=2) + 0.5).astype(np.uint8)
        return cls(arr, dpi=dpi)

    @classmethod
    def from_file(cls, path) -> "RasterImage":
        with Image.open(path) as img:
            return cls.from_pil(img)

    def to_pil(self) -> Image.Image:
        return Image.fromarray(np.asarray(self.pixels), mode="L")

    def to_png_bytes(self) -> bytes:
        from io import BytesIO

        buf = BytesIO()
        self.to_pil().save(buf, format="PNG")
        return buf.getvalue()

    def save(self, path) -> None:
        self.to_pil().save(path, format="PNG")

    @classmethod
    def from_png_bytes(cls, data: bytes) -> "RasterImage":
        from io import BytesIO

        with Image.open(BytesIO(data)) as img:
            return cls.from_pil(img)


@dataclass(frozen=True)
class LatexDoc:
    """LaTeX source plus its derived token sequence.

    ``tokens`` is always exactly ``tokenize_latex(source)``; it is computed at
    construction and can never go stale.
    """

    source: str
    tokens: tuple[str, ...] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tokenize_latex(self.source))

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Instance:
    """One dataset row: an input image and (optionally) its reference LaTeX."""

    id: str
    image: RasterImage
    ground_truth: Optional[LatexDoc] = None

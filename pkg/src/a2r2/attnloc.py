"""Attention-guided localization.

Reduces per-token/layer/head cross-attention maps to one saliency map,
normalizes it to 8-bit range, thresholds at a percentile, keeps the largest
8-connected region, dilates it, and maps the resulting bounding box into
pixel space to crop matching regions from both images.

Every stage is a pure function over immutable inputs; all of them are
validated against independent brute-force oracles in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core.types import A2R2Error, RasterImage


class NoSalientRegion(A2R2Error):
    """No usable high-attention region (empty mask or degenerate crop)."""


@dataclass(frozen=True)
class AttentionStack:
    """Spatial attention maps indexed by (token, layer, head).

    ``values`` has shape (n_tokens, n_layers, n_heads, grid_h, grid_w) with
    non-negative entries; ``layers`` lists the inclusive source layer indices.
    """

    values: np.ndarray
    layers: tuple[int, ...]

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 5:
            raise ValueError(f"expected 5-D (token, layer, head, h, w), got shape {arr.shape}")
        if arr.shape[1] != len(self.layers):
            raise ValueError(
                f"layer axis {arr.shape[1]} does not match layer list of length {len(self.layers)}"
            )
        if arr.size == 0:
            raise ValueError("attention stack must be non-empty")
        if (arr < 0).any():
            raise ValueError("attention values must be non-negative")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def n_tokens(self) -> int:
        return self.values.shape[0]

    @property
    def n_heads(self) -> int:
        return self.values.shape[2]

    @property
    def grid_h(self) -> int:
        return self.values.shape[3]

    @property
    def grid_w(self) -> int:
        return self.values.shape[4]


@dataclass(frozen=True)
class SaliencyMap:
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if arr.ndim != 2:
            raise ValueError(f"saliency map must be 2-D, got shape {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def grid_h(self) -> int:
        return self.values.shape[0]

    @property
    def grid_w(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class BinaryMask:
    """H×W mask with entries in {0, 255} only."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.uint8))
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        if not np.isin(arr, (0, 255)).all():
            raise ValueError("mask entries must be 0 or 255")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def grid_h(self) -> int:
        return self.values.shape[0]

    @property
    def grid_w(self) -> int:
        return self.values.shape[1]

    def white_pixels(self) -> frozenset[tuple[int, int]]:
        rows, cols = np.nonzero(self.values)
        return frozenset(zip(rows.tolist(), cols.tolist()))


@dataclass(frozen=True)
class Component:
    """One maximal 8-connected set of white grid cells."""

    pixels: frozenset[tuple[int, int]]

    @property
    def area(self) -> int:
        return len(self.pixels)

    @property
    def seed(self) -> tuple[int, int]:
        return min(self.pixels)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box; x/y are the left column / top row."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w < 1 or self.h < 1:
            raise ValueError(f"box must have positive extent, got w={self.w} h={self.h}")


def reduce_attention(stack: AttentionStack) -> SaliencyMap:
    """Arithmetic mean over tokens, layers, and heads.

    Averaging heads within a layer, then layers, then tokens collapses into
    one plain mean because every group has uniform weight.
    """
    return SaliencyMap(stack.values.mean(axis=(0, 1, 2)))


def normalize_u8(saliency: SaliencyMap) -> SaliencyMap:
    """Min-max normalize into [0, 255] with round-half-away-from-zero.

    A constant map (max == min) normalizes to all zeros; the downstream >=
    threshold rule then degrades gracefully to an all-white mask.
    """
    a = saliency.values
    lo = a.min()
    hi = a.max()
    if hi == lo:
        return SaliencyMap(np.zeros_like(a))
    scaled = 255.0 * (a - lo) / (hi - lo)
    # values are non-negative here, so floor(x + 0.5) is half-away-from-zero
    rounded = np.floor(scaled + 0.5)
    return SaliencyMap(np.clip(rounded, 0.0, 255.0))


def percentile_linear(values: np.ndarray, p: float) -> float:
    """Linear-interpolation percentile at rank p/100 * (N - 1)."""
    flat = np.sort(np.asarray(values, dtype=np.float64).ravel())
    n = flat.size
    if n == 1:
        return float(flat[0])
    rank = p / 100.0 * (n - 1)
    lo = int(math.floor(rank))
    hi = min(lo + 1, n - 1)
    frac = rank - lo
    return float(flat[lo] + frac * (flat[hi] - flat[lo]))


def threshold_percentile(saliency: SaliencyMap, p: float) -> BinaryMask:
    """White (255) where the value is >= the p-th percentile, else black."""
    if not (0 < p < 100):
        raise ValueError(f"percentile level must be in (0, 100), got {p}")
    tau = percentile_linear(saliency.values, p)
    return BinaryMask(np.where(saliency.values >= tau, 255, 0).astype(np.uint8))


_NEIGHBOR_OFFSETS = tuple(
    (dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)
)


def extract_components(mask: BinaryMask) -> list[Component]:
    """Partition white pixels into maximal 8-connected components.

    Components are returned ordered by their seed (topmost-leftmost member),
    which makes the output deterministic.
    """
    arr = mask.values
    h, w = arr.shape
    visited = np.zeros((h, w), dtype=bool)
    components: list[Component] = []
    white_rows, white_cols = np.nonzero(arr)
    for r0, c0 in zip(white_rows.tolist(), white_cols.tolist()):
        if visited[r0, c0]:
            continue
        stack = [(r0, c0)]
        visited[r0, c0] = True
        pixels = []
        while stack:
            r, c = stack.pop()
            pixels.append((r, c))
            for dr, dc in _NEIGHBOR_OFFSETS:
                nr, nc = r + dr, c + dc
                if 0 <= nr < h and 0 <= nc < w and arr[nr, nc] and not visited[nr, nc]:
                    visited[nr, nc] = True
                    stack.append((nr, nc))
        components.append(Component(frozenset(pixels)))
    components.sort(key=lambda comp: comp.seed)
    return components


def largest_component(components: list[Component]) -> Component:
    """Max by area; ties broken by lexicographically smallest seed."""
    if not components:
        raise NoSalientRegion("mask has no white pixels")
    return min(components, key=lambda comp: (-comp.area, comp.seed))


def dilate(component: Component, kernel: int, grid_h: int, grid_w: int) -> BinaryMask:
    """Morphological dilation of the component by a kernel×kernel square.

    The white set is the union of each pixel's kernel-neighborhood, clipped
    to the grid; kernel=1 is the identity on the pixel set.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"kernel must be odd and >= 1, got {kernel}")
    radius = kernel // 2
    out = np.zeros((grid_h, grid_w), dtype=np.uint8)
    for r, c in component.pixels:
        top = max(0, r - radius)
        bottom = min(grid_h, r + radius + 1)
        left = max(0, c - radius)
        right = min(grid_w, c + radius + 1)
        out[top:bottom, left:right] = 255
    return BinaryMask(out)


def bounding_box(mask: BinaryMask) -> BoundingBox:
    """Minimal axis-aligned box containing every white pixel."""
    rows, cols = np.nonzero(mask.values)
    if rows.size == 0:
        raise NoSalientRegion("mask has no white pixels")
    y = int(rows.min())
    x = int(cols.min())
    return BoundingBox(x=x, y=y, w=int(cols.max()) - x + 1, h=int(rows.max()) - y + 1)


def _grid_box_to_pixels(
    box: BoundingBox, grid: tuple[int, int], width: int, height: int
) -> tuple[int, int, int, int]:
    """Map a grid-space box into pixel space, rounding outward.

    Returns (left, top, right, bottom) with exclusive right/bottom, clamped
    to the image. Floor on min edges and ceil on max edges guarantees no
    attended content is lost to rounding.
    """
    grid_h, grid_w = grid
    sx = width / grid_w
    sy = height / grid_h
    left = max(0, math.floor(box.x * sx))
    top = max(0, math.floor(box.y * sy))
    right = min(width, math.ceil((box.x + box.w) * sx))
    bottom = min(height, math.ceil((box.y + box.h) * sy))
    return left, top, right, bottom


def crop_regions(
    image: RasterImage,
    rendered: RasterImage,
    box: BoundingBox,
    grid: tuple[int, int],
) -> tuple[RasterImage, RasterImage]:
    """Crop the grid-space box out of both images.

    Each image gets its own scale factors (image size over grid size); the
    crops are copies, never views.
    """
    grid_h, grid_w = grid
    if box.x < 0 or box.y < 0 or box.x + box.w > grid_w or box.y + box.h > grid_h:
        raise ValueError(f"box {box} exceeds grid {grid}")
    crops = []
    for img in (image, rendered):
        left, top, right, bottom = _grid_box_to_pixels(box, grid, img.width, img.height)
        if right <= left or bottom <= top:
            raise NoSalientRegion(
                f"grid box {box} maps to an empty pixel rectangle on a "
                f"{img.width}x{img.height} image"
            )
        crops.append(RasterImage(img.pixels[top:bottom, left:right].copy(), dpi=img.dpi))
    return crops[0], crops[1]


def localize_verbose(
    image: RasterImage,
    rendered: RasterImage,
    stack: AttentionStack,
    percentile: float = 75.0,
    dilation_kernel: int = 3,
) -> tuple[RasterImage, RasterImage, BoundingBox, BinaryMask]:
    """Full chain: reduce → normalize → threshold → components → largest →
    dilate → bounding box → crop. Also returns the dilated mask for
    overlay rendering."""
    saliency = normalize_u8(reduce_attention(stack))
    mask = threshold_percentile(saliency, percentile)
    component = largest_component(extract_components(mask))
    dilated = dilate(component, dilation_kernel, stack.grid_h, stack.grid_w)
    box = bounding_box(dilated)
    region_a, region_b = crop_regions(image, rendered, box, (stack.grid_h, stack.grid_w))
    return region_a, region_b, box, dilated


def localize(
    image: RasterImage,
    rendered: RasterImage,
    stack: AttentionStack,
    percentile: float = 75.0,
    dilation_kernel: int = 3,
) -> tuple[RasterImage, RasterImage, BoundingBox]:
    """Like localize_verbose, without the mask."""
    region_a, region_b, box, _ = localize_verbose(
        image, rendered, stack, percentile, dilation_kernel
    )
    return region_a, region_b, box


def overlay_mask(image: RasterImage, mask: BinaryMask, box: Optional[BoundingBox]) -> RasterImage:
    """Debug overlay: darken masked grid cells and draw the box outline."""
    arr = image.pixels.astype(np.float64).copy()
    h, w = arr.shape
    cell_h = h / mask.grid_h
    cell_w = w / mask.grid_w
    for r, c in zip(*np.nonzero(mask.values)):
        top = int(r * cell_h)
        bottom = min(h, int(math.ceil((r + 1) * cell_h)))
        left = int(c * cell_w)
        right = min(w, int(math.ceil((c + 1) * cell_w)))
        arr[top:bottom, left:right] *= 0.6
    if box is not None:
        left, top, right, bottom = _grid_box_to_pixels(
            box, (mask.grid_h, mask.grid_w), w, h
        )
        right = max(left + 1, right)
        bottom = max(top + 1, bottom)
        arr[top:bottom, left] = 0
        arr[top:bottom, right - 1] = 0
        arr[top, left:right] = 0
        arr[bottom - 1, left:right] = 0
    return RasterImage(np.clip(arr, 0, 255).astype(np.uint8), dpi=image.dpi)

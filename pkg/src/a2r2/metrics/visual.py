"""Pixel-level and complex-wavelet visual similarity.

Both metrics first place the two rasters on a common canvas: white padding
up to the maximum dimensions, content anchored top-left. Match then compares
binarized pixels; CW-SSIM compares complex Gabor subband coefficients over
sliding windows, which makes it tolerant to small translations and
rasterization jitter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core.types import RasterImage

BINARIZE_THRESHOLD = 128

# Gabor bank: 2 scales x 4 orientations, Gaussian envelope sigma = lambda/2.
CW_WAVELENGTHS = (8.0, 16.0)
CW_ORIENTATIONS_DEG = (0.0, 45.0, 90.0, 135.0)
CW_WINDOW = 7
CW_STRIDE = 4
CW_K = 0.01 * CW_WINDOW * CW_WINDOW
CW_MIN_SIZE = 32


@dataclass(frozen=True)
class CanvasPair:
    """Two rasters normalized to identical dimensions."""

    a: RasterImage
    b: RasterImage

    def __post_init__(self) -> None:
        if self.a.pixels.shape != self.b.pixels.shape:
            raise ValueError("canvas pair images must share dimensions")


def _pad_to(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    out = np.full((height, width), 255, dtype=np.uint8)
    out[: arr.shape[0], : arr.shape[1]] = arr
    return out


def canvas_pair(a: RasterImage, b: RasterImage, min_size: int = 1) -> CanvasPair:
    height = max(a.height, b.height, min_size)
    width = max(a.width, b.width, min_size)
    return CanvasPair(
        RasterImage(_pad_to(a.pixels, height, width)),
        RasterImage(_pad_to(b.pixels, height, width)),
    )


def pixel_match(a: RasterImage, b: RasterImage) -> float:
    """Percentage of identical binarized pixels on the common canvas."""
    pair = canvas_pair(a, b)
    wa = pair.a.pixels >= BINARIZE_THRESHOLD
    wb = pair.b.pixels >= BINARIZE_THRESHOLD
    return 100.0 * float(np.mean(wa == wb))


def _gabor_kernel(wavelength: float, theta_deg: float) -> np.ndarray:
    """Complex Gabor filter: Gaussian envelope times a plane wave."""
    sigma = 0.5 * wavelength
    radius = int(np.ceil(3.0 * sigma))
    coords = np.arange(-radius, radius + 1, dtype=np.float64)
    x, y = np.meshgrid(coords, coords)
    theta = np.deg2rad(theta_deg)
    envelope = np.exp(-(x**2 + y**2) / (2.0 * sigma**2))
    phase = 2.0 * np.pi * (x * np.cos(theta) + y * np.sin(theta)) / wavelength
    return envelope * np.exp(1j * phase)


_BANK: list[np.ndarray] | None = None


def _filter_bank() -> list[np.ndarray]:
    global _BANK
    if _BANK is None:
        _BANK = [
            _gabor_kernel(wavelength, theta)
            for wavelength in CW_WAVELENGTHS
            for theta in CW_ORIENTATIONS_DEG
        ]
    return _BANK


def _convolve_same(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """FFT convolution cropped to the image size (centered, odd kernels)."""
    ih, iw = image.shape
    kh, kw = kernel.shape
    fh, fw = ih + kh - 1, iw + kw - 1
    spectrum = np.fft.fft2(image, s=(fh, fw)) * np.fft.fft2(kernel, s=(fh, fw))
    full = np.fft.ifft2(spectrum)
    top = (kh - 1) // 2
    left = (kw - 1) // 2
    return full[top : top + ih, left : left + iw]


def _window_sums(arr: np.ndarray, win: int, stride: int) -> np.ndarray:
    """Sums over win x win windows at the given stride (summed-area table)."""
    h, w = arr.shape
    sat = np.zeros((h + 1, w + 1), dtype=arr.dtype)
    sat[1:, 1:] = arr.cumsum(axis=0).cumsum(axis=1)
    rows = np.arange(0, h - win + 1, stride)
    cols = np.arange(0, w - win + 1, stride)
    r0 = rows[:, None]
    c0 = cols[None, :]
    return (
        sat[r0 + win, c0 + win]
        - sat[r0, c0 + win]
        - sat[r0 + win, c0]
        + sat[r0, c0]
    )


def cw_ssim(a: RasterImage, b: RasterImage) -> float:
    """Windowed complex-wavelet structural similarity x 100.

    Per subband and 7x7 window (stride 4):
        (2 * |sum(ca * conj(cb))| + K) / (sum|ca|^2 + sum|cb|^2 + K)
    with K = 0.01 * 49. The score is the mean over every window of every
    subband. Each window value lies in (0, 1], so the score is in (0, 100].
    """
    pair = canvas_pair(a, b, min_size=CW_MIN_SIZE)
    img_a = pair.a.pixels.astype(np.float64) / 255.0
    img_b = pair.b.pixels.astype(np.float64) / 255.0
    values = []
    for kernel in _filter_bank():
        ca = _convolve_same(img_a, kernel)
        cb = _convolve_same(img_b, kernel)
        cross = _window_sums(ca * np.conj(cb), CW_WINDOW, CW_STRIDE)
        power = _window_sums(
            np.abs(ca) ** 2 + np.abs(cb) ** 2, CW_WINDOW, CW_STRIDE
        )
        band = (2.0 * np.abs(cross) + CW_K) / (np.real(power) + CW_K)
        values.append(band.ravel())
    score = 100.0 * float(np.mean(np.concatenate(values)))
    # each window value is <= 1 up to floating-point error; clamp the residue
    return min(100.0, max(0.0, score))

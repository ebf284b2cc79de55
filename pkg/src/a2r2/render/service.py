"""LaTeX-to-raster rendering via external toolchains.

Every compile runs in its own temporary directory, is subject to a timeout,
and is cached by a digest of (stripped source, dpi, toolchain). Identical
inputs therefore yield bit-identical pixels on one host. Compile failures
are ordinary outcomes carrying a log excerpt, not exceptions: the loop
treats a non-compiling hypothesis as a survivable round event.

Toolchain resolution order:
  1. A2R2_LATEX_BIN (with A2R2_RASTER_BIN or an auto-detected converter);
     if explicitly set but absent, startup fails.
  2. pdflatex on PATH plus a pdftoppm/ImageMagick-class converter.
  3. The bundled mathtext rasterizer (always available, same contracts).
"""

from __future__ import annotations

import hashlib
import os
import re
import shutil
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..core.config import RenderOptions
from ..core.types import A2R2Error, LatexDoc, RasterImage

LOG_EXCERPT_LINES = 20
TRIM_INK_THRESHOLD = 250
CANVAS_MARGIN = 4


class ToolchainError(A2R2Error):
    """Configured render toolchain is unusable."""


@dataclass(frozen=True)
class Toolchain:
    kind: str  # "pdflatex" or "mathtext"
    latex_bin: Optional[str]
    raster_bin: Optional[str]

    @property
    def identifier(self) -> str:
        return f"{self.kind}:{self.latex_bin or ''}:{self.raster_bin or ''}"


def _which(name: str) -> Optional[str]:
    return shutil.which(name)


def probe_toolchain() -> Toolchain:
    """Resolve the render toolchain once, at startup."""
    explicit = os.environ.get("A2R2_LATEX_BIN")
    if explicit:
        latex_bin = _which(explicit) or (explicit if os.path.exists(explicit) else None)
        if latex_bin is None:
            raise ToolchainError(f"A2R2_LATEX_BIN={explicit!r} not found")
        raster_bin = _resolve_raster_bin(required=True)
        return Toolchain("pdflatex", latex_bin, raster_bin)
    pdflatex = _which("pdflatex")
    if pdflatex:
        raster_bin = _resolve_raster_bin(required=False)
        if raster_bin:
            return Toolchain("pdflatex", pdflatex, raster_bin)
    return Toolchain("mathtext", None, None)


def _resolve_raster_bin(required: bool) -> Optional[str]:
    explicit = os.environ.get("A2R2_RASTER_BIN")
    if explicit:
        found = _which(explicit) or (explicit if os.path.exists(explicit) else None)
        if found is None:
            raise ToolchainError(f"A2R2_RASTER_BIN={explicit!r} not found")
        return found
    for candidate in ("pdftoppm", "magick", "convert"):
        found = _which(candidate)
        if found:
            return found
    if required:
        raise ToolchainError(
            "A2R2_LATEX_BIN is set but no raster converter was found; "
            "set A2R2_RASTER_BIN"
        )
    return None


@dataclass(frozen=True)
class RenderResult:
    source_hash: str
    duration: float
    image: Optional[RasterImage] = None
    failure_log: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.image is not None

    @property
    def timed_out(self) -> bool:
        return bool(self.failure_log) and self.failure_log.startswith("timeout")


_FENCE_RE = re.compile(r"```(?:[a-zA-Z]+)?\n?(.*?)```", re.DOTALL)

PREAMBLE = (
    "\\documentclass[preview,border=4pt]{standalone}\n"
    "\\usepackage{amsmath,amssymb}\n"
    "\\pagestyle{empty}\n"
    "\\begin{document}\n"
    "\\[\n%s\n\\]\n"
    "\\end{document}\n"
)


def strip_delimiters(text: str) -> str:
    """Remove markdown fences and math delimiters from model output."""
    text = text.strip()
    fences = _FENCE_RE.findall(text)
    if fences:
        text = fences[-1].strip()
    for opener, closer in (("\\[", "\\]"), ("$$", "$$"), ("$", "$")):
        if text.startswith(opener) and text.endswith(closer) and len(text) > len(opener) + len(closer):
            text = text[len(opener) : -len(closer)].strip()
    return text


def wrap_source(stripped: str) -> str:
    return PREAMBLE % stripped


def normalize_canvas(img: RasterImage) -> RasterImage:
    """Trim to the ink bounding box (<250 intensity) and add a 4px margin.

    All-white input collapses to an 8x8 white canvas. Idempotent.
    """
    arr = np.asarray(img.pixels)
    ink_rows, ink_cols = np.nonzero(arr < TRIM_INK_THRESHOLD)
    if ink_rows.size == 0:
        return RasterImage(np.full((8, 8), 255, dtype=np.uint8), dpi=img.dpi)
    top, bottom = int(ink_rows.min()), int(ink_rows.max())
    left, right = int(ink_cols.min()), int(ink_cols.max())
    content = arr[top : bottom + 1, left : right + 1]
    out = np.full(
        (content.shape[0] + 2 * CANVAS_MARGIN, content.shape[1] + 2 * CANVAS_MARGIN),
        255,
        dtype=np.uint8,
    )
    out[CANVAS_MARGIN:-CANVAS_MARGIN, CANVAS_MARGIN:-CANVAS_MARGIN] = content
    return RasterImage(out, dpi=img.dpi)


def _tail(text: str, lines: int = LOG_EXCERPT_LINES) -> str:
    parts = text.strip().splitlines()
    return "\n".join(parts[-lines:]) if parts else "(no output)"


class RenderService:
    """Thread-safe renderer with memory + disk caching.

    ``cache_dir`` defaults to A2R2_CACHE_DIR (or ~/.cache/a2r2/render); pass
    cache_dir=None explicitly via A2R2_CACHE_DIR="" to disable disk caching.
    ``max_concurrency`` bounds simultaneous compile subprocesses.
    """

    def __init__(
        self,
        toolchain: Optional[Toolchain] = None,
        cache_dir: Optional[os.PathLike] = "auto",
        max_concurrency: int = 8,
    ):
        self.toolchain = toolchain or probe_toolchain()
        if cache_dir == "auto":
            env = os.environ.get("A2R2_CACHE_DIR")
            if env == "":
                cache_dir = None
            else:
                cache_dir = Path(env) if env else Path.home() / ".cache" / "a2r2" / "render"
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._memory: dict[str, RenderResult] = {}
        self._cache_lock = threading.Lock()
        self._compile_slots = threading.Semaphore(max_concurrency)

    def source_hash(self, doc: LatexDoc, opts: RenderOptions) -> str:
        stripped = strip_delimiters(doc.source)
        key = f"{stripped}\x00dpi={opts.dpi}\x00tool={self.toolchain.identifier}"
        return hashlib.sha256(key.encode()).hexdigest()

    def render_latex(self, doc: LatexDoc, opts: Optional[RenderOptions] = None) -> RenderResult:
        opts = opts or RenderOptions()
        key = self.source_hash(doc, opts)
        with self._cache_lock:
            cached = self._memory.get(key)
        if cached is not None:
            return cached
        disk = self._load_from_disk(key)
        if disk is not None:
            with self._cache_lock:
                self._memory[key] = disk
            return disk
        result = self._render_uncached(doc, opts, key)
        with self._cache_lock:
            self._memory[key] = result
        if result.ok:
            self._store_to_disk(key, result)
        return result

    # -- cache -------------------------------------------------------------

    def _load_from_disk(self, key: str) -> Optional[RenderResult]:
        if self.cache_dir is None:
            return None
        png = self.cache_dir / f"{key}.png"
        if not png.exists():
            return None
        try:
            image = RasterImage.from_file(png)
        except (OSError, ValueError):
            return None
        return RenderResult(source_hash=key, duration=0.0, image=image)

    def _store_to_disk(self, key: str, result: RenderResult) -> None:
        if self.cache_dir is None or result.image is None:
            return
        target = self.cache_dir / f"{key}.png"
        tmp = self.cache_dir / f".{key}.{os.getpid()}.tmp"
        try:
            result.image.save(tmp)
            os.replace(tmp, target)
        except OSError:
            pass

    # -- compilation -------------------------------------------------------

    def _render_uncached(self, doc: LatexDoc, opts: RenderOptions, key: str) -> RenderResult:
        stripped = strip_delimiters(doc.source)
        wrapped = wrap_source(stripped)
        start = time.monotonic()
        with self._compile_slots:
            with tempfile.TemporaryDirectory(prefix="a2r2-render-") as tmpdir:
                tex_path = Path(tmpdir) / "doc.tex"
                tex_path.write_text(wrapped, encoding="utf-8")
                try:
                    png_path = self._compile(tex_path, Path(tmpdir), opts)
                except _CompileFailure as fail:
                    return RenderResult(
                        source_hash=key,
                        duration=time.monotonic() - start,
                        failure_log=fail.log,
                    )
                image = RasterImage.from_file(png_path)
        normalized = normalize_canvas(RasterImage(image.pixels, dpi=opts.dpi))
        return RenderResult(
            source_hash=key,
            duration=time.monotonic() - start,
            image=normalized,
        )

    def _compile(self, tex_path: Path, tmpdir: Path, opts: RenderOptions) -> Path:
        if self.toolchain.kind == "mathtext":
            out = tmpdir / "doc.png"
            cmd = [
                sys.executable,
                "-m",
                "a2r2.render.mathtext_tool",
                str(tex_path),
                str(out),
                "--dpi",
                str(opts.dpi),
            ]
            self._run(cmd, tmpdir, opts.timeout)
            return out
        self._run(
            [self.toolchain.latex_bin, "-interaction=nonstopmode", "-halt-on-error", tex_path.name],
            tmpdir,
            opts.timeout,
        )
        pdf = tmpdir / "doc.pdf"
        if not pdf.exists():
            raise _CompileFailure("compile produced no PDF")
        raster = self.toolchain.raster_bin
        name = os.path.basename(raster or "")
        if name.startswith("pdftoppm"):
            self._run(
                [raster, "-png", "-r", str(int(opts.dpi)), "-gray", "-singlefile", str(pdf), str(tmpdir / "doc")],
                tmpdir,
                opts.timeout,
            )
            return tmpdir / "doc.png"
        out = tmpdir / "doc.png"
        self._run(
            [raster, "-density", str(int(opts.dpi)), str(pdf), "-colorspace", "Gray", "-background", "white", "-flatten", str(out)],
            tmpdir,
            opts.timeout,
        )
        return out

    def _run(self, cmd: list[str], cwd: Path, timeout: float) -> None:
        try:
            proc = subprocess.run(
                cmd,
                cwd=cwd,
                stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT,
                timeout=timeout,
            )
        except subprocess.TimeoutExpired:
            raise _CompileFailure(f"timeout after {timeout}s: {' '.join(cmd[:2])}") from None
        except OSError as exc:
            raise _CompileFailure(f"cannot run {cmd[0]}: {exc}") from None
        if proc.returncode != 0:
            raise _CompileFailure(_tail(proc.stdout.decode(errors="replace")))


class _CompileFailure(Exception):
    def __init__(self, log: str):
        super().__init__(log)
        self.log = log

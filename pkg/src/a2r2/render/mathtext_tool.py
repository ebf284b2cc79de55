"""Bundled math rasterizer, invoked as a subprocess.

Compiles a wrapped ``.tex`` fragment to a PNG using matplotlib's mathtext
engine with the Computer Modern font set. This is the drop-in toolchain used
when no external LaTeX compiler is configured or discoverable; it takes the
same inputs (a .tex file produced by the render service) and obeys the same
exit conventions (0 on success, nonzero with a diagnostic on stderr).

Usage: python -m a2r2.render.mathtext_tool INPUT.tex OUTPUT.png --dpi 200
"""

from __future__ import annotations

import argparse
import re
import sys

_BODY_RE = re.compile(r"\\\[(.*)\\\]", re.DOTALL)


def extract_math_body(tex_source: str) -> str:
    """Pull the display-math body out of the fixed wrapper document."""
    match = _BODY_RE.search(tex_source)
    if match is None:
        raise ValueError("no \\[ ... \\] display-math block found in input")
    return match.group(1).strip()


def render_to_png(body: str, out_path: str, dpi: float) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # mathtext works on single-line math; collapse newlines the wrapper kept
    body = " ".join(body.split())
    if not body:
        raise ValueError("empty math body")
    fig = plt.figure(figsize=(0.01, 0.01))
    try:
        fig.text(0, 0, f"${body}$", fontsize=12, math_fontfamily="cm", color="black")
        fig.savefig(
            out_path,
            dpi=dpi,
            format="png",
            bbox_inches="tight",
            pad_inches=0.02,
            facecolor="white",
        )
    finally:
        plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("input")
    parser.add_argument("output")
    parser.add_argument("--dpi", type=float, default=200.0)
    args = parser.parse_args(argv)
    try:
        with open(args.input, encoding="utf-8") as fh:
            source = fh.read()
        body = extract_math_body(source)
        render_to_png(body, args.output, args.dpi)
    except Exception as exc:  # surfaced as the compile log excerpt
        # one-line summary first: excerpting tools keep the leading line
        summary = " ".join(str(exc).split()) or type(exc).__name__
        print(f"mathtext error: {summary}", file=sys.stderr)
        if "\n" in str(exc):
            print(str(exc), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

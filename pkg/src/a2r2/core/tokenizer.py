"""LaTeX tokenization.

The token grammar is deliberately small: control sequences are kept atomic
(n-gram metrics over LaTeX are meaningless if ``\\frac`` decays into five
character tokens), digit runs form one token, and everything else is split
per character. There is no grouping or AST construction here.
"""

from __future__ import annotations

import re

# A control word (backslash + letters), a control symbol (backslash + one
# non-letter, control-space included), a digit run, or any single non-space
# character -- in that order. A trailing lone backslash falls through to the
# last alternative.
_TOKEN_RE = re.compile(r"\\[a-zA-Z]+|\\[^a-zA-Z]|\d+|\S")


def tokenize_latex(source: str) -> tuple[str, ...]:
    """Split LaTeX source into a deterministic token sequence.

    Total function: any string is accepted, whitespace separates tokens and
    is discarded.
    """
    return tuple(_TOKEN_RE.findall(source))


def token_spans(source: str) -> list[tuple[str, int, int]]:
    """Tokens with their (start, end) character offsets in ``source``."""
    return [(m.group(0), m.start(), m.end()) for m in _TOKEN_RE.finditer(source)]


def detokenize(tokens) -> str:
    """Join tokens with single spaces.

    Round-trips: ``tokenize_latex(detokenize(t)) == tuple(t)`` for any token
    sequence produced by :func:`tokenize_latex`.
    """
    return " ".join(tokens)

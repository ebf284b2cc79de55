"""Token- and character-level similarity metrics.

All scores are on a [0, 100] scale. ROUGE variants report F1; BLEU-4 uses
epsilon smoothing plus the standard brevity penalty; edit distance is
character-level Levenshtein normalized by the longer string. Each kernel is
checked against an independent dynamic-program oracle in the tests.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Sequence
from math import exp, log


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def rouge_n(cand: Sequence[str], ref: Sequence[str], n: int) -> float:
    """Clipped n-gram overlap F1 x 100 for n in {1, 2}."""
    if n not in (1, 2):
        raise ValueError(f"n must be 1 or 2, got {n}")
    cand_counts = _ngram_counts(cand, n)
    ref_counts = _ngram_counts(ref, n)
    cand_total = sum(cand_counts.values())
    ref_total = sum(ref_counts.values())
    if cand_total == 0 or ref_total == 0:
        return 0.0
    match = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
    return 100.0 * _f1(match / cand_total, match / ref_total)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, O(len(a) * len(b)) with two rows."""
    if not a or not b:
        return 0
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for item in a:
        curr = [0]
        for j, other in enumerate(b, start=1):
            if item == other:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[j - 1]))
        prev = curr
    return prev[-1]


def rouge_l(cand: Sequence[str], ref: Sequence[str]) -> float:
    """LCS-based F1 x 100."""
    if not cand or not ref:
        return 0.0
    lcs = lcs_length(cand, ref)
    return 100.0 * _f1(lcs / len(cand), lcs / len(ref))


def m_rouge(cand: Sequence[str], ref: Sequence[str]) -> float:
    """Arithmetic mean of ROUGE-1, ROUGE-2, and ROUGE-L."""
    return (rouge_n(cand, ref, 1) + rouge_n(cand, ref, 2) + rouge_l(cand, ref)) / 3.0


def bleu4(cand: Sequence[str], ref: Sequence[str]) -> float:
    """BLEU-4 x 100 with epsilon smoothing.

    A zero n-gram precision for n >= 2 is replaced by 1/(2k) where k is the
    candidate's n-gram count (1 when the candidate is shorter than n); a zero
    unigram precision zeroes the whole score. Brevity penalty is
    min(1, exp(1 - |ref|/|cand|)).
    """
    if len(cand) == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        cand_counts = _ngram_counts(cand, n)
        ref_counts = _ngram_counts(ref, n)
        total = sum(cand_counts.values())
        match = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
        if match > 0:
            precision = match / total
        elif n == 1:
            return 0.0
        else:
            precision = 1.0 / (2 * max(total, 1))
        log_sum += log(precision)
    geo_mean = exp(log_sum / 4.0)
    bp = min(1.0, exp(1.0 - len(ref) / len(cand)))
    return 100.0 * bp * geo_mean


def levenshtein(cand: str, ref: str) -> int:
    """Raw character-level Levenshtein distance (two-row DP)."""
    if cand == ref:
        return 0
    if len(cand) < len(ref):
        cand, ref = ref, cand
    prev = list(range(len(ref) + 1))
    for i, ch in enumerate(cand, start=1):
        curr = [i]
        for j, other in enumerate(ref, start=1):
            cost = 0 if ch == other else 1
            curr.append(min(prev[j] + 1, curr[j - 1] + 1, prev[j - 1] + cost))
        prev = curr
    return prev[-1]


def edit_distance(cand: str, ref: str) -> float:
    """100 x levenshtein / max(len); 0 when both strings are empty."""
    longest = max(len(cand), len(ref))
    if longest == 0:
        return 0.0
    return 100.0 * levenshtein(cand, ref) / longest


def token_levenshtein(cand: Sequence[str], ref: Sequence[str]) -> int:
    """Levenshtein over token sequences (used for residual-error accounting)."""
    if len(cand) < len(ref):
        cand, ref = ref, cand
    prev = list(range(len(ref) + 1))
    for i, tok in enumerate(cand, start=1):
        curr = [i]
        for j, other in enumerate(ref, start=1):
            cost = 0 if tok == other else 1
            curr.append(min(prev[j] + 1, curr[j - 1] + 1, prev[j - 1] + cost))
        prev = curr
    return prev[-1]

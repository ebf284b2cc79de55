"""Independent reference implementations used to validate the package.

Everything here is deliberately naive: full DP tables, flood fill with an
explicit stack, quadratic scans. The only goal is obvious correctness, so
the production code can be checked against these on random inputs.
"""

from __future__ import annotations

import math


# ------------------------------------------------------------- percentile


def sort_percentile(values, p):
    """Linear-interpolation percentile on the sorted values."""
    ordered = sorted(float(v) for v in values)
    if len(ordered) == 1:
        return ordered[0]
    rank = (p / 100.0) * (len(ordered) - 1)
    lower = math.floor(rank)
    upper = math.ceil(rank)
    if lower == upper:
        return ordered[lower]
    weight = rank - lower
    return ordered[lower] * (1.0 - weight) + ordered[upper] * weight


# ---------------------------------------------------- attention reduction


def mean_reduce(stack_values):
    """Plain-Python mean over (token, layer, head) per grid cell."""
    n_tok = len(stack_values)
    n_lay = len(stack_values[0])
    n_head = len(stack_values[0][0])
    grid_h = len(stack_values[0][0][0])
    grid_w = len(stack_values[0][0][0][0])
    out = [[0.0] * grid_w for _ in range(grid_h)]
    for t in range(n_tok):
        for l in range(n_lay):
            for h in range(n_head):
                for r in range(grid_h):
                    for c in range(grid_w):
                        out[r][c] += stack_values[t][l][h][r][c]
    total = n_tok * n_lay * n_head
    return [[cell / total for cell in row] for row in out]


def normalize_u8_naive(grid):
    flat = [v for row in grid for v in row]
    lo, hi = min(flat), max(flat)
    if hi == lo:
        return [[0] * len(grid[0]) for _ in grid]
    out = []
    for row in grid:
        scaled = [(v - lo) * 255.0 / (hi - lo) for v in row]
        # round half away from zero; values are non-negative here
        out.append([int(math.floor(s + 0.5)) for s in scaled])
    return out


def threshold_naive(grid, p):
    flat = [v for row in grid for v in row]
    tau = sort_percentile(flat, p)
    return [[255 if v >= tau else 0 for v in row] for row in grid]


# ------------------------------------------------------------- flood fill


def flood_fill_components(mask):
    """8-connected components of white (255) cells, explicit stack."""
    grid_h = len(mask)
    grid_w = len(mask[0])
    seen = [[False] * grid_w for _ in range(grid_h)]
    components = []
    for r in range(grid_h):
        for c in range(grid_w):
            if mask[r][c] != 255 or seen[r][c]:
                continue
            stack = [(r, c)]
            seen[r][c] = True
            cells = []
            while stack:
                cr, cc = stack.pop()
                cells.append((cr, cc))
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        if dr == 0 and dc == 0:
                            continue
                        nr, nc = cr + dr, cc + dc
                        if 0 <= nr < grid_h and 0 <= nc < grid_w:
                            if mask[nr][nc] == 255 and not seen[nr][nc]:
                                seen[nr][nc] = True
                                stack.append((nr, nc))
            components.append(frozenset(cells))
    return components


def max_area_component(components):
    """Largest by cell count; ties by smallest (row, col) seed."""
    best = None
    best_key = None
    for comp in components:
        seed = min(comp)
        key = (-len(comp), seed)
        if best_key is None or key < best_key:
            best, best_key = comp, key
    return best


def neighborhood_union_dilate(cells, kernel, grid_h, grid_w):
    """Union of kernel x kernel squares centred on each cell, clipped."""
    reach = kernel // 2
    out = set()
    for r, c in cells:
        for dr in range(-reach, reach + 1):
            for dc in range(-reach, reach + 1):
                nr, nc = r + dr, c + dc
                if 0 <= nr < grid_h and 0 <= nc < grid_w:
                    out.add((nr, nc))
    return out


def minmax_box(cells):
    """(x, y, w, h) from min/max scans over the cell set."""
    rows = [r for r, _ in cells]
    cols = [c for _, c in cells]
    return (
        min(cols),
        min(rows),
        max(cols) - min(cols) + 1,
        max(rows) - min(rows) + 1,
    )


def oracle_localize_box(stack_values, p, kernel, grid_h, grid_w):
    """Compose every naive stage; returns the grid-space (x, y, w, h)."""
    saliency = normalize_u8_naive(mean_reduce(stack_values))
    mask = threshold_naive(saliency, p)
    components = flood_fill_components(mask)
    if not components:
        return None
    largest = max_area_component(components)
    dilated = neighborhood_union_dilate(largest, kernel, grid_h, grid_w)
    return minmax_box(dilated)


def grid_box_to_pixels_naive(box, grid_h, grid_w, img_w, img_h):
    """(left, top, right, bottom), exclusive right/bottom, clamped."""
    x, y, w, h = box
    sx = img_w / grid_w
    sy = img_h / grid_h
    left = max(0, min(img_w, math.floor(x * sx)))
    right = max(0, min(img_w, math.ceil((x + w) * sx)))
    top = max(0, min(img_h, math.floor(y * sy)))
    bottom = max(0, min(img_h, math.ceil((y + h) * sy)))
    return left, top, right, bottom


# ------------------------------------------------------- sequence metrics


def levenshtein_full_dp(a, b):
    """Full (len+1) x (len+1) edit-distance table."""
    rows = len(a) + 1
    cols = len(b) + 1
    table = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        table[i][0] = i
    for j in range(cols):
        table[0][j] = j
    for i in range(1, rows):
        for j in range(1, cols):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            table[i][j] = min(
                table[i - 1][j] + 1,
                table[i][j - 1] + 1,
                table[i - 1][j - 1] + cost,
            )
    return table[-1][-1]


def lcs_full_dp(a, b):
    """Full longest-common-subsequence table."""
    rows = len(a) + 1
    cols = len(b) + 1
    table = [[0] * cols for _ in range(rows)]
    for i in range(1, rows):
        for j in range(1, cols):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[-1][-1]


def ngram_list(tokens, n):
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def rouge_n_naive(cand, ref, n):
    """Clipped n-gram F1 x 100 using list.count, no Counter."""
    cand_ngrams = ngram_list(list(cand), n)
    ref_ngrams = ngram_list(list(ref), n)
    if not cand_ngrams or not ref_ngrams:
        return 0.0
    overlap = 0
    for gram in set(cand_ngrams):
        overlap += min(cand_ngrams.count(gram), ref_ngrams.count(gram))
    precision = overlap / len(cand_ngrams)
    recall = overlap / len(ref_ngrams)
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2.0 * precision * recall / (precision + recall)


def rouge_l_naive(cand, ref):
    if not cand or not ref:
        return 0.0
    lcs = lcs_full_dp(list(cand), list(ref))
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2.0 * precision * recall / (precision + recall)

"""Minimum-cost one-to-one assignment with a canonical tie rule.

The optimum comes from ``scipy.optimize.linear_sum_assignment``. Among
equal-cost optima the assignment that is lexicographically smallest by
(col, row) is returned, found by fixing columns left to right and keeping the
lowest row whose remaining sub-problem still reaches the optimum.
"""

import math
from itertools import permutations
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from rod_studio.errors import NonFiniteCost

Pair = Tuple[int, int]
MAX_BRUTE_FORCE = 7


def _values(cost) -> np.ndarray:
    values = getattr(cost, "total", cost)
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteCost("cost matrix has non-finite entries", shape=list(arr.shape))
    return arr


def _optimal_cells(arr: np.ndarray) -> List[float]:
    """Cell values of one optimal assignment of a rectangular matrix."""
    if arr.size == 0:
        return []
    rows, cols = linear_sum_assignment(arr)
    return [float(v) for v in arr[rows, cols]]


def assignment_cost(cost, pairs: Sequence[Pair]) -> float:
    arr = _values(cost)
    return math.fsum(arr[r, c] for r, c in pairs)


def hungarian(cost) -> List[Pair]:
    """Globally optimal (row, col) pairs, sorted by column.

    The result has ``min(rows, cols)`` pairs. Totals are compared as exact
    ``math.fsum`` sums of cell values.
    """
    arr = _values(cost)
    rows, cols = arr.shape
    need = min(rows, cols)
    if need == 0:
        return []
    best = math.fsum(_optimal_cells(arr))
    tall = rows >= cols

    fixed: List[float] = []
    free_rows = list(range(rows))
    pairs: List[Pair] = []
    for col in range(cols):
        if need == 0:
            break
        rest = list(range(col + 1, cols))
        bound: List[float] = []
        if tall and need > 1:
            # every remaining column is matched, so column minima bound the rest
            bound = [float(v) for v in arr[np.ix_(free_rows, rest)].min(axis=0)]
        chosen: Optional[int] = None
        closest: Optional[Tuple[float, int]] = None
        for row in free_rows:
            cell = float(arr[row, col])
            if bound and math.fsum([*fixed, cell, *bound]) > best:
                continue
            if need == 1:
                tail: List[float] = []
            else:
                others = [r for r in free_rows if r != row]
                if min(len(others), len(rest)) < need - 1:
                    continue
                tail = _optimal_cells(arr[np.ix_(others, rest)])
            total = math.fsum([*fixed, cell, *tail])
            if total <= best:
                chosen = row
                break
            if closest is None or total < closest[0]:
                closest = (total, row)
        if chosen is None and not tall and min(len(free_rows), len(rest)) >= need:
            tail = _optimal_cells(arr[np.ix_(free_rows, rest)])
            if math.fsum([*fixed, *tail]) <= best:
                # leaving this column unmatched keeps the optimum
                continue
        if chosen is None:
            if closest is None:
                continue
            # only reachable when the solver's optimum is off by rounding
            chosen = closest[1]
        fixed.append(float(arr[chosen, col]))
        free_rows.remove(chosen)
        pairs.append((chosen, col))
        need -= 1
    return pairs


def brute_force_assignment(cost) -> Tuple[float, List[Pair]]:
    """Exhaustive minimum over all injective maps; an oracle for small inputs."""
    arr = _values(cost)
    rows, cols = arr.shape
    if max(rows, cols) > MAX_BRUTE_FORCE:
        raise ValueError(f"brute force limited to {MAX_BRUTE_FORCE} rows/cols")
    if rows == 0 or cols == 0:
        return 0.0, []
    best_total = math.inf
    best_pairs: List[Pair] = []
    if rows >= cols:
        for chosen in permutations(range(rows), cols):
            pairs = [(r, c) for c, r in enumerate(chosen)]
            total = math.fsum(arr[r, c] for r, c in pairs)
            if total < best_total:
                best_total, best_pairs = total, pairs
    else:
        for chosen in permutations(range(cols), rows):
            pairs = sorted(((r, c) for r, c in enumerate(chosen)), key=lambda p: p[1])
            total = math.fsum(arr[r, c] for r, c in pairs)
            if total < best_total:
                best_total, best_pairs = total, pairs
    return best_total, best_pairs


def row_for_column(pairs: Sequence[Pair], col: int = 0) -> Optional[int]:
    for r, c in pairs:
        if c == col:
            return r
    return None

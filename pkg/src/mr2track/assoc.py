"""IoU cost matrices and gated optimal assignment.

Objective, in priority order:

1. the largest number of matches among allowed pairs;
2. the smallest total ``1 - IoU`` cost among those;
3. among exactly-equal optima, the lexicographically smallest vector
   ``(d(0), d(1), ..., d(M-1))`` of detection indices per track, an
   unmatched track counting as index ``N``.

The solver works on exact integers: every float cost is a dyadic rational,
so all three criteria fold into one Python integer per cell and the Hungarian
method runs without rounding. The brute-force oracle enumerates the same
objective directly.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import BBox, iou

ORACLE_MAX_SIZE = 8


@dataclass(frozen=True)
class CostMatrix:
    cost: np.ndarray  # (M, N), entries 1 - IoU
    allowed: np.ndarray  # (M, N) bool; False marks a forbidden pair

    def __post_init__(self) -> None:
        if self.cost.shape != self.allowed.shape or self.cost.ndim != 2:
            raise ValueError("cost and gate must be matching 2-D arrays")

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost.shape  # type: ignore[return-value]

    def total(self, matches: Sequence[tuple[int, int]]) -> float:
        return math.fsum(float(self.cost[i, j]) for i, j in sorted(matches))


@dataclass(frozen=True)
class Assignment:
    matches: list[tuple[int, int]] = field(default_factory=list)
    unmatched_tracks: list[int] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)


def build_cost_matrix(
    tracks: Sequence[BBox], dets: Sequence[BBox], iou_match_threshold: float
) -> CostMatrix:
    m, n = len(tracks), len(dets)
    ious = np.zeros((m, n))
    for i, t in enumerate(tracks):
        for j, d in enumerate(dets):
            ious[i, j] = iou(t, d)
    allowed = (ious >= iou_match_threshold) & (ious > 0.0)
    return CostMatrix(1.0 - ious, allowed)


def _assignment_from(c: CostMatrix, matches: list[tuple[int, int]]) -> Assignment:
    m, n = c.shape
    matches = sorted(matches)
    rows = {i for i, _ in matches}
    cols = {j for _, j in matches}
    return Assignment(
        matches,
        [i for i in range(m) if i not in rows],
        [j for j in range(n) if j not in cols],
    )


def _integer_costs(c: CostMatrix) -> tuple[list[list[int | None]], int, int]:
    """Combined exact integer per allowed cell, plus the row-miss weights.

    Returns ``(cells, miss_weight, unmatched_penalty)`` where ``cells[i][j]``
    is None for forbidden pairs.
    """
    m, n = c.shape
    ratios = [[float(c.cost[i, j]).as_integer_ratio() for j in range(n)] for i in range(m)]
    denom = max((q for row in ratios for _, q in row), default=1)
    base = n + 1
    tie_span = base**m  # strict upper bound of any tie sum
    cost_span = (min(m, n) * denom + 1) * tie_span  # bound on cost*tie_span + tie

    def tie(i: int, j: int) -> int:
        return j * base ** (m - 1 - i)

    cells: list[list[int | None]] = []
    for i in range(m):
        row: list[int | None] = []
        for j in range(n):
            if c.allowed[i, j]:
                num, q = ratios[i][j]
                row.append(num * (denom // q) * tie_span + tie(i, j))
            else:
                row.append(None)
        cells.append(row)
    return cells, tie_span, cost_span


def _hungarian(a: list[list[int]]) -> list[int]:
    """Square min-cost assignment on exact integers; returns column per row."""
    n = len(a)
    inf = None
    u = [0] * (n + 1)
    v = [0] * (n + 1)
    p = [0] * (n + 1)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv: list = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = a[i0 - 1]
            ui = u[i0]
            delta = None
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = row[j - 1] - ui - v[j]
                if minv[j] is None or cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if delta is None or minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = [0] * n
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row


def solve_assignment(c: CostMatrix) -> Assignment:
    """Optimal gated one-to-one assignment (rectangular, Hungarian)."""
    m, n = c.shape
    if m == 0 or n == 0 or not c.allowed.any():
        return _assignment_from(c, [])
    cells, tie_span, cost_span = _integer_costs(c)
    miss = 2 * (m + n) * cost_span  # one unmatched endpoint outweighs any cost
    forbidden = (m + n + 1) * miss
    base = n + 1
    size = m + n
    # Rows: M tracks then N dummy rows; columns: N detections then M dummies.
    a = [[0] * size for _ in range(size)]
    for i in range(m):
        row = a[i]
        for j in range(n):
            cell = cells[i][j]
            row[j] = forbidden if cell is None else cell
        for k in range(m):
            row[n + k] = miss + n * base ** (m - 1 - i) if k == i else forbidden
    for k in range(n):
        row = a[m + k]
        for j in range(n):
            row[j] = miss if j == k else forbidden
        # dummy-dummy cells stay 0
    cols = _hungarian(a)
    matches = [(i, cols[i]) for i in range(m) if cols[i] < n]
    return _assignment_from(c, matches)


def brute_force_assignment(c: CostMatrix) -> Assignment:
    """Exhaustive oracle for the objective used by :func:`solve_assignment`."""
    m, n = c.shape
    if min(m, n) > ORACLE_MAX_SIZE:
        raise ValueError(f"brute force limited to min(M, N) <= {ORACLE_MAX_SIZE}")
    best_key = None
    best: list[tuple[int, int]] = []
    for choice in _injective(m, n):
        matches = [(i, j) for i, j in enumerate(choice) if j < n]
        if any(not c.allowed[i, j] for i, j in matches):
            continue
        key = (-len(matches), _exact_total(c, matches), tuple(choice))
        if best_key is None or key < best_key:
            best_key, best = key, matches
    return _assignment_from(c, best)


def _exact_total(c: CostMatrix, matches: list[tuple[int, int]]) -> Fraction:
    return sum((Fraction(float(c.cost[i, j])) for i, j in matches), Fraction(0))


def _injective(m: int, n: int):
    """All maps track -> detection-or-unmatched (index n) without column reuse."""

    def rec(i: int, used: frozenset[int], acc: list[int]):
        if i == m:
            yield list(acc)
            return
        for j in range(n + 1):
            if j < n and j in used:
                continue
            acc.append(j)
            yield from rec(i + 1, used | {j} if j < n else used, acc)
            acc.pop()

    yield from rec(0, frozenset(), [])


__all__ = [
    "Assignment",
    "CostMatrix",
    "brute_force_assignment",
    "build_cost_matrix",
    "solve_assignment",
]

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mr2track.assoc import CostMatrix, brute_force_assignment, build_cost_matrix, solve_assignment
from mr2track.core import BBox, iou


def _random_matrix(rng, max_side=6, p_allowed=0.6):
    m, n = (int(v) for v in rng.integers(0, max_side + 1, 2))
    return CostMatrix(rng.random((m, n)), rng.random((m, n)) < p_allowed)


def _perm_total(c: CostMatrix):
    """Independent oracle: best (count, cost) over all permutations of the padded square."""
    m, n = c.shape
    size = max(m, n)
    best = None
    for perm in itertools.permutations(range(size), m) if m <= n else itertools.permutations(range(m), n):
        pairs = list(zip(range(m), perm)) if m <= n else list(zip(perm, range(n)))
        ok = [(i, j) for i, j in pairs if i < m and j < n and c.allowed[i, j]]
        key = (-len(ok), sum((Fraction(float(c.cost[i, j])) for i, j in ok), Fraction(0)))
        if best is None or key < best:
            best = key
    return best if best is not None else (0, Fraction(0))


def _key(c, a):
    return (-len(a.matches), sum((Fraction(float(c.cost[i, j])) for i, j in a.matches), Fraction(0)))


def test_cost_matrix_identical_boxes():
    b = BBox(0.1, 0.1, 0.4, 0.4)
    c = build_cost_matrix([b], [b], 0.3)
    assert c.cost.tolist() == [[0.0]] and c.allowed.tolist() == [[True]]


def test_cost_matrix_disjoint_forbidden():
    c = build_cost_matrix([BBox(0, 0, 0.2, 0.2)], [BBox(0.5, 0.5, 0.7, 0.7)], 0.3)
    assert c.cost[0, 0] == 1.0 and not c.allowed[0, 0]


def test_cost_matrix_third_overlap_allowed():
    c = build_cost_matrix([BBox(0, 0, 0.2, 0.2)], [BBox(0.1, 0, 0.3, 0.2)], 0.3)
    assert c.cost[0, 0] == pytest.approx(2 / 3, abs=1e-15) and c.allowed[0, 0]


def test_cost_matrix_empty():
    assert build_cost_matrix([], [BBox(0, 0, 1, 1)], 0.3).shape == (0, 1)
    a = solve_assignment(build_cost_matrix([], [BBox(0, 0, 1, 1)], 0.3))
    assert a.matches == [] and a.unmatched_detections == [0]


def test_single_match():
    a = solve_assignment(CostMatrix(np.array([[0.4]]), np.array([[True]])))
    assert a.matches == [(0, 0)]


def test_two_by_two_unique():
    c = CostMatrix(np.array([[0.1, 0.9], [0.9, 0.1]]), np.ones((2, 2), bool))
    a = solve_assignment(c)
    assert a.matches == [(0, 0), (1, 1)]
    assert c.total(a.matches) == pytest.approx(0.2)


def test_gate_not_forced():
    # The only complete matching uses a forbidden pair; the solver must leave it out.
    c = CostMatrix(np.array([[0.1, 0.2], [0.3, 0.9]]), np.array([[True, True], [True, False]]))
    a = solve_assignment(c)
    assert a.matches == [(0, 1), (1, 0)]


def test_brute_force_one_row_picks_cheapest():
    c = CostMatrix(np.array([[0.5, 0.2, 0.1, 0.7]]), np.array([[True, True, False, True]]))
    assert brute_force_assignment(c).matches == [(0, 1)]


def test_fully_forbidden():
    c = CostMatrix(np.full((3, 2), 0.1), np.zeros((3, 2), bool))
    for a in (solve_assignment(c), brute_force_assignment(c)):
        assert a.matches == [] and a.unmatched_tracks == [0, 1, 2] and a.unmatched_detections == [0, 1]


def test_brute_force_size_limit():
    with pytest.raises(ValueError):
        brute_force_assignment(CostMatrix(np.zeros((9, 9)), np.ones((9, 9), bool)))


def test_brute_force_matches_permutation_oracle():
    rng = np.random.default_rng(5)
    for _ in range(200):
        c = _random_matrix(rng, 5)
        assert _key(c, brute_force_assignment(c)) == _perm_total(c)


def test_solver_agrees_with_brute_force():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        c = _random_matrix(rng)
        assert solve_assignment(c) == brute_force_assignment(c)


def test_tie_break_lowest_indices():
    c = CostMatrix(np.full((3, 3), 0.5), np.ones((3, 3), bool))
    assert solve_assignment(c).matches == [(0, 0), (1, 1), (2, 2)]
    c = CostMatrix(np.full((2, 3), 0.25), np.array([[True, True, True], [True, True, False]]))
    assert solve_assignment(c).matches == brute_force_assignment(c).matches == [(0, 0), (1, 1)]


def test_ties_on_quantized_costs():
    rng = np.random.default_rng(9)
    for _ in range(300):
        m, n = (int(v) for v in rng.integers(1, 6, 2))
        c = CostMatrix(rng.integers(0, 3, (m, n)) / 4.0, rng.random((m, n)) < 0.7)
        assert solve_assignment(c) == brute_force_assignment(c)


@st.composite
def matrices(draw):
    m = draw(st.integers(0, 5))
    n = draw(st.integers(0, 5))
    cost = np.array(draw(st.lists(st.floats(0, 1), min_size=m * n, max_size=m * n)), float).reshape(m, n)
    allowed = np.array(draw(st.lists(st.booleans(), min_size=m * n, max_size=m * n)), bool).reshape(m, n)
    return CostMatrix(cost, allowed)


@settings(max_examples=200)
@given(matrices())
def test_assignment_invariants(c):
    a = solve_assignment(c)
    m, n = c.shape
    rows = [i for i, _ in a.matches]
    cols = [j for _, j in a.matches]
    assert len(set(rows)) == len(rows) and len(set(cols)) == len(cols)
    assert sorted(rows + a.unmatched_tracks) == list(range(m))
    assert sorted(cols + a.unmatched_detections) == list(range(n))
    assert all(c.allowed[i, j] for i, j in a.matches)
    assert solve_assignment(c) == a


@settings(max_examples=100)
@given(matrices(), st.floats(0.1, 10.0))
def test_positive_scaling_keeps_matches(c, k):
    scaled = CostMatrix(c.cost * k, c.allowed)
    # Scaling can merge or split near-ties through rounding; compare on exact objective.
    a, b = solve_assignment(c), solve_assignment(scaled)
    assert len(a.matches) == len(b.matches)
    if a.matches != b.matches:
        ta, tb = c.total(a.matches), c.total(b.matches)
        assert ta == pytest.approx(tb, abs=1e-9)


def test_gating_soundness_on_boxes():
    rng = np.random.default_rng(3)
    for _ in range(100):
        def rb():
            x, y = rng.uniform(0, 0.8, 2)
            w, h = rng.uniform(0.05, 0.2, 2)
            return BBox(x, y, x + w, y + h)

        tracks = [rb() for _ in range(rng.integers(0, 6))]
        dets = [rb() for _ in range(rng.integers(0, 6))]
        a = solve_assignment(build_cost_matrix(tracks, dets, 0.3))
        assert all(iou(tracks[i], dets[j]) >= 0.3 for i, j in a.matches)

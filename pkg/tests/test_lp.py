"""Simplex solver tests.

Random instances are checked against brute-force vertex enumeration
(every n-subset of active constraints solved directly), which is the
textbook characterization of LP optima and shares no code with the
tableau method. Beale's classic cycling instance guards the Bland rule.
"""

import itertools

import numpy as np
import pytest

from urasparc.lp import LpInfeasible, LpUnbounded, solve_lp


def brute_force_min(c, A_ub, b_ub):
    """Enumerate all candidate vertices of {A x <= b, x >= 0}."""
    c = np.asarray(c, dtype=float)
    A_ub = np.asarray(A_ub, dtype=float)
    b_ub = np.asarray(b_ub, dtype=float)
    n = c.size
    rows = np.vstack([A_ub, -np.eye(n)])
    rhs = np.concatenate([b_ub, np.zeros(n)])
    best = np.inf
    arg = None
    for idx in itertools.combinations(range(rows.shape[0]), n):
        sq = rows[list(idx)]
        if abs(np.linalg.det(sq)) < 1e-10:
            continue
        x = np.linalg.solve(sq, rhs[list(idx)])
        if np.all(rows @ x <= rhs + 1e-8):
            val = float(c @ x)
            if val < best:
                best, arg = val, x
    return arg, best


class TestTextbookCases:
    def test_unique_vertex(self):
        x, val = solve_lp([-2.0, -3.0],
                          A_ub=[[1.0, 1.0], [1.0, 3.0]], b_ub=[4.0, 6.0])
        assert val == pytest.approx(-9.0, abs=1e-9)
        assert np.allclose(x, [3.0, 1.0], atol=1e-9)

    def test_degenerate_face(self):
        x, val = solve_lp([-1.0, -1.0], A_ub=[[1.0, 1.0]], b_ub=[1.0])
        assert val == pytest.approx(-1.0, abs=1e-9)
        assert x.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(x >= -1e-9)

    def test_equality_constraint(self):
        x, val = solve_lp([1.0, 2.0], A_eq=[[1.0, 1.0]], b_eq=[2.0])
        assert val == pytest.approx(2.0, abs=1e-9)
        assert x[0] == pytest.approx(2.0, abs=1e-9)

    def test_mixed_constraints(self):
        # push mass to the cheap variable until the cap binds
        x, val = solve_lp([1.0, 3.0],
                          A_ub=[[1.0, 0.0]], b_ub=[0.5],
                          A_eq=[[1.0, 1.0]], b_eq=[2.0])
        assert np.allclose(x, [0.5, 1.5], atol=1e-9)
        assert val == pytest.approx(5.0, abs=1e-9)

    def test_negative_rhs_normalized(self):
        # -x <= -1 is x >= 1
        x, val = solve_lp([1.0], A_ub=[[-1.0]], b_ub=[-1.0])
        assert x[0] == pytest.approx(1.0, abs=1e-9)
        assert val == pytest.approx(1.0, abs=1e-9)


class TestFailureModes:
    def test_infeasible_box(self):
        with pytest.raises(LpInfeasible):
            solve_lp([1.0], A_ub=[[1.0]], b_ub=[-1.0])

    def test_contradictory_equalities(self):
        with pytest.raises(LpInfeasible):
            solve_lp([1.0, 1.0],
                     A_eq=[[1.0, 1.0], [1.0, 1.0]], b_eq=[1.0, 2.0])

    def test_unbounded(self):
        with pytest.raises(LpUnbounded):
            solve_lp([-1.0, 0.0], A_ub=[[0.0, 1.0]], b_ub=[1.0])

    def test_no_constraints(self):
        with pytest.raises(ValueError):
            solve_lp([1.0])


class TestDegeneracy:
    def test_redundant_equality_rows(self):
        # duplicated row leaves an artificial basic at zero; the cleanup
        # path must drop or repivot it
        x, val = solve_lp([1.0, 0.0],
                          A_eq=[[1.0, 1.0], [1.0, 1.0], [2.0, 2.0]],
                          b_eq=[2.0, 2.0, 4.0])
        assert val == pytest.approx(0.0, abs=1e-9)
        assert x[1] == pytest.approx(2.0, abs=1e-9)

    def test_beale_cycling_instance(self):
        c = [-0.75, 150.0, -0.02, 6.0]
        A = [[0.25, -60.0, -1.0 / 25.0, 9.0],
             [0.5, -90.0, -1.0 / 50.0, 3.0],
             [0.0, 0.0, 1.0, 0.0]]
        b = [0.0, 0.0, 1.0]
        x, val = solve_lp(c, A_ub=A, b_ub=b)
        assert val == pytest.approx(-0.05, abs=1e-9)
        assert np.allclose(x, [0.04, 0.0, 1.0, 0.0], atol=1e-8)


class TestRandomInstances:
    def test_against_vertex_enumeration(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            n, m = 3, 5
            A = rng.standard_normal((m, n))
            b = rng.uniform(0.5, 2.0, size=m)   # origin strictly feasible
            c = rng.standard_normal(n)
            # cap every variable so the problem is bounded
            A_full = np.vstack([A, np.eye(n)])
            b_full = np.concatenate([b, np.full(n, 10.0)])
            x, val = solve_lp(c, A_ub=A_full, b_ub=b_full)
            ref_x, ref_val = brute_force_min(c, A_full, b_full)
            assert val == pytest.approx(ref_val, abs=1e-8)
            assert np.all(A_full @ x <= b_full + 1e-8)
            assert np.all(x >= -1e-9)

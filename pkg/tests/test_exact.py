import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evograph import exact
from evograph.errors import InvalidParameter, SizeLimitError, UnsupportedParameter
from evograph.graphs import (
    build_graph,
    make_complete,
    make_counterexample,
    make_megastar,
    make_star,
    make_superstar,
    strongly_connected,
)


def brute_force_fixation(g, r):
    """Dense transition matrix over all 2^n sets, solved with numpy (independent of the kernels)."""
    n = g.n
    size = 1 << n
    P = np.zeros((size, size))
    for s in range(size):
        if s in (0, size - 1):
            P[s, s] = 1.0
            continue
        members = [(s >> v) & 1 for v in range(n)]
        W = sum(r if b else 1.0 for b in members)
        for u, v, w in g.edges():
            fit = r if members[u] else 1.0
            t = s | (1 << v) if members[u] else s & ~(1 << v)
            P[s, t] += fit / W * w
    A = np.eye(size) - P
    A[0] = 0
    A[0, 0] = 1
    A[-1] = 0
    A[-1, -1] = 1
    b = np.zeros(size)
    b[-1] = 1
    return np.linalg.solve(A, b)


class TestRegular:
    def test_r2_n3(self):
        assert exact.rho_reg(2, 3) == pytest.approx(4 / 7, abs=1e-15)
        assert exact.ext_reg(2, 3) == pytest.approx(3 / 7, abs=1e-15)

    def test_neutral(self):
        assert exact.rho_reg(1, 5) == 0.2
        assert exact.ext_reg(1, 5) == pytest.approx(0.8)

    def test_large_n_limits(self):
        assert exact.rho_reg(2, 500) == pytest.approx(0.5, abs=1e-12)
        assert abs(exact.ext_reg(2, 20) - 0.5) < 1e-5

    def test_no_underflow(self):
        assert exact.rho_reg(3.0, 10**6) == pytest.approx(2 / 3)
        assert exact.rho_reg(0.5, 10**6) == 0.0

    @pytest.mark.parametrize("n", [2, 5, 40])
    def test_continuity_at_one(self, n):
        for r in (1 - 1e-9, 1 + 1e-9):
            assert exact.rho_reg(r, n) == pytest.approx(1 / n, rel=1e-6)

    @pytest.mark.parametrize("r", [0, -1, math.inf])
    def test_bad_r(self, r):
        with pytest.raises(InvalidParameter):
            exact.rho_reg(r, 3)

    @settings(max_examples=100)
    @given(st.floats(0.05, 20), st.integers(1, 400))
    def test_complement(self, r, n):
        assert exact.rho_reg(r, n) + exact.ext_reg(r, n) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=50)
    @given(st.floats(0.2, 5), st.integers(1, 30))
    def test_against_naive_formula(self, r, n):
        if abs(r - 1) < 1e-3:
            return
        naive = (1 - 1 / r) / (1 - r ** (-n))
        assert exact.rho_reg(r, n) == pytest.approx(naive, rel=1e-9)


class TestSolver:
    @pytest.mark.parametrize("g", [make_complete(3), make_star(3), make_counterexample(), make_superstar(1, 2, 1)])
    @pytest.mark.parametrize("r", [0.7, 1.0, 2.0])
    def test_matches_dense_oracle(self, g, r):
        sol = exact.solve_fixation(g, r)
        assert np.allclose(sol.fixation_prob, brute_force_fixation(g, r), atol=1e-12)

    def test_direct_and_gauss_seidel_agree(self):
        g = make_megastar(2, 1, 3)
        a = exact.solve_fixation(g, 2.0, method="direct")
        b = exact.solve_fixation(g, 2.0, method="gauss-seidel")
        assert np.max(np.abs(a.fixation_prob - b.fixation_prob)) < 1e-10

    @pytest.mark.parametrize("n", range(2, 9))
    @pytest.mark.parametrize("r", [1.5, 2.0])
    def test_complete_equals_closed_form(self, n, r):
        assert exact.fixation_exact(make_complete(n), r) == pytest.approx(exact.rho_reg(r, n), abs=1e-10)

    def test_bidirected_cycle_is_regular(self):
        n = 6
        src = [i for i in range(n)] + [(i + 1) % n for i in range(n)]
        dst = [(i + 1) % n for i in range(n)] + [i for i in range(n)]
        g = build_graph(n, src, dst)
        assert exact.fixation_exact(g, 2.0) == pytest.approx(exact.rho_reg(2.0, n), abs=1e-10)

    def test_counterexample_values(self):
        g = make_counterexample()
        singles = exact.fixation_all_singletons(g, 2.0)
        assert singles == pytest.approx([10 / 21, 13 / 21, 13 / 21], abs=1e-12)
        assert exact.fixation_exact(g, 2.0) == pytest.approx(4 / 7, abs=1e-12)
        assert exact.fixation_exact(g, 2.0, 0) == pytest.approx(10 / 21, abs=1e-12)

    def test_boundaries(self):
        sol = exact.solve_fixation(make_star(4), 2.0)
        assert sol(()) == 0.0 and sol(range(5)) == 1.0

    def test_cap(self):
        with pytest.raises(SizeLimitError):
            exact.solve_fixation(make_complete(8), 2.0, cap=7)

    def test_not_strongly_connected_warns(self):
        g = build_graph(3, [0, 1, 2], [1, 0, 0])
        with pytest.warns(RuntimeWarning):
            sol = exact.solve_fixation(g, 2.0)
        assert np.all((sol.fixation_prob >= 0) & (sol.fixation_prob <= 1 + 1e-12))

    def test_single_vertex(self):
        g = build_graph(1, [], [])
        assert exact.fixation_exact(g, 2.0) == 1.0


def random_strong_graph(draw_rng, n):
    while True:
        edges = {(u, (u + 1) % n) for u in range(n)}
        for u in range(n):
            for v in range(n):
                if u != v and draw_rng.random() < 0.35:
                    edges.add((u, v))
        src, dst = zip(*sorted(edges))
        w = draw_rng.random(len(src)) + 0.05
        totals = np.bincount(src, weights=w, minlength=n)
        w = w / totals[list(src)]
        g = build_graph(n, src, dst, w, tol=1e-9)
        if strongly_connected(g):
            return g


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_neutral_uniform_is_one_over_n(n, seed):
    g = random_strong_graph(np.random.default_rng(seed), n)
    assert exact.fixation_exact(g, 1.0) == pytest.approx(1 / n, abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1), st.floats(0.3, 4.0))
def test_monotone_in_mutant_set(n, seed, r):
    g = random_strong_graph(np.random.default_rng(seed), n)
    p = exact.solve_fixation(g, r).fixation_prob
    assert np.all(p >= -1e-12) and np.all(p <= 1 + 1e-12)
    for s in range(1 << n):
        for v in range(n):
            if not s >> v & 1:
                assert p[s] <= p[s | 1 << v] + 1e-12


class TestNeutralFamilies:
    @pytest.mark.parametrize("g", [make_star(l) for l in range(1, 6)] + [make_superstar(1, 1, 2), make_megastar(2, 1, 2)])
    def test_one_over_n(self, g):
        assert exact.fixation_exact(g, 1.0) == pytest.approx(1 / g.n, abs=1e-10)


class TestCounterexampleClosedForm:
    def test_r2_fractions(self):
        p0, p1, uni = exact.counterexample_fixation(Fraction(2))
        assert (p0, p1, uni) == (Fraction(10, 21), Fraction(13, 21), Fraction(4, 7))

    @pytest.mark.parametrize("r", [Fraction(1, 2), Fraction(3), Fraction(7, 3)])
    def test_average(self, r):
        p0, p1, uni = exact.counterexample_fixation(r)
        assert (p0 + 2 * p1) / 3 == uni

    @pytest.mark.parametrize("r", [0.5, 1.3, 2.0, 4.0])
    def test_matches_solver(self, r):
        p0, p1, uni = exact.counterexample_fixation(r)
        singles = exact.fixation_all_singletons(make_counterexample(), r)
        assert singles == pytest.approx([p0, p1, p1], abs=1e-12)
        assert uni == pytest.approx(exact.rho_reg(r, 3), abs=1e-12)


class TestStarLumped:
    @pytest.mark.parametrize("leaves", [1, 2, 5, 10])
    @pytest.mark.parametrize("r", [0.8, 2.0])
    def test_matches_bitmask_solver(self, leaves, r):
        centre, leaf, uni = exact.star_fixation_exact(leaves, r)
        sol = exact.solve_fixation(make_star(leaves), r)
        assert centre == pytest.approx(sol(0), abs=1e-12)
        assert leaf == pytest.approx(sol(1), abs=1e-12)
        assert uni == pytest.approx(sol.uniform_fixation, abs=1e-12)

    def test_large_star_limit(self):
        _, _, uni = exact.star_fixation_exact(5000, 2.0)
        assert 1 - uni == pytest.approx(0.25, abs=1e-3)


class TestGambler:
    def test_example(self):
        assert exact.gambler_fixation(2 / 3, 1, 2) == pytest.approx(2 / 3)

    def test_endpoints(self):
        assert exact.gambler_fixation(0.3, 0, 7) == 0
        assert exact.gambler_fixation(0.3, 7, 7) == 1
        assert exact.gambler_expected_steps(0.3, 0, 7) == 0

    def test_expected_steps_example(self):
        brute = exact.solve_walk(np.full(11, 2 / 3)).expected_steps[1]
        assert exact.gambler_expected_steps(2 / 3, 1, 10) == pytest.approx(brute, abs=1e-10)

    def test_unbiased_rejected(self):
        with pytest.raises(UnsupportedParameter):
            exact.gambler_fixation(0.5, 1, 3)

    @pytest.mark.parametrize("args", [(0.3, -1, 3), (0.3, 4, 3), (0.0, 1, 3), (0.3, 1, 0)])
    def test_invalid(self, args):
        with pytest.raises(InvalidParameter):
            exact.gambler_fixation(*args)

    @settings(max_examples=100)
    @given(st.floats(0.02, 0.98), st.integers(1, 12), st.data())
    def test_closed_forms_match_chain(self, p, a, data):
        if abs(p - 0.5) < 1e-2:
            return
        z = data.draw(st.integers(0, a))
        walk = exact.solve_walk(np.full(a + 1, p))
        assert exact.gambler_fixation(p, z, a) == pytest.approx(walk.hit_top[z], abs=1e-10)
        assert exact.gambler_expected_steps(p, z, a) == pytest.approx(walk.expected_steps[z], rel=1e-10, abs=1e-10)


class TestBackToBack:
    def test_example_bound(self):
        res = exact.backtoback_exact(0, 3, 6, 9, 0.9)
        assert res.reach_prob >= 1 - (1 / 9) ** 3 * 2**3
        assert 1 - (1 / 9) ** 3 * 2**3 == pytest.approx(0.989, abs=1e-3)

    @pytest.mark.parametrize("p1", [0.55, 0.7, 0.9])
    def test_short_top(self, p1):
        res = exact.backtoback_exact(0, 2, 5, 7, p1)
        assert math.isfinite(res.expected_hit)
        assert res.expected_hit <= 8 * (3 * p1 - 1) / (2 * p1 - 1)

    @pytest.mark.parametrize("args", [(0, 3, 4, 9, 0.9), (0, 1, 4, 5, 0.9), (0, 1, 4, 8, 0.5), (2, 2, 5, 8, 0.7)])
    def test_preconditions(self, args):
        with pytest.raises(InvalidParameter):
            exact.backtoback_exact(*args)

    def test_monte_carlo_agrees(self):
        a, b, c, d, p1 = 0, 2, 5, 8, 0.7
        ref = exact.backtoback_exact(a, b, c, d, p1).reach_prob
        rng = np.random.default_rng(99)
        walks = 100_000
        hits = 0
        for _ in range(walks):
            x = c
            while x not in (a, b, d):
                x += 1 if rng.random() < (p1 if x <= c else 1 / 3) else -1
            hits += x == d
        sigma = math.sqrt(ref * (1 - ref) / walks)
        assert abs(hits / walks - ref) <= 3 * sigma

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 4), st.integers(1, 4), st.integers(2, 7), st.integers(2, 7), st.floats(0.505, 0.995))
    def test_bounds_hold(self, a, db, dc, dd, p1):
        b = a + db
        c = b + dc
        d = c + dd
        res = exact.backtoback_exact(a, b, c, d, p1)
        lo, hi = exact.backtoback_bounds(b, c, d, p1)
        assert res.reach_prob >= lo - 1e-12
        assert res.expected_hit <= hi + 1e-9


class TestCliqueChains:
    def test_jump_entry(self):
        mat = exact.clique_jump_matrix(2, 3)
        assert mat[1, 2] == pytest.approx(4 / 7)
        assert mat[0, 0] == mat[3, 3] == 1
        assert np.allclose(mat.sum(axis=1), 1)

    def test_z_chain_r2(self):
        assert exact.z_threshold(2) == 4
        mat = exact.z_chain_matrix(2, 10)
        assert mat[1, 2] == pytest.approx(3 / 5)
        assert mat[6, 7] == pytest.approx(3 / 5)
        assert mat[7, 8] == pytest.approx(1 / 3)
        assert mat[0, 0] == mat[10, 10] == 1

    def test_domination_k20(self):
        z = exact.z_chain_matrix(2, 20)
        q = exact.clique_jump_matrix(2, 20)
        for i in range(1, 19):
            assert q[i + 1, i + 2] >= z[i, i + 1]

    @settings(max_examples=60, deadline=None)
    @given(st.floats(1.05, 8), st.integers(1, 40))
    def test_domination_grid(self, r, k):
        mat = exact.z_chain_matrix(r, k)
        assert np.allclose(mat.sum(axis=1), 1)

    def test_r_at_most_one(self):
        with pytest.raises(InvalidParameter):
            exact.z_chain_matrix(1.0, 5)

    def test_integer_threshold_exact(self):
        # 2r/(r-1) = 6 exactly at r = 1.5
        assert exact.z_threshold(1.5) == 6
        assert exact.z_threshold(3) == 3


def test_all_singletons_order():
    g = make_star(3)
    singles = exact.fixation_all_singletons(g, 2.0)
    assert singles[1] == singles[2] == singles[3]
    assert singles[0] < singles[1]


def test_enumeration_small_graphs_monotone():
    for n in (2, 3, 4):
        for g in (make_complete(n), make_star(n - 1)):
            p = exact.solve_fixation(g, 1.7).fixation_prob
            for s, t in itertools.product(range(1 << n), repeat=2):
                if s & t == s:
                    assert p[s] <= p[t] + 1e-12

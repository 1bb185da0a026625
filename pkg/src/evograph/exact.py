"""Closed forms and brute-force solvers used as oracles for the simulators."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import _kernels
from .errors import ContractViolation, InvalidParameter, SizeLimitError, UnsupportedParameter
from .graphs import EvolutionaryGraph, strongly_connected

DEFAULT_EXACT_CAP = 20
DIRECT_SOLVE_MAX_N = 12


def _check_r(r: float) -> None:
    if not r > 0 or not math.isfinite(r):
        raise InvalidParameter(f"fitness r must be a positive finite number, got {r!r}")


# -- regular graphs ----------------------------------------------------------


def rho_reg(r: float, n: int) -> float:
    """Fixation probability (1 - 1/r) / (1 - 1/r**n) of one mutant on a regular graph."""
    _check_r(r)
    if n < 1:
        raise InvalidParameter(f"n must be >= 1, got {n}")
    if r == 1:
        return 1.0 / n
    lr = math.log(r)
    if r > 1:
        return math.expm1(-lr) / math.expm1(-n * lr)
    # r < 1: rewrite as r**(n-1) (1 - r) / (1 - r**n) to avoid overflow
    return math.exp((n - 1) * lr) * math.expm1(lr) / math.expm1(n * lr)


def ext_reg(r: float, n: int) -> float:
    """Extinction probability (1/r - 1/r**n) / (1 - 1/r**n), the complement of :func:`rho_reg`."""
    _check_r(r)
    if n < 1:
        raise InvalidParameter(f"n must be >= 1, got {n}")
    if r == 1:
        return (n - 1) / n
    lr = math.log(r)
    if r > 1:
        return math.exp(-lr) * math.expm1(-(n - 1) * lr) / math.expm1(-n * lr)
    return math.expm1((n - 1) * lr) / math.expm1(n * lr)


# -- 2**n absorbing chain ----------------------------------------------------


@dataclass(frozen=True)
class AbsorbingChainSolution:
    """Fixation probability from every mutant set, indexed by bitmask."""

    n: int
    r: float
    fixation_prob: np.ndarray
    method: str
    residual: float

    def __call__(self, mutants: Iterable[int] | int) -> float:
        return float(self.fixation_prob[_mask(mutants)])

    @property
    def singletons(self) -> np.ndarray:
        return self.fixation_prob[1 << np.arange(self.n)]

    @property
    def uniform_fixation(self) -> float:
        return float(self.singletons.mean())


def _mask(mutants: Iterable[int] | int) -> int:
    if isinstance(mutants, (int, np.integer)):
        return 1 << int(mutants)
    mask = 0
    for v in mutants:
        mask |= 1 << int(v)
    return mask


def solve_fixation(
    g: EvolutionaryGraph,
    r: float,
    *,
    cap: int = DEFAULT_EXACT_CAP,
    method: str = "auto",
    tol: float = 1e-12,
    max_sweeps: int = 1_000_000,
) -> AbsorbingChainSolution:
    """Solve p(S) = sum_T P(S -> T) p(T) with p(empty) = 0 and p(V) = 1.

    ``method`` is "direct" (sparse LU), "gauss-seidel", or "auto", which picks
    direct elimination up to n = 12 and Gauss-Seidel above.
    """
    _check_r(r)
    n = g.n
    if n > cap:
        raise SizeLimitError(f"exact solver is capped at n={cap} (2**n states); graph has n={n}")
    if n > 62:
        raise SizeLimitError("bitmask solver supports at most 62 vertices")
    if not strongly_connected(g):
        warnings.warn(
            "graph is not strongly connected: other closed classes may exist; "
            "states with no outgoing transitions are assigned fixation probability 0",
            RuntimeWarning,
            stacklevel=2,
        )
    in_ptr, in_src, in_w = g.in_csr
    full = (1 << n) - 1
    if method == "auto":
        method = "direct" if n <= DIRECT_SOLVE_MAX_N else "gauss-seidel"
    p = np.zeros(full + 1, dtype=np.float64)
    p[full] = 1.0
    if n == 1:
        return AbsorbingChainSolution(n, r, p, method, 0.0)
    if method == "direct":
        rows, cols, vals, rhs, _ = _kernels.build_absorption_system(n, float(r), in_ptr, in_src, in_w)
        a = sp.csc_matrix((vals, (rows, cols)), shape=(full - 1, full - 1))
        p[1:full] = spsolve(a, rhs)
    elif method == "gauss-seidel":
        # start from the neutral guess |S|/n, which is exact at r = 1 on regular graphs
        counts = np.array([bin(s).count("1") for s in range(full + 1)], dtype=np.float64)
        p[:] = counts / n
        _kernels.gauss_seidel_absorption(n, float(r), in_ptr, in_src, in_w, tol, max_sweeps, p)
    else:
        raise InvalidParameter(f"unknown method {method!r}")
    residual = float(_kernels.absorption_residual(n, float(r), in_ptr, in_src, in_w, p))
    if residual > max(tol, 1e-12) * 10:
        raise ContractViolation(f"absorption solve did not converge (residual {residual:.3e})")
    return AbsorbingChainSolution(n, float(r), p, method, residual)


def fixation_exact(g: EvolutionaryGraph, r: float, initial="uniform", **kwargs) -> float:
    """Exact fixation probability from ``initial`` ("uniform", a vertex, or a set)."""
    sol = solve_fixation(g, r, **kwargs)
    if isinstance(initial, str):
        if initial != "uniform":
            raise InvalidParameter(f"unknown initial policy {initial!r}")
        return sol.uniform_fixation
    return sol(initial)


def fixation_all_singletons(g: EvolutionaryGraph, r: float, **kwargs) -> np.ndarray:
    return solve_fixation(g, r, **kwargs).singletons


# -- special closed forms ----------------------------------------------------


def counterexample_fixation(r):
    """(p0, p1, uniform) for the 3-vertex non-isothermal graph.

    Works with ``fractions.Fraction`` input for exact arithmetic.
    """
    if not r > 0:
        raise InvalidParameter(f"r must be positive, got {r!r}")
    q = r * r + r + 1
    p0 = r * r * (2 * r + 1) / (2 * (r + 1) * q)
    p1 = r * r * (4 * r + 5) / (4 * (r + 1) * q)
    return p0, p1, r * r / q


def star_fixation_exact(leaves: int, r: float) -> tuple[float, float, float]:
    """Exact (centre-start, leaf-start, uniform) fixation on the star.

    Uses the two-type lumped chain on (centre type, mutant leaves); exact for
    any leaf count, unlike the 2**n solver.
    """
    _check_r(r)
    if leaves < 1:
        raise InvalidParameter("star needs at least one leaf")
    L = leaves
    alpha = r / (r + L)
    beta = 1.0 / (r * L + 1.0)
    # unknowns: a[i] = p(centre mutant, i leaves), i = 0..L-1 ; b[i] = p(centre plain, i leaves), i = 1..L
    # a[L] = 1, b[0] = 0
    size = 2 * L
    rows, cols, vals = [], [], []
    rhs = np.zeros(size)

    def ai(i):
        return i

    def bi(i):
        return L + i - 1

    for i in range(L):
        row = ai(i)
        rows.append(row); cols.append(row); vals.append(1.0)
        if i + 1 == L:
            rhs[row] += alpha
        else:
            rows.append(row); cols.append(ai(i + 1)); vals.append(-alpha)
        if i >= 1:
            rows.append(row); cols.append(bi(i)); vals.append(-(1 - alpha))
    for i in range(1, L + 1):
        row = bi(i)
        rows.append(row); cols.append(row); vals.append(1.0)
        if i - 1 >= 1:
            rows.append(row); cols.append(bi(i - 1)); vals.append(-beta)
        if i == L:
            rhs[row] += 1 - beta
        else:
            rows.append(row); cols.append(ai(i)); vals.append(-(1 - beta))
    a = sp.csc_matrix((vals, (rows, cols)), shape=(size, size))
    sol = spsolve(a, rhs)
    centre = float(sol[ai(0)])
    leaf = float(sol[bi(1)])
    return centre, leaf, (centre + L * leaf) / (L + 1)


# -- gambler's ruin ----------------------------------------------------------


def _check_walk(p: float, z: int, a: int) -> None:
    if a < 1:
        raise InvalidParameter(f"a must be >= 1, got {a}")
    if not 0 <= z <= a:
        raise InvalidParameter(f"start z must lie in 0..{a}, got {z}")
    if not 0 < p < 1:
        raise InvalidParameter(f"p must lie in (0, 1), got {p}")
    if p == 0.5:
        raise UnsupportedParameter("the closed form excludes the unbiased walk p = 1/2")


def gambler_fixation(p: float, z: int, a: int) -> float:
    """Probability a +-1 walk started at ``z`` reaches ``a`` before 0."""
    _check_walk(p, z, a)
    rho = (1 - p) / p
    return (rho**z - 1) / (rho**a - 1)


def gambler_expected_steps(p: float, z: int, a: int) -> float:
    """Expected transitions until the walk hits 0 or ``a``."""
    _check_walk(p, z, a)
    q = 1 - p
    rho = q / p
    return z / (q - p) - (a / (q - p)) * (1 - rho**z) / (1 - rho**a)


class WalkSolution(NamedTuple):
    hit_top: np.ndarray
    expected_steps: np.ndarray


def solve_walk(up: np.ndarray | list[float], absorbing: Iterable[int] | None = None) -> WalkSolution:
    """First-step analysis for a nearest-neighbour walk on 0..a.

    ``up[i]`` is the probability of stepping i -> i+1 (the rest goes down).
    States in ``absorbing`` (default {0, a}) are absorbing.  Returns, for each
    start, the probability of being absorbed at the highest absorbing state
    and the expected number of transitions to absorption.
    """
    up = np.asarray(up, dtype=np.float64)
    a = up.size - 1
    absorbing = sorted({0, a} if absorbing is None else set(absorbing))
    top = absorbing[-1]
    size = a + 1
    absorbing_mask = np.zeros(size, dtype=bool)
    absorbing_mask[absorbing] = True
    mat = np.eye(size)
    b_hit = np.zeros(size)
    b_time = np.zeros(size)
    for i in range(size):
        if absorbing_mask[i]:
            b_hit[i] = 1.0 if i == top else 0.0
            continue
        if i + 1 <= a:
            mat[i, i + 1] -= up[i]
        if i - 1 >= 0:
            mat[i, i - 1] -= 1 - up[i]
        b_time[i] = 1.0
    hit = np.linalg.solve(mat, b_hit)
    time = np.linalg.solve(mat, b_time)
    return WalkSolution(hit, time)


class BackToBack(NamedTuple):
    reach_prob: float
    expected_hit: float


def backtoback_up_probs(a: int, c: int, d: int, p1: float) -> np.ndarray:
    """Up-probabilities of the chain on a..d (index i - a): p1 up to c, 1/3 above."""
    up = np.empty(d - a + 1)
    for idx, state in enumerate(range(a, d + 1)):
        up[idx] = p1 if state <= c else 1.0 / 3.0
    return up


def backtoback_bounds(b: int, c: int, d: int, p1: float) -> tuple[float, float]:
    """(lower bound on reach probability, upper bound on expected hitting time)."""
    reach = 1 - ((1 - p1) / p1) ** (c - b) * 2 ** (d - c)
    hit = 2 ** (d - c + 1) * (3 * p1 - 1) / (2 * p1 - 1)
    return reach, hit


def backtoback_exact(a: int, b: int, c: int, d: int, p1: float) -> BackToBack:
    """Exact reach probability c -> d avoiding b, and E[hitting time of {a, d}] from c.

    Raises :class:`ContractViolation` if either proven bound fails.
    """
    if not (a < b < c - 1 and c + 1 < d):
        raise InvalidParameter(f"need a < b < c-1 and c+1 < d, got a={a}, b={b}, c={c}, d={d}")
    if not 0.5 < p1 < 1:
        raise InvalidParameter(f"p1 must lie in (1/2, 1), got {p1}")
    up = backtoback_up_probs(a, c, d, p1)
    reach = solve_walk(up, absorbing=(0, b - a, d - a)).hit_top[c - a]
    hit = solve_walk(up, absorbing=(0, d - a)).expected_steps[c - a]
    lo_reach, hi_hit = backtoback_bounds(b, c, d, p1)
    if reach < lo_reach - 1e-12 or hit > hi_hit + 1e-9:
        raise ContractViolation(
            f"back-to-back bound failed: reach={reach} (>= {lo_reach}), hit={hit} (<= {hi_hit})"
        )
    return BackToBack(float(reach), float(hit))


# -- clique chains -----------------------------------------------------------


def clique_jump_matrix(r: float, k: int) -> np.ndarray:
    """Jump chain of the mutant count in an active clique of size ``k``."""
    _check_r(r)
    if k < 1:
        raise InvalidParameter(f"k must be >= 1, got {k}")
    mat = np.zeros((k + 1, k + 1))
    mat[0, 0] = 1.0
    mat[k, k] = 1.0
    for i in range(1, k):
        upp = r * (k - i) / ((r + 1) * (k - i) + 1)
        mat[i, i + 1] = upp
        mat[i, i - 1] = 1 - upp
    return mat


def z_threshold(r: float) -> int:
    """ceil(2r / (r - 1)), tolerant of float noise at exact integers."""
    return math.ceil(2 * r / (r - 1) - 1e-9)


def z_chain_matrix(r: float, k: int) -> np.ndarray:
    """Two-regime walk that dominates the clique chain from below.

    With s = (r + 1) / 2 the up-probability is s / (s + 1) on states
    1..k - z_threshold(r), and 1/3 above.
    Raises :class:`ContractViolation` if the entrywise domination condition
    against :func:`clique_jump_matrix` fails.
    """
    if not r > 1:
        raise InvalidParameter(f"the dominating chain needs r > 1, got {r}")
    if k < 1:
        raise InvalidParameter(f"k must be >= 1, got {k}")
    cut = z_threshold(r)
    rp = (r + 1) / 2
    mat = np.zeros((k + 1, k + 1))
    mat[0, 0] = 1.0
    mat[k, k] = 1.0
    for i in range(1, k):
        upp = rp / (rp + 1) if i <= k - cut else 1.0 / 3.0
        mat[i, i + 1] = upp
        mat[i, i - 1] = 1 - upp
    clique = clique_jump_matrix(r, k)
    tol = 1e-12
    if k >= 2 and clique[k - 1, k] < mat[k - 1, k] - tol:
        raise ContractViolation("clique chain fails to dominate at state k-1")
    for i in range(1, k - 1):
        if clique[i + 1, i + 2] < mat[i, i + 1] - tol:
            raise ContractViolation(f"clique chain fails to dominate at state {i}")
    return mat

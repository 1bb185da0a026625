"""Megastar process: Moran dynamics with feeders held down while their clique is mixed.

A clique is *active* when it holds both mutants and non-mutants.  The
process differs from the Moran process in three places:

* a mutant feeder that spawns into an empty clique hands over its mutant
  status (the target becomes a mutant, the feeder does not stay one);
* a reservoir mutant can only turn its feeder into a mutant while the
  clique is inactive;
* a mutant feeder spawning into a non-empty clique does nothing.

Non-mutant spawns always remove the target, exactly as in the Moran
process.  Driven by the same clock triggers as a Moran run, the megastar
process's mutant set stays inside the Moran mutant set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .. import _kernels
from ..errors import ContractViolation, InvalidParameter
from ..graphs import EvolutionaryGraph, MegastarLayout, megastar_layout
from .discrete import choose_reproducer, choose_target
from .state import (
    CENSORED,
    EXTINCTION,
    FIXATION,
    GAIN,
    LOSS,
    NONE,
    RESULT_CODES,
    Event,
    MutantState,
    Outcome,
    resolve_initial,
)

CENTRE, RESERVOIR, FEEDER, CLIQUE = (MegastarLayout.CENTRE, MegastarLayout.RESERVOIR,
                                     MegastarLayout.FEEDER, MegastarLayout.CLIQUE)


class MegastarState(MutantState):
    """Mutant set plus per-clique mutant counts."""

    __slots__ = ("layout", "role", "branch", "clique_count")

    def __init__(self, layout: MegastarLayout, r: float, mutants=()):
        self.layout = layout
        self.role = layout.role.tolist()
        self.branch = layout.branch.tolist()
        self.clique_count = [0] * layout.l
        super().__init__(len(self.role), r, mutants)

    def add(self, v: int) -> bool:
        if MutantState.add(self, v):
            if self.role[v] == CLIQUE:
                self.clique_count[self.branch[v]] += 1
            return True
        return False

    def remove(self, v: int) -> bool:
        if MutantState.remove(self, v):
            if self.role[v] == CLIQUE:
                self.clique_count[self.branch[v]] -= 1
            return True
        return False

    def active(self, j: int) -> bool:
        return 0 < self.clique_count[j] < self.layout.k

    def copy(self) -> "MegastarState":
        other = MegastarState(self.layout, self.r)
        for v in self.mutants:
            other.add(v)
        return other

    def check(self) -> None:
        MutantState.check(self)
        for j, clique in enumerate(self.layout.cliques):
            if sum(self.is_mutant[v] for v in clique.tolist()) != self.clique_count[j]:
                raise ContractViolation(f"clique {j + 1} mutant count out of sync")
            if self.active(j) and self.is_mutant[int(self.layout.feeders[j])]:
                raise ContractViolation(f"feeder {j + 1} is a mutant while its clique is active")


def apply_clock(state: MegastarState, u: int, v: int, mutant_clock: bool) -> tuple[str, int | None]:
    """Apply one clock trigger on edge (u, v) to the megastar process in place.

    Returns ``(effect, demoted)``; ``demoted`` is the feeder that lost
    mutant status, else None.
    """
    src_m = state.is_mutant[u]
    if mutant_clock:
        if not src_m:
            return NONE, None
        role_u, role_v = state.role[u], state.role[v]
        if role_u == FEEDER:
            if state.clique_count[state.branch[u]] == 0:
                state.add(v)
                state.remove(u)
                return GAIN, u
            return NONE, None
        if role_v == FEEDER:
            c = state.clique_count[state.branch[v]]
            if (c == 0 or c == state.layout.k) and state.add(v):
                return GAIN, None
            return NONE, None
        return (GAIN, None) if state.add(v) else (NONE, None)
    if src_m:
        return NONE, None
    return (LOSS, None) if state.remove(v) else (NONE, None)


def megastar_step(g: EvolutionaryGraph, r: float, state: MegastarState, rng, step_index: int = 0):
    """One effective reproduction of the megastar process (discrete time).

    Uses the same draws as :func:`discrete_step`; the only difference is the
    update rule.
    """
    if not isinstance(state, MegastarState):
        raise InvalidParameter("megastar_step needs a MegastarState")
    if state.absorbed:
        raise ContractViolation("megastar_step called on an absorbed state")
    u, src_mutant = choose_reproducer(state, rng)
    v = choose_target(g, u, rng)
    effect, demoted = apply_clock(state, u, v, src_mutant)
    return state, Event(step_index, u, v, "m" if src_mutant else "n", effect, demoted=demoted)


def new_state(g: EvolutionaryGraph, r: float, mutants=()) -> MegastarState:
    return MegastarState(megastar_layout(g), r, mutants)


class DominationRun(NamedTuple):
    moran: Outcome
    megastar: Outcome
    domination_held: bool


def _result(state: MutantState) -> str:
    if state.count == state.n:
        return FIXATION
    if state.count == 0:
        return EXTINCTION
    return CENSORED


def coupled_domination_run(
    g: EvolutionaryGraph,
    r: float,
    initial="uniform",
    rng=None,
    max_events: int = 10**8,
) -> DominationRun:
    """Drive a Moran run and a megastar-process run with one clock stream.

    Every vertex of a megastar has out-weight 1, so all clocks together fire
    at rate (r + 1) n: the trigger picks a uniform source, a mutant clock
    with probability r / (r + 1), and a target by weight.  Both processes
    see every trigger.  The containment of mutant sets is checked after
    each one.  ``Outcome.steps`` is the index of the trigger at which each
    process was absorbed.
    """
    if not r > 0:
        raise InvalidParameter(f"fitness r must be positive, got {r}")
    if rng is None:
        rng = np.random.default_rng()
    layout = megastar_layout(g)
    n = g.n
    start = resolve_initial(n, initial, rng)
    x = MutantState(n, r, start)
    xp = MegastarState(layout, r, start)
    total_rate = (r + 1.0) * n
    p_mut = r / (r + 1.0)
    t = 0.0
    events = 0
    held = True
    done_x = (events, t) if x.absorbed else None
    done_xp = (events, t) if xp.absorbed else None
    x_m, xp_m = x.is_mutant, xp.is_mutant
    while (done_x is None or done_xp is None) and events < max_events:
        t += rng.standard_exponential() / total_rate
        u = min(int(rng.random() * n), n - 1)
        mutant_clock = rng.random() < p_mut
        v = choose_target(g, u, rng)
        events += 1
        if done_x is None:
            if mutant_clock:
                if x_m[u]:
                    x.add(v)
            elif not x_m[u]:
                x.remove(v)
            if x.absorbed:
                done_x = (events, t)
        demoted = None
        if done_xp is None:
            _, demoted = apply_clock(xp, u, v, mutant_clock)
            if xp.absorbed:
                done_xp = (events, t)
        # only v (and a demoted feeder, which just left the megastar set) can have changed
        if xp_m[v] and not x_m[v]:
            held = False
    if held and not xp.mutants <= x.mutants:
        held = False
    ev_x, t_x = done_x if done_x is not None else (events, t)
    ev_xp, t_xp = done_xp if done_xp is not None else (events, t)
    moran = Outcome(_result(x), ev_x, final_time=t_x, final_mutants=x.mutants)
    mega = Outcome(_result(xp), ev_xp, final_time=t_xp, final_mutants=xp.mutants)
    return DominationRun(moran, mega, held)


@dataclass
class CliqueJumps:
    """Tally of active-clique size changes: ``up[i]``/``down[i]`` count moves out of size i."""

    k: int
    r: float
    up: np.ndarray
    down: np.ndarray
    runs: int
    steps: int

    @property
    def total(self) -> int:
        return int(self.up.sum() + self.down.sum())

    def frequencies(self) -> np.ndarray:
        """Empirical up-probability per interior size (NaN where unvisited)."""
        visits = self.up + self.down
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(visits > 0, self.up / np.maximum(visits, 1), np.nan)


def collect_clique_jumps(
    g: EvolutionaryGraph,
    r: float,
    min_jumps: int,
    rng,
    *,
    initial="uniform",
    max_steps: int = 10**9,
    engine: str = "compiled",
) -> CliqueJumps:
    """Run megastar-process trials until ``min_jumps`` active-clique moves are tallied."""
    layout = megastar_layout(g)
    k = layout.k
    up = np.zeros(k + 1, dtype=np.int64)
    down = np.zeros(k + 1, dtype=np.int64)
    runs = steps = 0
    while up.sum() + down.sum() < min_jumps:
        start = resolve_initial(g.n, initial, rng)
        if engine == "compiled":
            code, s = _kernels.run_megastar_jumps(
                g.indptr, g.indices, g.cumulative_weights, layout.role, layout.branch,
                layout.feeders, k, float(r), np.asarray(start, dtype=np.int64), rng,
                int(max_steps), up, down,
            )
        elif engine == "python":
            code, s = _python_jumps(g, layout, r, start, rng, max_steps, up, down)
        else:
            raise InvalidParameter(f"unknown engine {engine!r}")
        runs += 1
        steps += int(s)
        if RESULT_CODES[int(code)] == CENSORED:
            raise ContractViolation("megastar process hit max_steps while collecting jumps")
    return CliqueJumps(k, r, up, down, runs, steps)


def _python_jumps(g, layout, r, start, rng, max_steps, up, down):
    state = MegastarState(layout, r, start)
    steps = 0
    cc = state.clique_count
    while not state.absorbed and steps < max_steps:
        before = list(cc)
        _, ev = megastar_step(g, r, state, rng, steps)
        steps += 1
        if ev.effect == NONE:
            continue
        for j in range(layout.l):
            c = before[j]
            if cc[j] != c and 0 < c < layout.k:
                if cc[j] > c:
                    up[c] += 1
                else:
                    down[c] += 1
    if state.count == state.n:
        return 1, steps
    if state.count == 0:
        return 0, steps
    return 2, steps

"""Discrete-time Moran process.

Each step picks a reproducer with probability proportional to fitness
(mutants r, non-mutants 1) and places its offspring on an out-neighbour
drawn by edge weight.  Random numbers are consumed in a fixed order:
class draw, within-class index, target draw.  The compiled kernel follows
the same order, so both engines agree trajectory by trajectory.
"""

from __future__ import annotations

import bisect
import warnings

import numpy as np

from .. import _kernels
from ..errors import ContractViolation, InvalidParameter
from ..graphs import EvolutionaryGraph, star_leaves, strongly_connected
from .state import (
    CENSORED,
    EXTINCTION,
    FIXATION,
    GAIN,
    LOSS,
    NONE,
    RESULT_CODES,
    Event,
    EventLog,
    MutantState,
    Outcome,
    resolve_initial,
)

DEFAULT_MAX_STEPS = 10**9


def choose_reproducer(state: MutantState, rng) -> tuple[int, bool]:
    """Fitness-proportional reproducer: (vertex, is_mutant)."""
    count, n = state.count, state.n
    total = state.r * count + (n - count)
    if rng.random() * total < state.r * count:
        idx = min(int(rng.random() * count), count - 1)
        return state.order[idx], True
    rest = n - count
    idx = min(int(rng.random() * rest), rest - 1)
    return state.order[count + idx], False


def choose_target(g: EvolutionaryGraph, u: int, rng) -> int:
    targets, cum = g.row_lists[u]
    y = rng.random()
    if not targets:
        return -1
    return targets[bisect.bisect_right(cum, y)]


def discrete_step(g: EvolutionaryGraph, r: float, state: MutantState, rng, step_index: int = 0):
    """Advance ``state`` (in place) by one reproduction; returns ``(state, event)``."""
    if state.absorbed:
        raise ContractViolation("discrete_step called on an absorbed state")
    u, src_mutant = choose_reproducer(state, rng)
    v = choose_target(g, u, rng)
    kind = "m" if src_mutant else "n"
    effect = NONE
    if v >= 0:
        if src_mutant and state.add(v):
            effect = GAIN
        elif not src_mutant and state.remove(v):
            effect = LOSS
    return state, Event(step_index, u, v, kind, effect)


def _validate(g: EvolutionaryGraph, r: float, max_steps: int) -> None:
    if not r > 0:
        raise InvalidParameter(f"fitness r must be positive, got {r}")
    if max_steps < 1:
        raise InvalidParameter(f"max_steps must be >= 1, got {max_steps}")


def run_to_absorption(
    g: EvolutionaryGraph,
    r: float,
    initial="uniform",
    rng=None,
    max_steps: int = DEFAULT_MAX_STEPS,
    *,
    record: bool = False,
    engine: str = "compiled",
    check_connected: bool = True,
) -> Outcome:
    """Run until fixation, extinction, or ``max_steps`` reproductions (censored).

    ``engine`` is "compiled" (numba kernel), "python" (interpreted, needed
    for ``record=True``), or "lumped" (stars only, see :func:`run_star_lumped`).
    """
    _validate(g, r, max_steps)
    if rng is None:
        rng = np.random.default_rng()
    if check_connected and not strongly_connected(g):
        warnings.warn("graph is not strongly connected; absorption is not guaranteed",
                      RuntimeWarning, stacklevel=2)
    start = resolve_initial(g.n, initial, rng)
    if engine == "lumped":
        if record:
            raise InvalidParameter("the lumped engine does not produce event logs")
        return run_star_lumped(g, r, start, rng, max_steps)
    if record or engine == "python":
        return _run_python(g, r, start, rng, max_steps, record)
    if engine != "compiled":
        raise InvalidParameter(f"unknown engine {engine!r}")
    code, steps = _kernels.run_discrete(
        g.indptr, g.indices, g.cumulative_weights, float(r),
        np.asarray(start, dtype=np.int64), rng, int(max_steps),
    )
    return Outcome(RESULT_CODES[code], int(steps))


def _run_python(g, r, start, rng, max_steps, record) -> Outcome:
    state = MutantState(g.n, r, start)
    log = EventLog(frozenset(start)) if record else None
    steps = 0
    while not state.absorbed and steps < max_steps:
        _, ev = discrete_step(g, r, state, rng, steps + 1)
        steps += 1
        if log is not None:
            log.events.append(ev)
    if log is not None:
        log.final_time = float(steps)
    if state.count == state.n:
        result = FIXATION
    elif state.count == 0:
        result = EXTINCTION
    else:
        result = CENSORED
    return Outcome(result, steps, event_log=log, final_mutants=state.mutants)


def run_star_lumped(g: EvolutionaryGraph, r: float, start: list[int], rng,
                    max_steps: int = DEFAULT_MAX_STEPS) -> Outcome:
    """Star-only engine on (centre type, mutant-leaf count).

    Same law as the vertex-level process, but a run of centre flips at one
    leaf count costs O(1), so stars with thousands of leaves are cheap.
    """
    leaves = star_leaves(g)
    if leaves is None:
        raise InvalidParameter("the lumped engine needs a star graph (centre at vertex 0)")
    centre = 1 if 0 in start else 0
    mutant_leaves = len(start) - centre
    code, steps = _kernels.run_star_lumped(leaves, float(r), centre, mutant_leaves, rng, int(max_steps))
    return Outcome(RESULT_CODES[code], int(steps))

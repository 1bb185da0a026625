"""Continuous-time Moran process driven by per-edge Poisson clocks.

Every edge (u, v) carries a mutant clock of rate r*w_uv and a non-mutant
clock of rate w_uv.  A mutant clock only acts when u is a mutant, a
non-mutant clock only when u is not.

Two sampling modes:

* ``"effective"`` draws only from clocks that match their source's type.
  Their total rate is the total fitness, so this is the discrete chain
  with exponential holding times.
* ``"full"`` draws from every clock and logs the ones that do nothing as
  ``relevant=False`` events.  Used by coupling checks.
"""

from __future__ import annotations

import warnings

import numpy as np

from ..errors import InvalidParameter
from ..graphs import EvolutionaryGraph, strongly_connected
from .discrete import choose_target, discrete_step
from .state import (
    CENSORED,
    EXTINCTION,
    FIXATION,
    GAIN,
    LOSS,
    NONE,
    Event,
    EventLog,
    MutantState,
    Outcome,
    resolve_initial,
)

MODES = ("effective", "full")


def run_continuous(
    g: EvolutionaryGraph,
    r: float,
    initial="uniform",
    rng=None,
    max_events: int = 10**7,
    *,
    mode: str = "effective",
    record: bool = True,
    check_connected: bool = True,
) -> Outcome:
    """Run the clock process until absorption or ``max_events`` clock triggers.

    ``Outcome.steps`` counts state-eligible (relevant) triggers only; in
    ``"full"`` mode the log additionally holds the irrelevant ones.
    """
    if not r > 0:
        raise InvalidParameter(f"fitness r must be positive, got {r}")
    if max_events < 1:
        raise InvalidParameter("max_events must be >= 1")
    if mode not in MODES:
        raise InvalidParameter(f"mode must be one of {MODES}, got {mode!r}")
    if rng is None:
        rng = np.random.default_rng()
    if check_connected and not strongly_connected(g):
        warnings.warn("graph is not strongly connected; absorption is not guaranteed",
                      RuntimeWarning, stacklevel=2)
    start = resolve_initial(g.n, initial, rng)
    state = MutantState(g.n, r, start)
    log = EventLog(frozenset(start)) if record else None
    t = 0.0
    relevant = 0
    triggers = 0
    if mode == "effective":
        while not state.absorbed and triggers < max_events:
            t += rng.standard_exponential() / state.total_fitness
            _, ev = discrete_step(g, r, state, rng, 0)
            triggers += 1
            relevant += 1
            if log is not None:
                log.events.append(Event(t, ev.source, ev.target, ev.kind, ev.effect))
    else:
        # each vertex's clocks sum to r+1 since out-weights sum to 1
        sources = np.flatnonzero(g.out_degrees > 0).tolist()
        n_src = len(sources)
        total_rate = (r + 1.0) * n_src
        p_mut = r / (r + 1.0)
        while not state.absorbed and triggers < max_events:
            t += rng.standard_exponential() / total_rate
            u = sources[min(int(rng.random() * n_src), n_src - 1)]
            is_mut_clock = rng.random() < p_mut
            v = choose_target(g, u, rng)
            triggers += 1
            src_m = state.is_mutant[u]
            effect = NONE
            rel = src_m == is_mut_clock
            if rel:
                relevant += 1
                if src_m and state.add(v):
                    effect = GAIN
                elif not src_m and state.remove(v):
                    effect = LOSS
            if log is not None:
                log.events.append(Event(t, u, v, "m" if is_mut_clock else "n", effect, rel))
    if log is not None:
        log.final_time = t
    if state.count == g.n:
        result = FIXATION
    elif state.count == 0:
        result = EXTINCTION
    else:
        result = CENSORED
    return Outcome(result, relevant, final_time=t, event_log=log, final_mutants=state.mutants)


def first_event_time(g: EvolutionaryGraph, r: float, mutants) -> float:
    """Mean waiting time to the first effective trigger: one over total fitness."""
    state = MutantState(g.n, r, mutants)
    return 1.0 / state.total_fitness

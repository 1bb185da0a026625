"""Clock process rebuilt from star-clocks that run on vertex local time.

Each edge (u, v) owns four independent Poisson streams:

======  ======  ===================  ==================================
stream  rate    advances on          emits
======  ======  ===================  ==================================
m       r*w     u's mutant time      mutant clock (acts, u is mutant)
nbar    w       u's mutant time      non-mutant clock (inert)
n       w       u's non-mutant time  non-mutant clock (acts)
mbar    r*w     u's non-mutant time  mutant clock (inert)
======  ======  ===================  ==================================

A stream is paused while its source sits on the other axis, so stream
randomness is consumed exactly once whatever the trajectory.  The result is
a clock process with the right law, and the projected Moran process can be
compared against the direct engines.  :func:`check_observation` replays a
ledger and confirms every trigger maps to exactly one star-clock trigger at
the matching local time.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolation, InvalidParameter
from ..graphs import EvolutionaryGraph
from .state import (
    CENSORED,
    EXTINCTION,
    FIXATION,
    GAIN,
    LOSS,
    NONE,
    Event,
    EventLog,
    LocalTimeReplay,
    MutantState,
    Outcome,
    resolve_initial,
)

STREAM_KINDS = ("m", "nbar", "n", "mbar")
_M, _NBAR, _N, _MBAR = range(4)
# streams driven by mutant time, then by non-mutant time
_MUTANT_AXIS = (_M, _NBAR)
_NONMUTANT_AXIS = (_N, _MBAR)


@dataclass(frozen=True)
class Trigger:
    time: float
    stream: str
    edge: int
    source: int
    target: int
    local_time: float
    source_mutant: bool
    clock: str
    effect: str


@dataclass
class TriggerLedger:
    """Everything needed to audit a coupled run after the fact."""

    r: float
    initial: frozenset[int] = frozenset()
    triggers: list[Trigger] = field(default_factory=list)
    # every local trigger time ever drawn, per stream id (4*edge + kind)
    drawn: dict[int, list[float]] = field(default_factory=dict)
    rates: dict[int, float] = field(default_factory=dict)
    final_time: float = 0.0

    def __len__(self) -> int:
        return len(self.triggers)


def _stream_rate(r: float, w: float, kind: int) -> float:
    return r * w if kind in (_M, _MBAR) else w


def star_clock_coupled_run(
    g: EvolutionaryGraph,
    r: float,
    initial="uniform",
    rng=None,
    max_events: int = 10**6,
    *,
    keep_drawn: bool = True,
) -> tuple[Outcome, TriggerLedger]:
    """Run the projected Moran process; return its outcome and the trigger ledger."""
    if not r > 0:
        raise InvalidParameter(f"fitness r must be positive, got {r}")
    if max_events < 1:
        raise InvalidParameter("max_events must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    start = resolve_initial(g.n, initial, rng)
    n = g.n
    state = MutantState(n, r, start)
    ledger = TriggerLedger(r, frozenset(start))
    indptr = g.indptr.tolist()
    targets = g.indices.tolist()
    weights = g.weights.tolist()
    n_edges = len(targets)
    src_of = [u for u in range(n) for _ in range(indptr[u], indptr[u + 1])]

    # next local trigger time for every stream, on that stream's own axis
    nxt = [0.0] * (4 * n_edges)
    rates = [0.0] * (4 * n_edges)
    for e in range(n_edges):
        for kind in range(4):
            sid = 4 * e + kind
            rates[sid] = _stream_rate(r, weights[e], kind)
            ledger.rates[sid] = rates[sid]
            nxt[sid] = rng.standard_exponential() / rates[sid]
            if keep_drawn:
                ledger.drawn[sid] = [nxt[sid]]

    local = [[0.0, 0.0] for _ in range(n)]  # [mutant time, non-mutant time] at last flip
    since = [0.0] * n  # global time of last flip
    version = [0] * n
    heap: list[tuple[float, int, int]] = []

    def schedule(u: int, t_now: float) -> None:
        mut = state.is_mutant[u]
        axis_now = local[u][0 if mut else 1]
        kinds = _MUTANT_AXIS if mut else _NONMUTANT_AXIS
        ver = version[u]
        for e in range(indptr[u], indptr[u + 1]):
            for kind in kinds:
                sid = 4 * e + kind
                heapq.heappush(heap, (t_now + (nxt[sid] - axis_now), sid, ver))

    for u in range(n):
        schedule(u, 0.0)

    t = 0.0
    relevant = 0
    count = 0
    while not state.absorbed and count < max_events and heap:
        deadline, sid, ver = heapq.heappop(heap)
        e, kind = divmod(sid, 4)
        u = src_of[e]
        if ver != version[u]:
            continue
        t = deadline
        v = targets[e]
        src_m = state.is_mutant[u]
        local_t = nxt[sid]
        count += 1
        effect = NONE
        if kind == _M:
            clock = "m"
            if state.add(v):
                effect = GAIN
        elif kind == _N:
            clock = "n"
            if state.remove(v):
                effect = LOSS
        elif kind == _NBAR:
            clock = "n"
        else:
            clock = "m"
        if kind in (_M, _N):
            relevant += 1
        ledger.triggers.append(Trigger(t, STREAM_KINDS[kind], e, u, v, local_t, src_m, clock, effect))
        # advance this stream and re-arm it on the same axis
        nxt[sid] += rng.standard_exponential() / rates[sid]
        if keep_drawn:
            ledger.drawn[sid].append(nxt[sid])
        axis = 0 if src_m else 1
        axis_now = local[u][axis] + (t - since[u])
        heapq.heappush(heap, (t + (nxt[sid] - axis_now), sid, version[u]))
        if effect != NONE:
            # v switched axis: freeze the old one, resume the other
            old_axis = 1 if effect == GAIN else 0
            local[v][old_axis] += t - since[v]
            since[v] = t
            version[v] += 1
            schedule(v, t)
    ledger.final_time = t
    if state.count == n:
        result = FIXATION
    elif state.count == 0:
        result = EXTINCTION
    else:
        result = CENSORED
    return Outcome(result, relevant, final_time=t, final_mutants=state.mutants), ledger


def ledger_event_log(ledger: TriggerLedger) -> EventLog:
    log = EventLog(ledger.initial)
    for tr in ledger.triggers:
        log.events.append(Event(tr.time, tr.source, tr.target, tr.clock, tr.effect,
                                relevant=tr.stream in ("m", "n")))
    log.final_time = ledger.final_time
    return log


@dataclass
class ObservationReport:
    triggers: int
    max_local_time_error: float
    dropped: int
    ok: bool
    problems: list[str]


def check_observation(g: EvolutionaryGraph, ledger: TriggerLedger, tol: float = 1e-9) -> ObservationReport:
    """Audit a coupled-run ledger.

    For every trigger: the emitted clock type and effect follow from the
    stream kind and the source's type, and the stream's local trigger time
    equals the source's independently replayed local time on that axis.
    Then every drawn stream trigger that lies inside the exposed part of its
    axis must appear in the ledger exactly once, in order.
    """
    problems: list[str] = []
    targets = g.indices
    replay = LocalTimeReplay(g.n, ledger.initial)
    mutants = set(ledger.initial)
    worst = 0.0
    seen: dict[int, list[float]] = {}
    for i, tr in enumerate(ledger.triggers):
        u = tr.source
        if targets[tr.edge] != tr.target or not g.indptr[u] <= tr.edge < g.indptr[u + 1]:
            problems.append(f"trigger {i}: edge {tr.edge} is not ({u},{tr.target})")
        if (u in mutants) != tr.source_mutant:
            problems.append(f"trigger {i}: recorded source type disagrees with replay")
        lt = replay.at(u, tr.time)
        mut_axis = tr.stream in ("m", "nbar")
        if mut_axis != tr.source_mutant:
            problems.append(f"trigger {i}: stream {tr.stream} fired off its axis")
        expected_clock = "m" if tr.stream in ("m", "mbar") else "n"
        if tr.clock != expected_clock:
            problems.append(f"trigger {i}: stream {tr.stream} emitted a {tr.clock} clock")
        axis_time = lt.mutant if mut_axis else lt.nonmutant
        worst = max(worst, abs(axis_time - tr.local_time))
        if tr.stream == "m":
            expect = GAIN if tr.target not in mutants else NONE
        elif tr.stream == "n":
            expect = LOSS if tr.target in mutants else NONE
        else:
            expect = NONE
        if tr.effect != expect:
            problems.append(f"trigger {i}: effect {tr.effect}, expected {expect}")
        seen.setdefault(4 * tr.edge + STREAM_KINDS.index(tr.stream), []).append(tr.local_time)
        ev = Event(tr.time, u, tr.target, tr.clock, tr.effect)
        replay.apply(ev)
        if tr.effect == GAIN:
            mutants.add(tr.target)
        elif tr.effect == LOSS:
            mutants.discard(tr.target)
    if worst > tol:
        problems.append(f"local time mismatch {worst:.3e} exceeds {tol:g}")
    dropped = 0
    if ledger.drawn:
        src_of = np.repeat(np.arange(g.n), np.diff(g.indptr))
        for sid, draws in ledger.drawn.items():
            e, kind = divmod(sid, 4)
            lt = replay.at(int(src_of[e]), ledger.final_time)
            horizon = lt.mutant if kind in (_M, _NBAR) else lt.nonmutant
            exposed = [x for x in draws if x < horizon - tol]
            got = seen.get(sid, [])
            # the last logged trigger may sit exactly on the horizon (the absorbing event)
            if got[: len(exposed)] != exposed or len(got) > len(exposed) + 1:
                dropped += 1
    if dropped:
        problems.append(f"{dropped} streams lost or duplicated exposed triggers")
    if len(problems) > 20:
        problems = problems[:20] + [f"... {len(problems) - 20} more"]
    return ObservationReport(len(ledger.triggers), worst, dropped, not problems, problems)


def local_increments(ledger: TriggerLedger) -> dict[str, np.ndarray]:
    """Inter-trigger local gaps, scaled by stream rate (Exp(1) if streams are right)."""
    out: dict[str, list[float]] = {k: [] for k in STREAM_KINDS}
    if not ledger.drawn:
        raise ContractViolation("ledger was recorded without keep_drawn")
    for sid, draws in ledger.drawn.items():
        kind = sid % 4
        gaps = np.diff(np.concatenate(([0.0], draws))) * ledger.rates[sid]
        out[STREAM_KINDS[kind]].extend(gaps.tolist())
    return {k: np.asarray(v) for k, v in out.items()}

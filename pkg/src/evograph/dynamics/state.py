"""Mutant sets, events, outcomes and local-time bookkeeping."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from ..errors import ContractViolation, InvalidParameter

FIXATION = "fixation"
EXTINCTION = "extinction"
CENSORED = "censored"

RESULT_CODES = {0: EXTINCTION, 1: FIXATION, 2: CENSORED}

GAIN = "gain"
LOSS = "loss"
NONE = "none"


class MutantState:
    """Mutant set with O(1) uniform sampling inside either class.

    ``order[:count]`` holds the mutants and ``order[count:]`` the
    non-mutants; ``pos`` is the inverse permutation.  Insertions and
    removals swap with the class boundary, matching the compiled engine.
    """

    __slots__ = ("n", "r", "is_mutant", "order", "pos", "count")

    def __init__(self, n: int, r: float, mutants: Iterable[int] = ()):
        self.n = n
        self.r = r
        self.is_mutant = [False] * n
        self.order = list(range(n))
        self.pos = list(range(n))
        self.count = 0
        for v in sorted(set(int(v) for v in mutants)):
            if not 0 <= v < n:
                raise InvalidParameter(f"vertex {v} outside 0..{n - 1}")
            self.add(v)

    def add(self, v: int) -> bool:
        if self.is_mutant[v]:
            return False
        p = self.pos[v]
        w = self.order[self.count]
        self.order[self.count] = v
        self.order[p] = w
        self.pos[v] = self.count
        self.pos[w] = p
        self.is_mutant[v] = True
        self.count += 1
        return True

    def remove(self, v: int) -> bool:
        if not self.is_mutant[v]:
            return False
        last = self.count - 1
        p = self.pos[v]
        w = self.order[last]
        self.order[last] = v
        self.order[p] = w
        self.pos[v] = last
        self.pos[w] = p
        self.is_mutant[v] = False
        self.count -= 1
        return True

    @property
    def mutant_count(self) -> int:
        return self.count

    @property
    def total_fitness(self) -> float:
        return self.r * self.count + (self.n - self.count)

    @property
    def mutants(self) -> frozenset[int]:
        return frozenset(self.order[: self.count])

    @property
    def absorbed(self) -> bool:
        return self.count == 0 or self.count == self.n

    def copy(self) -> "MutantState":
        other = MutantState.__new__(MutantState)
        other.n, other.r, other.count = self.n, self.r, self.count
        other.is_mutant = list(self.is_mutant)
        other.order = list(self.order)
        other.pos = list(self.pos)
        return other

    def check(self) -> None:
        """Recompute every cached aggregate and compare (debug aid, O(n))."""
        members = [v for v in range(self.n) if self.is_mutant[v]]
        if len(members) != self.count:
            raise ContractViolation("mutant_count out of sync with membership")
        if set(self.order[: self.count]) != set(members):
            raise ContractViolation("index-swap array out of sync with membership")
        if any(self.order[self.pos[v]] != v for v in range(self.n)):
            raise ContractViolation("pos is not the inverse of order")

    def __repr__(self) -> str:
        return f"MutantState(n={self.n}, r={self.r}, mutants={sorted(self.mutants)})"


@dataclass(frozen=True)
class Event:
    """One clock trigger (continuous runs) or reproduction (discrete runs).

    ``kind`` is the clock type: "m" (mutant clock / mutant reproduces) or
    "n".  ``relevant`` is False for triggers whose clock type does not match
    the source's type; those never change the state.  ``demoted`` names a
    vertex that lost mutant status as a side effect (megastar feeders).
    """

    time: float
    source: int
    target: int
    kind: str
    effect: str
    relevant: bool = True
    demoted: int | None = None

    def to_json(self) -> str:
        return json.dumps(
            {"t": float(self.time), "src": self.source, "dst": self.target,
             "kind": self.kind, "effect": self.effect}
        )


@dataclass
class EventLog:
    initial: frozenset[int]
    events: list[Event] = field(default_factory=list)
    final_time: float = 0.0

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def to_jsonl(self) -> str:
        return "".join(ev.to_json() + "\n" for ev in self.events)

    def states(self) -> Iterable[tuple[float, frozenset[int]]]:
        """Replay the log, yielding (time, mutant set after the event)."""
        current = set(self.initial)
        for ev in self.events:
            if ev.effect == GAIN:
                current.add(ev.target)
            elif ev.effect == LOSS:
                current.discard(ev.target)
            if ev.demoted is not None:
                current.discard(ev.demoted)
            yield ev.time, frozenset(current)


@dataclass
class Outcome:
    result: str
    steps: int
    final_time: float | None = None
    event_log: EventLog | None = None
    final_mutants: frozenset[int] | None = None

    @property
    def fixated(self) -> bool:
        return self.result == FIXATION

    @property
    def extinct(self) -> bool:
        return self.result == EXTINCTION


class LocalTimes(NamedTuple):
    mutant: float
    nonmutant: float


def local_times(log: EventLog, v: int, t: float) -> LocalTimes:
    """Time ``v`` spent as a mutant and as a non-mutant during [0, t]."""
    if t < 0 or t > log.final_time * (1 + 1e-12) + 1e-12:
        raise InvalidParameter(f"query time {t} outside the logged window [0, {log.final_time}]")
    is_m = v in log.initial
    last = 0.0
    t_m = 0.0
    for ev in log.events:
        if ev.time > t:
            break
        flips = (ev.target == v and ((ev.effect == GAIN and not is_m) or (ev.effect == LOSS and is_m))) or (
            ev.demoted == v and is_m
        )
        if flips:
            if is_m:
                t_m += ev.time - last
            last = ev.time
            is_m = not is_m
    if is_m:
        t_m += t - last
    return LocalTimes(t_m, t - t_m)


class LocalTimeReplay:
    """Incremental local times for every vertex while replaying a log in order."""

    def __init__(self, n: int, initial: Iterable[int]):
        self.is_mutant = np.zeros(n, dtype=bool)
        self.is_mutant[list(initial)] = True
        self.acc = np.zeros((n, 2))
        self.last = np.zeros(n)

    def at(self, v: int, t: float) -> LocalTimes:
        extra = t - self.last[v]
        t_m, t_n = self.acc[v]
        if self.is_mutant[v]:
            t_m += extra
        else:
            t_n += extra
        return LocalTimes(float(t_m), float(t_n))

    def apply(self, ev: Event) -> None:
        for v, becomes in ((ev.target, _becomes(ev)), (ev.demoted, False)):
            if v is None or becomes is None or self.is_mutant[v] == becomes:
                continue
            t_m, t_n = self.at(v, ev.time)
            self.acc[v] = (t_m, t_n)
            self.last[v] = ev.time
            self.is_mutant[v] = becomes


def _becomes(ev: Event) -> bool | None:
    if ev.effect == GAIN:
        return True
    if ev.effect == LOSS:
        return False
    return None


def resolve_initial(n: int, initial, rng) -> list[int]:
    """Initial mutant list from a policy: "uniform", a vertex index, or a set."""
    if isinstance(initial, str):
        if initial not in ("uniform", "uniform-singleton"):
            raise InvalidParameter(f"unknown initial policy {initial!r}")
        v = int(rng.random() * n)
        return [min(v, n - 1)]
    if isinstance(initial, (int, np.integer)):
        if not 0 <= initial < n:
            raise InvalidParameter(f"initial vertex {initial} outside 0..{n - 1}")
        return [int(initial)]
    verts = sorted(set(int(v) for v in initial))
    if verts and (verts[0] < 0 or verts[-1] >= n):
        raise InvalidParameter("initial set has a vertex out of range")
    return verts

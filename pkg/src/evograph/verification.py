"""Acceptance checks, shared by ``evograph verify`` and the test-suite.

Each check returns a :class:`CheckResult`.  ``quick=True`` shrinks trial
counts so the whole suite runs in seconds.  A quick run still exercises
every code path, but only the full run tests the stated tolerances.
"""

from __future__ import annotations

import io
import json
import math
import time
from contextlib import redirect_stdout
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import exact
from .dynamics.megastar import collect_clique_jumps, coupled_domination_run
from .dynamics.starclock import check_observation, star_clock_coupled_run
from .errors import ContractViolation
from .estimate import estimate_fixation, trial_rng, two_proportion_z
from .experiments import (
    FAIL,
    amplification_report,
    check_megastar_upper,
    check_superstar_instant_death,
)
from .graphs import (
    is_isothermal,
    make_complete,
    make_counterexample,
    make_megastar,
    make_star,
    make_superstar,
)


@dataclass
class CheckResult:
    id: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.id:>2} {self.name}: {self.detail} ({self.seconds:.1f}s)"

    def to_dict(self) -> dict:
        return {"id": self.id, "name": self.name, "passed": self.passed, "detail": self.detail,
                "seconds": round(self.seconds, 3), "data": self.data}


def _regular_closed_form(quick: bool) -> tuple[bool, str, dict]:
    worst = 0.0
    for n in range(2, 9):
        for r in (1.5, 2.0, 3.0):
            worst = max(worst, abs(exact.fixation_exact(make_complete(n), r) - exact.rho_reg(r, n)))
    return worst <= 1e-10, f"max |exact - closed form| = {worst:.2e} (tol 1e-10)", {"max_error": worst}


def _neutral_symmetry(quick: bool) -> tuple[bool, str, dict]:
    graphs = [make_complete(n) for n in range(2, 9)]
    graphs += [make_star(leaves) for leaves in range(1, 6)]
    graphs += [make_superstar(1, 1, 2), make_megastar(2, 1, 2)]
    worst = max(abs(exact.fixation_exact(g, 1.0) - 1 / g.n) for g in graphs)
    return worst <= 1e-10, f"{len(graphs)} graphs, max |p - 1/n| = {worst:.2e}", {"max_error": worst}


def _counterexample(quick: bool) -> tuple[bool, str, dict]:
    g = make_counterexample()
    singles = exact.fixation_all_singletons(g, 2.0)
    uniform = float(singles.mean())
    target = np.array([10 / 21, 13 / 21, 13 / 21])
    err = max(float(np.max(np.abs(singles - target))), abs(uniform - 4 / 7))
    ok = g.is_out_stochastic() and not is_isothermal(g) and err <= 1e-12
    return ok, (f"out-stochastic={g.is_out_stochastic()}, isothermal={is_isothermal(g)}, "
                f"max error {err:.1e}"), {"singletons": singles.tolist(), "uniform": uniform}


def _star_amplification(quick: bool) -> tuple[bool, str, dict]:
    trials = 2_000 if quick else 100_000
    p10 = exact.fixation_exact(make_star(10), 2.0)
    est10 = estimate_fixation(make_star(10), 2.0, "uniform", trials, 4001, engine="graph")
    covered = est10.ci[0] <= p10 <= est10.ci[1]
    big_trials = 10_000 if quick else 100_000
    est = estimate_fixation(make_star(1000), 2.0, "uniform", big_trials, 4002)
    gap = abs(est.extinction - 0.25)
    ok = covered and gap <= 0.02
    detail = (f"star(10) exact {p10:.5f} in CI [{est10.ci[0]:.5f}, {est10.ci[1]:.5f}]: {covered}; "
              f"star(1000) extinction {est.extinction:.4f}, |gap| {gap:.4f} (tol 0.02)")
    return ok, detail, {"star10_exact": p10, "star10": est10.to_dict(), "star1000": est.to_dict()}


def _gambler(quick: bool) -> tuple[bool, str, dict]:
    rng = np.random.default_rng(5005)
    worst = 0.0
    tuples = 0
    while tuples < 100:
        p = float(rng.uniform(0.02, 0.98))
        if abs(p - 0.5) < 0.01:
            continue
        a = int(rng.integers(1, 13))
        z = int(rng.integers(0, a + 1))
        walk = exact.solve_walk(np.full(a + 1, p))
        f_closed = exact.gambler_fixation(p, z, a)
        t_closed = exact.gambler_expected_steps(p, z, a)
        worst = max(worst, abs(f_closed - walk.hit_top[z]),
                    abs(t_closed - walk.expected_steps[z]) / max(1.0, abs(walk.expected_steps[z])))
        tuples += 1
    b2b_ok = 0
    failures = []
    while b2b_ok + len(failures) < 100:
        a = int(rng.integers(0, 5))
        b = a + int(rng.integers(1, 5))
        c = b + int(rng.integers(2, 7))
        d = c + int(rng.integers(2, 7))
        p1 = float(rng.uniform(0.51, 0.99))
        try:
            exact.backtoback_exact(a, b, c, d, p1)
            b2b_ok += 1
        except ContractViolation as exc:
            failures.append(str(exc))
    ok = worst <= 1e-10 and not failures
    return ok, f"closed-form max error {worst:.2e}; back-to-back bounds held on {b2b_ok}/100", {
        "max_error": worst, "failures": failures}


def _domination(quick: bool) -> tuple[bool, str, dict]:
    runs = 100 if quick else 1000
    g = make_megastar(3, 2, 4)
    held = 0
    order_ok = 0
    mega_fix = 0
    for i in range(runs):
        res = coupled_domination_run(g, 2.0, "uniform", trial_rng(6006, i))
        held += res.domination_held
        if res.megastar.fixated:
            mega_fix += 1
            order_ok += res.moran.fixated and res.moran.steps <= res.megastar.steps
    ok = held == runs and order_ok == mega_fix
    return ok, (f"containment held in {held}/{runs} runs; Moran fixed no later than the megastar "
                f"process in {order_ok}/{mega_fix} megastar fixations"), {"held": held, "runs": runs}


def _clique_jumps(quick: bool) -> tuple[bool, str, dict]:
    need = 5_000 if quick else 100_000
    jumps = collect_clique_jumps(make_megastar(5, 2, 5), 2.0, need, trial_rng(7007, 0))
    mat = exact.clique_jump_matrix(2.0, 5)
    worst = 0.0
    rows = {}
    for i in range(1, 5):
        visits = int(jumps.up[i] + jumps.down[i])
        p = mat[i, i + 1]
        sigma = math.sqrt(p * (1 - p) / visits)
        zscore = abs(jumps.up[i] / visits - p) / sigma
        worst = max(worst, zscore)
        rows[i] = {"visits": visits, "empirical": jumps.up[i] / visits, "matrix": p, "z": zscore}
    ok = worst <= 3.0 and jumps.total >= need
    return ok, f"{jumps.total} jumps, worst deviation {worst:.2f} sigma (limit 3)", {"rows": rows}


def _coupling(quick: bool) -> tuple[bool, str, dict]:
    trials = 2_000 if quick else 100_000
    out = {}
    ok = True
    parts = []
    for name, g, seed in (("K3", make_complete(3), 8008), ("star3", make_star(3), 8010)):
        fix = 0
        bad = 0
        for i in range(trials):
            o, ledger = star_clock_coupled_run(g, 2.0, "uniform", trial_rng(seed, i))
            fix += o.fixated
            if not check_observation(g, ledger).ok:
                bad += 1
        direct = estimate_fixation(g, 2.0, "uniform", trials, seed + 1, engine="graph")
        _, pval = two_proportion_z(fix, trials, direct.fixations, direct.resolved)
        good = pval >= 0.01 and bad == 0
        ok &= good
        parts.append(f"{name}: coupled {fix / trials:.4f} vs direct {direct.point:.4f} (p={pval:.3f}), "
                     f"ledger audits failed {bad}")
        out[name] = {"coupled": fix / trials, "direct": direct.point, "p_value": pval, "bad_ledgers": bad}
    return ok, "; ".join(parts), out


def _bound_scenarios(quick: bool) -> tuple[bool, str, dict]:
    trials = 2_000 if quick else 100_000
    s = check_superstar_instant_death(10, 5, 10, 2.0, trials, 9009)
    m = check_megastar_upper(3, 3, 3, 2.0, trials, 9010)
    ok = s.verdict != FAIL and m.verdict != FAIL
    detail = (f"superstar death: {s.verdict} (power {s.power:.2f}); "
              f"megastar upper: {m.verdict} (power {m.power:.2f})")
    return ok, detail, {"superstar": s.to_dict(), "megastar": m.to_dict()}


MEGASTAR_TREND_GRID = ((2, 2, 2), (4, 4, 4), (8, 8, 8))


def _trends(quick: bool) -> tuple[bool, str, dict]:
    trials = 1_000 if quick else 10_000
    star = amplification_report("star", 2.0, [50, 500, 5000], trials, 10010)
    last = star.rows[-1]
    gap = abs(last["extinction"] - 0.25)
    mega = amplification_report("megastar", 2.0, list(MEGASTAR_TREND_GRID), trials, 10020)
    ok = gap <= 0.02 and mega.trend == "decreasing"
    exts = ", ".join(f"{row['extinction']:.3f}" for row in mega.rows)
    detail = (f"star(5000) extinction {last['extinction']:.4f} (|gap| {gap:.4f}); "
              f"megastar extinction {exts}, spearman {mega.spearman}, trend {mega.trend}")
    return ok, detail, {"star": star.to_dict(), "megastar": mega.to_dict()}


def _determinism(quick: bool) -> tuple[bool, str, dict]:
    from .cli import run

    outputs = []
    for workers in (1, 2, 3):
        buf = io.StringIO()
        argv = ["simulate", "--family", "superstar", "--k", "2", "--l", "2", "--m", "3", "--r", "2",
                "--trials", "3000", "--seed", "11", "--workers", str(workers), "--format", "json",
                "--no-meta"]
        with redirect_stdout(buf):
            code = run(argv)
        outputs.append((code, buf.getvalue()))
    same = all(o == outputs[0] for o in outputs)
    tally = json.loads(outputs[0][1])
    return same and outputs[0][0] == 0, (
        f"workers 1/2/3 gave identical output: {same} (fix={tally['fix']}, ext={tally['ext']})"), {}


CHECKS: dict[int, tuple[str, Callable[[bool], tuple[bool, str, dict]]]] = {
    1: ("regular-graph closed form", _regular_closed_form),
    2: ("neutral symmetry", _neutral_symmetry),
    3: ("isothermal counterexample", _counterexample),
    4: ("star amplification", _star_amplification),
    5: ("gambler's ruin oracles", _gambler),
    6: ("megastar process domination", _domination),
    7: ("clique jump law", _clique_jumps),
    8: ("star-clock coupling validity", _coupling),
    9: ("bound scenarios", _bound_scenarios),
    10: ("finite-size trend checks", _trends),
    11: ("worker-count determinism", _determinism),
}


def run_check(check_id: int, quick: bool = False) -> CheckResult:
    name, fn = CHECKS[check_id]
    start = time.perf_counter()
    try:
        ok, detail, data = fn(quick)
    except Exception as exc:  # a crash is a failed check, reported not raised
        ok, detail, data = False, f"error: {type(exc).__name__}: {exc}", {}
    return CheckResult(check_id, name, bool(ok), detail, time.perf_counter() - start, data)


def parse_suite(text: str) -> list[int]:
    if text in ("all", "quick"):
        return sorted(CHECKS)
    ids = []
    for part in text.split(","):
        part = part.strip()
        if not part.isdigit() or int(part) not in CHECKS:
            raise ValueError(f"unknown check id {part!r}; valid ids are 1-{max(CHECKS)}, 'all' or 'quick'")
        ids.append(int(part))
    return ids

"""Parameter sweeps and named bound checks built on :mod:`evograph.estimate`.

Bound checks are one-sided tests on the extinction probability at
``ALPHA = 0.01``.  Each report carries the bound, its formula, and the
power of the test against an alternative at half the bound.  When that
power is below one half the verdict is "inconclusive", not "fail".
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np
from scipy.stats import norm, spearmanr

from . import exact
from .errors import EstimateUnavailable, InvalidParameter, SizeLimitError
from .estimate import FixationEstimate, estimate_fixation, parse_policy, two_proportion_z
from .graphs import (
    FAMILIES,
    family_size,
    make_family,
    make_megastar,
    make_superstar,
    megastar_size,
    size_cap,
    superstar_size,
)

ALPHA = 0.01
POWER_FLOOR = 0.5
DEFAULT_MAX_STEPS = 10**9

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


# ----------------------------------------------------------------- reports

@dataclass
class ScenarioReport:
    scenario: str
    bound: float
    verdict: str
    formula: str
    params: dict
    power: float | None = None
    estimate: dict | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"scenario": self.scenario, "bound": self.bound, "verdict": self.verdict,
               "formula": self.formula, "params": self.params, "power": self.power}
        if self.estimate is not None:
            out["estimate"] = self.estimate
        out.update(self.details)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def lower_bound_test(successes: int, trials: int, bound: float, alpha: float = ALPHA) -> dict:
    """One-sided test of "success probability >= bound".

    Rejects when the one-sided Wilson upper confidence limit falls below the
    bound.  Power is evaluated at half the bound with a normal approximation.
    """
    if trials <= 0:
        raise InvalidParameter("no resolved trials to test")
    z = norm.ppf(1 - alpha)
    p = successes / trials
    z2n = z * z / trials
    centre = (p + z2n / 2) / (1 + z2n)
    half = z * math.sqrt(p * (1 - p) / trials + z2n / (4 * trials)) / (1 + z2n)
    ucb = 1.0 if successes == trials else float(min(1.0, centre + half))
    alt = bound / 2
    crit = bound - z * math.sqrt(bound * (1 - bound) / trials)
    sd_alt = math.sqrt(alt * (1 - alt) / trials)
    power = float(norm.cdf((crit - alt) / sd_alt)) if sd_alt > 0 else 1.0
    if power < POWER_FLOOR:
        verdict = INCONCLUSIVE
    elif ucb < bound:
        verdict = FAIL
    else:
        verdict = PASS
    return {"observed": p, "ucb": ucb, "alpha": alpha, "power": power, "alternative": alt, "verdict": verdict}


def _extinction_check(name, g, r, bound, formula, params, trials, seed, workers, max_steps) -> ScenarioReport:
    est = estimate_fixation(g, r, "uniform", trials, seed, max_steps, workers)
    if est.censored:
        # censored runs could all have been extinctions; the one-sided
        # extinction test is then void
        return ScenarioReport(name, bound, INCONCLUSIVE, formula, params, None, est.to_dict(),
                              {"note": "censored trials invalidate the extinction lower bound"})
    test = lower_bound_test(est.extinctions, est.resolved, bound)
    return ScenarioReport(name, bound, test["verdict"], formula, params, test["power"], est.to_dict(),
                          {"test": test})


def superstar_death_bound(k: int, r: float, m: int) -> float:
    return k / (2 * r * (m + k))


def check_superstar_instant_death(k: int, l: int, m: int, r: float, trials: int, seed: int,
                                  workers: int = 1, max_steps: int = DEFAULT_MAX_STEPS) -> ScenarioReport:
    """Extinction from a uniform start is at least k / (2 r (m + k))."""
    g = make_superstar(k, l, m)
    bound = superstar_death_bound(k, r, m)
    return _extinction_check("superstar-instant-death", g, r, bound, "extinction >= k/(2r(m+k))",
                             {"k": k, "l": l, "m": m, "r": r, "trials": trials, "seed": seed},
                             trials, seed, workers, max_steps)


def megastar_extinction_bound(r: float, n: int) -> float:
    return 1.0 / (52 * r * r * math.sqrt(n))


def check_megastar_upper(k: int, l: int, m: int, r: float, trials: int, seed: int, workers: int = 1,
                         max_steps: int = DEFAULT_MAX_STEPS, exact_cap: int = 18) -> ScenarioReport:
    """Fixation from a uniform start is at most 1 - 1/(52 r^2 sqrt(n)).

    Tested as a lower bound on extinction.  When ``n <= exact_cap`` the
    exact solver result is attached and a violation there is a hard fail.
    """
    if not r > 1:
        raise InvalidParameter("the megastar upper bound is stated for r > 1")
    g = make_megastar(k, l, m)
    bound = megastar_extinction_bound(r, g.n)
    report = _extinction_check("megastar-upper", g, r, bound, "fixation <= 1 - 1/(52 r^2 sqrt(n))",
                               {"k": k, "l": l, "m": m, "r": r, "n": g.n, "trials": trials, "seed": seed},
                               trials, seed, workers, max_steps)
    report.details["fixation_bound"] = 1 - bound
    if g.n <= exact_cap:
        p = exact.fixation_exact(g, r)
        report.details["exact_fixation"] = p
        report.details["exact_holds"] = bool(p <= 1 - bound)
        if p > 1 - bound:
            report.verdict = FAIL
    return report


def jlh_heuristic(k: int, r: float) -> float:
    """Conjectured extinction upper bound 1/(r^4 (k-1) (1-1/r)^2) from earlier heuristic work."""
    if k < 2:
        return math.inf
    return 1.0 / (r**4 * (k - 1) * (1 - 1 / r) ** 2)


def check_jlh_scenario(k: int, r: float, trials: int, seed: int, workers: int = 1,
                       max_steps: int = DEFAULT_MAX_STEPS) -> ScenarioReport:
    """Superstar with l = m = k^(3/2): empirical extinction next to both bounds.

    The heuristic value is descriptive only.  The verdict is the one-sided
    test against the proven lower bound.
    """
    side = k**1.5
    rounded = int(round(side))
    size = superstar_size(k, rounded, rounded)
    if size > size_cap():
        raise SizeLimitError(f"superstar({k},{rounded},{rounded}) has {size} vertices, above the cap")
    g = make_superstar(k, rounded, rounded)
    bound = superstar_death_bound(k, r, rounded)
    report = _extinction_check("jlh-scenario", g, r, bound, "extinction >= k/(2r(m+k)) with l = m = k^(3/2)",
                               {"k": k, "l": rounded, "m": rounded, "r": r, "n": g.n,
                                "trials": trials, "seed": seed}, trials, seed, workers, max_steps)
    report.details.update({
        "rounded": not float(side).is_integer(),
        "lower_bound_sqrt_form": 1 / (2 * r * (math.sqrt(k) + 1)),
        "heuristic_upper": jlh_heuristic(k, r),
        "empirical_extinction": report.estimate["ext"] / max(1, report.estimate["fix"] + report.estimate["ext"]),
    })
    return report


# ------------------------------------------------------- amplification trend

def _size_kwargs(family: str, size) -> dict:
    if isinstance(size, dict):
        return dict(size)
    if family == "complete":
        return {"n": int(size)}
    if family == "star":
        return {"l": int(size)}
    if family == "megastar_family":
        return {"l": int(size)}
    if family in ("superstar", "metafunnel", "megastar"):
        k, l, m = size
        return {"k": int(k), "l": int(l), "m": int(m)}
    raise InvalidParameter(f"cannot size family {family!r}")


@dataclass
class AmplificationReport:
    family: str
    r: float
    rows: list[dict]
    spearman: float | None
    trend: str
    classification: str
    note: str = "finite-size evidence only; says nothing asymptotic"

    def to_dict(self) -> dict:
        return asdict(self)


def amplification_report(family: str, r: float, sizes, trials: int, seed: int, workers: int = 1,
                         max_steps: int = DEFAULT_MAX_STEPS) -> AmplificationReport:
    """Extinction per size against the regular-graph value and 1/r, plus a trend verdict.

    The trend is "decreasing" when extinction falls strictly with n (rank
    correlation -1) and the last size is significantly below the first
    (two-proportion z test, one-sided at ``ALPHA``).
    """
    if family not in FAMILIES:
        raise InvalidParameter(f"unknown family {family!r}")
    rows = []
    for idx, size in enumerate(sizes):
        kw = _size_kwargs(family, size)
        g = make_family(family, **kw)
        est = estimate_fixation(g, r, "uniform", trials, seed + idx, max_steps, workers)
        ext = est.extinction
        lo, hi = est.extinction_ci
        reg = exact.ext_reg(r, g.n)
        rows.append({
            "size": kw, "n": g.n, "extinction": ext, "ci": [lo, hi], "ext_reg": reg, "one_over_r": 1 / r,
            "below_ext_reg": hi < reg, "below_one_over_r": hi < 1 / r,
            "cens": est.censored, "ext": est.extinctions, "resolved": est.resolved,
        })
    rows.sort(key=lambda row: row["n"])
    rho = None
    trend = "flat"
    if len(rows) >= 2:
        ns = [row["n"] for row in rows]
        exts = [row["extinction"] for row in rows]
        if len(rows) >= 3:
            rho = float(spearmanr(ns, exts).statistic)
        else:
            rho = -1.0 if exts[1] < exts[0] else 1.0
        first, last = rows[0], rows[-1]
        z, _ = two_proportion_z(last["ext"], last["resolved"], first["ext"], first["resolved"])
        drop_significant = norm.cdf(z) < ALPHA
        strictly = all(b < a for a, b in zip(exts, exts[1:]))
        if strictly and rho == -1.0 and drop_significant:
            trend = "decreasing"
        elif z > norm.ppf(1 - ALPHA):
            trend = "increasing"
    below = all(row["below_one_over_r"] for row in rows)
    regular = all(row["ci"][0] <= row["ext_reg"] <= row["ci"][1] for row in rows)
    if trend == "decreasing" and below:
        classification = "extinction decreasing in n: consistent with strong amplification"
    elif below:
        classification = "extinction below 1/r without a clear decrease: consistent with amplification"
    elif regular:
        classification = "extinction matches the regular-graph value: not amplifying"
    else:
        classification = "no amplification signal at these sizes"
    return AmplificationReport(family, r, rows, rho, trend, classification)


# ------------------------------------------------------------------ sweeps

SCENARIOS = ("exact", "superstar-instant-death", "megastar-upper", "jlh-scenario")


@dataclass
class ExperimentSpec:
    family: str
    grid: list[dict]
    r_values: list[float]
    trials: int
    seed: int
    checks: list[str] = field(default_factory=list)
    policy: str = "uniform-singleton"
    max_steps: int = DEFAULT_MAX_STEPS
    level: float = 0.95

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameter(f"unknown family {self.family!r}")
        if not self.grid:
            raise InvalidParameter("experiment grid is empty")
        if not self.r_values:
            raise InvalidParameter("no fitness values given")
        if any(not r > 0 for r in self.r_values):
            raise InvalidParameter("fitness values must be positive")
        if self.trials < 1:
            raise InvalidParameter("trials must be >= 1")
        unknown = [c for c in self.checks if c not in SCENARIOS]
        if unknown:
            raise InvalidParameter(f"unknown scenario ids: {unknown}")
        parse_policy(self.policy)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        data = dict(data)
        grid = data.pop("grid", None)
        if grid is None:
            raise InvalidParameter("experiment spec needs a 'grid'")
        r_values = data.pop("r", data.pop("r_values", None))
        if r_values is None:
            raise InvalidParameter("experiment spec needs 'r'")
        if not isinstance(r_values, list):
            r_values = [r_values]
        if isinstance(grid, dict):
            # {"l": [10, 100]} style: cartesian product
            keys = sorted(grid)
            values = [grid[k] if isinstance(grid[k], list) else [grid[k]] for k in keys]
            grid = [dict(zip(keys, combo)) for combo in _product(values)]
        known = {"family", "trials", "seed", "checks", "policy", "max_steps", "level"}
        extra = set(data) - known
        if extra:
            raise InvalidParameter(f"unknown experiment spec keys: {sorted(extra)}")
        return cls(grid=[dict(c) for c in grid], r_values=[float(r) for r in r_values], **data)

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _product(values):
    if not values:
        yield ()
        return
    for head in values[0]:
        for tail in _product(values[1:]):
            yield (head,) + tail


def cell_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=(index,)).generate_state(1, np.uint32)[0])


def sweep(spec: ExperimentSpec, workers: int = 1) -> Iterator[dict]:
    """Yield one row per (grid cell, r), in grid order, as each completes.

    Estimate rows follow the estimate JSON schema plus ``"status"``.  Cells
    above the size cap yield ``{"status": "skipped", "reason": ...}``.
    Requested checks yield extra rows in the scenario wrapper format.
    """
    policy = parse_policy(spec.policy)
    index = 0
    for cell in spec.grid:
        for r in spec.r_values:
            seed = cell_seed(spec.seed, index)
            index += 1
            base = {"family": spec.family, **cell}
            try:
                n = family_size(spec.family, **cell)
            except TypeError as exc:
                raise InvalidParameter(f"bad grid cell {cell}: {exc}") from exc
            if n > size_cap():
                yield {"status": "skipped", "graph": {**base, "n": n}, "r": r,
                       "reason": f"{n} vertices exceeds the size cap {size_cap()}"}
                continue
            g = make_family(spec.family, **cell)
            try:
                est = estimate_fixation(g, r, policy, spec.trials, seed, spec.max_steps, workers,
                                        level=spec.level)
            except EstimateUnavailable as exc:
                yield {"status": "unavailable", "graph": {**base, "n": n}, "r": r,
                       "reason": str(exc), "diagnostics": exc.diagnostics}
                continue
            yield {"status": "ok", **est.to_dict()}
            for check in spec.checks:
                row = _cell_check(check, spec, g, cell, r, est, seed, workers)
                if row is not None:
                    yield row


def _cell_check(check: str, spec: ExperimentSpec, g, cell: dict, r: float, est: FixationEstimate,
                seed: int, workers: int) -> dict | None:
    if check == "exact":
        if g.n > exact.DEFAULT_EXACT_CAP:
            return {"scenario": "exact", "verdict": INCONCLUSIVE, "bound": None,
                    "reason": f"n={g.n} above the exact-solver cap"}
        p = exact.fixation_exact(g, r, parse_policy(spec.policy))
        inside = est.ci[0] <= p <= est.ci[1]
        return {"scenario": "exact", "bound": p, "verdict": PASS if inside else FAIL,
                "graph": est.graph, "r": r, "point": est.point, "ci": list(est.ci)}
    if check == "superstar-instant-death" and spec.family == "superstar":
        return check_superstar_instant_death(cell["k"], cell["l"], cell["m"], r, spec.trials, seed,
                                             workers, spec.max_steps).to_dict()
    if check == "megastar-upper" and spec.family == "megastar" and r > 1:
        return check_megastar_upper(cell["k"], cell["l"], cell["m"], r, spec.trials, seed,
                                    workers, spec.max_steps).to_dict()
    if check == "jlh-scenario" and spec.family == "superstar":
        return check_jlh_scenario(cell["k"], r, spec.trials, seed, workers, spec.max_steps).to_dict()
    return None


def trend_check(rows: list[dict], key: str = "point") -> float:
    """Spearman rank correlation of ``key`` against n across sweep rows."""
    usable = [row for row in rows if row.get("status") == "ok"]
    if len(usable) < 3:
        raise InvalidParameter("need at least three rows for a rank trend")
    ns = [row["graph"]["n"] for row in usable]
    vals = [row[key] for row in usable]
    return float(spearmanr(ns, vals).statistic)


__all__ = [
    "ALPHA", "AmplificationReport", "ExperimentSpec", "SCENARIOS", "ScenarioReport",
    "amplification_report", "check_jlh_scenario", "check_megastar_upper",
    "check_superstar_instant_death", "jlh_heuristic", "lower_bound_test",
    "megastar_extinction_bound", "megastar_size", "superstar_death_bound", "sweep", "trend_check",
]

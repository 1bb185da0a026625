"""Monte Carlo estimation of fixation probability with reproducible seeding.

Trial ``i`` draws from its own generator seeded by ``(master_seed, i)``, so
a tally depends only on the inputs and never on how trials are split
between workers.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import _kernels
from .dynamics.discrete import DEFAULT_MAX_STEPS
from .dynamics.state import resolve_initial
from .errors import EstimateUnavailable, InvalidParameter
from .graphs import EvolutionaryGraph, star_leaves

log = logging.getLogger(__name__)

ENGINES = ("auto", "graph", "lumped")
CSV_COLUMNS = ("graph", "r", "policy", "trials", "fix", "ext", "cens", "point", "ci", "level", "seed", "mean_steps")


def wilson_ci(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise InvalidParameter("wilson_ci needs at least one trial")
    if not 0 <= successes <= trials:
        raise InvalidParameter(f"successes must lie in [0, {trials}], got {successes}")
    if not 0 < level < 1:
        raise InvalidParameter(f"level must be in (0, 1), got {level}")
    z = norm.ppf(0.5 + level / 2)
    p = successes / trials
    z2n = z * z / trials
    centre = (p + z2n / 2) / (1 + z2n)
    half = z * np.sqrt(p * (1 - p) / trials + z2n / (4 * trials)) / (1 + z2n)
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return float(lo), float(hi)


def trial_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(index,))))


def policy_name(initial) -> str:
    if isinstance(initial, str):
        return "uniform-singleton" if initial in ("uniform", "uniform-singleton") else initial
    if isinstance(initial, (int, np.integer)):
        return f"vertex:{int(initial)}"
    return "set:" + ",".join(str(v) for v in sorted(set(int(v) for v in initial)))


def parse_policy(text: str):
    """Inverse of :func:`policy_name`."""
    if text in ("uniform", "uniform-singleton"):
        return "uniform"
    kind, _, rest = text.partition(":")
    if kind == "vertex":
        return int(rest)
    if kind == "set":
        return frozenset(int(v) for v in rest.split(",") if v.strip())
    raise InvalidParameter(f"unknown initial policy {text!r}")


@dataclass
class FixationEstimate:
    graph: dict
    r: float
    policy: str
    trials: int
    fixations: int
    extinctions: int
    censored: int
    point: float
    ci: tuple[float, float]
    level: float
    master_seed: int
    mean_steps: float
    outcomes: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def extinction(self) -> float:
        return 1.0 - self.point

    @property
    def extinction_ci(self) -> tuple[float, float]:
        return 1.0 - self.ci[1], 1.0 - self.ci[0]

    @property
    def resolved(self) -> int:
        return self.fixations + self.extinctions

    def to_dict(self) -> dict:
        return {
            "graph": self.graph, "r": self.r, "policy": self.policy, "trials": self.trials,
            "fix": self.fixations, "ext": self.extinctions, "cens": self.censored,
            "point": self.point, "ci": [self.ci[0], self.ci[1]], "level": self.level,
            "seed": self.master_seed, "mean_steps": self.mean_steps,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)

    def csv_row(self) -> dict:
        row = self.to_dict()
        row["graph"] = json.dumps(row["graph"], sort_keys=True)
        row["ci"] = json.dumps(row["ci"])
        return row

    def tally_equal(self, other: "FixationEstimate") -> bool:
        return (self.fixations, self.extinctions, self.censored) == (
            other.fixations, other.extinctions, other.censored)


def estimates_to_csv(estimates, fh=None) -> str | None:
    """Write estimates as CSV with the JSON field names as columns."""
    buf = fh if fh is not None else io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for est in estimates:
        writer.writerow(est.csv_row())
    return buf.getvalue() if fh is None else None


def _graph_meta(g: EvolutionaryGraph) -> dict:
    meta = {"family": g.family, "n": g.n}
    meta.update(g.params)
    return meta


def _run_chunk(g: EvolutionaryGraph, r: float, initial, master_seed: int, lo: int, hi: int,
               max_steps: int, engine: str) -> tuple[np.ndarray, np.ndarray]:
    codes = np.empty(hi - lo, dtype=np.int8)
    steps = np.empty(hi - lo, dtype=np.int64)
    indptr, indices, cum = g.indptr, g.indices, g.cumulative_weights
    leaves = star_leaves(g) if engine == "lumped" else None
    for j, i in enumerate(range(lo, hi)):
        rng = trial_rng(master_seed, i)
        start = resolve_initial(g.n, initial, rng)
        if leaves is not None:
            centre = 1 if start and start[0] == 0 else 0
            c, s = _kernels.run_star_lumped(leaves, r, centre, len(start) - centre, rng, max_steps)
        else:
            c, s = _kernels.run_discrete(indptr, indices, cum, r, np.asarray(start, dtype=np.int64),
                                         rng, max_steps)
        codes[j] = c
        steps[j] = s
    return codes, steps


def _chunks(trials: int, workers: int) -> list[tuple[int, int]]:
    bounds = np.linspace(0, trials, workers + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def pick_engine(g: EvolutionaryGraph, engine: str) -> str:
    if engine not in ENGINES:
        raise InvalidParameter(f"engine must be one of {ENGINES}, got {engine!r}")
    if engine == "auto":
        return "lumped" if star_leaves(g) is not None else "graph"
    if engine == "lumped" and star_leaves(g) is None:
        raise InvalidParameter("the lumped engine only handles stars")
    return engine


def default_workers() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # pragma: no cover
        return max(1, os.cpu_count() or 1)


def estimate_fixation(
    g: EvolutionaryGraph,
    r: float,
    initial_policy="uniform",
    trials: int = 10_000,
    master_seed: int = 0,
    max_steps: int = DEFAULT_MAX_STEPS,
    workers: int | None = 1,
    *,
    level: float = 0.95,
    engine: str = "auto",
    keep_outcomes: bool = False,
) -> FixationEstimate:
    """Estimate the fixation probability from ``trials`` independent runs.

    Censored trials are excluded from the point estimate and interval.  If
    every trial is censored, :class:`EstimateUnavailable` is raised.
    """
    if trials < 1:
        raise InvalidParameter("trials must be >= 1")
    if not r > 0:
        raise InvalidParameter(f"fitness r must be positive, got {r}")
    if max_steps < 1:
        raise InvalidParameter("max_steps must be >= 1")
    if master_seed < 0:
        raise InvalidParameter("master_seed must be non-negative")
    if workers is None:
        workers = default_workers()
    if workers < 1:
        raise InvalidParameter("workers must be >= 1")
    eng = pick_engine(g, engine)
    initial = initial_policy
    if not isinstance(initial, (str, int, np.integer)):
        initial = frozenset(int(v) for v in initial)
    resolve_initial(g.n, initial, np.random.default_rng(0))  # validate early

    parts = _chunks(trials, min(workers, trials))
    if len(parts) == 1:
        results = [_run_chunk(g, float(r), initial, master_seed, 0, trials, max_steps, eng)]
    else:
        with ProcessPoolExecutor(max_workers=len(parts)) as pool:
            futures = [pool.submit(_run_chunk, g, float(r), initial, master_seed, lo, hi, max_steps, eng)
                       for lo, hi in parts]
            results = [f.result() for f in futures]
    codes = np.concatenate([c for c, _ in results])
    steps = np.concatenate([s for _, s in results])

    fix = int(np.count_nonzero(codes == _kernels.FIXATION))
    ext = int(np.count_nonzero(codes == _kernels.EXTINCTION))
    cens = trials - fix - ext
    diagnostics = {"trials": trials, "censored": cens, "max_steps": max_steps,
                   "mean_steps": float(steps.mean())}
    if fix + ext == 0:
        raise EstimateUnavailable("every trial was censored; raise max_steps", diagnostics)
    if cens:
        warnings.warn(f"{cens} of {trials} trials censored at {max_steps} steps; "
                      "they are excluded from the estimate", RuntimeWarning, stacklevel=2)
    point = fix / (fix + ext)
    deterministic = not isinstance(initial, str) and not isinstance(initial, (int, np.integer)) and (
        len(initial) == 0 or len(initial) == g.n)
    ci = (point, point) if deterministic else wilson_ci(fix, fix + ext, level)
    log.debug("estimate %s r=%s: %d/%d fixations", g.family, r, fix, fix + ext)
    return FixationEstimate(
        graph=_graph_meta(g), r=float(r), policy=policy_name(initial), trials=trials,
        fixations=fix, extinctions=ext, censored=cens, point=point, ci=ci, level=level,
        master_seed=int(master_seed), mean_steps=float(steps.mean()),
        outcomes=codes if keep_outcomes else None,
    )


def two_proportion_z(x1: int, n1: int, x2: int, n2: int) -> tuple[float, float]:
    """Pooled two-proportion z statistic and its two-sided p-value."""
    p = (x1 + x2) / (n1 + n2)
    se = np.sqrt(p * (1 - p) * (1 / n1 + 1 / n2))
    if se == 0:
        return 0.0, 1.0
    z = (x1 / n1 - x2 / n2) / se
    return float(z), float(2 * norm.sf(abs(z)))

"""Evolutionary graphs: weighted digraphs whose out-weights are probabilities.

Every family used in the package (complete graphs, stars, superstars,
metafunnels, megastars and the 3-vertex non-isothermal example) is built
here.  Graphs are stored in CSR form, sorted by source then target, and are
immutable once constructed so one instance can be shared by many trial
workers.

Vertex layout is deterministic: the centre is vertex 0 and each branch
(reservoir plus its path, feeder/clique, or funnel layers) occupies a
contiguous block, ordered by branch index.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InvalidParameter, SizeLimitError

STOCHASTIC_TOL = 1e-12
DEFAULT_SIZE_CAP = 50_000_000
SIZE_CAP_ENV = "EVOGRAPH_SIZE_CAP"

FAMILIES = (
    "complete",
    "star",
    "superstar",
    "metafunnel",
    "megastar",
    "megastar_family",
    "counterexample",
)


def size_cap() -> int:
    """Maximum vertex count a constructor will build (env override)."""
    raw = os.environ.get(SIZE_CAP_ENV)
    if raw is None:
        return DEFAULT_SIZE_CAP
    try:
        cap = int(raw)
    except ValueError as exc:
        raise InvalidParameter(f"{SIZE_CAP_ENV} must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise InvalidParameter(f"{SIZE_CAP_ENV} must be positive, got {cap}")
    return cap


def _check_size(n: int, cap: int | None = None) -> None:
    cap = size_cap() if cap is None else cap
    if n > cap:
        raise SizeLimitError(f"graph would have {n} vertices, above the size cap {cap}")


@dataclass(frozen=True, eq=False)
class EvolutionaryGraph:
    """Weighted directed graph in CSR layout.

    ``weights[indptr[u]:indptr[u+1]]`` are the offspring-placement
    probabilities of ``u`` onto ``indices[indptr[u]:indptr[u+1]]``.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    labels: tuple[str, ...]
    family: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for arr in (self.indptr, self.indices, self.weights):
            arr.setflags(write=False)

    # -- basic queries -------------------------------------------------

    @property
    def n_edges(self) -> int:
        return int(self.indices.shape[0])

    def out_degree(self, u: int) -> int:
        return int(self.indptr[u + 1] - self.indptr[u])

    @cached_property
    def out_degrees(self) -> np.ndarray:
        deg = np.diff(self.indptr)
        deg.setflags(write=False)
        return deg

    def out_edges(self, u: int) -> list[tuple[int, float]]:
        lo, hi = self.indptr[u], self.indptr[u + 1]
        return [(int(v), float(w)) for v, w in zip(self.indices[lo:hi], self.weights[lo:hi])]

    def edges(self) -> Iterator[tuple[int, int, float]]:
        for u in range(self.n):
            for v, w in self.out_edges(u):
                yield u, v, w

    def weight(self, u: int, v: int) -> float:
        lo, hi = self.indptr[u], self.indptr[u + 1]
        pos = lo + np.searchsorted(self.indices[lo:hi], v)
        if pos < hi and self.indices[pos] == v:
            return float(self.weights[pos])
        return 0.0

    @cached_property
    def sources(self) -> np.ndarray:
        """Source vertex of every CSR slot."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.out_degrees)
        src.setflags(write=False)
        return src

    @cached_property
    def cumulative_weights(self) -> np.ndarray:
        """Per-row running sums of weights, last entry of each row forced to 1."""
        cum = np.empty_like(self.weights)
        for u in range(self.n):
            lo, hi = self.indptr[u], self.indptr[u + 1]
            if hi > lo:
                cum[lo:hi] = np.cumsum(self.weights[lo:hi])
                cum[hi - 1] = 1.0
        cum.setflags(write=False)
        return cum

    @cached_property
    def row_lists(self) -> list[tuple[list[int], list[float]]]:
        """Per-vertex (targets, running weights) as Python lists for the interpreted engines."""
        ptr = self.indptr.tolist()
        ind = self.indices.tolist()
        cum = self.cumulative_weights.tolist()
        return [(ind[ptr[u]:ptr[u + 1]], cum[ptr[u]:ptr[u + 1]]) for u in range(self.n)]

    @cached_property
    def in_weights(self) -> np.ndarray:
        """Column sums: total incoming weight of each vertex."""
        col = np.bincount(self.indices, weights=self.weights, minlength=self.n)
        col.setflags(write=False)
        return col

    @cached_property
    def in_csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(indptr, sources, weights) of the transposed graph."""
        order = np.lexsort((self.sources, self.indices))
        counts = np.bincount(self.indices, minlength=self.n)
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        out = (indptr, self.sources[order].copy(), self.weights[order].copy())
        for arr in out:
            arr.setflags(write=False)
        return out

    def vertices_labelled(self, label: str) -> np.ndarray:
        return np.array([i for i, lab in enumerate(self.labels) if lab == label], dtype=np.int64)

    def is_out_stochastic(self, tol: float = STOCHASTIC_TOL) -> bool:
        sums = np.bincount(self.sources, weights=self.weights, minlength=self.n)
        has_out = self.out_degrees > 0
        return bool(np.all(np.abs(sums[has_out] - 1.0) <= tol))

    def same_as(self, other: "EvolutionaryGraph") -> bool:
        """Structural equality: same vertices, labels and bit-identical weights."""
        return (
            self.n == other.n
            and self.labels == other.labels
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.weights, other.weights)
        )

    def __repr__(self) -> str:
        tag = self.family or "graph"
        extra = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"EvolutionaryGraph({tag}{'(' + extra + ')' if extra else ''}, n={self.n}, edges={self.n_edges})"

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "vertices": [{"id": i, "label": lab} for i, lab in enumerate(self.labels)],
            "edges": [
                {"src": int(u), "dst": int(v), "w": float(w)}
                for u, v, w in zip(self.sources, self.indices, self.weights)
            ],
        }
        if self.family is not None:
            out["family"] = self.family
            out["params"] = dict(self.params)
        return out

    def to_json(self, path: str | os.PathLike | None = None, indent: int | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=indent)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
                fh.write("\n")
        return text

    @classmethod
    def from_dict(cls, data: dict) -> "EvolutionaryGraph":
        try:
            n = int(data["n"])
            vertices = data.get("vertices") or [{"id": i, "label": "plain"} for i in range(n)]
            labels = ["plain"] * n
            for vert in vertices:
                labels[int(vert["id"])] = str(vert.get("label", "plain"))
            src = np.array([int(e["src"]) for e in data["edges"]], dtype=np.int64)
            dst = np.array([int(e["dst"]) for e in data["edges"]], dtype=np.int64)
            w = np.array([float(e["w"]) for e in data["edges"]], dtype=np.float64)
        except (KeyError, TypeError, IndexError) as exc:
            raise InvalidParameter(f"malformed graph JSON: {exc}") from exc
        return build_graph(n, src, dst, w, labels=labels, family=data.get("family"),
                           params=data.get("params"))

    @classmethod
    def from_json(cls, source: str | os.PathLike) -> "EvolutionaryGraph":
        """Load from a JSON string or a path to a JSON file."""
        text = str(source)
        if not text.lstrip().startswith("{"):
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))


def build_graph(
    n: int,
    src: Sequence[int] | np.ndarray,
    dst: Sequence[int] | np.ndarray,
    weights: Sequence[float] | np.ndarray | None = None,
    *,
    labels: Sequence[str] | None = None,
    family: str | None = None,
    params: dict | None = None,
    tol: float = STOCHASTIC_TOL,
) -> EvolutionaryGraph:
    """Assemble a graph from parallel edge arrays.

    Without ``weights`` the graph is unweighted and each vertex spreads its
    offspring uniformly, ``w = 1/d+(u)``.  Parallel edges are merged (weights
    summed), zero-weight edges dropped, and self-loops rejected.
    """
    if n < 1:
        raise InvalidParameter(f"graph needs at least one vertex, got n={n}")
    _check_size(n)
    src = np.asarray(src, dtype=np.int64).ravel()
    dst = np.asarray(dst, dtype=np.int64).ravel()
    if src.shape != dst.shape:
        raise InvalidParameter("src and dst must have the same length")
    if src.size and (src.min() < 0 or dst.min() < 0 or src.max() >= n or dst.max() >= n):
        raise InvalidParameter("edge endpoint outside 0..n-1")
    if np.any(src == dst):
        raise InvalidParameter("self-loops are not allowed")

    key = src * n + dst
    if weights is None:
        key = np.unique(key)
        src, dst = key // n, key % n
        deg = np.bincount(src, minlength=n)
        w = 1.0 / deg[src]
    else:
        w = np.asarray(weights, dtype=np.float64).ravel()
        if w.shape != src.shape:
            raise InvalidParameter("weights must match the edge arrays")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidParameter("weights must be finite and non-negative")
        order = np.argsort(key, kind="stable")
        key, w = key[order], w[order]
        uniq, start = np.unique(key, return_index=True)
        if uniq.size != key.size:
            w = np.add.reduceat(w, start)
        key = uniq
        keep = w > 0
        key, w = key[keep], w[keep]
        src, dst = key // n, key % n

    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    if labels is None:
        labels = ["plain"] * n
    if len(labels) != n:
        raise InvalidParameter(f"expected {n} labels, got {len(labels)}")
    g = EvolutionaryGraph(
        n=n,
        indptr=indptr,
        indices=np.ascontiguousarray(dst, dtype=np.int64),
        weights=np.ascontiguousarray(w, dtype=np.float64),
        labels=tuple(labels),
        family=family,
        params=dict(params or {}),
    )
    if not g.is_out_stochastic(tol):
        raise InvalidParameter("out-weights of some vertex do not sum to 1")
    return g


def _arcs(pairs: Iterable[tuple[int, int]]) -> tuple[np.ndarray, np.ndarray]:
    arr = np.array(list(pairs), dtype=np.int64).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def _require_positive(**values: int) -> None:
    for name, value in values.items():
        if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
            raise InvalidParameter(f"{name} must be an integer, got {value!r}")
        if value < 1:
            raise InvalidParameter(f"{name} must be >= 1, got {value}")


# -- family constructors ---------------------------------------------------


def make_complete(n: int) -> EvolutionaryGraph:
    """Complete digraph on ``n`` vertices (both directions on every pair)."""
    _require_positive(n=n)
    if n < 2:
        raise InvalidParameter(f"complete graph needs n >= 2, got {n}")
    _check_size(n)
    u, v = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    mask = u != v
    return build_graph(n, u[mask], v[mask], family="complete", params={"n": n})


def make_star(leaves: int) -> EvolutionaryGraph:
    """Undirected star: centre 0 joined both ways to ``leaves`` leaves."""
    _require_positive(leaves=leaves)
    n = leaves + 1
    _check_size(n)
    leaf_ids = np.arange(1, n)
    src = np.concatenate([np.zeros(leaves, dtype=np.int64), leaf_ids])
    dst = np.concatenate([leaf_ids, np.zeros(leaves, dtype=np.int64)])
    labels = ["centre"] + ["plain"] * leaves
    return build_graph(n, src, dst, labels=labels, family="star", params={"l": leaves})


def superstar_size(k: int, l: int, m: int) -> int:
    return l * (k + m) + 1


def make_superstar(k: int, l: int, m: int) -> EvolutionaryGraph:
    """(k, l, m)-superstar: l reservoirs of size m, each feeding a k-path to the centre."""
    _require_positive(k=k, l=l, m=m)
    n = superstar_size(k, l, m)
    _check_size(n)
    labels = ["centre"]
    src: list[np.ndarray] = []
    dst: list[np.ndarray] = []
    base = 1
    for j in range(1, l + 1):
        res = np.arange(base, base + m)
        path = np.arange(base + m, base + m + k)
        labels += [f"reservoir({j})"] * m + [f"path({j},{i})" for i in range(1, k + 1)]
        src += [np.zeros(m, dtype=np.int64), res, path[:-1], path[-1:]]
        dst += [res, np.full(m, path[0]), path[1:], np.zeros(1, dtype=np.int64)]
        base += m + k
    return build_graph(
        n, np.concatenate(src), np.concatenate(dst), labels=labels,
        family="superstar", params={"k": k, "l": l, "m": m},
    )


def metafunnel_size(k: int, l: int, m: int) -> int:
    return 1 + l * sum(m**i for i in range(1, k + 1))


def make_metafunnel(k: int, l: int, m: int) -> EvolutionaryGraph:
    """(k, l, m)-metafunnel: l funnels of k layers, layer i of branch j has m**i vertices.

    Edges go centre -> every top-layer vertex, layer i+1 -> layer i (complete
    bipartite within a branch), and bottom layer -> centre.
    """
    _require_positive(k=k, l=l, m=m)
    n = metafunnel_size(k, l, m)
    _check_size(n)
    labels = ["centre"]
    src: list[np.ndarray] = []
    dst: list[np.ndarray] = []
    base = 1
    for j in range(1, l + 1):
        layers = []
        for i in range(1, k + 1):
            size = m**i
            layers.append(np.arange(base, base + size))
            labels += [f"funnel-layer({i},{j})"] * size
            base += size
        src.append(np.zeros(layers[-1].size, dtype=np.int64))
        dst.append(layers[-1])
        src.append(layers[0])
        dst.append(np.zeros(layers[0].size, dtype=np.int64))
        for i in range(k - 1):
            upper, lower = layers[i + 1], layers[i]
            src.append(np.repeat(upper, lower.size))
            dst.append(np.tile(lower, upper.size))
    return build_graph(
        n, np.concatenate(src), np.concatenate(dst), labels=labels,
        family="metafunnel", params={"k": k, "l": l, "m": m},
    )


def megastar_size(k: int, l: int, m: int) -> int:
    return 1 + l * (m + 1 + k)


def make_megastar(k: int, l: int, m: int) -> EvolutionaryGraph:
    """(k, l, m)-megastar: each branch is reservoir -> feeder -> clique -> centre."""
    _require_positive(k=k, l=l, m=m)
    n = megastar_size(k, l, m)
    _check_size(n)
    labels = ["centre"]
    src: list[np.ndarray] = []
    dst: list[np.ndarray] = []
    base = 1
    for j in range(1, l + 1):
        res = np.arange(base, base + m)
        feeder = base + m
        clique = np.arange(feeder + 1, feeder + 1 + k)
        labels += [f"reservoir({j})"] * m + [f"feeder({j})"] + [f"clique({j})"] * k
        cu, cv = np.meshgrid(clique, clique, indexing="ij")
        off = cu != cv
        src += [np.zeros(m, dtype=np.int64), res, np.full(k, feeder), cu[off], clique]
        dst += [res, np.full(m, feeder), clique, cv[off], np.zeros(k, dtype=np.int64)]
        base += m + 1 + k
    return build_graph(
        n, np.concatenate(src), np.concatenate(dst), labels=labels,
        family="megastar", params={"k": k, "l": l, "m": m},
    )


def megastar_family_params(l: int) -> tuple[int, int, int]:
    """(k, l, m) of the strongly amplifying megastar indexed by ``l``: m = l, k = ceil(ln(l)**23)."""
    if not isinstance(l, (int, np.integer)) or isinstance(l, bool) or l < 2:
        raise InvalidParameter(f"megastar family needs integer l >= 2, got {l!r}")
    x = math.log(l) ** 23
    k = math.ceil(x)
    # float error near an integer could move the ceiling by one
    if abs(x - round(x)) < 1e-9 * max(1.0, x):
        import mpmath

        with mpmath.workdps(60):
            k = int(mpmath.ceil(mpmath.log(l) ** 23))
    return max(k, 1), l, l


def make_megastar_family(l: int, cap: int | None = None) -> EvolutionaryGraph:
    k, l, m = megastar_family_params(l)
    _check_size(megastar_size(k, l, m), cap)
    g = make_megastar(k, l, m)
    return EvolutionaryGraph(
        n=g.n, indptr=g.indptr, indices=g.indices, weights=g.weights, labels=g.labels,
        family="megastar_family", params={"l": l, "k": k, "m": m},
    )


def make_counterexample() -> EvolutionaryGraph:
    """3-vertex weighted graph that is not isothermal yet matches the regular fixation value."""
    src = [0, 0, 1, 1, 2, 2]
    dst = [1, 2, 0, 2, 0, 1]
    w = [0.5, 0.5, 0.75, 0.25, 0.75, 0.25]
    return build_graph(3, src, dst, w, family="counterexample")


def make_family(family: str, *, n: int | None = None, k: int | None = None,
                l: int | None = None, m: int | None = None) -> EvolutionaryGraph:
    """Dispatch on a family name; the parameters used depend on the family."""

    def need(name, value):
        if value is None:
            raise InvalidParameter(f"family {family!r} requires parameter {name}")
        return value

    if family == "complete":
        return make_complete(need("n", n))
    if family == "star":
        # a star is sized by its leaf count; accept n as a fallback
        if l is None and n is not None:
            return make_star(n - 1)
        return make_star(need("l", l))
    if family == "superstar":
        return make_superstar(need("k", k), need("l", l), need("m", m))
    if family == "metafunnel":
        return make_metafunnel(need("k", k), need("l", l), need("m", m))
    if family == "megastar":
        return make_megastar(need("k", k), need("l", l), need("m", m))
    if family == "megastar_family":
        return make_megastar_family(need("l", l))
    if family == "counterexample":
        return make_counterexample()
    raise InvalidParameter(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")


def family_size(family: str, *, n=None, k=None, l=None, m=None) -> int:
    """Vertex count a constructor would produce, without building the graph."""
    if family == "complete":
        return int(n)
    if family == "star":
        return int(l) + 1 if l is not None else int(n)
    if family == "superstar":
        return superstar_size(k, l, m)
    if family == "metafunnel":
        return metafunnel_size(k, l, m)
    if family == "megastar":
        return megastar_size(k, l, m)
    if family == "megastar_family":
        kk, ll, mm = megastar_family_params(l)
        return megastar_size(kk, ll, mm)
    if family == "counterexample":
        return 3
    raise InvalidParameter(f"unknown family {family!r}")


# -- predicates ------------------------------------------------------------


def is_isothermal(g: EvolutionaryGraph, eps: float = 1e-12) -> bool:
    """True when every vertex receives total weight 1 (doubly stochastic adjacency)."""
    if not g.is_out_stochastic():
        raise InvalidParameter("is_isothermal needs an out-stochastic graph")
    return bool(np.all(np.abs(g.in_weights - 1.0) <= eps))


def strongly_connected(g: EvolutionaryGraph) -> bool:
    if g.n == 1:
        return True
    adj = csr_matrix((np.ones(g.n_edges), g.indices, g.indptr), shape=(g.n, g.n))
    count, _ = connected_components(adj, directed=True, connection="strong")
    return count == 1


def star_leaves(g: EvolutionaryGraph) -> int | None:
    """Leaf count if ``g`` is structurally a star centred at vertex 0, else None."""
    n = g.n
    if n < 2 or g.out_degree(0) != n - 1:
        return None
    deg = g.out_degrees
    if np.any(deg[1:] != 1):
        return None
    if np.any(g.indices[g.indptr[1]:] != 0):
        return None
    return n - 1


_BRANCH_LABEL = re.compile(r"^(reservoir|feeder|clique)\((\d+)\)$")


@dataclass(frozen=True)
class MegastarLayout:
    """Role lookup for a megastar built by :func:`make_megastar`."""

    k: int
    l: int
    m: int
    reservoirs: tuple[np.ndarray, ...]
    feeders: np.ndarray
    cliques: tuple[np.ndarray, ...]
    # per-vertex branch index (0-based) or -1, and role codes
    branch: np.ndarray
    role: np.ndarray

    CENTRE = 0
    RESERVOIR = 1
    FEEDER = 2
    CLIQUE = 3


def megastar_layout(g: EvolutionaryGraph) -> MegastarLayout:
    """Parse the labels of a megastar into reservoir/feeder/clique blocks."""
    if not g.labels or g.labels[0] != "centre":
        raise InvalidParameter("not a megastar: vertex 0 must be the centre")
    res: dict[int, list[int]] = {}
    feed: dict[int, list[int]] = {}
    cliq: dict[int, list[int]] = {}
    branch = np.full(g.n, -1, dtype=np.int64)
    role = np.zeros(g.n, dtype=np.int64)
    table = {"reservoir": (res, MegastarLayout.RESERVOIR),
             "feeder": (feed, MegastarLayout.FEEDER),
             "clique": (cliq, MegastarLayout.CLIQUE)}
    for v, lab in enumerate(g.labels[1:], start=1):
        match = _BRANCH_LABEL.match(lab)
        if match is None:
            raise InvalidParameter(f"not a megastar: unexpected label {lab!r} at vertex {v}")
        bucket, code = table[match.group(1)]
        j = int(match.group(2))
        bucket.setdefault(j, []).append(v)
        branch[v] = j - 1
        role[v] = code
    l = len(feed)
    if l == 0 or set(res) != set(feed) or set(cliq) != set(feed) or sorted(feed) != list(range(1, l + 1)):
        raise InvalidParameter("not a megastar: branches are incomplete")
    if any(len(f) != 1 for f in feed.values()):
        raise InvalidParameter("not a megastar: each branch needs exactly one feeder")
    m_sizes = {len(v) for v in res.values()}
    k_sizes = {len(v) for v in cliq.values()}
    if len(m_sizes) != 1 or len(k_sizes) != 1:
        raise InvalidParameter("not a megastar: unequal reservoir or clique sizes")
    m, k = m_sizes.pop(), k_sizes.pop()
    if g.n != megastar_size(k, l, m):
        raise InvalidParameter("not a megastar: vertex count mismatch")
    order = range(1, l + 1)
    return MegastarLayout(
        k=k, l=l, m=m,
        reservoirs=tuple(np.array(res[j], dtype=np.int64) for j in order),
        feeders=np.array([feed[j][0] for j in order], dtype=np.int64),
        cliques=tuple(np.array(cliq[j], dtype=np.int64) for j in order),
        branch=branch,
        role=role,
    )

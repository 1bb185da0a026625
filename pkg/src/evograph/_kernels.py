"""JIT-compiled hot loops.

The discrete kernel consumes random numbers in exactly the same order as
the pure-Python engine in :mod:`evograph.dynamics.discrete`, so the two give
bit-identical trajectories for the same generator state.
"""

import numpy as np
from numba import njit

EXTINCTION = 0
FIXATION = 1
CENSORED = 2


@njit(cache=True)
def pick_target(indptr, indices, cum, u, y):
    """First slot in row ``u`` whose running weight exceeds ``y``; -1 if no out-edges."""
    lo = indptr[u]
    hi = indptr[u + 1]
    if hi == lo:
        return -1
    a = lo
    b = hi - 1
    while a < b:
        mid = (a + b) // 2
        if cum[mid] > y:
            b = mid
        else:
            a = mid + 1
    return indices[a]


@njit(cache=True)
def run_discrete(indptr, indices, cum, r, initial, gen, max_steps):
    n = indptr.shape[0] - 1
    order = np.arange(n)
    pos = np.arange(n)
    is_m = np.zeros(n, dtype=np.bool_)
    count = 0
    for v in initial:
        if not is_m[v]:
            p = pos[v]
            w = order[count]
            order[count] = v
            order[p] = w
            pos[v] = count
            pos[w] = p
            is_m[v] = True
            count += 1
    if count == 0:
        return EXTINCTION, 0
    if count == n:
        return FIXATION, 0
    steps = 0
    while steps < max_steps:
        total = r * count + (n - count)
        x = gen.random()
        if x * total < r * count:
            idx = int(gen.random() * count)
            if idx >= count:
                idx = count - 1
            u = order[idx]
            src_mutant = True
        else:
            rest = n - count
            idx = int(gen.random() * rest)
            if idx >= rest:
                idx = rest - 1
            u = order[count + idx]
            src_mutant = False
        y = gen.random()
        v = pick_target(indptr, indices, cum, u, y)
        steps += 1
        if v < 0:
            continue
        if src_mutant:
            if not is_m[v]:
                p = pos[v]
                w = order[count]
                order[count] = v
                order[p] = w
                pos[v] = count
                pos[w] = p
                is_m[v] = True
                count += 1
                if count == n:
                    return FIXATION, steps
        else:
            if is_m[v]:
                last = count - 1
                p = pos[v]
                w = order[last]
                order[last] = v
                order[p] = w
                pos[v] = last
                pos[w] = p
                is_m[v] = False
                count -= 1
                if count == 0:
                    return EXTINCTION, steps
    return CENSORED, steps


@njit(cache=True)
def _visits_cost(gen, visits, p):
    # total discrete steps spent in `visits` sojourns, each Geometric(p) long
    if visits <= 0:
        return 0
    if p >= 1.0:
        return visits
    return visits + gen.negative_binomial(visits, p)


@njit(cache=True)
def run_star_lumped(leaves, r, centre_mutant, mutant_leaves, gen, max_steps):
    """Moran process on a star tracked as (centre type, mutant-leaf count).

    Leaves are exchangeable, so this chain has the same law as the vertex
    level process.  Runs of centre flips at a fixed leaf count are skipped
    in one geometric draw; discrete step counts are sampled from the exact
    sojourn distributions.
    """
    L = leaves
    c = centre_mutant
    i = mutant_leaves
    alpha = r / (r + L)  # leaf gained, given a change at centre-mutant states
    beta = 1.0 / (r * L + 1.0)  # leaf lost, given a change at centre-non-mutant states
    steps = 0
    while True:
        if c == 1 and i == L:
            return FIXATION, steps
        if c == 0 and i == 0:
            return EXTINCTION, steps
        if steps >= max_steps:
            return CENSORED, steps
        w1 = r * (i + 1) + (L - i)
        p1 = (L - i) * (r / L + 1.0) / w1
        if c == 1:
            if i == 0:
                steps += _visits_cost(gen, 1, p1)
                if gen.random() < alpha:
                    i = 1
                else:
                    c = 0
                continue
            w0 = r * i + (L - i + 1)
            p0 = i * (r + 1.0 / L) / w0
            stay = (1.0 - alpha) * (1.0 - beta)
            leave = 1.0 - stay
            cycles = gen.geometric(leave) - 1
            if gen.random() * leave < alpha:
                steps += _visits_cost(gen, cycles + 1, p1) + _visits_cost(gen, cycles, p0)
                i += 1
            else:
                steps += _visits_cost(gen, cycles + 1, p1) + _visits_cost(gen, cycles + 1, p0)
                c = 0
                i -= 1
        else:
            w0 = r * i + (L - i + 1)
            p0 = i * (r + 1.0 / L) / w0
            steps += _visits_cost(gen, 1, p0)
            if gen.random() < beta:
                i -= 1
            else:
                c = 1


@njit(cache=True)
def _state_rates(state, full, n, r, in_ptr, in_src, in_w, up, down):
    """Per-vertex flip weights for the bitmask ``state``; returns their total."""
    total = 0.0
    for v in range(n):
        acc = 0.0
        bit = (state >> v) & 1
        for s in range(in_ptr[v], in_ptr[v + 1]):
            u = in_src[s]
            ub = (state >> u) & 1
            if ub != bit:
                acc += in_w[s]
        if bit == 0:
            up[v] = r * acc
            down[v] = 0.0
            total += r * acc
        else:
            down[v] = acc
            up[v] = 0.0
            total += acc
    return total


@njit(cache=True)
def build_absorption_system(n, r, in_ptr, in_src, in_w):
    """COO triplets of (D - B) p = b over states 1 .. 2**n - 2 (index = state - 1)."""
    full = (1 << n) - 1
    size = full - 1
    cap = size * (n + 1)
    rows = np.empty(cap, dtype=np.int64)
    cols = np.empty(cap, dtype=np.int64)
    vals = np.empty(cap, dtype=np.float64)
    rhs = np.zeros(size, dtype=np.float64)
    closed = np.zeros(size, dtype=np.bool_)
    up = np.empty(n, dtype=np.float64)
    down = np.empty(n, dtype=np.float64)
    k = 0
    for state in range(1, full):
        row = state - 1
        total = _state_rates(state, full, n, r, in_ptr, in_src, in_w, up, down)
        if total == 0.0:
            # no edge crosses the cut: S is itself absorbing, value pinned to 0
            closed[row] = True
            rows[k] = row
            cols[k] = row
            vals[k] = 1.0
            k += 1
            continue
        rows[k] = row
        cols[k] = row
        vals[k] = total
        k += 1
        for v in range(n):
            if up[v] > 0.0:
                t = state | (1 << v)
                if t == full:
                    rhs[row] += up[v]
                else:
                    rows[k] = row
                    cols[k] = t - 1
                    vals[k] = -up[v]
                    k += 1
            elif down[v] > 0.0:
                t = state & ~(1 << v)
                if t != 0:
                    rows[k] = row
                    cols[k] = t - 1
                    vals[k] = -down[v]
                    k += 1
    return rows[:k], cols[:k], vals[:k], rhs, closed


@njit(cache=True)
def gauss_seidel_absorption(n, r, in_ptr, in_src, in_w, tol, max_sweeps, p):
    """In-place Gauss-Seidel on the fixation vector ``p`` of length 2**n.

    Returns (sweeps, last max update, closed-state count).
    """
    full = (1 << n) - 1
    p[0] = 0.0
    p[full] = 1.0
    up = np.empty(n, dtype=np.float64)
    down = np.empty(n, dtype=np.float64)
    closed = 0
    delta = 0.0
    sweeps = 0
    for sweep in range(max_sweeps):
        delta = 0.0
        closed = 0
        # high-mutant states first: information flows in from the fixation end
        for state in range(full - 1, 0, -1):
            total = _state_rates(state, full, n, r, in_ptr, in_src, in_w, up, down)
            if total == 0.0:
                closed += 1
                continue
            acc = 0.0
            for v in range(n):
                if up[v] > 0.0:
                    acc += up[v] * p[state | (1 << v)]
                elif down[v] > 0.0:
                    acc += down[v] * p[state & ~(1 << v)]
            new = acc / total
            diff = abs(new - p[state])
            if diff > delta:
                delta = diff
            p[state] = new
        sweeps = sweep + 1
        if delta <= tol:
            break
    return sweeps, delta, closed


@njit(cache=True)
def absorption_residual(n, r, in_ptr, in_src, in_w, p):
    full = (1 << n) - 1
    up = np.empty(n, dtype=np.float64)
    down = np.empty(n, dtype=np.float64)
    worst = 0.0
    for state in range(1, full):
        total = _state_rates(state, full, n, r, in_ptr, in_src, in_w, up, down)
        if total == 0.0:
            continue
        acc = 0.0
        for v in range(n):
            if up[v] > 0.0:
                acc += up[v] * p[state | (1 << v)]
            elif down[v] > 0.0:
                acc += down[v] * p[state & ~(1 << v)]
        res = abs(acc / total - p[state])
        if res > worst:
            worst = res
    return worst


@njit(cache=True)
def run_megastar_jumps(indptr, indices, cum, role, branch, feeders, k, r, initial, gen,
                       max_steps, up, down):
    """Megastar process in discrete time, tallying active-clique size changes.

    Draws match ``megastar_step``: class, index within class, target.
    ``up[i]`` / ``down[i]`` accumulate moves out of clique size ``i``.
    """
    n = indptr.shape[0] - 1
    n_cliques = feeders.shape[0]
    order = np.arange(n)
    pos = np.arange(n)
    is_m = np.zeros(n, dtype=np.bool_)
    cc = np.zeros(n_cliques, dtype=np.int64)
    count = 0
    for v in initial:
        if not is_m[v]:
            count = _swap_in(order, pos, is_m, count, v)
            if role[v] == 3:
                cc[branch[v]] += 1
    steps = 0
    while 0 < count < n:
        if steps >= max_steps:
            return CENSORED, steps
        total = r * count + (n - count)
        if gen.random() * total < r * count:
            idx = int(gen.random() * count)
            if idx >= count:
                idx = count - 1
            u = order[idx]
            src_mutant = True
        else:
            rest = n - count
            idx = int(gen.random() * rest)
            if idx >= rest:
                idx = rest - 1
            u = order[count + idx]
            src_mutant = False
        v = pick_target(indptr, indices, cum, u, gen.random())
        steps += 1
        if v < 0:
            continue
        if src_mutant:
            if role[u] == 2:
                j = branch[u]
                if cc[j] == 0:
                    # feeder hands its mutant status to the clique
                    count = _swap_in(order, pos, is_m, count, v)
                    cc[j] += 1
                    count = _swap_out(order, pos, is_m, count, u)
            elif role[v] == 2:
                c = cc[branch[v]]
                if (c == 0 or c == k) and not is_m[v]:
                    count = _swap_in(order, pos, is_m, count, v)
            elif not is_m[v]:
                count = _swap_in(order, pos, is_m, count, v)
                if role[v] == 3:
                    j = branch[v]
                    c = cc[j]
                    if 0 < c < k:
                        up[c] += 1
                    cc[j] = c + 1
        elif is_m[v]:
            count = _swap_out(order, pos, is_m, count, v)
            if role[v] == 3:
                j = branch[v]
                c = cc[j]
                if 0 < c < k:
                    down[c] += 1
                cc[j] = c - 1
    if count == n:
        return FIXATION, steps
    return EXTINCTION, steps


@njit(cache=True)
def _swap_in(order, pos, is_m, count, v):
    p = pos[v]
    w = order[count]
    order[count] = v
    order[p] = w
    pos[v] = count
    pos[w] = p
    is_m[v] = True
    return count + 1


@njit(cache=True)
def _swap_out(order, pos, is_m, count, v):
    last = count - 1
    p = pos[v]
    w = order[last]
    order[last] = v
    order[p] = w
    pos[v] = last
    pos[w] = p
    is_m[v] = False
    return last

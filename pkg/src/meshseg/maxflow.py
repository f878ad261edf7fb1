"""s-t max-flow / min-cut on sparse graphs (Dinic's algorithm).

Edges are stored as antiparallel pairs (edge id e pairs with e ^ 1), so the
residual of edge e is cap[e] and pushing flow increments cap[e ^ 1]. The
blocking-flow search runs over BFS level graphs, JIT-compiled; capacities are
floats with a small epsilon treated as saturated.
"""

from __future__ import annotations

import numpy as np
from numba import njit

EPS = 1e-11


@njit(cache=True, nogil=True)
def _dinic(csr_start, csr_eids, to, cap, s, t):
    n = len(csr_start) - 1
    level = np.empty(n, dtype=np.int64)
    it = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    path = np.empty(n + 1, dtype=np.int64)
    total = 0.0

    while True:
        # BFS levels over the residual graph
        for i in range(n):
            level[i] = -1
        level[s] = 0
        qh, qt = 0, 0
        queue[qt] = s
        qt += 1
        while qh < qt:
            u = queue[qh]
            qh += 1
            for pos in range(csr_start[u], csr_start[u + 1]):
                e = csr_eids[pos]
                v = to[e]
                if cap[e] > EPS and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
        if level[t] < 0:
            return total

        # blocking flow: advance/retreat DFS with current-arc pointers
        for i in range(n):
            it[i] = csr_start[i]
        u = s
        depth = 0
        while True:
            if u == t:
                bottleneck = np.inf
                for k in range(depth):
                    e = path[k]
                    if cap[e] < bottleneck:
                        bottleneck = cap[e]
                for k in range(depth):
                    e = path[k]
                    cap[e] -= bottleneck
                    cap[e ^ 1] += bottleneck
                total += bottleneck
                # retreat to the first saturated edge on the path
                cut_at = depth
                for k in range(depth):
                    if cap[path[k]] <= EPS:
                        cut_at = k
                        break
                depth = cut_at
                u = s if depth == 0 else to[path[depth - 1]]
                continue

            advanced = False
            pos = it[u]
            while pos < csr_start[u + 1]:
                e = csr_eids[pos]
                v = to[e]
                if cap[e] > EPS and level[v] == level[u] + 1:
                    it[u] = pos
                    path[depth] = e
                    depth += 1
                    u = v
                    advanced = True
                    break
                pos += 1
            if advanced:
                continue
            it[u] = pos  # exhausted
            level[u] = -1  # prune dead node from this phase
            if depth == 0:
                break
            depth -= 1
            u = s if depth == 0 else to[path[depth - 1]]
            it[u] += 1  # step past the edge that led to the dead end


@njit(cache=True, nogil=True)
def _source_side(csr_start, csr_eids, to, cap, s):
    n = len(csr_start) - 1
    seen = np.zeros(n, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    seen[s] = True
    qh, qt = 0, 1
    queue[0] = s
    while qh < qt:
        u = queue[qh]
        qh += 1
        for pos in range(csr_start[u], csr_start[u + 1]):
            e = csr_eids[pos]
            v = to[e]
            if cap[e] > EPS and not seen[v]:
                seen[v] = True
                queue[qt] = v
                qt += 1
    return seen


class MinCutSolver:
    """Collects paired directed edges, then solves one s-t min cut."""

    def __init__(self, n_nodes: int):
        self.n_nodes = n_nodes
        self._frm = []
        self._to = []
        self._cap = []

    def add_edge(self, u: int, v: int, cap: float, rcap: float = 0.0):
        """Directed capacity ``cap`` from u to v plus ``rcap`` back."""
        if cap < 0 or rcap < 0:
            raise ValueError("capacities must be non-negative")
        self._frm.append(u)
        self._to.append(v)
        self._cap.append(cap)
        self._frm.append(v)
        self._to.append(u)
        self._cap.append(rcap)

    def add_edges(self, us, vs, caps, rcaps):
        """Vectorized bulk add_edge."""
        us = np.asarray(us, dtype=np.int64)
        vs = np.asarray(vs, dtype=np.int64)
        caps = np.asarray(caps, dtype=np.float64)
        rcaps = np.asarray(rcaps, dtype=np.float64)
        if (caps < 0).any() or (rcaps < 0).any():
            raise ValueError("capacities must be non-negative")
        inter = np.empty(2 * len(us), dtype=np.int64)
        inter[0::2] = us
        inter[1::2] = vs
        self._frm.extend(inter.tolist())
        inter2 = np.empty_like(inter)
        inter2[0::2] = vs
        inter2[1::2] = us
        self._to.extend(inter2.tolist())
        capw = np.empty(2 * len(us), dtype=np.float64)
        capw[0::2] = caps
        capw[1::2] = rcaps
        self._cap.extend(capw.tolist())

    def solve(self, s: int, t: int):
        """Returns (max flow value, source_side bool mask over nodes)."""
        frm = np.asarray(self._frm, dtype=np.int64)
        to = np.asarray(self._to, dtype=np.int64)
        cap = np.asarray(self._cap, dtype=np.float64)
        order = np.argsort(frm, kind="stable")
        csr_eids = np.ascontiguousarray(order)
        csr_start = np.searchsorted(frm[order], np.arange(self.n_nodes + 1))
        flow = _dinic(csr_start.astype(np.int64), csr_eids, to, cap, s, t)
        side = _source_side(csr_start.astype(np.int64), csr_eids, to, cap, s)
        self.residual = cap
        return float(flow), side

    def cut_capacity(self, source_side) -> float:
        """Capacity of the cut induced by a node partition (original caps)."""
        frm = np.asarray(self._frm, dtype=np.int64)
        to = np.asarray(self._to, dtype=np.int64)
        cap = np.asarray(self._cap, dtype=np.float64)
        crossing = source_side[frm] & ~source_side[to]
        return float(cap[crossing].sum())


def brute_force_min_cut(solver: MinCutSolver, s: int, t: int):
    """Exhaustive minimum s-t cut for small graphs (test oracle)."""
    n = solver.n_nodes
    free = [v for v in range(n) if v != s and v != t]
    if len(free) > 20:
        raise ValueError("brute force limited to 20 free nodes")
    frm = np.asarray(solver._frm, dtype=np.int64)
    to = np.asarray(solver._to, dtype=np.int64)
    cap = np.asarray(solver._cap, dtype=np.float64)
    best = np.inf
    best_side = None
    for mask in range(1 << len(free)):
        side = np.zeros(n, dtype=bool)
        side[s] = True
        for bit, v in enumerate(free):
            if mask >> bit & 1:
                side[v] = True
        value = float(cap[side[frm] & ~side[to]].sum())
        if value < best:
            best = value
            best_side = side
    return best, best_side

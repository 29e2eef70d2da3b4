"""Maximum flow / minimum cut.

Highest-label push-relabel (first phase only) with gap relabelling and
periodic global relabelling, compiled with numba. The first phase yields a
maximum preflow, which is enough to read off the flow value and a minimum
cut. The returned cut is the one with the largest source side: a node is on
the sink side iff it can still reach the sink in the residual network.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from ..errors import MsreError


class NetworkError(MsreError):
    pass


@dataclass(frozen=True)
class FlowNetwork:
    """Directed network given as parallel arc arrays."""

    n_nodes: int
    tails: np.ndarray
    heads: np.ndarray
    caps: np.ndarray
    source: int
    sink: int

    def __post_init__(self):
        tails = np.ascontiguousarray(self.tails, dtype=np.int64)
        heads = np.ascontiguousarray(self.heads, dtype=np.int64)
        caps = np.ascontiguousarray(self.caps, dtype=np.float64)
        object.__setattr__(self, "tails", tails)
        object.__setattr__(self, "heads", heads)
        object.__setattr__(self, "caps", caps)
        if not (tails.shape == heads.shape == caps.shape) or tails.ndim != 1:
            raise NetworkError("arc arrays must be 1-D and of equal length")
        if self.source == self.sink:
            raise NetworkError("source and sink must differ")
        for node in (self.source, self.sink):
            if not 0 <= node < self.n_nodes:
                raise NetworkError(f"terminal {node} out of range")
        if tails.size:
            if tails.min() < 0 or heads.min() < 0:
                raise NetworkError("negative node index")
            if max(tails.max(), heads.max()) >= self.n_nodes:
                raise NetworkError("node index out of range")
        if np.isnan(caps).any() or (caps < 0).any():
            raise NetworkError("capacities must be nonnegative")


@dataclass(frozen=True)
class FlowResult:
    value: float
    source_side: np.ndarray  # bool per node
    cut_capacity: float
    pushes: int
    relabels: int
    global_updates: int


@nb.njit(cache=True)
def _build_csr(n, tails, heads, caps):
    m = tails.shape[0]
    deg = np.zeros(n + 1, np.int64)
    for a in range(m):
        deg[tails[a] + 1] += 1
        deg[heads[a] + 1] += 1
    first = np.cumsum(deg)
    fill = first[:-1].copy()
    head = np.empty(2 * m, np.int32)
    rescap = np.empty(2 * m, np.float64)
    rev = np.empty(2 * m, np.int64)
    for a in range(m):
        u = tails[a]
        v = heads[a]
        i = fill[u]
        fill[u] += 1
        j = fill[v]
        fill[v] += 1
        head[i] = v
        rescap[i] = caps[a]
        rev[i] = j
        head[j] = u
        rescap[j] = 0.0
        rev[j] = i
    return first, head, rescap, rev


@nb.njit(cache=True)
def _global_relabel(n, s, t, first, head, rescap, rev, label, queue):
    for i in range(n):
        label[i] = n
    label[t] = 0
    qh = 0
    qt = 0
    queue[qt] = t
    qt += 1
    while qh < qt:
        v = queue[qh]
        qh += 1
        dv = label[v] + 1
        for a in range(first[v], first[v + 1]):
            u = head[a]
            if label[u] == n and u != s and rescap[rev[a]] > 0.0:
                label[u] = dv
                queue[qt] = u
                qt += 1
    label[s] = n


@nb.njit(cache=True)
def _push_relabel(n, s, t, first, head, rescap, rev):
    label = np.empty(n, np.int64)
    excess = np.zeros(n, np.float64)
    current = first[:-1].copy()
    queue = np.empty(n, np.int64)
    a_first = np.full(n + 1, -1, np.int64)
    i_first = np.full(n + 1, -1, np.int64)
    bnext = np.full(n, -1, np.int64)
    bprev = np.full(n, -1, np.int64)

    for a in range(first[s], first[s + 1]):
        c = rescap[a]
        if c > 0.0:
            v = head[a]
            rescap[a] = 0.0
            rescap[rev[a]] += c
            excess[v] += c
            excess[s] -= c

    m = first[n]
    glob_freq = 0.5 * (6 * n + m)
    work = 0.0
    pushes = 0
    relabels = 0
    updates = 0

    need_update = True
    a_max = 0
    d_max = 0
    while True:
        if need_update:
            _global_relabel(n, s, t, first, head, rescap, rev, label, queue)
            updates += 1
            work = 0.0
            need_update = False
            for d in range(n + 1):
                a_first[d] = -1
                i_first[d] = -1
            a_max = 0
            d_max = 0
            for u in range(n):
                if u == s or u == t:
                    continue
                d = label[u]
                if d >= n:
                    continue
                current[u] = first[u]
                if excess[u] > 0.0:
                    bnext[u] = a_first[d]
                    a_first[d] = u
                    if d > a_max:
                        a_max = d
                else:
                    bnext[u] = i_first[d]
                    bprev[u] = -1
                    if i_first[d] >= 0:
                        bprev[i_first[d]] = u
                    i_first[d] = u
                if d > d_max:
                    d_max = d
        # pick highest active node
        while a_max > 0 and a_first[a_max] < 0:
            a_max -= 1
        if a_max <= 0:
            break
        u = a_first[a_max]
        a_first[a_max] = bnext[u]
        d = label[u]
        # discharge u
        while True:
            done = False
            end = first[u + 1]
            a = current[u]
            while a < end:
                if rescap[a] > 0.0:
                    v = head[a]
                    if label[v] == d - 1:
                        ex = excess[u]
                        r = rescap[a]
                        delta = ex if ex < r else r
                        if v != t and excess[v] == 0.0:
                            # inactive -> active
                            dv = d - 1
                            pv = bprev[v]
                            nv = bnext[v]
                            if pv >= 0:
                                bnext[pv] = nv
                            else:
                                i_first[dv] = nv
                            if nv >= 0:
                                bprev[nv] = pv
                            bnext[v] = a_first[dv]
                            a_first[dv] = v
                        rescap[a] = r - delta
                        rescap[rev[a]] += delta
                        excess[u] = ex - delta
                        excess[v] += delta
                        pushes += 1
                        if excess[u] == 0.0:
                            done = True
                            break
                a += 1
            if done:
                current[u] = a
                bnext[u] = i_first[d]
                bprev[u] = -1
                if i_first[d] >= 0:
                    bprev[i_first[d]] = u
                i_first[d] = u
                break
            # relabel u
            relabels += 1
            work += 12 + (first[u + 1] - first[u])
            new_d = n
            best = first[u]
            for b in range(first[u], end):
                if rescap[b] > 0.0:
                    lv = label[head[b]] + 1
                    if lv < new_d:
                        new_d = lv
                        best = b
            if a_first[d] < 0 and i_first[d] < 0:
                # gap: everything above d is cut off from the sink
                for dd in range(d + 1, d_max + 1):
                    w = i_first[dd]
                    while w >= 0:
                        label[w] = n
                        w = bnext[w]
                    i_first[dd] = -1
                    w = a_first[dd]
                    while w >= 0:
                        label[w] = n
                        w = bnext[w]
                    a_first[dd] = -1
                label[u] = n
                d_max = d - 1
                if a_max > d_max:
                    a_max = d_max
                break
            if new_d >= n:
                label[u] = n
                break
            d = new_d
            label[u] = d
            current[u] = best
            if d > d_max:
                d_max = d
            if d > a_max:
                a_max = d
        if work > glob_freq:
            need_update = True

    _global_relabel(n, s, t, first, head, rescap, rev, label, queue)
    source_side = np.empty(n, np.bool_)
    for i in range(n):
        source_side[i] = label[i] >= n
    return excess[t], source_side, pushes, relabels, updates


@nb.njit(cache=True)
def _cut_capacity(tails, heads, caps, source_side):
    total = 0.0
    for a in range(tails.shape[0]):
        if source_side[tails[a]] and not source_side[heads[a]]:
            total += caps[a]
    return total


def maxflow(net: FlowNetwork, check: bool = True) -> FlowResult:
    """Maximum flow value and the minimum cut with the largest source side.

    Deterministic for a given arc order. With ``check`` the cut capacity is
    recomputed from the original arcs and compared with the flow value.
    """
    first, head, rescap, rev = _build_csr(net.n_nodes, net.tails, net.heads, net.caps)
    value, side, pushes, relabels, updates = _push_relabel(
        net.n_nodes, net.source, net.sink, first, head, rescap, rev)
    cut = _cut_capacity(net.tails, net.heads, net.caps, side)
    if check:
        if not np.isfinite(value):
            raise NetworkError("unbounded flow: infinite source-sink path")
        if abs(cut - value) > 1e-9 * max(1.0, abs(value)):
            raise NetworkError(f"max-flow/min-cut mismatch: flow {value!r}, cut {cut!r}")
    return FlowResult(float(value), side, float(cut), int(pushes), int(relabels), int(updates))

"""Max-flow / min-cut by highest-label push-relabel, and maximum-weight closure."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping

INF = math.inf


@dataclass
class FlowNetwork:
    source: Hashable
    sink: Hashable
    nodes: list = field(default_factory=list)
    arcs: list = field(default_factory=list)  # (tail, head, capacity)

    def __post_init__(self):
        if self.source == self.sink:
            raise ValueError("source and sink must differ")
        seen = set(self.nodes)
        for v in (self.source, self.sink):
            if v not in seen:
                self.nodes.append(v)
                seen.add(v)

    def add_arc(self, tail, head, capacity):
        if capacity < 0:
            raise ValueError("capacities must be nonnegative")
        self.arcs.append((tail, head, capacity))


def _is_integral(x) -> bool:
    return isinstance(x, int) or (isinstance(x, float) and x.is_integer())


def max_flow(net: FlowNetwork, exact: bool | None = None) -> tuple[float, set]:
    """Maximum s-t flow value and the source side of a minimum cut.

    The returned side is the largest minimum-cut source set (all nodes that cannot
    reach the sink in the final residual graph), so it is unique and nests
    monotonically in parametric use.  Infinite capacities become one plus the sum
    of the finite ones.  ``exact`` (default: when all finite capacities are
    integral) runs in Python integers.
    """
    nodes = list(dict.fromkeys(net.nodes))
    idx = {v: k for k, v in enumerate(nodes)}
    for a, b, _ in net.arcs:
        for v in (a, b):
            if v not in idx:
                idx[v] = len(nodes)
                nodes.append(v)
    n = len(nodes)
    s, t = idx[net.source], idx[net.sink]
    finite = [c for _, _, c in net.arcs if c != INF]
    if exact is None:
        exact = all(_is_integral(c) for c in finite)
    conv = int if exact else float
    big = conv(1 + sum(c for c in finite if c > 0))

    head: list[int] = []
    cap: list = []
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b, c in net.arcs:
        u, v = idx[a], idx[b]
        if u == v:
            continue
        c = big if c == INF else conv(c)
        adj[u].append(len(head))
        head.append(v)
        cap.append(c)
        adj[v].append(len(head))
        head.append(u)
        cap.append(conv(0))
    eps = 0 if exact else 1e-12 * float(big)

    height = [n] * n
    excess = [conv(0)] * n

    def global_relabel():
        for v in range(n):
            height[v] = n
        height[t] = 0
        dq = deque([t])
        while dq:
            v = dq.popleft()
            hv = height[v] + 1
            for e in adj[v]:
                w = head[e]
                # residual arc w -> v is the partner of e
                if height[w] == n and w != s and cap[e ^ 1] > eps:
                    height[w] = hv
                    dq.append(w)
        height[s] = n

    global_relabel()
    for e in adj[s]:
        c = cap[e]
        if c > eps:
            w = head[e]
            cap[e] -= c
            cap[e ^ 1] += c
            excess[w] += c
            excess[s] -= c

    buckets: list[list[int]] = [[] for _ in range(2 * n + 1)]
    count = [0] * (2 * n + 1)
    in_bucket = [False] * n

    def rebuild():
        for b in buckets:
            b.clear()
        for k in range(len(count)):
            count[k] = 0
        for v in range(n):
            in_bucket[v] = False
            if v != s and v != t and height[v] < n:
                count[height[v]] += 1
                if excess[v] > eps:
                    buckets[height[v]].append(v)
                    in_bucket[v] = True
        return max((h for h in range(n) if buckets[h]), default=-1)

    top = rebuild()
    current = [0] * n
    relabels = 0
    while top >= 0:
        if not buckets[top]:
            top -= 1
            continue
        v = buckets[top].pop()
        in_bucket[v] = False
        hv = height[v]
        if hv >= n:
            continue
        ev = excess[v]
        av = adj[v]
        i = current[v]
        while ev > eps:
            if i < len(av):
                e = av[i]
                c = cap[e]
                if c > eps:
                    w = head[e]
                    if height[w] == hv - 1:
                        d = c if c < ev else ev
                        cap[e] = c - d
                        cap[e ^ 1] += d
                        ev -= d
                        excess[w] += d
                        if w != t and w != s and not in_bucket[w] and height[w] < n:
                            buckets[height[w]].append(w)
                            in_bucket[w] = True
                            # v may have been relabeled above top and then lifted to n
                            if height[w] > top:
                                top = height[w]
                        if ev <= eps:
                            break
                i += 1
            else:
                # relabel
                relabels += 1
                old = hv
                m = 2 * n
                for e in av:
                    if cap[e] > eps:
                        hw = height[head[e]]
                        if hw < m:
                            m = hw
                hv = m + 1
                count[old] -= 1
                if count[old] == 0 and old < n:
                    # gap: nobody can reach the sink through level `old` anymore
                    for u in range(n):
                        if old < height[u] < n:
                            count[height[u]] -= 1
                            height[u] = n
                    hv = n
                if hv >= n:
                    hv = n
                    height[v] = n
                    break
                height[v] = hv
                count[hv] += 1
                i = 0
        excess[v] = ev
        current[v] = i
        if height[v] < n and ev > eps and not in_bucket[v]:
            buckets[height[v]].append(v)
            in_bucket[v] = True
        if height[v] < n and height[v] > top:
            top = height[v]
        if relabels > 2 * n:
            relabels = 0
            global_relabel()
            current = [0] * n
            top = rebuild()

    value = excess[t]
    # largest min-cut source side: nodes that cannot reach t in the residual graph
    reach_t = [False] * n
    reach_t[t] = True
    dq = deque([t])
    while dq:
        v = dq.popleft()
        for e in adj[v]:
            w = head[e]
            if not reach_t[w] and cap[e ^ 1] > eps:
                reach_t[w] = True
                dq.append(w)
    side = {nodes[v] for v in range(n) if not reach_t[v]}
    return value, side


def cut_capacity(net: FlowNetwork, side: set) -> float:
    return sum(c for a, b, c in net.arcs if a in side and b not in side)


def solve_closure(weights: Mapping[Hashable, float], precedence: Iterable[tuple],
                  exact: bool | None = None) -> tuple[set, float]:
    """Maximum-weight closed set: ``u -> v`` means selecting u forces v.

    Returns the largest optimal closure (ties resolved toward selecting).
    """
    src, snk = ("__closure_source__",), ("__closure_sink__",)
    net = FlowNetwork(src, snk, list(weights))
    positive = 0
    for v, w in weights.items():
        if w > 0:
            net.add_arc(src, v, w)
            positive += w
        elif w < 0:
            net.add_arc(v, snk, -w)
    for u, v in precedence:
        net.add_arc(u, v, INF)
    cut, side = max_flow(net, exact)
    side.discard(src)
    return side, positive - cut

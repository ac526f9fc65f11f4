"""Integer max-flow over capacitated digraphs, tuned for expected networks.

The solver is a deterministic Dinic implementation (shortest augmenting
paths, arcs scanned in insertion order) so that the extracted flow, and
hence every capacity plan, is reproducible bit-for-bit. Sink-side
capacities can be raised after solving and the flow re-maximized, either
one unit at a time (single augmenting-path search) or in bulk followed by
a warm re-run of the phase loop.
"""

from __future__ import annotations

import math
from collections import deque

from .instance import Instance


class PlanInfeasibleError(RuntimeError):
    """Raised when a capacity plan is requested from a non-saturating flow."""


class MaxFlowNetwork:
    """Residual-capacity arc store with paired forward/reverse arcs.

    Arc 2k is the k-th forward arc, arc 2k+1 its reverse; ``cap`` holds the
    residual capacity, ``cap0`` the original capacity (0 on reverse arcs).
    Flow on a forward arc e is ``cap0[e] - cap[e]``. Single-owner mutable;
    distinct networks may be solved in parallel.
    """

    def __init__(self, num_nodes: int, source: int, sink: int):
        self.num_nodes = num_nodes
        self.source = source
        self.sink = sink
        self.adj: list[list[int]] = [[] for _ in range(num_nodes)]
        self.to: list[int] = []
        self.cap: list[int] = []
        self.cap0: list[int] = []
        self.flow_value = 0

    def add_arc(self, u: int, v: int, capacity: int) -> int:
        """Add a forward arc u->v; returns its arc id."""
        if capacity < 0:
            raise ValueError(f"negative capacity {capacity} on arc {u}->{v}")
        e = len(self.to)
        self.to.extend((v, u))
        self.cap.extend((capacity, 0))
        self.cap0.extend((capacity, 0))
        self.adj[u].append(e)
        self.adj[v].append(e + 1)
        return e

    def arc_flow(self, e: int) -> int:
        return self.cap0[e] - self.cap[e]

    def increase_capacity(self, e: int, amount: int):
        """Raise the capacity of an existing arc; flow values are kept."""
        if amount < 0:
            raise ValueError("capacity increase must be non-negative")
        self.cap[e] += amount
        self.cap0[e] += amount

    # -- solving ----------------------------------------------------------

    def max_flow(self) -> int:
        """Run Dinic phases from the current flow until no path remains.

        Safe to call repeatedly: capacities may be raised between calls and
        the flow is re-maximized from its current (still feasible) state.
        """
        to, cap, adj = self.to, self.cap, self.adj
        s, t = self.source, self.sink
        num = self.num_nodes
        while True:
            level = self._bfs_levels()
            if level[t] < 0:
                break
            it = [0] * num
            while True:
                path = self._find_level_path(level, it)
                if path is None:
                    break
                pushed = min(cap[e] for e in path)
                for e in path:
                    cap[e] -= pushed
                    cap[e ^ 1] += pushed
                self.flow_value += pushed
        return self.flow_value

    def _bfs_levels(self) -> list[int]:
        to, cap, adj = self.to, self.cap, self.adj
        level = [-1] * self.num_nodes
        level[self.source] = 0
        queue = deque((self.source,))
        while queue:
            v = queue.popleft()
            lv = level[v] + 1
            for e in adj[v]:
                w = to[e]
                if cap[e] > 0 and level[w] < 0:
                    level[w] = lv
                    queue.append(w)
        return level

    def _find_level_path(self, level: list[int], it: list[int]) -> list[int] | None:
        """Advance/retreat walk through the level graph; returns arc ids."""
        to, cap, adj = self.to, self.cap, self.adj
        s, t = self.source, self.sink
        path: list[int] = []
        v = s
        while v != t:
            advanced = False
            arcs = adj[v]
            k = it[v]
            while k < len(arcs):
                e = arcs[k]
                w = to[e]
                if cap[e] > 0 and level[w] == level[v] + 1:
                    it[v] = k
                    path.append(e)
                    v = w
                    advanced = True
                    break
                k += 1
            if advanced:
                continue
            it[v] = len(arcs)
            if v == s:
                return None
            level[v] = -1  # dead end for this phase
            e = path.pop()
            v = to[e ^ 1]
            it[v] += 1
        return path

    def augment_once(self) -> int:
        """Attempt one augmenting path (plain BFS); returns the pushed amount."""
        to, cap, adj = self.to, self.cap, self.adj
        s, t = self.source, self.sink
        parent_arc = [-1] * self.num_nodes
        parent_arc[s] = -2
        queue = deque((s,))
        found = False
        while queue and not found:
            v = queue.popleft()
            for e in adj[v]:
                w = to[e]
                if cap[e] > 0 and parent_arc[w] == -1:
                    parent_arc[w] = e
                    if w == t:
                        found = True
                        break
                    queue.append(w)
        if not found:
            return 0
        bottleneck = None
        v = t
        while v != s:
            e = parent_arc[v]
            bottleneck = cap[e] if bottleneck is None else min(bottleneck, cap[e])
            v = to[e ^ 1]
        v = t
        while v != s:
            e = parent_arc[v]
            cap[e] -= bottleneck
            cap[e ^ 1] += bottleneck
            v = to[e ^ 1]
        self.flow_value += bottleneck
        return bottleneck

    # -- state management -------------------------------------------------

    def snapshot(self) -> tuple[list[int], list[int], int]:
        return (self.cap.copy(), self.cap0.copy(), self.flow_value)

    def restore(self, snap: tuple[list[int], list[int], int]):
        cap, cap0, flow_value = snap
        self.cap = cap.copy()
        self.cap0 = cap0.copy()
        self.flow_value = flow_value

    def validate_flow(self) -> list[str]:
        """Walk all arcs and nodes checking bounds and conservation."""
        problems: list[str] = []
        balance = [0] * self.num_nodes
        for e in range(0, len(self.to), 2):
            f = self.arc_flow(e)
            if f < 0 or f > self.cap0[e]:
                problems.append(f"arc {e}: flow {f} outside [0, {self.cap0[e]}]")
            balance[self.to[e ^ 1]] -= f
            balance[self.to[e]] += f
        for v in range(self.num_nodes):
            if v in (self.source, self.sink):
                continue
            if balance[v] != 0:
                problems.append(f"node {v}: net flow {balance[v]} != 0")
        if balance[self.sink] != self.flow_value:
            problems.append(
                f"flow value {self.flow_value} != net flow into sink {balance[self.sink]}"
            )
        return problems


class ExpectedNetwork(MaxFlowNetwork):
    """Expected network for an instance: source -> campaigns -> types -> sink.

    Source arcs carry the campaign demands, inner arcs the targeting edges,
    sink arcs the per-type supply. Node layout: source 0, campaign i at
    1 + i, type j at 1 + m + j, sink last.
    """

    def __init__(self, instance: Instance, supply, inner_capacity: int | None = None):
        m, n = instance.m, instance.n
        super().__init__(m + n + 2, 0, m + n + 1)
        self.instance = instance
        inner = instance.total_demand if inner_capacity is None else inner_capacity

        self.source_arcs = [self.add_arc(0, 1 + i, w) for i, w in enumerate(instance.demands)]
        self.inner_arcs: dict[tuple[int, int], int] = {}
        for i, j in sorted(instance.edges):
            self.inner_arcs[(i, j)] = self.add_arc(1 + i, 1 + m + j, inner)
        self.sink_arcs = [
            self.add_arc(1 + m + j, m + n + 1, int(supply[j])) for j in range(n)
        ]

    def increment_supply_and_augment(self, type_idx: int) -> int:
        """Raise one type's supply by a unit and re-maximize the flow.

        Costs one augmenting-path search; the resulting value equals a
        from-scratch max-flow of the updated network.
        """
        self.increase_capacity(self.sink_arcs[type_idx], 1)
        self.augment_once()
        return self.flow_value

    def add_supply_counts(self, counts):
        """Bulk-raise per-type supplies; call ``max_flow`` to re-maximize."""
        for j, c in enumerate(counts):
            if c:
                self.increase_capacity(self.sink_arcs[j], int(c))

    def extract_edge_flows(self):
        """Read the per-edge capacity plan off a saturating max flow."""
        from .planner import CapacityPlan

        total = self.instance.total_demand
        if self.flow_value < total:
            raise PlanInfeasibleError(
                f"plan requires saturating flow: value {self.flow_value} < demand {total}"
            )
        entries = {edge: self.arc_flow(e) for edge, e in self.inner_arcs.items()}
        return CapacityPlan(entries=entries)


def build_expected_network(
    instance: Instance, supply, inner_capacity: int | None = None
) -> ExpectedNetwork:
    """Construct the expected network with the given integer type supplies.

    ``inner_capacity`` of None uses the total demand (never binding); the
    multiple-delivery variant passes the probed budget instead.
    """
    if len(supply) != instance.n:
        raise ValueError(f"supply has {len(supply)} entries, expected n={instance.n}")
    return ExpectedNetwork(instance, supply, inner_capacity)

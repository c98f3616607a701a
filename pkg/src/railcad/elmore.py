"""First-moment delay estimation on RC trees.

tau_i = sum_k C_k * R_ik, where R_ik is the resistance common to the paths
from the source to i and from the source to k.  Evaluating the double sum
directly costs O(n^2); accumulating downstream capacitance instead gives every
node's delay in one pass, since the resistance of an edge is shared exactly by
the node pairs that both sit below it.
"""

from __future__ import annotations

from dataclasses import dataclass


class RcError(ValueError):
    pass


@dataclass(frozen=True)
class RcTree:
    """Rooted RC tree: node k carries C_k, the edge from its parent carries R_k.

    parents[k] is -1 at the source, whose resistance slot is unused and kept 0.
    """

    parents: tuple[int, ...]
    resistances: tuple[float, ...]
    capacitances: tuple[float, ...]

    def __post_init__(self):
        n = len(self.parents)
        if n == 0:
            raise RcError("empty tree")
        if len(self.resistances) != n or len(self.capacitances) != n:
            raise RcError("parents, resistances and capacitances must align")
        roots = [k for k, p in enumerate(self.parents) if p == -1]
        if len(roots) != 1:
            raise RcError(f"expected one source, found {len(roots)}")
        for k, p in enumerate(self.parents):
            if p != -1 and not 0 <= p < n:
                raise RcError(f"node {k}: parent {p} out of range")
            if p == k:
                raise RcError(f"node {k} is its own parent")
        for k, c in enumerate(self.capacitances):
            if not c > 0:
                raise RcError(f"node {k}: capacitance must be positive, got {c}")
        for k, r in enumerate(self.resistances):
            if self.parents[k] != -1 and not r > 0:
                raise RcError(f"node {k}: edge resistance must be positive, got {r}")
        # every node must reach the source; a walk longer than n is a cycle
        for k in range(n):
            steps, node = 0, k
            while self.parents[node] != -1:
                node = self.parents[node]
                steps += 1
                if steps > n:
                    raise RcError(f"node {k} sits on a cycle")

    @property
    def n(self) -> int:
        return len(self.parents)

    @property
    def source(self) -> int:
        return self.parents.index(-1)

    @classmethod
    def from_edges(cls, source, edges, capacitances) -> tuple["RcTree", dict]:
        """Build from labeled undirected edges (u, v, R) and a label -> C map.

        Returns the tree and the label -> node index map.  Labels present in
        capacitances but unreachable over the edges are rejected.
        """
        if source not in capacitances:
            raise RcError(f"source {source!r} has no capacitance entry")
        neighbors: dict = {label: [] for label in capacitances}
        for u, v, r in edges:
            for label in (u, v):
                if label not in capacitances:
                    raise RcError(f"edge endpoint {label!r} has no capacitance entry")
            neighbors[u].append((v, r))
            neighbors[v].append((u, r))
        index = {source: 0}
        parents = [-1]
        resistances = [0.0]
        caps = [capacitances[source]]
        queue = [source]
        while queue:
            u = queue.pop(0)
            for v, r in neighbors[u]:
                if v in index:
                    continue
                index[v] = len(parents)
                parents.append(index[u])
                resistances.append(r)
                caps.append(capacitances[v])
                queue.append(v)
        missing = [label for label in capacitances if label not in index]
        if missing:
            raise RcError(
                "disconnected from the source: " + ", ".join(sorted(map(str, missing)))
            )
        if len(edges) != len(index) - 1:
            raise RcError(f"{len(edges)} edges for {len(index)} nodes: not a tree")
        return cls(tuple(parents), tuple(resistances), tuple(caps)), index


def _order_from_source(tree: RcTree) -> list[int]:
    children: list[list[int]] = [[] for _ in range(tree.n)]
    for k, p in enumerate(tree.parents):
        if p != -1:
            children[p].append(k)
    order = [tree.source]
    for node in order:
        order.extend(children[node])
    return order


def elmore_delays(tree: RcTree) -> tuple[float, ...]:
    """Delay at every node; the source reads 0."""
    order = _order_from_source(tree)
    downstream = list(tree.capacitances)
    for node in reversed(order):
        p = tree.parents[node]
        if p != -1:
            downstream[p] += downstream[node]
    delay = [0.0] * tree.n
    for node in order:
        p = tree.parents[node]
        if p != -1:
            delay[node] = delay[p] + tree.resistances[node] * downstream[node]
    return tuple(delay)


def elmore_delay(tree: RcTree, node: int) -> float:
    if not 0 <= node < tree.n:
        raise RcError(f"node {node} is not in the tree (size {tree.n})")
    return elmore_delays(tree)[node]

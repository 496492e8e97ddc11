"""Graph routines: supply-path search for the node-to-branch matrix and radial checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .network import BranchId, NetworkModel, NodeId


@dataclass(frozen=True)
class N2BSupport:
    """Pairs (node, branch) whose path indicator is a genuine decision bit.

    Every pair outside ``entries`` is fixed to zero.
    """

    entries: frozenset[tuple[NodeId, BranchId]]

    def __contains__(self, item) -> bool:
        return item in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def nodes_through(self, bid: BranchId) -> set[NodeId]:
        return {n for n, b in self.entries if b == bid}

    def density(self, net: NetworkModel) -> float:
        cells = len(net.nodes) * len(net.branches)
        return len(self.entries) / cells if cells else 0.0


@dataclass(frozen=True)
class Topology:
    closed_branches: frozenset[BranchId]
    parent: Mapping[NodeId, NodeId] = field(default_factory=dict)


def _dfs_paths(net: NetworkModel, start: NodeId):
    """Yield every simple branch path from ``start`` that stops at the first source met."""
    sources = net.source_set
    if start in sources:
        yield ()
        return
    visited = {start}
    path: list[BranchId] = []

    def walk(node):
        for nb, bid in net.neighbors(node):
            if nb in visited:
                continue
            path.append(bid)
            if nb in sources:
                yield tuple(path)
            else:
                visited.add(nb)
                yield from walk(nb)
                visited.discard(nb)
            path.pop()

    yield from walk(start)


def simple_paths_to_sources(net: NetworkModel, node: NodeId) -> set[tuple[BranchId, ...]]:
    """All simple paths (as branch sequences) from ``node`` to a source.

    A path ends at the first source it reaches: in a radial island the supply
    path of a node never crosses a second source.
    """
    if node not in net.nodes:
        raise KeyError(node)
    return set(_dfs_paths(net, node))


def n2b_support(net: NetworkModel) -> N2BSupport:
    entries: set[tuple[NodeId, BranchId]] = set()
    n_branches = len(net.branches)
    sources = net.source_set
    for node in net.nodes:
        if node in sources:
            continue
        marked: set[BranchId] = set()
        for path in _dfs_paths(net, node):
            marked.update(path)
            if len(marked) == n_branches:
                break
        entries.update((node, bid) for bid in marked)
    return N2BSupport(frozenset(entries))


def tree_path(topo: Topology, node: NodeId, limit: int | None = None) -> list[BranchId] | None:
    """Branches from ``node`` up the parent chain; None when the chain loops."""
    out: list[BranchId] = []
    seen = {node}
    cur = node
    while cur in topo.parent:
        nxt = topo.parent[cur]
        out.append(BranchId.of(cur, nxt))
        if nxt in seen:
            return None
        seen.add(nxt)
        cur = nxt
        if limit is not None and len(out) > limit:
            return None
    return out


def check_radial_forest(net: NetworkModel, topo: Topology, energized: Iterable[NodeId]) -> bool:
    """True iff the closed branches on ``energized`` form source-rooted radial islands."""
    energized = set(energized)
    sources = net.source_set
    closed = {b for b in topo.closed_branches if b.a in energized and b.b in energized}

    # union-find cycle test
    root = {n: n for n in energized}

    def find(n):
        while root[n] != n:
            root[n] = root[root[n]]
            n = root[n]
        return n

    for b in closed:
        ra, rb = find(b.a), find(b.b)
        if ra == rb:
            return False
        root[ra] = rb

    per_component: dict[NodeId, int] = {}
    for n in energized:
        per_component.setdefault(find(n), 0)
        if n in sources:
            per_component[find(n)] += 1
    if any(count != 1 for count in per_component.values()):
        return False

    parent_edges = set()
    for n in energized:
        if n in sources:
            if n in topo.parent:
                return False
            continue
        path = tree_path(topo, n, limit=len(energized))
        if path is None:
            return False
        end = n
        for b in path:
            if b not in closed:
                return False
            end = b.other(end)
        if end not in sources:
            return False
        parent_edges.add(BranchId.of(n, topo.parent[n]))
    return parent_edges == closed

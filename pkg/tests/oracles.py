"""Independent reference computations used by the tests.

Nothing here goes through the formulation or the lowering: the oracles
work on the network data directly, with exact fractions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from mgqubo.network import BranchId, NetworkModel


@dataclass(frozen=True)
class Plan:
    """A spanning forest rooted at the sources plus the set of restored loads."""

    closed: frozenset
    parent: tuple  # sorted (child, parent) pairs
    restored: frozenset
    objective: Fraction


def rooted_forests(net: NetworkModel):
    """Yield (closed, parent) for every branch subset forming source-rooted trees over all nodes."""
    sources = net.source_set
    branches = net.branch_ids
    for mask in range(1 << len(branches)):
        closed = [b for k, b in enumerate(branches) if mask >> k & 1]
        adj = {n: [] for n in net.nodes}
        for b in closed:
            adj[b.a].append(b.b)
            adj[b.b].append(b.a)
        parent = {}
        seen = set()
        ok = True
        for s in sources:
            if s in seen:
                ok = False  # two sources in one tree
                break
            seen.add(s)
            stack = [s]
            while stack and ok:
                n = stack.pop()
                for m in adj[n]:
                    if m == parent.get(n):
                        continue
                    if m in seen:
                        ok = False  # cycle, or a second source reached
                        break
                    seen.add(m)
                    parent[m] = n
                    stack.append(m)
            if not ok:
                break
        if ok and len(seen) == len(net.nodes):
            yield frozenset(closed), parent


def downstream_flows(net: NetworkModel, parent: dict, restored) -> dict:
    """Branch flows by summing restored loads below each branch of the rooted forest."""
    flows = {b: (Fraction(0), Fraction(0)) for b in net.branch_ids}
    for n in restored:
        cur = n
        while cur in parent:
            b = BranchId.of(cur, parent[cur])
            p, q = flows[b]
            flows[b] = (p + net.load_p(n), q + net.load_q(n))
            cur = parent[cur]
    return flows


def node_drops(net: NetworkModel, parent: dict, flows: dict) -> dict:
    drops = {}
    for n in net.nodes:
        total = Fraction(0)
        cur = n
        while cur in parent:
            br = net.branch(BranchId.of(cur, parent[cur]))
            p, q = flows[br.id]
            total += (br.r * p + br.x * q) / net.u_nominal
            cur = parent[cur]
        drops[n] = total
    return drops


def plan_is_secure(net: NetworkModel, closed, parent: dict, restored) -> bool:
    flows = downstream_flows(net, parent, restored)
    for j in net.sources:
        src = net.nodes[j].source
        own_p = net.load_p(j) if j in restored else 0
        own_q = net.load_q(j) if j in restored else 0
        p = own_p + sum(flows[b][0] for b in net.incident(j))
        q = own_q + sum(flows[b][1] for b in net.incident(j))
        if not (src.p_min <= p <= src.p_max and src.q_min <= q <= src.q_max):
            return False
    for br in net.branches:
        p, q = flows[br.id]
        if br.id not in closed and (p or q):
            return False
        if p > br.p_max or q > br.q_max:
            return False
    drops = node_drops(net, parent, flows)
    u_delta = net.effective_u_delta
    for h in net.loaded_nodes:
        limit = net.nodes[h].du_max + (0 if h in restored else u_delta)
        if drops[h] > limit:
            return False
    return True


def feasible_plans(net: NetworkModel) -> list[Plan]:
    loaded = net.loaded_nodes
    plans = []
    for closed, parent in rooted_forests(net):
        for k in range(len(loaded) + 1):
            for restored in itertools.combinations(loaded, k):
                if plan_is_secure(net, closed, parent, restored):
                    value = sum((net.weight(n) * net.load_p(n) for n in restored), Fraction(0))
                    plans.append(Plan(closed, tuple(sorted(parent.items())), frozenset(restored), value))
    return plans


def brute_force_optimum(net: NetworkModel) -> tuple[Fraction, list[Plan]]:
    plans = feasible_plans(net)
    best = max(p.objective for p in plans)
    return best, [p for p in plans if p.objective == best]


def paths_by_permutation(net: NetworkModel, start) -> set[tuple]:
    """Simple paths to the first source reached, by trying every ordered node sequence."""
    others = [n for n in net.nodes if n != start]
    sources = net.source_set
    if start in sources:
        return {()}
    found = set()
    for k in range(1, len(others) + 1):
        for seq in itertools.permutations(others, k):
            if seq[-1] not in sources or any(n in sources for n in seq[:-1]):
                continue
            walk = (start, *seq)
            try:
                found.add(tuple(_branch(net, a, b) for a, b in zip(walk, walk[1:])))
            except KeyError:
                pass
    return found


def _branch(net: NetworkModel, a, b) -> BranchId:
    bid = BranchId.of(a, b)
    net.branch(bid)
    return bid

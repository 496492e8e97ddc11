"""Decode bitstrings, rebuild flows and voltage drops, and check feasibility.

Feasibility is judged on the original constraint semantics with the
reconstructed physical quantities, never on the lowered penalty model.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Sequence

from .formulation import Alpha, Beta, Lambda, Pi, VariableRegistry
from .graphs import Topology, check_radial_forest, tree_path
from .network import BranchId, NetworkModel, NodeId
from .rational import to_json_number

ZERO = Fraction(0)


class LengthMismatch(ValueError):
    """Bitstring length differs from the registry size."""


@dataclass(frozen=True)
class Solution:
    topology: Topology
    restored: frozenset[NodeId]
    pi_matrix: frozenset[tuple[NodeId, BranchId]]
    flows: dict[BranchId, tuple[Fraction, Fraction]] = field(default_factory=dict)
    voltage_drop: dict[NodeId, Fraction] = field(default_factory=dict)
    objective_value: Fraction = ZERO
    feasible: bool | None = None
    violations: tuple[tuple[str, Fraction], ...] = ()
    # every (child, parent) choice that was set; a well-formed topology has one per child
    parent_choices: frozenset[tuple[NodeId, NodeId]] | None = None

    @property
    def choices(self) -> frozenset[tuple[NodeId, NodeId]]:
        if self.parent_choices is not None:
            return self.parent_choices
        return frozenset(self.topology.parent.items())

    @property
    def violation_sum(self) -> Fraction:
        return sum((m for _, m in self.violations), ZERO)

    def to_dict(self) -> dict:
        return {
            "closed_branches": sorted(str(b) for b in self.topology.closed_branches),
            "parent": dict(sorted(self.topology.parent.items())),
            "restored": sorted(self.restored),
            "pi": sorted(f"{n},{b}" for n, b in self.pi_matrix),
            "flows": {
                str(b): {"p": to_json_number(p), "q": to_json_number(q)}
                for b, (p, q) in sorted(self.flows.items())
            },
            "voltage_drop": {n: to_json_number(v) for n, v in sorted(self.voltage_drop.items())},
            "objective_value": to_json_number(self.objective_value),
            "feasible": self.feasible,
            "violation_sum": to_json_number(self.violation_sum),
            "violations": [[label, to_json_number(m)] for label, m in self.violations],
        }


@dataclass(frozen=True)
class Metrics:
    load_served_ratio: Fraction
    violation_sum: Fraction
    qubit_count_qmgf: int
    qubit_count_dmgf: int

    def to_dict(self) -> dict:
        return {
            "load_served_ratio": float(self.load_served_ratio),
            "violation_sum": to_json_number(self.violation_sum),
            "qubit_count_qmgf": self.qubit_count_qmgf,
            "qubit_count_dmgf": self.qubit_count_dmgf,
        }


def _restored_objective(net: NetworkModel, restored: Iterable[NodeId]) -> Fraction:
    return sum((net.weight(n) * net.load_p(n) for n in restored), ZERO)


def make_solution(net: NetworkModel, topo: Topology, restored: Iterable[NodeId],
                  pi: Iterable[tuple[NodeId, BranchId]], parent_choices=None) -> Solution:
    restored = frozenset(restored)
    choices = None if parent_choices is None else frozenset(parent_choices)
    return Solution(topo, restored, frozenset(pi), objective_value=_restored_objective(net, restored),
                    parent_choices=choices)


def decode(bits: str | Sequence[int], reg: VariableRegistry, net: NetworkModel) -> Solution:
    """Map a bitstring back to topology, restoration and path indicators.

    Variables fixed away before lowering take their fixed value.
    """
    if isinstance(bits, str):
        bits = [int(ch) for ch in bits.strip()]
    if len(bits) != len(reg):
        raise LengthMismatch(f"expected {len(reg)} bits, got {len(bits)}")
    values = dict(reg.fixed)
    values.update(zip(reg, (int(b) for b in bits)))

    closed = set()
    parent: dict[NodeId, NodeId] = {}
    choices = set()
    restored = set()
    pi = set()
    for desc, val in values.items():
        if not val:
            continue
        if isinstance(desc, Alpha):
            closed.add(desc.branch)
        elif isinstance(desc, Beta):
            parent[desc.child] = desc.parent
            choices.add((desc.child, desc.parent))
        elif isinstance(desc, Lambda):
            restored.add(desc.node)
        elif isinstance(desc, Pi):
            pi.add((desc.node, desc.branch))
    return make_solution(net, Topology(frozenset(closed), parent), restored, pi, choices)


def encode(sol: Solution, reg: VariableRegistry) -> list[int]:
    """Primary bits of ``sol`` in registry order; AND and slack bits are left 0."""
    bits = [0] * len(reg)
    for idx, desc in enumerate(reg):
        if isinstance(desc, Alpha):
            bits[idx] = int(desc.branch in sol.topology.closed_branches)
        elif isinstance(desc, Beta):
            bits[idx] = int(sol.topology.parent.get(desc.child) == desc.parent)
        elif isinstance(desc, Lambda):
            bits[idx] = int(desc.node in sol.restored)
        elif isinstance(desc, Pi):
            bits[idx] = int((desc.node, desc.branch) in sol.pi_matrix)
    return bits


def compute_flows(sol: Solution, net: NetworkModel) -> Solution:
    """Branch flows as sums of restored loads whose supply path crosses the branch."""
    flows: dict[BranchId, tuple[Fraction, Fraction]] = {}
    drop_on: dict[BranchId, Fraction] = {}
    for br in net.branches:
        p = q = ZERO
        for n in sol.restored:
            if (n, br.id) in sol.pi_matrix:
                p += net.load_p(n)
                q += net.load_q(n)
        flows[br.id] = (p, q)
        drop_on[br.id] = (br.r * p + br.x * q) / net.u_nominal
    drops = {
        n: sum((drop_on[b] for b in net.branch_ids if (n, b) in sol.pi_matrix), ZERO)
        for n in net.nodes
    }
    return replace(sol, flows=flows, voltage_drop=drops,
                   objective_value=_restored_objective(net, sol.restored))


def verify_feasibility(sol: Solution, net: NetworkModel) -> Solution:
    """Evaluate every original constraint plus the independent radial and path checks."""
    if not sol.flows and net.branches:
        sol = compute_flows(sol, net)
    topo = sol.topology
    sources = net.source_set
    closed = topo.closed_branches
    pi = sol.pi_matrix
    out: list[tuple[str, Fraction]] = []

    def record(label: str, amount) -> None:
        amount = Fraction(amount)
        if amount > 0:
            out.append((label, amount))

    # branch status and parent choice
    choices = sol.choices
    for bid in net.branch_ids:
        directed = int((bid.a, bid.b) in choices) + int((bid.b, bid.a) in choices)
        record(f"status[{bid}]", abs(int(bid in closed) - directed))
    for n in net.nodes:
        picked = [p for c, p in choices if c == n]
        if n in sources:
            record(f"no-parent[{n}]", len(picked))
            continue
        adjacent = {nb for nb, _ in net.neighbors(n)}
        stray = sum(1 for p in picked if p not in adjacent)
        record(f"one-parent[{n}]", abs(len(picked) - stray - 1) + stray)

    # path indicator consistency
    for ih in net.branch_ids:
        if ih not in closed:
            continue
        for jk in net.branch_ids:
            if jk != ih:
                record(f"share[{ih}|{jk}]", int(((ih.a, jk) in pi) != ((ih.b, jk) in pi)))
    for ih in net.branch_ids:
        for node, other in ((ih.a, ih.b), (ih.b, ih.a)):
            record(f"through[{node},{ih}]", int(((node, ih) in pi) != ((node, other) in choices)))
    for s in sources:
        record(f"source-path[{s}]", sum(1 for n, _ in pi if n == s))

    # security limits with reconstructed flows
    for j in net.sources:
        src = net.nodes[j].source
        local = j in sol.restored
        p = (net.load_p(j) if local else ZERO) + sum((sol.flows[b][0] for b in net.incident(j)), ZERO)
        q = (net.load_q(j) if local else ZERO) + sum((sol.flows[b][1] for b in net.incident(j)), ZERO)
        record(f"src-p-max[{j}]", p - src.p_max)
        record(f"src-p-min[{j}]", src.p_min - p)
        record(f"src-q-max[{j}]", q - src.q_max)
        record(f"src-q-min[{j}]", src.q_min - q)
    for br in net.branches:
        p, q = sol.flows[br.id]
        on = br.id in closed
        record(f"flow-p[{br.id}]", p - (br.p_max if on else ZERO))
        record(f"flow-q[{br.id}]", q - (br.q_max if on else ZERO))
    u_delta = net.effective_u_delta
    for h in net.loaded_nodes:
        relax = ZERO if h in sol.restored else u_delta
        record(f"voltage[{h}]", sol.voltage_drop[h] - net.nodes[h].du_max - relax)

    # independent structural checks
    if not check_radial_forest(net, topo, net.nodes):
        record("radial-forest", 1)
    for n in sorted(sol.restored):
        if n in sources:
            continue
        path = tree_path(topo, n, limit=len(net.nodes))
        actual = set(path) if path is not None else set()
        row = {b for m, b in pi if m == n}
        record(f"path[{n}]", len(row ^ actual) if path is not None else 1)

    return replace(sol, feasible=not out, violations=tuple(out))


def load_served_ratio(sol: Solution, net: NetworkModel) -> Fraction:
    """Restored active load as a percentage of all active load (100 when there is none)."""
    total = net.total_load
    if total == 0:
        return Fraction(100)
    served = sum((net.load_p(n) for n in sol.restored), ZERO)
    return 100 * served / total


def compute_metrics(sol: Solution, net: NetworkModel, qubits_qmgf: int, qubits_dmgf: int) -> Metrics:
    return Metrics(load_served_ratio(sol, net), sol.violation_sum, qubits_qmgf, qubits_dmgf)

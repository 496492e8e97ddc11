"""Binary program for microgrid formation.

Decision bits: branch status (alpha), parent relation (beta), load pickup
(lambda) and the node-to-branch path indicator (pi).  Every product of bits
that the flow, capacity and voltage constraints need is replaced by an
auxiliary AND bit, so all constraints handed to the lowering stage are
linear over the registry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .graphs import N2BSupport, Topology, n2b_support, tree_path
from .network import BranchId, NetworkModel, NodeId
from .rational import to_json_number


class Infeasible(ValueError):
    """A constraint can never be satisfied."""

    def __init__(self, label: str, detail: str = "never satisfiable"):
        self.label = label
        super().__init__(f"constraint {label}: {detail}")


# --------------------------------------------------------------------------
# variable descriptors
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Alpha:
    branch: BranchId

    @property
    def name(self) -> str:
        return f"alpha[{self.branch}]"


@dataclass(frozen=True)
class Beta:
    child: NodeId
    parent: NodeId

    @property
    def name(self) -> str:
        return f"beta[{self.child}->{self.parent}]"


@dataclass(frozen=True)
class Lambda:
    node: NodeId

    @property
    def name(self) -> str:
        return f"lambda[{self.node}]"


@dataclass(frozen=True)
class Pi:
    node: NodeId
    branch: BranchId

    @property
    def name(self) -> str:
        return f"pi[{self.node},{self.branch}]"


@dataclass(frozen=True)
class AuxAnd:
    """Bit standing for the product of two other variables."""

    factors: tuple

    @property
    def name(self) -> str:
        return "and(" + ",".join(f.name for f in self.factors) + ")"


@dataclass(frozen=True)
class SlackBit:
    constraint: str
    position: int

    @property
    def name(self) -> str:
        return f"slack[{self.constraint}#{self.position}]"


PRIMARY_KINDS = (Alpha, Beta, Lambda, Pi)


class VariableRegistry:
    """Bijection between variable descriptors and dense indices.

    ``fixed`` holds descriptors that were substituted away by a constant
    (e.g. a prescribed topology); decoding treats them as their value.
    """

    def __init__(self, descriptors: Iterable = (), fixed: Mapping | None = None,
                 shape: tuple[int, int] = (0, 0)):
        self._items: list = []
        self._index: dict = {}
        self.fixed: dict = dict(fixed or {})
        self.shape = shape
        for d in descriptors:
            self.add(d)

    def add(self, desc) -> int:
        if desc in self._index:
            raise ValueError(f"duplicate variable {desc.name}")
        self._index[desc] = len(self._items)
        self._items.append(desc)
        return self._index[desc]

    def index(self, desc) -> int:
        return self._index[desc]

    def get(self, desc) -> int | None:
        return self._index.get(desc)

    def __contains__(self, desc) -> bool:
        return desc in self._index

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, idx: int):
        return self._items[idx]

    def names(self) -> list[str]:
        return [d.name for d in self._items]

    def of_kind(self, kind) -> list:
        return [d for d in self._items if isinstance(d, kind)]

    def count(self, kind) -> int:
        return sum(1 for d in self._items if isinstance(d, kind))

    def extended(self, extra: Iterable) -> "VariableRegistry":
        return VariableRegistry([*self._items, *extra], self.fixed, self.shape)


# --------------------------------------------------------------------------
# linear expressions and constraints
# --------------------------------------------------------------------------


class LinearExpr:
    __slots__ = ("terms", "constant")

    def __init__(self, terms: Mapping[int, Fraction] | None = None, constant=0):
        self.terms: dict[int, Fraction] = {}
        self.constant = Fraction(constant)
        for idx, coef in (terms or {}).items():
            self.add(idx, coef)

    def add(self, idx: int, coef) -> "LinearExpr":
        coef = Fraction(coef)
        if coef == 0:
            return self
        new = self.terms.get(idx, Fraction(0)) + coef
        if new == 0:
            del self.terms[idx]
        else:
            self.terms[idx] = new
        return self

    def add_constant(self, value) -> "LinearExpr":
        self.constant += Fraction(value)
        return self

    def copy(self) -> "LinearExpr":
        out = LinearExpr()
        out.terms = dict(self.terms)
        out.constant = self.constant
        return out

    def scaled(self, factor) -> "LinearExpr":
        factor = Fraction(factor)
        out = LinearExpr()
        out.terms = {i: c * factor for i, c in self.terms.items()} if factor else {}
        out.constant = self.constant * factor
        return out

    def evaluate(self, bits: Sequence[int]) -> Fraction:
        return self.constant + sum((c for i, c in self.terms.items() if bits[i]), Fraction(0))

    def bounds(self) -> tuple[Fraction, Fraction]:
        """Minimum and maximum over all binary assignments."""
        lo = self.constant + sum((c for c in self.terms.values() if c < 0), Fraction(0))
        hi = self.constant + sum((c for c in self.terms.values() if c > 0), Fraction(0))
        return lo, hi

    def key(self) -> tuple:
        return tuple(sorted(self.terms.items())), self.constant

    def __eq__(self, other) -> bool:
        return isinstance(other, LinearExpr) and self.key() == other.key()

    def __repr__(self) -> str:
        parts = [f"{c}*x{i}" for i, c in sorted(self.terms.items())]
        return f"LinearExpr({' + '.join(parts) or '0'} + {self.constant})"


EQ = "=="
LE = "<="


@dataclass
class Constraint:
    """``lhs == 0`` or ``lhs <= 0``; the right-hand side is folded into the constant."""

    lhs: LinearExpr
    sense: str
    label: str

    def holds(self, bits: Sequence[int]) -> bool:
        value = self.lhs.evaluate(bits)
        return value == 0 if self.sense == EQ else value <= 0

    def violation(self, bits: Sequence[int]) -> Fraction:
        value = self.lhs.evaluate(bits)
        return abs(value) if self.sense == EQ else max(value, Fraction(0))


@dataclass
class BinaryProgram:
    registry: VariableRegistry
    constraints: list[Constraint]
    and_gates: list[tuple[int, tuple[int, int]]]
    objective: LinearExpr  # maximized
    network: NetworkModel | None = field(default=None, repr=False)

    def objective_value(self, bits: Sequence[int]) -> Fraction:
        return self.objective.evaluate(bits)

    def violations(self, bits: Sequence[int]) -> list[tuple[str, Fraction]]:
        out = [(c.label, c.violation(bits)) for c in self.constraints if not c.holds(bits)]
        for aux, (a, b) in self.and_gates:
            if bits[aux] != bits[a] * bits[b]:
                out.append((f"and[{self.registry[aux].name}]", Fraction(1)))
        return out

    def is_feasible(self, bits: Sequence[int]) -> bool:
        return not self.violations(bits)

    def fix(self, values: Mapping) -> "BinaryProgram":
        """Substitute constants for some variables (keys: descriptors or indices)."""
        return _fix_program(self, values)

    def to_dict(self) -> dict:
        return program_to_dict(self)


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------


def _voltage_coefficient(net: NetworkModel, bid: BranchId, node: NodeId) -> Fraction:
    br = net.branch(bid)
    return (br.r * net.load_p(node) + br.x * net.load_q(node)) / net.u_nominal


def build_variables(net: NetworkModel, support: N2BSupport) -> VariableRegistry:
    sources = net.source_set
    loaded = net.loaded_nodes
    reg = VariableRegistry(shape=(len(net.nodes), len(net.branches)))
    for bid in net.branch_ids:
        reg.add(Alpha(bid))
    for bid in net.branch_ids:
        if bid.a not in sources:
            reg.add(Beta(bid.a, bid.b))
        if bid.b not in sources:
            reg.add(Beta(bid.b, bid.a))
    for n in loaded:
        reg.add(Lambda(n))
    pis = [Pi(n, bid) for n in net.nodes for bid in net.branch_ids if (n, bid) in support]
    for p in pis:
        reg.add(p)

    # u = lambda_i * pi(i, jk): shared by source, branch and voltage rows
    loaded_set = set(loaded)
    for p in pis:
        if p.node in loaded_set:
            reg.add(AuxAnd((Lambda(p.node), p)))

    # v = pi(h, jk) * u(i, jk): voltage drop at h caused by load i on branch jk
    for h in loaded:
        for bid in net.branch_ids:
            if (h, bid) not in support:
                continue
            for i in loaded:
                if i == h or (i, bid) not in support:
                    continue
                if _voltage_coefficient(net, bid, i) == 0:
                    continue
                reg.add(AuxAnd((Pi(h, bid), _u(i, bid))))
    return reg


def _u(node: NodeId, bid: BranchId) -> AuxAnd:
    return AuxAnd((Lambda(node), Pi(node, bid)))


def _v(h: NodeId, node: NodeId, bid: BranchId) -> AuxAnd:
    return AuxAnd((Pi(h, bid), _u(node, bid)))


def radiality_constraints(net: NetworkModel, reg: VariableRegistry) -> list[Constraint]:
    out: list[Constraint] = []
    for bid in net.branch_ids:
        expr = LinearExpr().add(reg.index(Alpha(bid)), 1)
        for child, parent in ((bid.a, bid.b), (bid.b, bid.a)):
            idx = reg.get(Beta(child, parent))
            if idx is not None:
                expr.add(idx, -1)
        out.append(Constraint(expr, EQ, f"status[{bid}]"))
    for n in net.nodes:
        if n in net.source_set:
            continue
        expr = LinearExpr(constant=-1)
        for nb, _ in net.neighbors(n):
            expr.add(reg.index(Beta(n, nb)), 1)
        out.append(Constraint(expr, EQ, f"one-parent[{n}]"))
    return out


def n2b_constraints(net: NetworkModel, support: N2BSupport, reg: VariableRegistry) -> list[Constraint]:
    out: list[Constraint] = []
    for ih in net.branch_ids:
        alpha = reg.index(Alpha(ih))
        for jk in net.branch_ids:
            if jk == ih:
                continue
            pa = reg.get(Pi(ih.a, jk))
            pb = reg.get(Pi(ih.b, jk))
            if pa is None and pb is None:
                continue
            for upper, lower, tag in ((pa, pb, ih.a), (pb, pa, ih.b)):
                # pi_upper - pi_lower - (1 - alpha) <= 0
                expr = LinearExpr(constant=-1).add(alpha, 1)
                if upper is not None:
                    expr.add(upper, 1)
                if lower is not None:
                    expr.add(lower, -1)
                out.append(Constraint(expr, LE, f"share[{ih}|{jk}|{tag}]"))
    for ih in net.branch_ids:
        for node, other in ((ih.a, ih.b), (ih.b, ih.a)):
            pi = reg.get(Pi(node, ih))
            beta = reg.get(Beta(node, other))
            if pi is None and beta is None:
                continue
            expr = LinearExpr()
            if pi is not None:
                expr.add(pi, 1)
            if beta is not None:
                expr.add(beta, -1)
            out.append(Constraint(expr, EQ, f"through[{node},{ih}]"))
    return out


def _branch_sum(net, support, reg, bid: BranchId, quantity) -> LinearExpr:
    expr = LinearExpr()
    for i in net.loaded_nodes:
        if (i, bid) in support:
            expr.add(reg.index(_u(i, bid)), quantity(i))
    return expr


def security_constraints(net: NetworkModel, support: N2BSupport, reg: VariableRegistry) -> list[Constraint]:
    out: list[Constraint] = []
    for j in net.sources:
        src = net.nodes[j].source
        for kind, quantity, lo, hi in (
            ("p", net.load_p, src.p_min, src.p_max),
            ("q", net.load_q, src.q_min, src.q_max),
        ):
            served = LinearExpr()
            lam = reg.get(Lambda(j))
            if lam is not None:
                served.add(lam, quantity(j))
            for bid in net.incident(j):
                for idx, coef in _branch_sum(net, support, reg, bid, quantity).terms.items():
                    served.add(idx, coef)
            out.append(Constraint(served.copy().add_constant(-hi), LE, f"src-{kind}-max[{j}]"))
            out.append(Constraint(served.scaled(-1).add_constant(lo), LE, f"src-{kind}-min[{j}]"))

    for br in net.branches:
        alpha = reg.index(Alpha(br.id))
        for kind, quantity, limit in (("p", net.load_p, br.p_max), ("q", net.load_q, br.q_max)):
            expr = _branch_sum(net, support, reg, br.id, quantity).add(alpha, -limit)
            out.append(Constraint(expr, LE, f"flow-{kind}[{br.id}]"))

    u_delta = net.effective_u_delta
    for h in net.loaded_nodes:
        expr = LinearExpr(constant=-(net.nodes[h].du_max + u_delta))
        expr.add(reg.index(Lambda(h)), u_delta)
        for bid in net.branch_ids:
            if (h, bid) not in support:
                continue
            for i in net.loaded_nodes:
                if (i, bid) not in support:
                    continue
                coef = _voltage_coefficient(net, bid, i)
                if coef == 0:
                    continue
                aux = _u(h, bid) if i == h else _v(h, i, bid)
                expr.add(reg.index(aux), coef)
        out.append(Constraint(expr, LE, f"voltage[{h}]"))
    return out


def objective(net: NetworkModel, reg: VariableRegistry) -> LinearExpr:
    expr = LinearExpr()
    for n in net.loaded_nodes:
        expr.add(reg.index(Lambda(n)), net.weight(n) * net.load_p(n))
    return expr


def _gates(reg: VariableRegistry) -> list[tuple[int, tuple[int, int]]]:
    return [
        (idx, (reg.index(d.factors[0]), reg.index(d.factors[1])))
        for idx, d in enumerate(reg)
        if isinstance(d, AuxAnd)
    ]


def assemble(net: NetworkModel, support: N2BSupport | None = None) -> BinaryProgram:
    """Full formulation: radial topology, path matrix, security limits, weighted pickup."""
    if support is None:
        support = n2b_support(net)
    reg = build_variables(net, support)
    constraints = (
        radiality_constraints(net, reg)
        + n2b_constraints(net, support, reg)
        + security_constraints(net, support, reg)
    )
    return BinaryProgram(reg, constraints, _gates(reg), objective(net, reg), net)


def topology_values(net: NetworkModel, topo: Topology, support: N2BSupport | None = None) -> dict:
    """Values of alpha, beta and pi implied by a radial topology."""
    if support is None:
        support = n2b_support(net)
    values: dict = {}
    for bid in net.branch_ids:
        values[Alpha(bid)] = int(bid in topo.closed_branches)
    for n in net.nodes:
        if n in net.source_set:
            continue
        for nb, _ in net.neighbors(n):
            values[Beta(n, nb)] = int(topo.parent.get(n) == nb)
    for n in net.nodes:
        if n in net.source_set:
            continue
        path = set(tree_path(topo, n) or ())
        for bid in net.branch_ids:
            if (n, bid) in support:
                values[Pi(n, bid)] = int(bid in path)
    return values


def restoration_program(net: NetworkModel, topo: Topology) -> BinaryProgram:
    """Restoration-only program: topology bits fixed, load pickup left free."""
    support = n2b_support(net)
    bp = assemble(net, support)
    return bp.fix(topology_values(net, topo, support))


# --------------------------------------------------------------------------
# substitution
# --------------------------------------------------------------------------


def _fix_program(bp: BinaryProgram, values: Mapping) -> BinaryProgram:
    reg = bp.registry
    fixed: dict[int, int] = {}
    for key, val in values.items():
        idx = key if isinstance(key, int) else reg.index(key)
        fixed[idx] = int(val)

    gates = dict(bp.and_gates)
    extra: list[Constraint] = []
    changed = True
    while changed:
        changed = False
        for aux, (a, b) in list(gates.items()):
            fa, fb, fy = fixed.get(a), fixed.get(b), fixed.get(aux)
            label = f"and[{reg[aux].name}]"
            if fa is not None and fb is not None:
                if fy is not None and fy != fa * fb:
                    raise Infeasible(label, "fixed product disagrees with its factors")
                fixed[aux] = fa * fb
            elif fa == 0 or fb == 0:
                if fy == 1:
                    raise Infeasible(label, "product fixed to 1 with a zero factor")
                fixed[aux] = 0
            elif fy == 1:
                fixed[a] = fixed[b] = 1
            elif fy == 0 and (fa == 1 or fb == 1):
                fixed[b if fa == 1 else a] = 0
            elif fy == 0:
                extra.append(Constraint(LinearExpr({a: 1, b: 1}, -1), LE, label))
            elif (fa == 1 or fb == 1) and a != b:
                # y = 1 * f: a gate with a repeated factor enforces y == f
                free = b if fa == 1 else a
                gates[aux] = (free, free)
                changed = True
                continue
            else:
                continue
            del gates[aux]
            changed = True

    keep = [i for i in range(len(reg)) if i not in fixed]
    remap = {old: new for new, old in enumerate(keep)}
    new_fixed = dict(reg.fixed)
    new_fixed.update({reg[i]: v for i, v in fixed.items()})
    new_reg = VariableRegistry([reg[i] for i in keep], new_fixed, reg.shape)

    def substitute(expr: LinearExpr) -> LinearExpr:
        out = LinearExpr(constant=expr.constant)
        for idx, coef in expr.terms.items():
            if idx in fixed:
                out.add_constant(coef * fixed[idx])
            else:
                out.add(remap[idx], coef)
        return out

    constraints: list[Constraint] = []
    for con in bp.constraints + extra:
        lhs = substitute(con.lhs)
        if not lhs.terms:
            ok = lhs.constant == 0 if con.sense == EQ else lhs.constant <= 0
            if not ok:
                raise Infeasible(con.label, "violated by the fixed values")
            continue
        constraints.append(Constraint(lhs, con.sense, con.label))
    new_gates = [(remap[aux], (remap[a], remap[b])) for aux, (a, b) in gates.items()]
    return BinaryProgram(new_reg, constraints, new_gates, substitute(bp.objective), bp.network)


# --------------------------------------------------------------------------
# debug dump
# --------------------------------------------------------------------------


def _expr_dict(expr: LinearExpr) -> dict:
    return {
        "terms": [[i, to_json_number(c)] for i, c in sorted(expr.terms.items())],
        "constant": to_json_number(expr.constant),
    }


def program_to_dict(bp: BinaryProgram) -> dict:
    return {
        "variables": bp.registry.names(),
        "fixed": {d.name: v for d, v in sorted(bp.registry.fixed.items(), key=lambda kv: kv[0].name)},
        "constraints": [
            {"label": c.label, "sense": c.sense, **_expr_dict(c.lhs)} for c in bp.constraints
        ],
        "and_gates": [[aux, [a, b]] for aux, (a, b) in bp.and_gates],
        "objective": _expr_dict(bp.objective),
    }


def program_to_json(bp: BinaryProgram) -> str:
    return json.dumps(program_to_dict(bp), indent=2) + "\n"

"""Distribution-network instances: domain types, JSON ingestion and validation.

All electrical quantities are per-unit on a common base and held as exact
``Fraction`` values parsed from their decimal text, so that later decimal
scaling of the constraints is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping

from .rational import as_fraction, format_number

NodeId = str


class ParseError(ValueError):
    """Instance text is not well-formed JSON or misses/mistypes a field."""


class ValidationError(ValueError):
    """Instance parsed but violates one or more model invariants."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True, order=True)
class BranchId:
    """Unordered node pair, stored with endpoints in sorted order."""

    a: NodeId
    b: NodeId

    @classmethod
    def of(cls, u: NodeId, v: NodeId) -> "BranchId":
        return cls(u, v) if u <= v else cls(v, u)

    def other(self, node: NodeId) -> NodeId:
        if node == self.a:
            return self.b
        if node == self.b:
            return self.a
        raise KeyError(node)

    def __contains__(self, node: object) -> bool:
        return node == self.a or node == self.b

    def __str__(self) -> str:
        return f"{self.a}-{self.b}"


@dataclass(frozen=True)
class Load:
    p_active: Fraction
    q_reactive: Fraction
    weight: Fraction = Fraction(1)

    @property
    def is_empty(self) -> bool:
        return self.p_active + self.q_reactive == 0


@dataclass(frozen=True)
class Source:
    p_min: Fraction
    p_max: Fraction
    q_min: Fraction
    q_max: Fraction


@dataclass(frozen=True)
class Node:
    id: NodeId
    du_max: Fraction
    load: Load | None = None
    source: Source | None = None


@dataclass(frozen=True)
class Branch:
    id: BranchId
    r: Fraction
    x: Fraction
    p_max: Fraction
    q_max: Fraction


@dataclass(frozen=True)
class NetworkModel:
    """A problem instance. Build through :func:`load_network` or :func:`make_network`."""

    nodes: Mapping[NodeId, Node]
    branches: tuple[Branch, ...]
    u_nominal: Fraction = Fraction(1)
    u_delta: Fraction | None = None
    name: str = ""
    _adjacency: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        adj: dict[NodeId, list[BranchId]] = {n: [] for n in self.nodes}
        for br in self.branches:
            for end in (br.id.a, br.id.b):
                adj.setdefault(end, []).append(br.id)
        object.__setattr__(self, "_adjacency", adj)

    @property
    def source_set(self) -> frozenset[NodeId]:
        return frozenset(n for n, node in self.nodes.items() if node.source is not None)

    @property
    def sources(self) -> list[NodeId]:
        return [n for n, node in self.nodes.items() if node.source is not None]

    @property
    def loaded_nodes(self) -> list[NodeId]:
        """Nodes whose load is non-empty, in declaration order."""
        return [n for n, node in self.nodes.items() if node.load is not None and not node.load.is_empty]

    @property
    def branch_ids(self) -> list[BranchId]:
        return [br.id for br in self.branches]

    def branch(self, bid: BranchId) -> Branch:
        for br in self.branches:
            if br.id == bid:
                return br
        raise KeyError(str(bid))

    def incident(self, node: NodeId) -> list[BranchId]:
        return list(self._adjacency.get(node, ()))

    def neighbors(self, node: NodeId) -> Iterator[tuple[NodeId, BranchId]]:
        for bid in self._adjacency.get(node, ()):
            yield bid.other(node), bid

    def load_p(self, node: NodeId) -> Fraction:
        load = self.nodes[node].load
        return load.p_active if load is not None else Fraction(0)

    def load_q(self, node: NodeId) -> Fraction:
        load = self.nodes[node].load
        return load.q_reactive if load is not None else Fraction(0)

    def weight(self, node: NodeId) -> Fraction:
        load = self.nodes[node].load
        return load.weight if load is not None else Fraction(0)

    @property
    def effective_u_delta(self) -> Fraction:
        if self.u_delta is not None:
            return self.u_delta
        return max((n.du_max for n in self.nodes.values()), default=Fraction(0))

    @property
    def total_load(self) -> Fraction:
        return sum((self.load_p(n) for n in self.nodes), Fraction(0))


def make_network(nodes, branches, u_nominal=1, u_delta=None, name: str = "") -> NetworkModel:
    """Convenience constructor used by tests and fixture generators."""
    node_map = {n.id: n for n in nodes}
    return NetworkModel(
        nodes=node_map,
        branches=tuple(branches),
        u_nominal=as_fraction(u_nominal),
        u_delta=None if u_delta is None else as_fraction(u_delta),
        name=name,
    )


def validate(net: NetworkModel) -> list[str]:
    """Return one description per violated invariant; empty when the model is sound."""
    problems: list[str] = []
    if not net.nodes:
        return ["no nodes"]
    if not net.source_set:
        problems.append("no source node")
    if net.u_nominal <= 0:
        problems.append("u_nominal must be positive")

    for nid, node in net.nodes.items():
        if node.du_max <= 0:
            problems.append(f"du_max must be positive at {nid}")
        if node.load is not None:
            ld = node.load
            if ld.p_active < 0 or ld.q_reactive < 0:
                problems.append(f"negative load at {nid}")
            if ld.weight < 0:
                problems.append(f"negative load weight at {nid}")
        if node.source is not None:
            src = node.source
            if src.p_min > src.p_max:
                problems.append(f"source p_min > p_max at {nid}")
            if src.q_min > src.q_max:
                problems.append(f"source q_min > q_max at {nid}")

    seen: set[BranchId] = set()
    usable: list[BranchId] = []
    for br in net.branches:
        bid = br.id
        if bid.a == bid.b:
            problems.append(f"branch {bid} has identical endpoints")
            continue
        missing = [n for n in (bid.a, bid.b) if n not in net.nodes]
        if missing:
            problems.append(f"branch {bid} references undeclared node {', '.join(missing)}")
            continue
        if bid in seen:
            problems.append(f"parallel branch {bid}")
            continue
        seen.add(bid)
        usable.append(bid)
        if br.r < 0 or br.x < 0:
            problems.append(f"negative impedance on branch {bid}")
        if br.p_max <= 0 or br.q_max <= 0:
            problems.append(f"non-positive flow limit on branch {bid}")

    # connectivity over the well-formed branches
    adj: dict[NodeId, set[NodeId]] = {n: set() for n in net.nodes}
    for bid in usable:
        adj[bid.a].add(bid.b)
        adj[bid.b].add(bid.a)
    start = next(iter(net.nodes))
    reached = {start}
    stack = [start]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in reached:
                reached.add(nb)
                stack.append(nb)
    if len(reached) != len(net.nodes):
        problems.append("graph not connected")

    du_top = max(n.du_max for n in net.nodes.values())
    if net.u_delta is not None and net.u_delta < du_top:
        problems.append("u_delta smaller than the largest du_max")
    return problems


# --------------------------------------------------------------------------
# JSON instance format
# --------------------------------------------------------------------------


def _number(obj: Mapping, key: str, where: str, default=None) -> Fraction:
    if key not in obj:
        if default is not None:
            return Fraction(default)
        raise ParseError(f"{where}: missing field '{key}'")
    value = obj[key]
    try:
        return as_fraction(value)
    except (TypeError, ValueError, ZeroDivisionError):
        raise ParseError(f"{where}.{key}: expected an exact number, got {value!r}") from None


def _mapping(obj, where: str) -> Mapping:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object")
    return obj


def load_network(text: str) -> NetworkModel:
    """Parse and validate an instance file.

    Raises ParseError on syntax or schema problems and ValidationError when the
    parsed model breaks an invariant.
    """
    try:
        doc = json.loads(text, parse_float=Fraction, parse_int=Fraction)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    doc = _mapping(doc, "instance")

    base = _mapping(doc.get("base", {}), "base")
    u_nominal = _number(base, "u_nominal", "base", default=1)
    u_delta = _number(base, "u_delta", "base") if "u_delta" in base else None

    raw_nodes = doc.get("nodes")
    if not isinstance(raw_nodes, list):
        raise ParseError("nodes: expected a list")
    nodes: list[Node] = []
    ids: set[str] = set()
    for k, raw in enumerate(raw_nodes):
        where = f"nodes[{k}]"
        raw = _mapping(raw, where)
        nid = raw.get("id")
        if not isinstance(nid, str) or not nid:
            raise ParseError(f"{where}.id: expected a non-empty string")
        if nid in ids:
            raise ValidationError([f"duplicate node id {nid}"])
        ids.add(nid)
        load = source = None
        if raw.get("load") is not None:
            ld = _mapping(raw["load"], f"{where}.load")
            load = Load(
                _number(ld, "p", f"{where}.load"),
                _number(ld, "q", f"{where}.load", default=0),
                _number(ld, "w", f"{where}.load", default=1),
            )
        if raw.get("source") is not None:
            sr = _mapping(raw["source"], f"{where}.source")
            source = Source(
                _number(sr, "p_min", f"{where}.source"),
                _number(sr, "p_max", f"{where}.source"),
                _number(sr, "q_min", f"{where}.source"),
                _number(sr, "q_max", f"{where}.source"),
            )
        nodes.append(Node(nid, _number(raw, "du_max", where), load, source))

    raw_branches = doc.get("branches", [])
    if not isinstance(raw_branches, list):
        raise ParseError("branches: expected a list")
    branches: list[Branch] = []
    for k, raw in enumerate(raw_branches):
        where = f"branches[{k}]"
        raw = _mapping(raw, where)
        ends = []
        for key in ("from", "to"):
            val = raw.get(key)
            if not isinstance(val, str):
                raise ParseError(f"{where}.{key}: expected a node id string")
            ends.append(val)
        branches.append(
            Branch(
                BranchId.of(*ends),
                _number(raw, "r", where),
                _number(raw, "x", where),
                _number(raw, "p_max", where),
                _number(raw, "q_max", where),
            )
        )

    name = doc.get("name", "")
    if not isinstance(name, str):
        raise ParseError("name: expected a string")
    net = NetworkModel({n.id: n for n in nodes}, tuple(branches), u_nominal, u_delta, name)
    problems = validate(net)
    if problems:
        raise ValidationError(problems)
    return net


class _Raw(str):
    """Marker for pre-rendered JSON number literals."""


def _num(value: Fraction):
    text = format_number(value)
    return _Raw(text) if "/" not in text else text


def network_to_dict(net: NetworkModel) -> dict:
    base = {"u_nominal": _num(net.u_nominal)}
    if net.u_delta is not None:
        base["u_delta"] = _num(net.u_delta)
    nodes = []
    for node in net.nodes.values():
        entry: dict = {"id": node.id, "du_max": _num(node.du_max)}
        if node.load is not None:
            entry["load"] = {
                "p": _num(node.load.p_active),
                "q": _num(node.load.q_reactive),
                "w": _num(node.load.weight),
            }
        if node.source is not None:
            s = node.source
            entry["source"] = {
                "p_min": _num(s.p_min),
                "p_max": _num(s.p_max),
                "q_min": _num(s.q_min),
                "q_max": _num(s.q_max),
            }
        nodes.append(entry)
    branches = [
        {
            "from": br.id.a,
            "to": br.id.b,
            "r": _num(br.r),
            "x": _num(br.x),
            "p_max": _num(br.p_max),
            "q_max": _num(br.q_max),
        }
        for br in net.branches
    ]
    doc: dict = {}
    if net.name:
        doc["name"] = net.name
    doc.update(base=base, nodes=nodes, branches=branches)
    return doc


def _render(obj, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(obj, _Raw):
        return str(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(k)}: {_render(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        items = [f"{pad}  {_render(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    return json.dumps(obj)


def serialize_network(net: NetworkModel) -> str:
    """Render the instance as JSON text with exact decimal literals."""
    return _render(network_to_dict(net)) + "\n"

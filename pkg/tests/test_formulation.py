import json
import random
from fractions import Fraction

import pytest

from mgqubo.fixtures import generate, make_fixture
from mgqubo.formulation import (
    EQ,
    LE,
    Alpha,
    AuxAnd,
    Beta,
    Infeasible,
    Lambda,
    LinearExpr,
    Pi,
    assemble,
    build_variables,
    n2b_constraints,
    objective,
    program_to_json,
    radiality_constraints,
    restoration_program,
    security_constraints,
    topology_values,
)
from mgqubo.graphs import Topology, n2b_support
from mgqubo.network import Branch, BranchId, Load, Node, Source, make_network
from conftest import ORACLE_FIXTURES

B = BranchId.of
F = Fraction


def _by_label(constraints):
    return {c.label: c for c in constraints}


def _named(expr, reg):
    return {reg[i].name: c for i, c in expr.terms.items()}, expr.constant


def test_line3_registry(line3):
    reg = build_variables(line3, n2b_support(line3))
    assert reg.count(Alpha) == 2
    assert set(reg.of_kind(Beta)) == {Beta("n2", "n1"), Beta("n2", "n3"), Beta("n3", "n2")}
    assert reg.count(Lambda) == 2
    assert reg.count(Pi) == 3
    assert Pi("n2", B("n2", "n3")) not in reg
    # one u per (loaded node, supported branch); v only where two loads share a branch
    assert reg.count(AuxAnd) == 3 + 2
    assert sum(reg.count(k) for k in (Alpha, Beta, Lambda, Pi)) == 10


def test_triangle_registry(triangle):
    reg = build_variables(triangle, n2b_support(triangle))
    assert [reg.count(k) for k in (Alpha, Beta, Lambda, Pi)] == [3, 4, 2, 6]


def test_star_registry():
    net = generate("star", 4, 0)
    reg = build_variables(net, n2b_support(net))
    assert [reg.count(k) for k in (Alpha, Beta, Lambda, Pi)] == [3, 3, 3, 3]


def test_registry_order_is_stable(line3):
    a = build_variables(line3, n2b_support(line3)).names()
    b = build_variables(line3, n2b_support(line3)).names()
    assert a == b
    assert a[:2] == ["alpha[n1-n2]", "alpha[n2-n3]"]


def test_no_loads_gives_zero_objective():
    nodes = [Node("s", F("0.05"), source=Source(F(0), F(1), F(0), F(1))), Node("a", F("0.05"))]
    net = make_network(nodes, [Branch(B("s", "a"), F("0.01"), F("0.01"), F(1), F(1))])
    bp = assemble(net)
    assert bp.registry.count(Lambda) == 0
    assert bp.objective.terms == {} and bp.objective.constant == 0


def test_radiality_rows(line3):
    bp = assemble(line3)
    rows = _by_label(radiality_constraints(line3, bp.registry))
    terms, const = _named(rows["one-parent[n2]"].lhs, bp.registry)
    assert terms == {"beta[n2->n1]": 1, "beta[n2->n3]": 1} and const == -1
    terms, const = _named(rows["status[n1-n2]"].lhs, bp.registry)
    assert terms == {"alpha[n1-n2]": 1, "beta[n2->n1]": -1} and const == 0
    assert rows["status[n1-n2]"].sense == EQ


def test_branch_between_sources_is_forced_open():
    net = generate("line", 2, 0, sources=2)
    bp = assemble(net)
    row = _by_label(bp.constraints)["status[n1-n2]"]
    assert _named(row.lhs, bp.registry) == ({"alpha[n1-n2]": 1}, 0)


def test_n2b_rows(line3):
    bp = assemble(line3)
    rows = _by_label(n2b_constraints(line3, n2b_support(line3), bp.registry))
    terms, const = _named(rows["through[n3,n2-n3]"].lhs, bp.registry)
    assert terms == {"pi[n3,n2-n3]": 1, "beta[n3->n2]": -1} and const == 0
    terms, const = _named(rows["share[n2-n3|n1-n2|n3]"].lhs, bp.registry)
    assert terms == {"pi[n3,n1-n2]": 1, "pi[n2,n1-n2]": -1, "alpha[n2-n3]": 1} and const == -1
    terms, const = _named(rows["share[n2-n3|n1-n2|n2]"].lhs, bp.registry)
    assert terms == {"pi[n2,n1-n2]": 1, "pi[n3,n1-n2]": -1, "alpha[n2-n3]": 1} and const == -1
    assert not any(isinstance(d, Pi) and d.node == "n1" for d in bp.registry)


def test_branch_flow_row(line3):
    bp = assemble(line3)
    rows = _by_label(security_constraints(line3, n2b_support(line3), bp.registry))
    terms, const = _named(rows["flow-p[n1-n2]"].lhs, bp.registry)
    assert terms == {
        "and(lambda[n2],pi[n2,n1-n2])": F(1),
        "and(lambda[n3],pi[n3,n1-n2])": F(1, 2),
        "alpha[n1-n2]": F(-2),
    }
    assert rows["flow-p[n1-n2]"].sense == LE and const == 0


def test_voltage_row(line3):
    bp = assemble(line3)
    row = _by_label(bp.constraints)["voltage[n3]"]
    terms, const = _named(row.lhs, bp.registry)
    # drop coefficients (r P + x Q) / U0 for n3's own load on both branches, and n2's load on n1-n2
    assert terms == {
        "lambda[n3]": F("0.05"),
        "and(lambda[n3],pi[n3,n1-n2])": F("0.009"),
        "and(lambda[n3],pi[n3,n2-n3])": F("0.009"),
        "and(pi[n3,n1-n2],and(lambda[n2],pi[n2,n1-n2]))": F("0.02"),
    }
    assert const == -F("0.1")


def test_source_rows(line3):
    bp = assemble(line3)
    rows = _by_label(bp.constraints)
    terms, const = _named(rows["src-p-max[n1]"].lhs, bp.registry)
    assert terms == {"and(lambda[n2],pi[n2,n1-n2])": 1, "and(lambda[n3],pi[n3,n1-n2])": F(1, 2)}
    assert const == -2
    terms, const = _named(rows["src-p-min[n1]"].lhs, bp.registry)
    assert const == 0 and all(c < 0 for c in terms.values())


def test_objective(line3):
    bp = assemble(line3)
    assert _named(objective(line3, bp.registry), bp.registry) == ({"lambda[n2]": 1, "lambda[n3]": 1}, 0)


def test_program_json_dump(line3):
    doc = json.loads(program_to_json(assemble(line3)))
    assert doc["variables"][0] == "alpha[n1-n2]"
    assert {c["label"] for c in doc["constraints"]} >= {"voltage[n3]", "flow-q[n2-n3]"}
    assert len(doc["and_gates"]) == 5


def _values_for(net, topo, restored, bp):
    values = topology_values(net, topo)
    values.update({Lambda(n): int(n in restored) for n in net.loaded_nodes})
    bits = [0] * len(bp.registry)
    for d, v in values.items():
        bits[bp.registry.index(d)] = v
    for y, (a, b) in sorted(bp.and_gates):
        bits[y] = bits[a] * bits[b]
    return bits


def test_gate_soundness_reproduces_products():
    # with aux bits equal to their products, each security row equals its cubic form
    net = make_fixture("ring5-0")
    bp = assemble(net)
    reg = bp.registry
    rng = random.Random(3)
    for _ in range(50):
        bits = [rng.randint(0, 1) for _ in range(len(reg))]
        for y, (a, b) in sorted(bp.and_gates):
            bits[y] = bits[a] * bits[b]
        for con in bp.constraints:
            if not con.label.startswith("voltage["):
                continue
            h = con.label[len("voltage["):-1]
            val = lambda d: bits[reg.index(d)] if d in reg else 0  # noqa: E731
            expected = -(net.nodes[h].du_max + net.effective_u_delta) + net.effective_u_delta * val(Lambda(h))
            for bid in net.branch_ids:
                br = net.branch(bid)
                for i in net.loaded_nodes:
                    coef = br.r * net.load_p(i) + br.x * net.load_q(i)
                    expected += coef * val(Pi(h, bid)) * val(Lambda(i)) * val(Pi(i, bid))
            assert con.lhs.evaluate(bits) == expected


def test_restoration_program_fixes_topology(line3):
    topo = Topology(frozenset(line3.branch_ids), {"n2": "n1", "n3": "n2"})
    bp = restoration_program(line3, topo)
    assert {d.name for d in bp.registry} >= {"lambda[n2]", "lambda[n3]"}
    assert not any(isinstance(d, (Alpha, Beta, Pi)) for d in bp.registry)
    assert bp.registry.fixed[Alpha(B("n1", "n2"))] == 1
    # v gate with one fixed factor reduces to aux == factor
    for y, (a, b) in bp.and_gates:
        assert isinstance(bp.registry[y], AuxAnd)


def test_fix_rejects_contradiction(line3):
    bp = assemble(line3)
    with pytest.raises(Infeasible, match="status"):
        bp.fix({Alpha(B("n1", "n2")): 1, Beta("n2", "n1"): 0})


def test_linear_expr_drops_zeros():
    e = LinearExpr({0: 1, 1: 0}).add(0, -1)
    assert e.terms == {}
    assert LinearExpr({0: 2}, -3).bounds() == (-3, -1)


def test_doubling_weights_keeps_argmax():
    from oracles import feasible_plans
    net = make_fixture("star5-0")
    heavier = make_network(
        [Node(n.id, n.du_max, Load(n.load.p_active, n.load.q_reactive, 2 * n.load.weight), n.source)
         if n.load else n for n in net.nodes.values()],
        net.branches, u_delta=net.u_delta,
    )
    plans, plans2 = feasible_plans(net), feasible_plans(heavier)
    assert [2 * p.objective for p in plans] == [p.objective for p in plans2]
    bp, bp2 = assemble(net), assemble(heavier)
    assert bp2.objective == bp.objective.scaled(2)


@pytest.mark.parametrize("name", ORACLE_FIXTURES)
def test_feasible_assignments_are_exactly_the_radial_plans(name):
    # energy <= 0 holds exactly for assignments meeting every constraint and gate
    from mgqubo.graphs import check_radial_forest
    from mgqubo.lowering import lower
    from mgqubo.solvers import enumerate_below
    from mgqubo.verify import decode
    from oracles import feasible_plans

    net = make_fixture(name)
    q = lower(assemble(net))
    rows = enumerate_below(q, 0)
    decoded = set()
    for bits, _, _ in rows.samples:
        x = [int(c) for c in bits]
        assert q.program.is_feasible(x)
        sol = decode(bits, q.registry, net)
        assert check_radial_forest(net, sol.topology, net.nodes)
        decoded.add((sol.topology.closed_branches, tuple(sorted(sol.topology.parent.items())), sol.restored))
    expected = {(p.closed, p.parent, p.restored) for p in feasible_plans(net)}
    assert decoded == expected
    assert len(rows.samples) == len(expected)

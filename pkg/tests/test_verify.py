from fractions import Fraction

import pytest

from mgqubo.formulation import assemble
from mgqubo.graphs import Topology
from mgqubo.lowering import lower
from mgqubo.network import BranchId
from mgqubo.solvers import solve_exhaustive
from mgqubo.verify import (
    LengthMismatch,
    compute_flows,
    compute_metrics,
    decode,
    encode,
    load_served_ratio,
    make_solution,
    verify_feasibility,
)

B = BranchId.of
F = Fraction
BOTH = frozenset(["n2", "n3"])


def _line3_full(net, restored=BOTH):
    topo = Topology(frozenset([B("n1", "n2"), B("n2", "n3")]), {"n2": "n1", "n3": "n2"})
    pi = {("n2", B("n1", "n2")), ("n3", B("n1", "n2")), ("n3", B("n2", "n3"))}
    return make_solution(net, topo, restored, pi)


def test_decode_example(line3):
    q = lower(assemble(line3))
    bits = solve_exhaustive(q).first[0]
    sol = decode(bits, q.registry, line3)
    assert sol.topology.closed_branches == {B("n1", "n2"), B("n2", "n3")}
    assert sol.topology.parent == {"n2": "n1", "n3": "n2"}
    assert sol.restored == BOTH
    assert sol.objective_value == 2  # n3 carries weight 2


def test_decode_all_zero(line3):
    q = lower(assemble(line3))
    sol = decode("0" * q.dim, q.registry, line3)
    assert not sol.topology.closed_branches and not sol.restored and not sol.pi_matrix
    assert sol.objective_value == 0


def test_decode_length_mismatch(line3):
    q = lower(assemble(line3))
    with pytest.raises(LengthMismatch):
        decode("0" * (q.dim - 1), q.registry, line3)


def test_encode_decode_round_trip(line3):
    q = lower(assemble(line3))
    sol = _line3_full(line3)
    back = decode(encode(sol, q.registry), q.registry, line3)
    assert (back.topology, back.restored, back.pi_matrix) == (sol.topology, sol.restored, sol.pi_matrix)


def test_line3_flows(line3):
    sol = compute_flows(_line3_full(line3), line3)
    assert sol.flows[B("n1", "n2")][0] == F(3, 2)
    assert sol.flows[B("n2", "n3")][0] == F(1, 2)
    drop_23 = sol.voltage_drop["n3"] - sol.voltage_drop["n2"]
    assert drop_23 == F("0.009")


def test_nothing_restored_has_no_flow(line3):
    sol = compute_flows(_line3_full(line3, restored=()), line3)
    assert all(p == q == 0 for p, q in sol.flows.values())
    assert all(v == 0 for v in sol.voltage_drop.values())


def test_feasible_plan_has_no_violations(line3):
    sol = verify_feasibility(_line3_full(line3), line3)
    assert sol.feasible and sol.violations == () and sol.violation_sum == 0


def test_source_overload_is_reported(triangle):
    # restore everything through a source whose limit is below the total
    from mgqubo.network import Node, Source, make_network
    limit = triangle.total_load - F("0.3")
    nodes = [
        Node(n.id, n.du_max, n.load, Source(F(0), limit, F(0), n.source.q_max) if n.source else None)
        for n in triangle.nodes.values()
    ]
    net = make_network(nodes, triangle.branches, u_delta=triangle.u_delta)
    q = lower(assemble(triangle))
    bits = solve_exhaustive(q).first[0]
    sol = decode(bits, q.registry, net)
    sol = verify_feasibility(type(sol)(sol.topology, frozenset(net.loaded_nodes), sol.pi_matrix,
                                       parent_choices=sol.parent_choices), net)
    overload = dict(sol.violations)
    src = net.sources[0]
    assert overload[f"src-p-max[{src}]"] >= F("0.3")
    assert not sol.feasible


def test_cycle_is_reported(triangle):
    closed = frozenset(triangle.branch_ids)
    parent = {"n2": "n1", "n3": "n2"}
    sol = verify_feasibility(make_solution(triangle, Topology(closed, parent), (), ()), triangle)
    labels = {label for label, _ in sol.violations}
    assert "radial-forest" in labels
    assert any(label.startswith("status[") for label in labels)


def test_wrong_pi_row_is_reported(line3):
    sol = _line3_full(line3)
    broken = make_solution(line3, sol.topology, sol.restored, sol.pi_matrix - {("n3", B("n1", "n2"))})
    labels = {label for label, _ in verify_feasibility(broken, line3).violations}
    assert "path[n3]" in labels


def test_double_parent_is_reported(triangle):
    topo = Topology(frozenset([B("n1", "n2"), B("n1", "n3")]), {"n2": "n1", "n3": "n1"})
    sol = make_solution(triangle, topo, (), (), parent_choices={("n2", "n1"), ("n2", "n3"), ("n3", "n1")})
    labels = {label for label, _ in verify_feasibility(sol, triangle).violations}
    assert "one-parent[n2]" in labels


def test_load_served_ratio(line3):
    assert load_served_ratio(_line3_full(line3), line3) == 100
    assert load_served_ratio(_line3_full(line3, restored={"n3"}), line3) == F(100, 3)
    assert load_served_ratio(_line3_full(line3, restored=()), line3) == 0


def test_metrics_and_json(line3):
    sol = verify_feasibility(_line3_full(line3), line3)
    m = compute_metrics(sol, line3, 32, 70)
    assert m.to_dict() == {"load_served_ratio": 100.0, "violation_sum": 0,
                           "qubit_count_qmgf": 32, "qubit_count_dmgf": 70}
    doc = sol.to_dict()
    assert doc["feasible"] is True
    assert doc["flows"]["n1-n2"]["p"] == "1.5"
    assert doc["restored"] == ["n2", "n3"]

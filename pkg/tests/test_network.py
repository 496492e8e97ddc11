import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgqubo.fixtures import generate, line3
from mgqubo.network import (
    Branch,
    BranchId,
    ParseError,
    ValidationError,
    load_network,
    make_network,
    serialize_network,
    validate,
)

F = Fraction


def _doc(net):
    return json.loads(serialize_network(net))


def test_line3_file_maps_fields(line3):
    net = load_network(serialize_network(line3))
    assert len(net.nodes) == 3 and len(net.branches) == 2
    assert net.source_set == {"n1"}
    assert net.nodes["n2"].load.p_active == F("1.0")
    assert net.nodes["n3"].load.weight == 2
    assert net.branch(BranchId.of("n2", "n3")).x == F("0.02")


def test_decimals_are_exact():
    text = serialize_network(line3()).replace('"r": 0.01', '"r": 0.1', 1)
    net = load_network(text)
    assert net.branch(BranchId.of("n1", "n2")).r == F(1, 10)


def test_fraction_strings_are_accepted():
    doc = _doc(line3())
    doc["nodes"][1]["load"]["p"] = "1/3"
    net = load_network(json.dumps(doc))
    assert net.load_p("n2") == F(1, 3)


def test_undeclared_node_is_named():
    doc = _doc(line3())
    doc["branches"][1]["to"] = "n9"
    with pytest.raises(ValidationError, match="n9"):
        load_network(json.dumps(doc))


def test_negative_load_rejected():
    doc = _doc(line3())
    doc["nodes"][1]["load"]["p"] = -0.1
    with pytest.raises(ValidationError, match="negative load"):
        load_network(json.dumps(doc))


def test_syntax_error_reports_position():
    with pytest.raises(ParseError, match="line 1 column"):
        load_network('{"nodes": [}')


def test_missing_field_reports_path():
    doc = _doc(line3())
    del doc["branches"][0]["r"]
    with pytest.raises(ParseError, match=r"branches\[0\]: missing field 'r'"):
        load_network(json.dumps(doc))


def test_non_numeric_value_rejected():
    with pytest.raises(ParseError):
        load_network(json.dumps({"nodes": [{"id": "a", "du_max": [1]}]}))


def test_validate_line3_clean(line3):
    assert validate(line3) == []


def test_validate_disconnected(line3):
    net = make_network(line3.nodes.values(), line3.branches[1:], u_delta=line3.u_delta)
    assert validate(net) == ["graph not connected"]


def test_validate_parallel_branch(line3):
    net = make_network(line3.nodes.values(), [*line3.branches, line3.branches[0]], u_delta=line3.u_delta)
    assert validate(net) == ["parallel branch n1-n2"]


def test_validate_no_source_and_small_u_delta(line3):
    nodes = [n for n in line3.nodes.values()]
    nodes[0] = type(nodes[0])("n1", nodes[0].du_max)
    net = make_network(nodes, line3.branches, u_delta="0.01")
    problems = validate(net)
    assert "no source node" in problems
    assert "u_delta smaller than the largest du_max" in problems


def test_u_delta_defaults_to_largest_du_max():
    doc = _doc(line3())
    del doc["base"]["u_delta"]
    doc["nodes"][2]["du_max"] = 0.07
    net = load_network(json.dumps(doc))
    assert net.u_delta is None
    assert net.effective_u_delta == F("0.07")


def test_source_may_carry_load():
    doc = _doc(line3())
    doc["nodes"][0]["load"] = {"p": 0.2, "q": 0.1, "w": 1}
    net = load_network(json.dumps(doc))
    assert "n1" in net.loaded_nodes and "n1" in net.source_set


def test_branch_id_is_unordered():
    assert BranchId.of("n2", "n1") == BranchId.of("n1", "n2")
    assert str(BranchId.of("n2", "n1")) == "n1-n2"
    assert BranchId.of("n1", "n2").other("n1") == "n2"


@settings(max_examples=60, deadline=None)
@given(
    kind=st.sampled_from(["line", "star", "ring", "tree"]),
    n=st.integers(2, 8),
    seed=st.integers(0, 10_000),
    sources=st.integers(1, 2),
    chords=st.integers(0, 2),
)
def test_serialize_round_trip(kind, n, seed, sources, chords):
    net = generate(kind, n, seed, sources=min(sources, n), chords=chords)
    again = load_network(serialize_network(net))
    assert again == net
    assert validate(again) == []
    assert serialize_network(again) == serialize_network(net)


def test_round_trip_keeps_non_decimal_values():
    net = line3()
    nodes = list(net.nodes.values())
    br = net.branches[0]
    odd = Branch(br.id, F(1, 3), br.x, br.p_max, br.q_max)
    net = make_network(nodes, [odd, net.branches[1]], u_delta=net.u_delta)
    assert load_network(serialize_network(net)).branch(br.id).r == F(1, 3)

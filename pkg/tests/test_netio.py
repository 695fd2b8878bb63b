import pytest
from hypothesis import given, settings

from anyspace.netio import (
    ParseError, parse_document, parse_evidence, parse_names, parse_network, parse_order, serialize_network,
)
from anyspace.oracle import random_factor_set
from hypothesis import strategies as st
import random


def test_fivevar_document(fivevar):
    net, order = fivevar
    assert len(net.variables) == 5 and len(net.factors) == 5
    names = [tuple(net.variables[v].name for v in f.scope) for f in net.factors]
    assert names == [("A",), ("A", "B"), ("B", "C"), ("C", "D"), ("B", "D", "E")]
    assert order == [0, 1, 2, 3, 4]


def test_variable_without_factors():
    net = parse_network("variable A 2 yes no\n")
    assert len(net.variables) == 1 and net.factors == ()


def test_unknown_variable_reports_name_and_line():
    with pytest.raises(ParseError) as err:
        parse_network("variable A 2 a b\n\nfactor A Z\n1 2 3 4\n")
    assert "'Z'" in str(err.value) and err.value.line == 3


@pytest.mark.parametrize(
    "text",
    [
        "variable A 2 a b\nvariable A 2 a b\n",
        "variable A 2 a b\nfactor A\n1 2 3\n",
        "variable A 2 a b\nfactor A\n1\n",
        "variable A 2 a b\nfactor A\n1 x\n",
        "variable A 2 a b\nfactor A\n1 nan\n",
        "variable A 2 a b\nfactor A\n1 -2\n",
        "variable A 2 a b\nfactor\n",
        "variable A two a b\n",
        "variable A 2 a\n",
        "bogus\n",
    ],
)
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_network(text)


def test_values_may_span_lines_and_use_exponents():
    net = parse_network("variable A 2 a b # comment\nfactor A\n1e-1\n  .9 # tail\n")
    assert net.factors[0].values == (0.1, 0.9)


def test_document_keeps_line_numbers():
    doc = parse_document("# header\nvariable A 2 a b\nfactor A\n1 1\n")
    assert doc.variable_lines == [2] and doc.factor_lines == [3]


def test_parse_order_errors(fivevar):
    net, _ = fivevar
    assert parse_order("A B C D E", net) == [0, 1, 2, 3, 4]
    with pytest.raises(ParseError, match="twice"):
        parse_order("A A B C D E", net)
    with pytest.raises(ParseError, match="missing"):
        parse_order("A B C D", net)
    with pytest.raises(ParseError, match="unknown"):
        parse_order("A B C D Q", net)


def test_parse_evidence(twovar):
    net, _ = twovar
    assert parse_evidence("A=true", net) == {0: 0}
    assert parse_evidence("", net) == {}
    assert parse_evidence("A=false, B=true", net) == {0: 1, 1: 0}
    with pytest.raises(ParseError, match="purple"):
        parse_evidence("A=purple", net)
    with pytest.raises(ParseError):
        parse_evidence("Q=true", net)
    with pytest.raises(ParseError):
        parse_evidence("A=true,A=false", net)


def test_parse_names(fivevar):
    net, _ = fivevar
    assert parse_names("B, E", net) == [1, 4]
    with pytest.raises(ParseError):
        parse_names("B,Q", net)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_round_trip(seed):
    net = random_factor_set(random.Random(seed))
    text = serialize_network(net)
    again = parse_network(text)
    assert [(v.name, v.cardinality, v.labels) for v in again.variables] == [
        (v.name, v.cardinality, v.labels) for v in net.variables
    ]
    assert [(f.scope, f.values) for f in again.factors] == [(f.scope, f.values) for f in net.factors]
    assert serialize_network(again) == text


def test_serialize_omits_unit_factors(fivevar):
    from anyspace.dtree import el2sdt

    net, order = fivevar
    tree = el2sdt(net, order)
    assert any(f.unit for f in tree.factors.factors)
    assert serialize_network(tree.factors) == serialize_network(net)

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpsswarp.model import (
    CrossPartitionEdge,
    Generate,
    ModelFile,
    ParseError,
    Terminate,
    Transfer,
    format_model,
    parse_model,
    parse_text,
    validate_topology,
)

from helpers import bundled, bundled_text, random_model_text


def test_first_listing_parses_to_expected_partitions():
    m = bundled("model_a.gps")
    p1, p2 = m.partitions
    assert (p1.name, p1.counter) == ("Partition1", 20000)
    assert p1.blocks == (Generate(1, 0), Transfer(Fraction(1, 1000), "Label1"), Terminate(0))
    assert (p2.name, p2.counter) == ("Partition2", 20000)
    assert p2.blocks == (Generate(4, 0, 5000), Terminate(1, "Label1"))
    assert m.resolve("Label1") == (1, 1)


def test_second_listing():
    m = bundled("model_b.gps")
    assert [p.counter for p in m.partitions] == [3000, 3000]
    assert m.partitions[0].blocks[0] == Generate(1, 0, 2000)
    assert m.partitions[0].blocks[1].probability == Fraction(3, 10)


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("", "no partitions"),
        ("* only a comment\n\n", "no partitions"),
        ("PARTITION P,1\nGENERATE 1\nTRANSFER 1.5,L\nL TERMINATE 1\n", "out of range"),
        ("PARTITION P,0\nGENERATE 1\nTERMINATE 1\n", "counter must be positive"),
        ("PARTITION P,-3\nGENERATE 1\nTERMINATE 1\n", "counter must be positive"),
        ("PARTITION P,1\nGENERATE 1\nFOO 1\nTERMINATE 1\n", "unknown opcode 'FOO'"),
        ("PARTITION P,1\nGENERATE 1\nL1 FOO 1\nTERMINATE 1\n", "unknown opcode 'FOO'"),
        ("PARTITION P,1\nGENERATE 1\nL TERMINATE 1\nL TERMINATE 1\n", "duplicate label"),
        ("PARTITION P,1\nGENERATE 1\nTRANSFER 0.5,X\nTERMINATE 1\n", "unresolved TRANSFER target"),
        ("PARTITION P,1\nGENERATE 2,2\nTERMINATE 1\n", "spread"),
        ("PARTITION P,1\nGENERATE 2, 1\nTERMINATE 1\n", "must not contain spaces"),
        ("GENERATE 1\n", "outside of a PARTITION"),
        ("PARTITION P,1\nTERMINATE 1\n", "GENERATE"),
        ("PARTITION P,1\nGENERATE 1\n", "TERMINATE"),
    ],
)
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError) as info:
        parse_text(text)
    assert fragment in str(info.value)


def test_parse_error_position():
    with pytest.raises(ParseError) as info:
        parse_text("PARTITION P,1\nGENERATE 1\nTRANSFER 1.5,L\nL TERMINATE 1\n", "m.gps")
    e = info.value
    assert (e.origin, e.line) == ("m.gps", 3)
    assert e.column > 1


def test_grammar_details():
    text = (
        "* header comment\n"
        "partition Alpha,5   ; trailing comment\n"
        "   generate 3,1,7\n"
        "loop  Transfer .25,done  * trailing star comment\n"
        "done  TERMINATE\n"
    )
    m = parse_text(text)
    (p,) = m.partitions
    assert p.blocks == (Generate(3, 1, 7), Transfer(Fraction(1, 4), "done", "loop"), Terminate(0, "done"))


def test_labels_are_case_sensitive():
    text = "PARTITION P,1\nGENERATE 1\nTRANSFER 1,end\nEnd TERMINATE 1\n"
    with pytest.raises(ParseError, match="unresolved"):
        parse_text(text)


def test_transfer_into_generate_rejected():
    with pytest.raises(ParseError):
        parse_text("PARTITION P,1\nG GENERATE 1\nTRANSFER 1,G\nTERMINATE 1\n")


def test_topology_examples():
    assert validate_topology(bundled("model_a.gps")) == [CrossPartitionEdge((0, 1), (1, 1))]
    single = parse_text("PARTITION P,5\nGENERATE 1,0\nTERMINATE 1\n")
    assert validate_topology(single) == []
    both = parse_text(
        "PARTITION A,5\nGENERATE 1\nTRANSFER 0.5,B1\nA1 TERMINATE 1\n"
        "PARTITION B,5\nGENERATE 1\nTRANSFER 0.5,A1\nB1 TERMINATE 1\n"
    )
    assert validate_topology(both) == [CrossPartitionEdge((0, 1), (1, 2)), CrossPartitionEdge((1, 1), (0, 2))]


def test_loop_model_topology_is_a_cycle():
    edges = validate_topology(bundled("loop.gps"))
    assert {(e.source[0], e.destination[0]) for e in edges} == {(0, 1), (1, 0)}


@pytest.mark.parametrize("name", ["model_a.gps", "model_b.gps", "loop.gps"])
def test_bundled_round_trip(name):
    m = parse_text(bundled_text(name))
    assert parse_text(format_model(m)) == m


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32))
def test_round_trip_random_models(seed):
    import random

    m = parse_text(random_model_text(random.Random(seed)))
    again = parse_text(format_model(m))
    assert again == m
    assert again.labels == m.labels


@settings(max_examples=500, deadline=None)
@given(st.binary(max_size=300))
def test_arbitrary_bytes_never_crash(data):
    try:
        m = parse_model(ModelFile(data, "fuzz"))
    except ParseError:
        return
    # a returned model is fully resolved
    for p in m.partitions:
        for b in p.blocks:
            if isinstance(b, Transfer):
                assert b.target in m.labels


_TOKENS = st.sampled_from(
    ["PARTITION", "GENERATE", "TRANSFER", "TERMINATE", "P,3", "1", "2,1", "0.5,L", "1,L", "L", "*", ";", ",", " ", "\n", "x"]
)


@settings(max_examples=500, deadline=None)
@given(st.lists(_TOKENS, max_size=40))
def test_token_soup_never_crashes(tokens):
    text = " ".join(tokens)
    try:
        parse_text(text)
    except ParseError:
        pass

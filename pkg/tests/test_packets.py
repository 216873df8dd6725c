import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protolift.absval import ConcreteStore, EvalError, eval_concrete
from protolift.concrete import run_concrete
from protolift.corpus import load_fixture
from protolift.corpus.randprog import random_program
from protolift.emit import parse_json
from protolift.lang import parse_program
from protolift.packets import (
    _bounds,
    DomainTooLarge,
    Unsatisfiable,
    accepts,
    check_equiv,
    derivations,
    dissect,
    field_report,
    generate,
    lint,
    matches_derivation,
    parse_hex_lines,
    to_hex_line,
)
from protolift.pipeline import lift

from strategies import formulas, packets, value_terms

RUNNING = lift(load_fixture("running").source).format
REPEAT = parse_json(load_fixture("repeat_format").format_json)


def test_derivations_of_running_example():
    ders = list(derivations(RUNNING))
    assert len(ders) == 4
    assert all(d[0] == "S" and "L1" in d for d in ders)


def test_dissect_names_fields():
    pkt = bytes([0, 10, 7, 0, 1, 9, 3])
    res = dissect(RUNNING, pkt)
    assert res.accepted and res.matches == 1
    assert field_report(res)[:2] == ["B[0..1]\tcode\t10", "B[2]\tstate\t7"]
    assert res.derivation == ["S", "L1", "L2", "L5"]


def test_dissect_reports_violated_assertion():
    res = dissect(RUNNING, bytes([0, 10, 7, 0, 5, 0, 3]))
    assert not res.accepted
    assert res.violated_rule in ("L4", "L5")
    assert res.violated.startswith("assert(")


def test_dissect_short_packet_blames_a_terminal():
    res = dissect(RUNNING, bytes([0, 10]))
    assert not res.accepted and res.violated


def test_trailing_bytes_are_allowed():
    assert accepts(RUNNING, bytes([0, 10, 7, 0, 1, 9, 3, 99, 99]))


def test_repeated_field_shifts_later_bytes():
    three = bytes([0, 1, 0, 0, 2, 0, 3, 0])
    assert accepts(REPEAT, three)
    assert not accepts(REPEAT, bytes([0, 1, 0, 0, 0, 0, 3, 0]))  # middle instance is zero
    assert not accepts(REPEAT, bytes([0, 1, 0, 0]))
    res = dissect(REPEAT, three)
    assert [r.split("\t")[0] for r in field_report(res)] == ["B[0]", "B[1..2]", "B[3..4]", "B[5..6]", "B[7]"]


def test_generation_is_deterministic_and_accepted():
    a = generate(RUNNING, count=8, seed=5)
    b = generate(RUNNING, count=8, seed=5)
    assert a == b
    prog = parse_program(load_fixture("running").source)
    for pkt, der in a:
        assert dissect(RUNNING, pkt).accepted
        assert run_concrete(prog, pkt).accepted
        assert der[0] == "S"


def test_generation_covers_satisfiable_alternatives():
    ders = {tuple(d) for _, d in generate(RUNNING, count=8, seed=1)}
    # B[4] + 1 = 0 has no byte solution with 32-bit arithmetic, so only the L5 branch is reachable
    assert ders == {("S", "L1", "L2", "L5"), ("S", "L1", "L3", "L5")}
    assert lint(RUNNING) == ["L4"]


def test_generation_with_repeats():
    for pkt, _ in generate(REPEAT, count=5, seed=2):
        assert accepts(REPEAT, pkt)
        assert len(pkt) == 8


def test_unsatisfiable_format_raises():
    with pytest.raises(Unsatisfiable):
        generate(parse_json(load_fixture("unsat").format_json))


def test_check_equiv_finds_counterexamples():
    prog = parse_program("parse(p, l) { assert(p[0] == 1); }")
    other = lift("parse(p, l) { assert(p[0] <= 1); }").format
    rep = check_equiv(prog, other, range(0, 2), range(3))
    assert not rep.ok
    assert rep.soundness == [b"\x00"] and rep.soundness_total == 1
    assert not rep.completeness
    assert "1 soundness" in rep.summary()


def test_check_equiv_domain_limits():
    prog = parse_program("parse(p, l) { }")
    with pytest.raises(DomainTooLarge):
        check_equiv(prog, lift(prog).format, range(0, 12), range(256), max_packets=1000)


def test_check_equiv_with_position_choices():
    fx = load_fixture("osdp")
    r = lift(fx.source)
    rep = check_equiv(r.program, r.format, fx.lengths, fx.values, positions=fx.positions)
    assert rep.ok and rep.checked > 1000


def test_hex_lines():
    text = "# header\n0a 0b 0c\n0x01,0x02\n\nff00  # trailing comment\n"
    assert parse_hex_lines(text) == [b"\x0a\x0b\x0c", b"\x01\x02", b"\xff\x00"]
    assert to_hex_line(b"\x01\xab") == "01 ab"
    assert parse_hex_lines(to_hex_line(b"") + "  # S\n") == [b""]


def test_matches_derivation_names_the_source_alternative():
    pkt = bytes([0, 10, 7, 0, 1, 9, 3])
    assert matches_derivation(RUNNING, ["S", "L1", "L2", "L5"], pkt)
    assert not matches_derivation(RUNNING, ["S", "L1", "L3", "L5"], pkt)
    assert matches_derivation(REPEAT, ["S"], bytes([0, 1, 0, 0, 2, 0, 3, 0]))
    assert not matches_derivation(REPEAT, ["S"], bytes([0, 1, 2, 0]))


@settings(max_examples=60)
@given(st.integers(0, 100_000), st.integers(0, 1000))
def test_generated_packets_round_trip_on_random_programs(seed, gen_seed):
    r = lift(random_program(seed))
    try:
        pkts = generate(r.format, count=4, seed=gen_seed)
    except Unsatisfiable:
        return
    for pkt, der in pkts:
        res = dissect(r.format, pkt)
        assert res.accepted
        assert run_concrete(r.program, pkt).accepted


@settings(max_examples=400)
@given(st.one_of(formulas(), value_terms(select=False)), packets(6), st.integers(0, 6), st.booleans())
def test_prefix_bounds_contain_every_completion(t, pkt, cut, narrowed):
    # narrowed ranges are any intervals that contain the actual byte
    ranges = [(max(0, b - 2), min(255, b + 3)) for b in pkt] if narrowed else None
    lo, hi = _bounds(t, pkt[:cut], len(pkt), 32, ranges)
    try:
        v = eval_concrete(t, ConcreteStore(pkt))
    except EvalError:
        return
    assert lo <= v <= hi

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from protolift.absval import (
    B,
    Bin,
    Byte,
    ConcreteStore,
    Const,
    EvalError,
    Label,
    Length,
    NameAtom,
    OutOfBounds,
    RepeatAtom,
    Select,
    apply_op,
    byte_span,
    compositions,
    eval_concrete,
    from_json,
    has_select,
    match_composition,
    normalize,
    render,
    to_json,
    wrap,
)

from strategies import LABELS, outcomes, packets, value_terms

K1, K2 = LABELS[0], LABELS[1]


def _value(t, pkt, out):
    try:
        return eval_concrete(t, ConcreteStore(pkt, out))
    except EvalError:
        return None


def test_wrap_is_twos_complement():
    assert wrap(2**31) == -(2**31)
    assert wrap(-1, 8) == -1
    assert wrap(255, 8) == -1
    assert apply_op("<<", 1, 33) == 2  # shift amount taken modulo the width


def test_selection_with_equal_operands_collapses():
    assert normalize(Select(K1, B(0), B(0))) == B(0)


def test_nested_selection_on_same_label_resolves():
    t = Select(K1, Select(K1, B(0), B(1)), Select(K1, B(2), B(3)))
    assert normalize(t) == Select(K1, B(0), B(3))


def test_selection_hoists_over_arithmetic():
    t = Bin("+", Select(K1, B(0), B(1)), Const(1))
    assert normalize(t) == Select(K1, Bin("+", B(0), Const(1)), Bin("+", B(1), Const(1)))


def test_selection_stays_below_logical_connectives():
    t = Bin("&&", Bin("==", Select(K1, B(0), B(1)), Const(0)), Bin(">", B(2), Const(1)))
    n = normalize(t)
    assert isinstance(n, Bin) and n.op == "&&"


def test_constant_folding_keeps_byte_reads():
    assert normalize(Bin("*", Bin("+", Const(2), Const(3)), Const(4))) == Const(20)
    # x * 0 is not folded away: it still requires the byte to exist
    assert has_select(normalize(Bin("*", Select(K1, B(0), B(1)), Const(0))))


@settings(max_examples=500)
@given(value_terms(), outcomes(), packets())
def test_normalization_preserves_value_and_is_idempotent(t, out, pkt):
    n = normalize(t)
    assert _value(n, pkt, out) == _value(t, pkt, out)
    assert normalize(n) == n


@given(value_terms(), outcomes())
def test_normal_form_has_selections_only_at_top(t, out):
    n = normalize(t)

    def ok(x, under_other):
        if isinstance(x, Select):
            return not under_other and ok(x.then, False) and ok(x.other, False)
        return all(ok(k, True) for k in x.children())

    assert ok(n, False)


def test_out_of_bounds_read_raises():
    with pytest.raises(OutOfBounds):
        eval_concrete(B(3), ConcreteStore(b"\x01"))
    assert eval_concrete(Length(), ConcreteStore(b"ab")) == 2


def test_short_circuit_skips_right_operand():
    t = Bin("||", Bin("==", B(0), Const(1)), Bin("==", B(5), Const(0)))
    assert eval_concrete(t, ConcreteStore(b"\x01")) == 1
    with pytest.raises(OutOfBounds):
        eval_concrete(t, ConcreteStore(b"\x02"))


def test_composition_detection_both_byte_orders():
    big = Bin("|", Bin("<<", B(0), Const(8)), B(1))
    little = Bin("|", Bin("<<", B(3), Const(8)), B(2))
    assert match_composition(big) == [0, 1]
    assert match_composition(little) == [3, 2]
    assert render(Bin("==", big, Const(10))) == "B[0]B[1] = 10"
    assert compositions(Bin("-", little, Const(7))) == [[3, 2]]


def test_spans():
    assert (byte_span(Bin("+", B(4), B(6))).lo, byte_span(Bin("+", B(4), B(6))).hi) == (4, 6)
    assert byte_span(Bin("==", Length(), Const(3))) is None
    sym = byte_span(Byte(Bin("&", B(0), Const(3))))
    assert sym.lo == 0 and sym.open


def test_render_annotations():
    assert render(NameAtom(Bin("|", Bin("<<", B(0), Const(8)), B(1)), "code")) == 'name(B[0..1]) = "code"'
    assert render(RepeatAtom(1, 2, Const(3))) == "repeat(B[1..2]) = 3"


@given(value_terms())
def test_json_round_trip(t):
    assert from_json(to_json(t)) == t


@given(st.integers(1, 500), st.integers(0, 9), st.integers(0, 9))
def test_label_text_round_trip(line, col, copy):
    lab = Label(line, col, copy)
    assert Label.parse(str(lab)) == lab


@given(value_terms(select=False), packets())
def test_terms_without_selection_need_no_outcomes(t, pkt):
    assume(not has_select(t))
    _value(t, pkt, {})

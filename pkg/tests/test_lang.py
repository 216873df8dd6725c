import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protolift.corpus.randprog import GenParams, random_program
from protolift.lang import (
    Abort,
    Assert,
    Binary,
    If,
    Index,
    IntLit,
    ParseError,
    Read,
    ValidationError,
    While,
    parse_program,
    pretty_print,
    validate,
    walk_stmts,
)


def test_parses_statements_and_labels():
    p = parse_program(
        """
        parse(buf, n) {
            x = buf[0];
            if @k7 (x > 1 && n >= 2) { assert(buf[1] == 0x10); } else { abort; }
            while (x < 3) { x = x + 1; }
        }
        """
    )
    assert (p.name, p.pkt_param, p.len_param) == ("parse", "buf", "n")
    kinds = [type(s) for s in walk_stmts(p.body)]
    assert Read in kinds and If in kinds and While in kinds and Abort in kinds
    branch = next(s for s in walk_stmts(p.body) if isinstance(s, If))
    assert branch.label.line == 7
    check = next(s for s in walk_stmts(p.body) if isinstance(s, Assert))
    assert check.cond == Binary("==", Index(IntLit(1)), IntLit(16))


def test_operator_precedence_follows_c():
    p = parse_program("parse(p, l) { assert(1 + 2 * 3 == 7 || p[0] & 1 << 2); }")
    cond = next(s for s in walk_stmts(p.body) if isinstance(s, Assert)).cond
    assert cond.op == "||"
    assert cond.lhs == Binary("==", Binary("+", IntLit(1), Binary("*", IntLit(2), IntLit(3))), IntLit(7))
    assert cond.rhs.op == "&" and cond.rhs.rhs.op == "<<"


@pytest.mark.parametrize(
    "src",
    [
        "parse(p, l) { assert(p[0] == ; }",
        "parse(p, l) { x = 1 }",
        "parse(p) { }",
        "parse(p, l) { if (1) { } else }",
    ],
)
def test_syntax_errors_carry_position(src):
    with pytest.raises(ParseError) as e:
        parse_program(src)
    assert e.value.line >= 1


@pytest.mark.parametrize(
    "src, fragment",
    [
        ("parse(p, l) { assert(y == 1); }", "before assignment"),
        ("parse(p, l) { if (p[0]) { y = 1; } else { } assert(y); }", "before assignment"),
        ("parse(p, l) { l = 3; }", "parameter"),
        ("parse(p, l) { x = p + 1; }", "without an index"),
        ("parse(p, p) { }", "duplicate parameter"),
        ("parse(p, l) { if @k2 (1) { } else { } if @k2 (0) { } else { } }", "duplicate branch label"),
    ],
)
def test_validation_errors(src, fragment):
    with pytest.raises(ValidationError, match=fragment):
        parse_program(src)


def test_abort_arm_does_not_block_definedness():
    parse_program("parse(p, l) { if (p[0]) { y = 1; } else { abort; } assert(y == 1); }")


@settings(max_examples=60)
@given(st.integers(0, 10_000), st.booleans())
def test_pretty_print_round_trips(seed, loops):
    prog = random_program(seed, GenParams(loops=loops))
    validate(prog)
    again = parse_program(pretty_print(prog))
    assert again == prog

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protolift.absval import NameAtom, RepeatAtom, has_select, is_tainted, render, walk
from protolift.afg import PathBudgetExceeded, accepts_batch, count_paths, select_free
from protolift.concrete import run_concrete, run_concrete_batch
from protolift.corpus import diamond_chain, load_fixture
from protolift.corpus.randprog import random_program
from protolift.interp import AnalysisConfig, interpret, merge_env, simplify_graph
from protolift.lang import parse_program
from protolift.unfold import accepts_with_anchors, selection_count, unfold
from protolift.vector import all_packets


def _texts(g):
    return {render(v.constraint) for v in g.vertices.values()}


def test_branch_merge_uses_selection():
    r = interpret(parse_program(load_fixture("running").source))
    # both arms assign ctrl; the later assertion refers to a selection
    assert any(has_select(v.constraint) for v in r.graph.vertices.values())
    labels = {a.label for a in r.anchors}
    assert len(labels) == 2


def test_merge_env_keeps_equal_values():
    from protolift.absval import B, Label

    env = merge_env({"x": B(0), "y": B(1)}, {"x": B(0), "y": B(2)}, Label(3))
    assert env["x"] == B(0)
    assert has_select(env["y"])


def test_raw_graph_stays_linear_in_branch_count():
    sizes = [len(interpret(parse_program(diamond_chain(n))).graph) for n in (5, 10, 20)]
    assert sizes[2] - sizes[1] == 2 * (sizes[1] - sizes[0])


def test_field_names_from_assignments():
    r = interpret(parse_program(load_fixture("p1").source))
    names = {x.name for v in r.graph.vertices.values() for x in walk(v.constraint) if isinstance(x, NameAtom)}
    assert {"code", "ctrl", "state"} <= names
    bare = interpret(parse_program(load_fixture("p1").source), AnalysisConfig(naming=False))
    assert not any(
        isinstance(x, NameAtom) and x.name for v in bare.graph.vertices.values() for x in walk(v.constraint)
    )


def test_counter_loop_becomes_repeat():
    r = interpret(parse_program(load_fixture("loop_repeat").source))
    texts = _texts(r.graph)
    assert "repeat(B[1]) = B[0]" in texts
    assert "B[1] < 5" in texts
    assert not r.notices


def test_constant_loop_is_unrolled_exactly():
    src = "parse(p, l) { i = 0; while (i < 3) { assert(p[i] != 0); i = i + 1; } }"
    texts = _texts(interpret(parse_program(src)).graph)
    assert {"B[0] != 0", "B[1] != 0", "B[2] != 0"} <= texts
    assert not any("repeat" in t for t in texts)


def test_irregular_loop_drops_tainted_constraints():
    r = interpret(parse_program(load_fixture("checksum").source))
    assert any("cut after" in n for n in r.notices)
    assert not any(is_tainted(v.constraint) for v in r.graph.vertices.values())
    assert 'name(B[4..5]) = "check"' in _texts(r.graph)


def test_unroll_bound_is_configurable():
    src = load_fixture("checksum").source
    small = interpret(parse_program(src), AnalysisConfig(unroll_bound=1))
    big = interpret(parse_program(src), AnalysisConfig(unroll_bound=3))
    assert len(small.graph) < len(big.graph)


def _agree(prog, g, lengths=range(5), values=range(8)):
    for n in lengths:
        pk = all_packets(n, values)
        if not (accepts_batch(g, pk) == run_concrete_batch(prog, pk)).all():
            return False
    return True


@settings(max_examples=80)
@given(st.integers(0, 100_000))
def test_unfold_removes_selections_and_keeps_acceptance(seed):
    prog = random_program(seed)
    r = interpret(prog)
    u = unfold(r.graph, r.anchors)
    assert select_free(u)
    assert selection_count(u) == 0
    assert _agree(prog, u)


@settings(max_examples=40)
@given(st.integers(0, 100_000))
def test_raw_graph_with_branch_outcomes_matches_program(seed):
    prog = random_program(seed)
    r = interpret(prog)
    if count_paths(r.graph) > 2000:
        return
    for n in range(4):
        for row in all_packets(n, [0, 1, 7]):
            pkt = bytes(row.tolist())
            try:
                got = accepts_with_anchors(r.graph, r.anchors, pkt, limit=2000)
            except PathBudgetExceeded:
                return
            assert got == run_concrete(prog, pkt).accepted


@settings(max_examples=40)
@given(st.integers(0, 100_000))
def test_simplify_keeps_acceptance(seed):
    prog = random_program(seed)
    r = interpret(prog)
    u = unfold(r.graph, r.anchors)
    s = simplify_graph(u)
    assert len(s) <= len(u)
    assert _agree(prog, s, range(4))


def test_unfold_on_running_example_selects_per_arm():
    r = interpret(parse_program(load_fixture("running").source))
    u = unfold(r.graph, r.anchors)
    texts = _texts(u)
    assert {"B[4] + 1 = 0", "B[4] - 1 = 0", "B[5] = 0", "B[5] != 0"} <= texts
    assert not any(has_select(v.constraint) for v in u.vertices.values())


def test_repeat_atoms_carry_region_and_count():
    r = interpret(parse_program(load_fixture("loop_repeat").source))
    reps = [v.constraint for v in r.graph.vertices.values() if isinstance(v.constraint, RepeatAtom)]
    assert len(reps) == 1 and (reps[0].lo, reps[0].hi) == (1, 1)


def test_concrete_batch_matches_scalar():
    for seed in range(30):
        prog = random_program(seed)
        pk = all_packets(3, [0, 1, 7])
        want = np.array([run_concrete(prog, bytes(r.tolist())).accepted for r in pk])
        assert (run_concrete_batch(prog, pk) == want).all()


def test_concrete_loop_step_limit():
    prog = parse_program("parse(p, l) { i = 0; while (i < 10) { i = i + 0; } }")
    v = run_concrete(prog, b"", max_steps=1000)
    assert not v.accepted and "step" in v.reason


@pytest.mark.parametrize("fid", ["running", "p1", "minimal", "trivial", "osdp", "varlength"])
def test_unfolded_fixture_matches_program(fid):
    fx = load_fixture(fid)
    prog = parse_program(fx.source)
    r = interpret(prog)
    u = unfold(r.graph, r.anchors)
    if fx.positions:
        from protolift.vector import product_packets

        for n in fx.lengths:
            ch = [fx.positions[i] if i < len(fx.positions) else fx.values for i in range(n)]
            pk = product_packets(ch)
            assert (accepts_batch(u, pk) == run_concrete_batch(prog, pk)).all()
    else:
        assert _agree(prog, u, fx.lengths, fx.values)

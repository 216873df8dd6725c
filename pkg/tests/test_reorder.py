import itertools
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protolift.absval import Span, byte_span
from protolift.afg import Afg, accepts_batch, count_paths, paths
from protolift.corpus.graphs import disordered_example, random_dag, random_reorderable, shared_suffix, two_layer
from protolift.reorder import NotOrdered, entry_split, hd, is_ordered, path_is_ordered, reorder, reorder_checked, vd
from protolift.vector import all_packets


def _multiset(g):
    return Counter(tuple(str(c) for c in p) for p in paths(g))


def _vd_multiset(segs):
    out = Counter()
    for combo in itertools.product(*[list(_multiset(s).elements()) for s in segs]):
        out[tuple(x for part in combo for x in part)] += 1
    return out


def _same_acceptance(a, b, lengths=range(8), values=(0, 1, 3, 7)):
    for n in lengths:
        pk = all_packets(n, values) if len(values) ** n <= 5000 else all_packets(n, values[:2])
        if not (accepts_batch(a, pk) == accepts_batch(b, pk)).all():
            return False
    return True


def test_two_layer_splits_into_entries_then_successors():
    g, ids = two_layer()
    segs = vd(g)
    assert [len(s) for s in segs] == [2, 3]
    assert set(segs[0].vertices) == {ids["r1"], ids["r2"]}
    assert set(segs[1].vertices) == {ids["r3"], ids["r4"], ids["r5"]}
    assert _vd_multiset(segs) == _multiset(g)


def test_shared_suffix_has_no_cut_and_splits_per_entry():
    g, ids = shared_suffix()
    assert vd(g) is None
    parts = hd(g)
    assert len(parts) == 2
    first = parts[0] if ids["r1"] in parts[0].vertices else parts[1]
    second = parts[1] if first is parts[0] else parts[0]
    assert set(first.vertices) == {ids["r1"], ids["r3"], ids["r4"], ids["r5"]}
    # the second part overlaps the first, so it is made of fresh copies
    assert not set(second.vertices) & set(g.vertices)
    texts = [str(second.constraint(v)) for v in second.topo_order()]
    assert texts == [str(g.constraint(ids[k])) for k in ("r2", "r3", "r5")]
    assert _hd_multiset(parts) == _multiset(g)


def _hd_multiset(parts):
    out = Counter()
    for p in parts:
        out += _multiset(p)
    return out


def test_disordered_example_is_reordered():
    g = disordered_example()
    assert not is_ordered(g)
    segs = vd(g)
    assert len(segs) == 5
    r = reorder(g)
    assert is_ordered(r)
    assert _same_acceptance(g, r)
    first = [str(r.constraint(v)) for v in r.entries()]
    assert first == ['name(B[0..1]) = "code"']


def test_entry_split_duplicates_the_entry():
    g = Afg()
    from protolift.absval import B, Bin, Const
    from protolift.afg import new_vertex

    a, b, c = (g.add(new_vertex(Bin("==", B(i), Const(0)))).id for i in range(3))
    g.add_edge(a, b)
    g.add_edge(a, c)
    g.add_edge(b, c)
    assert vd(g) is None
    s = entry_split(g)
    assert len(s.entries()) == 2
    assert _multiset(s) == _multiset(g)


def test_path_order_check():
    assert path_is_ordered([Span(0, 1), Span(1, 3), Span(4, 4), None, Span(5, 6)])
    assert not path_is_ordered([Span(3, 3), Span(1, 1)])
    assert path_is_ordered([Span(2, 4), Span(3, 3)])  # overlapping spans join one field group


@settings(max_examples=60)
@given(st.integers(0, 100_000))
def test_vertical_decomposition_preserves_paths(seed):
    g = random_reorderable(seed)
    segs = vd(g)
    if segs is None:
        return
    assert sum(len(s) for s in segs) == len(g)
    if count_paths(g) <= 200:
        assert _vd_multiset(segs) == _multiset(g)


@settings(max_examples=60)
@given(st.integers(0, 100_000))
def test_horizontal_decomposition_preserves_paths(seed):
    g = random_dag(seed)
    parts = hd(g)
    assert len(parts) == len(g.entries())
    assert _hd_multiset(parts) == _multiset(g)


@settings(max_examples=200)
@given(st.integers(0, 100_000), st.booleans())
def test_reorder_output_is_ordered_and_equivalent(seed, dag):
    g = random_dag(seed) if dag else random_reorderable(seed)
    r = reorder(g)
    assert is_ordered(r)
    assert _same_acceptance(g, r, range(7), (0, 3, 7))


def test_reorder_keeps_ordered_graphs_ordered():
    for seed in range(40):
        r = reorder(random_reorderable(seed))
        again = reorder(r)
        assert is_ordered(again)


def test_reorder_checked_raises_on_failure(monkeypatch):
    import protolift.reorder as mod

    monkeypatch.setattr(mod, "is_ordered", lambda g: False)
    with pytest.raises(NotOrdered):
        reorder_checked(random_reorderable(1))


def test_byte_span_of_segments():
    g, _ = two_layer()
    spans = [byte_span(g.constraint(v)) for v in g.topo_order()]
    assert all(s is not None for s in spans)

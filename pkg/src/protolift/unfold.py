"""Eliminate ``Select`` terms from a constraint graph by local duplication.

For each branch label the region between the branch arms and the vertices
mentioning the label is copied once; the original keeps only the true arm as
its predecessor and takes the first operands, the copy keeps the false arm and
takes the second operands.
"""
from __future__ import annotations

from typing import Iterable, Optional

from .absval import (
    LOGICAL,
    WIDTH,
    Bin,
    ConcreteStore,
    Label,
    Not,
    has_select,
    holds,
    labels_in,
    normalize,
    resolve,
)
from .afg import Afg, afg_of, new_vertex, path_ids, prune_constants
from .interp import Anchor


class AnchorMissing(RuntimeError):
    def __init__(self, label: Label):
        super().__init__(f"no branch anchors recorded for {label}")
        self.label = label


def select_vertices(g: Afg, label: Label) -> set[int]:
    return {v for v, x in g.vertices.items() if has_select(x.constraint, label)}


def slice_region(g: Afg, anchor: Anchor) -> set[int]:
    """Vertices after the arms of ``anchor`` that lead to a selection on its label."""
    arms = anchor.g_true | anchor.g_false
    targets = select_vertices(g, anchor.label)
    if targets & arms:
        raise ValueError(f"branch arms of {anchor.label} mention their own selection")
    forward = g.reachable_from(arms) - arms
    if not targets:
        return set()
    if not targets <= forward:
        raise ValueError(f"selection on {anchor.label} occurs outside the branch's reach")
    backward = g.reachable_from(targets, forward=False)
    return forward & backward


def _resplit(g: Afg, vid: int, anchors: list[Anchor], width: int) -> None:
    c = g.constraint(vid)
    if not ((isinstance(c, Bin) and c.op in LOGICAL) or isinstance(c, Not)):
        return
    sub = afg_of(c, width)
    if len(sub) == 1:
        g.replace(vid, next(iter(sub.vertices.values())).constraint)
        return
    origin = g.vertices[vid].origin or vid
    m = {}
    for v in sub.topo_order():
        m[v] = g.add(new_vertex(sub.constraint(v), origin)).id
    for a, b in sub.edges():
        g.add_edge(m[a], m[b])
    for p in g.pred[vid]:
        for e in sub.entries():
            g.add_edge(p, m[e])
    for s in g.succ[vid]:
        for x in sub.exits():
            g.add_edge(m[x], s)
    g.remove(vid)
    for a in anchors:
        for side in (a.g_true, a.g_false):
            if vid in side:
                side.discard(vid)
                side.update(m.values())


def unfold_label(g: Afg, anchor: Anchor, others: list[Anchor], width: int = WIDTH) -> set[int]:
    """Unfold one label in place; returns the ids of the new copies."""
    region = slice_region(g, anchor)
    if not region:
        return set()
    copy = {v: g.add(new_vertex(g.constraint(v), g.vertices[v].origin or v)).id for v in region}
    for v in region:
        for s in list(g.succ[v]):
            g.add_edge(copy[v], copy.get(s, s))
        for p in list(g.pred[v]):
            if p not in region:
                g.add_edge(p, copy[v])
    had_pred = {v for v in region if g.pred[v]} | {copy[v] for v in region if g.pred[copy[v]]}
    for v in region:
        for p in list(g.pred[v]):
            if p in anchor.g_false:
                g.remove_edge(p, v)
        for p in list(g.pred[copy[v]]):
            if p in anchor.g_true:
                g.remove_edge(p, copy[v])
    _drop_orphans(g, had_pred)
    for a in others:
        for side in (a.g_true, a.g_false):
            side.update(copy[v] for v in region if v in side)
    for v in region:
        for vid, take_then in ((v, True), (copy[v], False)):
            if vid in g:
                g.replace(vid, normalize(resolve(g.constraint(vid), anchor.label, take_then), width))
                _resplit(g, vid, others, width)
    return set(copy.values())


def _drop_orphans(g: Afg, candidates: Iterable[int]) -> None:
    """Remove vertices that lost every predecessor; they would otherwise become entries."""
    stack = [v for v in candidates if v in g and not g.pred[v]]
    while stack:
        v = stack.pop()
        if v not in g or g.pred[v]:
            continue
        succs = list(g.succ[v])
        g.remove(v)
        stack.extend(s for s in succs if not g.pred[s])


def unfold(g: Afg, anchors: list[Anchor], width: int = WIDTH) -> Afg:
    """Return a selection-free graph with the same accepted packets."""
    g = g.copy()
    work = [Anchor(a.label, set(a.g_true), set(a.g_false)) for a in anchors]
    present = set()
    for v in g.vertices.values():
        present |= labels_in(v.constraint)
    missing = present - {a.label for a in work}
    if missing:
        raise AnchorMissing(min(missing))
    for a in sorted(work, key=lambda a: a.label, reverse=True):
        a.g_true &= set(g.vertices)
        a.g_false &= set(g.vertices)
        unfold_label(g, a, [b for b in work if b is not a], width)
    leftover = [v for v in g.vertices.values() if has_select(v.constraint)]
    if leftover:
        raise RuntimeError(f"selections survived unfolding: {leftover}")
    return prune_constants(g)


def accepts_with_anchors(
    g: Afg, anchors: list[Anchor], packet: bytes, width: int = WIDTH, limit: int = 100_000
) -> bool:
    """Acceptance of a graph that may still contain selections.

    Each path fixes the outcome of every branch whose arm it passes through.
    """
    if g.is_empty():
        return True
    store = ConcreteStore(bytes(packet))
    for p in path_ids(g, limit):
        on = set(p)
        outcomes = {}
        for a in anchors:
            if on & a.g_true:
                outcomes[a.label] = True
            elif on & a.g_false:
                outcomes[a.label] = False
        store.branch_outcomes = outcomes
        if all(holds(g.constraint(v), store, width) for v in p):
            return True
    return False


def selection_count(g: Afg, label: Optional[Label] = None) -> int:
    return sum(1 for v in g.vertices.values() if has_select(v.constraint, label))

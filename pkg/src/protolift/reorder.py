"""Put a selection-free constraint graph into packet byte order.

Vertical decomposition splits a graph into segments joined one after another;
horizontal decomposition splits it into one part per entry vertex. Segments
are sorted by their lowest byte index, overlapping neighbours are merged and
handled recursively.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .absval import Span, byte_span
from .afg import Afg, PathShapes, clone, join, share_equivalent, union


class NotOrdered(ValueError):
    pass


# vertex count above which duplicated alternatives are merged back together
SHARE_ABOVE = 256


# ---------------------------------------------------------------------------
# decompositions


def vd(g: Afg) -> Optional[list[Afg]]:
    """Finest vertical decomposition, or None when no cut exists."""
    if len(g) <= 1:
        return [g] if len(g) else None
    cuts = []
    seen_sets = set()
    for v in g.vertices:
        preds = frozenset(g.pred[v])
        if not preds or preds in seen_sets:
            continue
        seen_sets.add(preds)
        cut = _cut_for(g, preds)
        if cut is not None:
            cuts.append(cut)
    if not cuts:
        return None
    cuts.sort(key=len)
    chain = []
    for c in cuts:
        if not chain or (chain[-1] < c):
            chain.append(c)
    segments = []
    prev: frozenset = frozenset()
    for c in chain + [frozenset(g.vertices)]:
        segments.append(g.induced(c - prev))
        prev = c
    return segments


def _cut_for(g: Afg, exits: frozenset) -> Optional[frozenset]:
    """Prefix whose exits are ``exits`` and which is fully joined to the rest."""
    heads = frozenset(v for v in g.vertices if frozenset(g.pred[v]) == exits)
    suffix = g.reachable_from(heads)
    prefix = frozenset(g.vertices) - suffix
    if not prefix or not suffix:
        return None
    if not exits <= prefix:
        return None
    for v in suffix:
        inner = g.pred[v] & suffix
        outer = g.pred[v] - suffix
        if v in heads:
            if inner or outer != exits:
                return None
        elif outer:
            return None
    for v in prefix:
        inside = g.succ[v] & prefix
        if v in exits:
            if inside or g.succ[v] != heads:
                return None
        elif not inside or g.succ[v] - prefix:
            return None
    return prefix


def hd(g: Afg) -> list[Afg]:
    """One part per entry vertex, holding everything reachable from it.

    Vertices shared between parts are copied with fresh ids.
    """
    parts = []
    used: set[int] = set()
    for e in g.entries():
        reach = g.reachable_from([e])
        part = g.induced(reach)
        if reach & used:
            part, _ = clone(part)
        used |= reach
        parts.append(part)
    return parts


def entry_split(g: Afg) -> Afg:
    """Duplicate a single entry vertex once per successor.

    Used when a single-entry graph has no vertical cut (the entry reaches a
    successor both directly and through another successor).
    """
    (e,) = g.entries()
    out = Afg()
    for s in sorted(g.succ[e]):
        part, _ = clone(g.induced(g.reachable_from([s])))
        head = Afg.single(g.constraint(e))
        out = union(out, join(head, part))
    return out


# ---------------------------------------------------------------------------
# spans


@dataclass(frozen=True)
class _Seg:
    graph: Afg
    span: Optional[Span]
    pos: int


def graph_span(g: Afg) -> Optional[Span]:
    span = None
    for v in g.vertices.values():
        s = byte_span(v.constraint)
        if s is not None:
            span = s if span is None else span.union(s)
    return span


def _min_key(g: Afg) -> tuple:
    s = graph_span(g)
    return (math.inf if s is None else s.lo, min(g.vertices))


def _with_borrowed_spans(segs: list[Afg]) -> list[_Seg]:
    """Segments without bytes take a point span from the next segment that has one."""
    spans = [graph_span(s) for s in segs]
    out = []
    for i, s in enumerate(segs):
        sp = spans[i]
        if sp is None:
            nxt = next((x for x in spans[i + 1 :] if x is not None), None)
            sp = Span(nxt.lo, nxt.lo) if nxt is not None else None
        out.append(_Seg(s, sp, i))
    return out


# ---------------------------------------------------------------------------
# reordering


def reorder(g: Afg) -> Afg:
    """Return an ordered graph accepting the same packets as ``g``."""
    return _Reorderer().run(g)


class _Reorderer:
    """One reordering job. Subgraphs with the same set of constraint paths are
    reordered once; later requests get a fresh copy of the first result.
    """

    def __init__(self):
        self.memo: dict[frozenset, Afg] = {}
        self.shapes = PathShapes()

    def run(self, g: Afg) -> Afg:
        if len(g) <= 1:
            return g.copy()
        key = self.shapes.key(g)
        hit = self.memo.get(key)
        if hit is None:
            hit = self.memo[key] = self._reorder(g)
        return clone(hit)[0]

    def _reorder(self, g: Afg) -> Afg:
        segs = vd(g)
        if segs is None or len(segs) == 1:
            if len(g.entries()) == 1:
                g = entry_split(g)
            return self.alternatives(hd(g))
        items = _with_borrowed_spans(segs)
        items.sort(key=lambda s: (math.inf if s.span is None else s.span.lo, s.pos))
        groups: list[list[_Seg]] = []
        run: Optional[Span] = None
        for it in items:
            if groups and it.span is not None and run is not None and run.overlaps(it.span):
                groups[-1].append(it)
                run = run.union(it.span)
            else:
                groups.append([it])
                run = it.span
        out = Afg()
        for grp in groups:
            out = join(out, self.order_group(grp))
        return out

    def alternatives(self, parts: list[Afg]) -> Afg:
        parts = sorted(parts, key=_min_key)
        out = Afg()
        for p in parts:
            out = union(out, self.run(p))
        # per-entry splitting copies shared continuations; once that copying
        # gets large, fold identical copies back together (small graphs keep
        # one alternative per entry, which reads better as a format)
        return share_equivalent(out) if len(out) > SHARE_ABOVE else out

    def order_group(self, grp: list[_Seg]) -> Afg:
        if len(grp) == 1:
            return self.run(grp[0].graph)
        if all(len(s.graph) == 1 for s in grp):
            out = Afg()
            for s in grp:
                out = join(out, s.graph)
            return out
        # cheap attempt first: order each segment on its own and keep the sorted sequence
        seq = Afg()
        for s in grp:
            seq = join(seq, self.run(s.graph))
        if is_ordered(seq):
            return seq
        # rotate a multi-entry segment to the front, then split per entry
        pivot = next((s for s in grp if len(s.graph.entries()) > 1), None)
        if pivot is None:
            pivot = next(s for s in grp if len(s.graph) > 1)
            head = entry_split(pivot.graph)
        else:
            head = pivot.graph
        combined = head
        for s in grp:
            if s is not pivot:
                combined = join(combined, s.graph)
        return self.alternatives(hd(combined))


# ---------------------------------------------------------------------------
# ordered check


def _advance(run: Optional[Span], s: Optional[Span]) -> tuple[bool, Optional[Span]]:
    if s is None:
        return True, run
    if run is None or run.overlaps(s):
        return True, s if run is None else run.union(s)
    if s.lo > run.hi:
        return True, s
    return False, run


def path_is_ordered(spans: list[Optional[Span]]) -> bool:
    run: Optional[Span] = None
    for s in spans:
        ok, run = _advance(run, s)
        if not ok:
            return False
    return True


def is_ordered(g: Afg) -> bool:
    """Along every path, byte spans form increasing groups of overlapping spans.

    Tracks the set of possible running spans per vertex instead of enumerating
    paths, so the cost stays polynomial.
    """
    states: dict[int, set] = {}
    for v in g.topo_order():
        incoming = set()
        if not g.pred[v]:
            incoming.add(None)
        for p in g.pred[v]:
            incoming |= states[p]
        span = byte_span(g.constraint(v))
        out = set()
        for run in incoming:
            ok, nxt = _advance(run, span)
            if not ok:
                return False
            out.add(nxt)
        states[v] = out
    return True


def reorder_checked(g: Afg) -> Afg:
    out = reorder(g)
    if not is_ordered(out):
        raise NotOrdered("reordering produced an unordered graph")
    return out

"""Constraint graphs: vertices hold atomic constraints, edges mean "and then",
parallel branches mean "or". A packet satisfies a graph when some
entry-to-exit path has all of its constraints true.
"""
from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Optional

import numpy as np

from .absval import (
    COMPARISON,
    FALSE,
    NEGATED,
    WIDTH,
    Bin,
    ConcreteStore,
    Const,
    Label,
    NameAtom,
    Not,
    RepeatAtom,
    Select,
    Tainted,
    Term,
    from_json,
    has_select,
    holds,
    is_boolean,
    normalize,
    render,
    to_json,
)
from .vector import holds_batch

_ids = itertools.count(1)


class PathBudgetExceeded(RuntimeError):
    def __init__(self, limit: int):
        super().__init__(f"more than {limit} paths")
        self.limit = limit


@dataclass(frozen=True, eq=False)
class Vertex:
    id: int
    constraint: Term
    origin: Optional[int] = None  # id of the vertex this one was copied from

    def __repr__(self) -> str:
        return f"v{self.id}<{render(self.constraint)}>"


def new_vertex(constraint: Term, origin: Optional[int] = None) -> Vertex:
    return Vertex(next(_ids), constraint, origin)


class Afg:
    def __init__(self):
        self.vertices: dict[int, Vertex] = {}
        self.succ: dict[int, set[int]] = {}
        self.pred: dict[int, set[int]] = {}

    # construction -----------------------------------------------------------

    @classmethod
    def single(cls, constraint: Term) -> "Afg":
        g = cls()
        g.add(new_vertex(constraint))
        return g

    def add(self, v: Vertex) -> Vertex:
        self.vertices[v.id] = v
        self.succ.setdefault(v.id, set())
        self.pred.setdefault(v.id, set())
        return v

    def add_edge(self, a: int, b: int) -> None:
        self.succ[a].add(b)
        self.pred[b].add(a)

    def remove_edge(self, a: int, b: int) -> None:
        self.succ[a].discard(b)
        self.pred[b].discard(a)

    def remove(self, vid: int) -> None:
        for s in self.succ.pop(vid):
            self.pred[s].discard(vid)
        for p in self.pred.pop(vid):
            self.succ[p].discard(vid)
        del self.vertices[vid]

    def replace(self, vid: int, constraint: Term) -> Vertex:
        v = Vertex(vid, constraint, self.vertices[vid].origin)
        self.vertices[vid] = v
        return v

    def copy(self) -> "Afg":
        g = Afg()
        g.vertices = dict(self.vertices)
        g.succ = {k: set(v) for k, v in self.succ.items()}
        g.pred = {k: set(v) for k, v in self.pred.items()}
        return g

    def induced(self, ids: Iterable[int]) -> "Afg":
        keep = set(ids)
        g = Afg()
        for i in sorted(keep):
            g.add(self.vertices[i])
        for i in keep:
            for s in self.succ[i]:
                if s in keep:
                    g.add_edge(i, s)
        return g

    # queries ----------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.vertices)

    def __contains__(self, vid: int) -> bool:
        return vid in self.vertices

    def is_empty(self) -> bool:
        return not self.vertices

    def entries(self) -> list[int]:
        return sorted(v for v in self.vertices if not self.pred[v])

    def exits(self) -> list[int]:
        return sorted(v for v in self.vertices if not self.succ[v])

    def edges(self) -> list[tuple[int, int]]:
        return sorted((a, b) for a, ss in self.succ.items() for b in ss)

    def constraint(self, vid: int) -> Term:
        return self.vertices[vid].constraint

    def topo_order(self) -> list[int]:
        """Kahn's algorithm with smallest-id tie break."""
        indeg = {v: len(p) for v, p in self.pred.items()}
        heap = [v for v, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        out = []
        while heap:
            v = heapq.heappop(heap)
            out.append(v)
            for s in self.succ[v]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    heapq.heappush(heap, s)
        if len(out) != len(self.vertices):
            raise ValueError("graph has a cycle")
        return out

    def is_acyclic(self) -> bool:
        try:
            self.topo_order()
            return True
        except ValueError:
            return False

    def reachable_from(self, sources: Iterable[int], forward: bool = True) -> set[int]:
        adj = self.succ if forward else self.pred
        seen: set[int] = set()
        stack = list(sources)
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            stack.extend(adj[v])
        return seen

    def __repr__(self) -> str:
        return f"Afg({len(self.vertices)} vertices, {len(self.edges())} edges)"


# ---------------------------------------------------------------------------
# combinators


def join(g1: Afg, g2: Afg) -> Afg:
    """Sequential composition: every exit of ``g1`` precedes every entry of ``g2``."""
    if g1.is_empty():
        return g2.copy()
    if g2.is_empty():
        return g1.copy()
    _check_disjoint(g1, g2)
    g = g1.copy()
    exits = g1.exits()
    for v in g2.vertices.values():
        g.add(v)
    for a, b in g2.edges():
        g.add_edge(a, b)
    for a in exits:
        for b in g2.entries():
            g.add_edge(a, b)
    return g


def union(g1: Afg, g2: Afg) -> Afg:
    _check_disjoint(g1, g2)
    g = g1.copy()
    for v in g2.vertices.values():
        g.add(v)
    for a, b in g2.edges():
        g.add_edge(a, b)
    return g


def _check_disjoint(g1: Afg, g2: Afg) -> None:
    if g1.vertices.keys() & g2.vertices.keys():
        raise ValueError("graphs share vertices; clone one before combining")


def clone(g: Afg) -> tuple[Afg, dict[int, int]]:
    """Copy with fresh vertex ids; returns the copy and the old-to-new id map."""
    out = Afg()
    m = {}
    for vid in g.topo_order():
        v = g.vertices[vid]
        m[vid] = out.add(new_vertex(v.constraint, v.origin or vid)).id
    for a, b in g.edges():
        out.add_edge(m[a], m[b])
    return out, m


# ---------------------------------------------------------------------------
# formulas to graphs


def as_condition(t: Term, width: int = WIDTH) -> Term:
    """Coerce an integer-valued term to a truth value (nonzero is true)."""
    if is_boolean(t):
        return t
    if isinstance(t, Const):
        return Const(int(t.value != 0))
    return normalize(Bin("!=", t, Const(0)), width)


def negate(t: Term, width: int = WIDTH) -> Term:
    """Logical negation pushed down to atoms."""
    if isinstance(t, Not):
        return as_condition(t.arg, width)
    if isinstance(t, Bin) and t.op in COMPARISON:
        return Bin(NEGATED[t.op], t.lhs, t.rhs)
    if isinstance(t, Bin) and t.op == "&&":
        return Bin("||", negate(t.lhs, width), negate(t.rhs, width))
    if isinstance(t, Bin) and t.op == "||":
        return Bin("&&", negate(t.lhs, width), negate(t.rhs, width))
    if isinstance(t, Select):
        return Select(t.label, negate(t.then, width), negate(t.other, width))
    if isinstance(t, Tainted):
        return Tainted(negate(t.inner, width))
    if isinstance(t, Const):
        return Const(int(t.value == 0))
    if isinstance(t, (NameAtom, RepeatAtom)):
        raise ValueError("annotations cannot be negated")
    return normalize(Bin("==", t, Const(0)), width)


def afg_of(rho: Term, width: int = WIDTH) -> Afg:
    """Graph whose path disjunction equals ``rho``; negation is pushed to atoms."""
    if isinstance(rho, Not):
        return afg_of(negate(rho.arg, width), width)
    if isinstance(rho, Bin) and rho.op == "&&":
        return join(afg_of(rho.lhs, width), afg_of(rho.rhs, width))
    if isinstance(rho, Bin) and rho.op == "||":
        return union(afg_of(rho.lhs, width), afg_of(rho.rhs, width))
    return Afg.single(as_condition(rho, width))


def afg_of_negation(rho: Term, width: int = WIDTH) -> Afg:
    return afg_of(negate(as_condition(rho, width), width), width)


# ---------------------------------------------------------------------------
# paths and acceptance


def count_paths(g: Afg) -> int:
    n: dict[int, int] = {}
    for v in reversed(g.topo_order()):
        n[v] = 1 if not g.succ[v] else sum(n[s] for s in g.succ[v])
    return sum(n[v] for v in g.entries())


def path_ids(g: Afg, limit: int = 10_000) -> list[list[int]]:
    if g.is_empty():
        return [[]]
    if count_paths(g) > limit:
        raise PathBudgetExceeded(limit)
    out: list[list[int]] = []

    def dfs(v: int, acc: list[int]):
        acc.append(v)
        if not g.succ[v]:
            out.append(list(acc))
        else:
            for s in sorted(g.succ[v]):
                dfs(s, acc)
        acc.pop()

    for e in g.entries():
        dfs(e, [])
    return out


def paths(g: Afg, limit: int = 10_000) -> list[list[Term]]:
    """One constraint list per entry-to-exit path (the empty graph has one empty path)."""
    return [[g.constraint(v) for v in p] for p in path_ids(g, limit)]


def accepts(
    g: Afg,
    packet: bytes,
    outcomes: Optional[Mapping[Label, bool]] = None,
    width: int = WIDTH,
) -> bool:
    """Whether some path of ``g`` holds on ``packet``; linear in graph size."""
    if g.is_empty():
        return True
    store = ConcreteStore(bytes(packet), outcomes or {})
    ok: dict[int, bool] = {}
    for v in g.topo_order():
        reach = not g.pred[v] or any(ok[p] for p in g.pred[v])
        ok[v] = reach and holds(g.constraint(v), store, width)
    return any(ok[v] for v in g.exits())


def accepts_batch(
    g: Afg,
    packets: np.ndarray,
    outcomes: Optional[Mapping[Label, bool]] = None,
    width: int = WIDTH,
) -> np.ndarray:
    n = packets.shape[0]
    if g.is_empty():
        return np.ones(n, dtype=bool)
    ok: dict[int, np.ndarray] = {}
    for v in g.topo_order():
        if g.pred[v]:
            reach = np.zeros(n, dtype=bool)
            for p in g.pred[v]:
                reach |= ok[p]
        else:
            reach = np.ones(n, dtype=bool)
        ok[v] = reach & holds_batch(g.constraint(v), packets, outcomes, width)
    out = np.zeros(n, dtype=bool)
    for v in g.exits():
        out |= ok[v]
    return out


def formula(g: Afg) -> Term:
    """Disjunction of path conjunctions, as a single term (small graphs only)."""
    disj: Optional[Term] = None
    for p in paths(g):
        conj: Optional[Term] = None
        for c in p:
            conj = c if conj is None else Bin("&&", conj, c)
        conj = conj if conj is not None else Const(1)
        disj = conj if disj is None else Bin("||", disj, conj)
    return disj if disj is not None else FALSE


# ---------------------------------------------------------------------------
# export / import


def _numbering(g: Afg) -> dict[int, int]:
    return {vid: i for i, vid in enumerate(g.topo_order())}


def to_dot(g: Afg, name: str = "afg") -> str:
    num = _numbering(g)
    lines = [f"digraph {name} {{", "  node [shape=box];"]
    for vid, i in sorted(num.items(), key=lambda kv: kv[1]):
        text = render(g.constraint(vid)).replace("\\", "\\\\").replace('"', '\\"')
        lines.append(f'  n{i} [label="{text}"];')
    for a, b in sorted((num[a], num[b]) for a, b in g.edges()):
        lines.append(f"  n{a} -> n{b};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_json_obj(g: Afg) -> dict:
    num = _numbering(g)
    order = sorted(num, key=num.get)
    return {
        "vertices": [
            {"id": num[v], "constraint": to_json(g.constraint(v)), "text": render(g.constraint(v))}
            for v in order
        ],
        "edges": sorted([num[a], num[b]] for a, b in g.edges()),
    }


def export(g: Afg, fmt: str = "json") -> str:
    if fmt == "dot":
        return to_dot(g)
    if fmt == "json":
        return json.dumps(to_json_obj(g), indent=1, ensure_ascii=False) + "\n"
    raise ValueError(f"unknown export format {fmt!r}")


def import_json(text: str) -> Afg:
    obj = json.loads(text)
    g = Afg()
    m = {}
    for v in obj["vertices"]:
        m[v["id"]] = g.add(new_vertex(from_json(v["constraint"]))).id
    for a, b in obj["edges"]:
        g.add_edge(m[a], m[b])
    if not g.is_acyclic():
        raise ValueError("imported graph has a cycle")
    return g


def vertices_in_order(g: Afg) -> Iterator[Vertex]:
    for v in g.topo_order():
        yield g.vertices[v]


def select_free(g: Afg) -> bool:
    return not any(has_select(v.constraint) for v in g.vertices.values())


def _const_value(t: Term) -> Optional[int]:
    return t.value if isinstance(t, Const) else None


def prune_constants(g: Afg) -> Afg:
    """Drop constant vertices without changing the set of accepted packets.

    False vertices are removed together with every vertex that then lies on no
    complete path; true vertices are bypassed where that keeps paths intact.
    """
    g = g.copy()
    if g.is_empty():
        return g
    dead = {v for v in g.vertices if _const_value(g.constraint(v)) == 0}
    changed = True
    while changed:
        changed = False
        for v in g.vertices:
            if v in dead:
                continue
            if (g.pred[v] and g.pred[v] <= dead) or (g.succ[v] and g.succ[v] <= dead):
                dead.add(v)
                changed = True
    for v in dead:
        g.remove(v)
    if g.is_empty():
        return Afg.single(FALSE)
    changed = True
    while changed:
        changed = False
        for v in g.topo_order():
            c = _const_value(g.constraint(v))
            if c is None or c == 0:
                continue
            preds, succs = set(g.pred[v]), set(g.succ[v])
            if not preds and not succs:
                return Afg()  # a path that always holds
            if preds and succs:
                for p in preds:
                    for s in succs:
                        g.add_edge(p, s)
            elif not preds and any(g.pred[s] != {v} for s in succs):
                continue
            elif not succs and any(g.succ[p] != {v} for p in preds):
                continue
            g.remove(v)
            changed = True
            break
    return g


def share_equivalent(g: Afg) -> Afg:
    """Merge vertices that carry the same constraint and have the same successors
    (or the same predecessors). The set of paths, as constraint sequences, is
    unchanged, so acceptance and byte order along paths are preserved.
    """
    g = g.copy()
    changed = True
    while changed:
        changed = False
        for backward in (True, False):
            order = g.topo_order()
            if backward:
                order.reverse()
            keep: dict[tuple, int] = {}
            for v in order:
                near, far = (g.succ[v], g.pred[v]) if backward else (g.pred[v], g.succ[v])
                # an entry (or exit) may only merge with another entry (or exit)
                key = (g.constraint(v), frozenset(near), not far)
                w = keep.setdefault(key, v)
                if w == v:
                    continue
                if backward:
                    for p in g.pred[v]:
                        g.add_edge(p, w)
                else:
                    for s in g.succ[v]:
                        g.add_edge(w, s)
                g.remove(v)
                changed = True
    return g


class PathShapes:
    """Keys graphs so that two graphs get the same key exactly when they have
    the same set of constraint paths (compared through a shared suffix table).
    """

    def __init__(self):
        self.interned: dict[tuple, int] = {}

    def key(self, g: Afg) -> frozenset:
        ids: dict[int, int] = {}
        for v in reversed(g.topo_order()):
            k = (g.constraint(v), frozenset(ids[s] for s in g.succ[v]))
            ids[v] = self.interned.setdefault(k, len(self.interned))
        return frozenset(ids[e] for e in g.entries())

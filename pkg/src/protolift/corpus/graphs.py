"""Hand-built constraint graphs used to exercise decomposition and reordering.

Each builder returns a fresh graph (new vertex ids on every call) together
with the vertex ids named the way the accompanying tests refer to them.
"""
from __future__ import annotations

import random
from typing import Optional

from ..absval import B, Bin, Const, NameAtom, Term
from ..afg import Afg, join, new_vertex, union


def _eq(i: int, c: int) -> Term:
    return Bin("==", B(i), Const(c))


def _ne(i: int, c: int) -> Term:
    return Bin("!=", B(i), Const(c))


def _chain(*constraints: Term) -> Afg:
    g = Afg()
    for c in constraints:
        g = join(g, Afg.single(c))
    return g


def _wired(constraints: dict[str, Term], edges: list[tuple[str, str]]) -> tuple[Afg, dict[str, int]]:
    g = Afg()
    ids = {k: g.add(new_vertex(c)).id for k, c in constraints.items()}
    for a, b in edges:
        g.add_edge(ids[a], ids[b])
    return g, ids


def two_layer() -> tuple[Afg, dict[str, int]]:
    """Two entries, each joined to the same three successors: one vertical cut."""
    return _wired(
        {"r1": _eq(0, 1), "r2": _eq(0, 2), "r3": _eq(1, 0), "r4": _eq(1, 1), "r5": Bin(">", B(1), Const(5))},
        [(a, b) for a in ("r1", "r2") for b in ("r3", "r4", "r5")],
    )


def shared_suffix() -> tuple[Afg, dict[str, int]]:
    """Two entries sharing part of their continuations; has no vertical cut.

    Edges 1-3, 1-4, 2-3, 3-5; splitting per entry duplicates 3 and 5.
    """
    return _wired(
        {"r1": _eq(0, 0), "r2": _ne(0, 0), "r3": Bin(">", B(1), Const(2)), "r4": _eq(1, 0), "r5": _eq(2, 1)},
        [("r1", "r3"), ("r1", "r4"), ("r2", "r3"), ("r3", "r5")],
    )


def disordered_example() -> Afg:
    """The running example after unfolding, in program order rather than byte order.

    Segments: B[5] branch, the B[6]/B[4] checks that depend on it, the B[3]
    branch, the state name over B[2], then the keyword over B[0..1].
    """
    eq5, ne5 = Afg.single(_eq(5, 0)), Afg.single(_ne(5, 0))
    plus = _chain(NameAtom(B(4), "ctrl"), Bin(">", B(6), Const(0)), Bin("==", Bin("+", B(4), Const(1)), Const(0)))
    minus = _chain(NameAtom(B(4), "ctrl"), Bin(">", B(6), Const(0)), Bin("==", Bin("-", B(4), Const(1)), Const(0)))
    # the B[5] outcome decides which B[4] check applies
    g = union(join(eq5, plus), join(ne5, minus))
    code = Bin("|", Bin("<<", B(0), Const(8)), B(1))
    tail = _chain(
        NameAtom(code, "code"),
        Bin("==", code, Const(10)),
    )
    branch3 = union(_chain(_eq(3, 0)), _chain(_ne(3, 0)))
    state = _chain(NameAtom(B(2), "state"))
    return join(join(join(g, tail), branch3), state)


def random_reorderable(seed: int, max_bytes: int = 6, max_vertices: int = 10) -> Afg:
    """Random selection-free graph built from joins and unions of byte comparisons."""
    rng = random.Random(seed)
    budget = [max_vertices]

    def atom() -> Term:
        i = rng.randrange(max_bytes)
        op = rng.choice(["==", "!=", "<", ">"])
        return Bin(op, B(i), Const(rng.randrange(8)))

    def build(depth: int) -> Optional[Afg]:
        if budget[0] <= 0:
            return None
        if depth == 0 or rng.random() < 0.35:
            budget[0] -= 1
            return Afg.single(atom())
        a, b = build(depth - 1), build(depth - 1)
        if a is None or b is None:
            return a or b
        return join(a, b) if rng.random() < 0.6 else union(a, b)

    return build(4) or Afg.single(atom())


def random_dag(seed: int, max_bytes: int = 5, vertices: int = 7, edge_prob: float = 0.35) -> Afg:
    """Random DAG of byte comparisons; edges only go from lower to higher creation order."""
    rng = random.Random(seed)
    g = Afg()
    ids = []
    for _ in range(vertices):
        c = Bin(rng.choice(["==", "!=", "<", ">"]), B(rng.randrange(max_bytes)), Const(rng.randrange(8)))
        ids.append(g.add(new_vertex(c)).id)
    for j in range(1, vertices):
        for i in range(j):
            if rng.random() < edge_prob:
                g.add_edge(ids[i], ids[j])
    return g

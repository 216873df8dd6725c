"""Seeded generator of small loop-free parser programs, plus a shrinker."""
from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Optional

from ..absval import Label
from .. import lang
from ..lang import (
    Abort,
    Assert,
    Assign,
    Binary,
    Block,
    If,
    Index,
    IntLit,
    LogicalNot,
    Program,
    Read,
    Var,
    While,
)

_ARITH = ("+", "-", "*", "&", "|", "^", "<<", ">>")
_CMP = ("==", "!=", "<", ">", "<=", ">=")


@dataclass(frozen=True)
class GenParams:
    max_bytes: int = 4
    statements: tuple[int, int] = (2, 6)
    max_depth: int = 4
    expr_depth: int = 2
    abort_rate: float = 0.12
    symbolic_index_rate: float = 0.05
    loops: bool = False  # only used by the front-end round-trip property


class _Gen:
    def __init__(self, rng: random.Random, params: GenParams):
        self.rng = rng
        self.p = params
        self.line = 1
        self.names = iter(f"v{i}" for i in range(10_000))

    def label(self) -> Label:
        self.line += 1
        return Label(self.line)

    def byte_index(self, defined: frozenset) -> lang.Expr:
        if self.rng.random() < self.p.symbolic_index_rate:
            return Binary("&", Index(IntLit(self.rng.randrange(self.p.max_bytes))), IntLit(self.p.max_bytes - 1))
        return IntLit(self.rng.randrange(self.p.max_bytes))

    def leaf(self, defined: frozenset) -> lang.Expr:
        r = self.rng.random()
        if r < 0.45:
            return Index(self.byte_index(defined))
        if r < 0.7 and defined:
            return Var(self.rng.choice(sorted(defined)))
        if r < 0.78:
            return Var("len")
        return IntLit(self.rng.randrange(0, 9))

    def value(self, defined: frozenset, depth: int) -> lang.Expr:
        if depth <= 0 or self.rng.random() < 0.4:
            return self.leaf(defined)
        op = self.rng.choice(_ARITH)
        rhs = IntLit(self.rng.randrange(0, 4)) if op in ("<<", ">>", "*") else self.value(defined, depth - 1)
        return Binary(op, self.value(defined, depth - 1), rhs)

    def cond(self, defined: frozenset, depth: int = 1) -> lang.Expr:
        r = self.rng.random()
        if depth > 0 and r < 0.15:
            op = self.rng.choice(("&&", "||"))
            return Binary(op, self.cond(defined, depth - 1), self.cond(defined, depth - 1))
        if depth > 0 and r < 0.22:
            return LogicalNot(self.cond(defined, depth - 1))
        if r < 0.28:
            return self.value(defined, 1)  # integer used as a truth value
        return Binary(self.rng.choice(_CMP), self.value(defined, self.p.expr_depth - 1), IntLit(self.rng.randrange(0, 9)))

    def block(self, defined: frozenset, depth: int, n: int) -> tuple[Block, frozenset]:
        stmts = []
        for _ in range(n):
            s, defined = self.stmt(defined, depth)
            stmts.append(s)
            if isinstance(s, Abort):
                return Block(tuple(stmts)), lang._EVERYTHING
        return Block(tuple(stmts)), defined

    def stmt(self, defined: frozenset, depth: int):
        r = self.rng.random()
        if depth > 0 and r < self.p.abort_rate:
            return Abort(), defined
        if r < 0.4:
            name = self.rng.choice(sorted(defined)) if defined and self.rng.random() < 0.3 else next(self.names)
            if self.rng.random() < 0.5:
                return Read(name, self.byte_index(defined)), defined | {name}
            rhs = self.value(defined, self.p.expr_depth)
            # a bare packet read is its own statement form, as the parser produces it
            stmt = Read(name, rhs.index) if isinstance(rhs, Index) else Assign(name, rhs)
            return stmt, defined | {name}
        if r < 0.65 or depth >= self.p.max_depth:
            return Assert(self.cond(defined)), defined
        lab = self.label()
        c = self.cond(defined)
        then, d1 = self.block(defined, depth + 1, self.rng.randint(0, 3))
        other, d2 = self.block(defined, depth + 1, self.rng.randint(0, 3))
        if self.p.loops and self.rng.random() < 0.2:
            return While(lab, c, then), defined
        return If(lab, c, then, other), lang._meet(d1, d2)


def random_program(seed: int, params: Optional[GenParams] = None) -> Program:
    """Deterministic random program for ``seed``; always passes validation."""
    params = params or GenParams()
    g = _Gen(random.Random(seed), params)
    n = g.rng.randint(*params.statements)
    body, _ = g.block(frozenset(), 0, n)
    prog = Program("parse", "pkt", "len", body)
    lang.validate(prog)
    return prog


# ---------------------------------------------------------------------------
# shrinking


def _block_variants(b: Block) -> Iterator[Block]:
    stmts = b.stmts
    for i in range(len(stmts)):
        yield Block(stmts[:i] + stmts[i + 1 :])
    for i, s in enumerate(stmts):
        for alt in _stmt_variants(s):
            yield Block(stmts[:i] + (alt,) + stmts[i + 1 :])


def _stmt_variants(s: lang.Stmt) -> Iterator[lang.Stmt]:
    if isinstance(s, If):
        yield s.then
        yield s.other
        for b in _block_variants(s.then):
            yield replace(s, then=b)
        for b in _block_variants(s.other):
            yield replace(s, other=b)
    elif isinstance(s, While):
        yield s.body
        for b in _block_variants(s.body):
            yield replace(s, body=b)
    elif isinstance(s, Block):
        yield from _block_variants(s)


def shrink(prog: Program, failing: Callable[[Program], bool], max_rounds: int = 1000) -> Program:
    """Greedy shrink: repeatedly drop or inline statements while ``failing`` stays true."""
    cur = prog
    for _ in range(max_rounds):
        for body in _block_variants(cur.body):
            cand = replace(cur, body=body)
            try:
                lang.validate(cand)
            except lang.ValidationError:
                continue
            if failing(cand):
                cur = cand
                break
        else:
            return cur
    return cur


def program_size(prog: Program) -> int:
    return sum(1 for _ in lang.walk_stmts(prog.body))

"""Naive symbolic path enumeration, the comparison point for the lifter.

Every branch forks the analysis state, so the work grows with the number of
program paths. Each finished path contributes the conjunction of its branch
conditions and assertions.
"""
from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field
from typing import Optional

from .absval import WIDTH, Bin, Byte, Const, Length, NameAtom, Not, Term, wrap
from .afg import Afg, as_condition, join, negate, union
from . import lang
from .lang import Program


class BaselineTimeout(RuntimeError):
    def __init__(self, seconds: float, paths: int):
        super().__init__(f"path enumeration exceeded {seconds:.0f}s after {paths} paths")
        self.paths = paths


@dataclass
class BaselineResult:
    paths: list[list[Term]] = field(default_factory=list)
    seconds: float = 0.0

    def graph(self) -> Afg:
        """Union of one chain per path."""
        out = Afg()
        for p in self.paths:
            chain = Afg()
            for c in p:
                chain = join(chain, Afg.single(c))
            if not p:
                return Afg()
            out = union(out, chain)
        if not self.paths:
            return Afg.single(Const(0))
        return out


def enumerate_paths(
    prog: Program, budget_s: Optional[float] = 60.0, width: int = WIDTH, loop_bound: int = 3
) -> BaselineResult:
    """Enumerate accepting paths; raises BaselineTimeout when ``budget_s`` runs out.

    Loops are unrolled ``loop_bound`` times and paths that would iterate
    further are dropped.
    """
    start = time.perf_counter()
    out = BaselineResult()
    ticks = 0

    def term(e: lang.Expr, env: dict) -> Term:
        if isinstance(e, lang.IntLit):
            return Const(wrap(e.value, width))
        if isinstance(e, lang.Var):
            return Length() if e.name == prog.len_param else env[e.name]
        if isinstance(e, lang.Index):
            return Byte(term(e.index, env))
        if isinstance(e, lang.LogicalNot):
            return Not(term(e.arg, env))
        return Bin(e.op, term(e.lhs, env), term(e.rhs, env))

    def check_time():
        nonlocal ticks
        ticks += 1
        if budget_s is not None and ticks % 256 == 0 and time.perf_counter() - start > budget_s:
            raise BaselineTimeout(budget_s, len(out.paths))

    def run(stmts: list, env: dict, path: list[Term]) -> None:
        check_time()
        if not stmts:
            out.paths.append(path)
            return
        s, rest = stmts[0], stmts[1:]
        if isinstance(s, lang.Block):
            run(list(s.stmts) + rest, env, path)
        elif isinstance(s, (lang.Assign, lang.Read)):
            v = term(s.rhs if isinstance(s, lang.Assign) else lang.Index(s.index), env)
            env = dict(env)
            env[s.lhs] = v
            run(rest, env, path + [NameAtom(v, None)])
        elif isinstance(s, lang.Assert):
            run(rest, env, path + [as_condition(term(s.cond, env), width)])
        elif isinstance(s, lang.Abort):
            return
        elif isinstance(s, lang.If):
            c = as_condition(term(s.cond, env), width)
            run([s.then] + rest, env, path + [c])
            run([s.other] + rest, env, path + [negate(c, width)])
        elif isinstance(s, lang.While):
            # paths needing more iterations are dropped
            unrolled: lang.Stmt = lang.If(s.label, s.cond, lang.Block((lang.Abort(),)), lang.Block(()))
            for _ in range(loop_bound):
                unrolled = lang.If(s.label, s.cond, lang.Block(s.body.stmts + (unrolled,)), lang.Block(()))
            run([unrolled] + rest, env, path)
        else:
            raise TypeError(s)

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 100_000))
    try:
        run([prog.body], {}, [])
    finally:
        sys.setrecursionlimit(old)
    out.seconds = time.perf_counter() - start
    return out


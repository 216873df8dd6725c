"""Concrete big-step execution of parser programs on packets."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .absval import WIDTH, apply_op, wrap
from . import lang
from .lang import Program
from .vector import binop


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.accepted


class _Reject(Exception):
    pass


def run_concrete(prog: Program, packet: bytes, width: int = WIDTH, max_steps: int = 1_000_000) -> Verdict:
    """Execute ``prog``; a failed assertion, ``abort`` or out-of-bounds read rejects."""
    packet = bytes(packet)
    env: dict[str, int] = {}
    steps = 0

    def ev(e: lang.Expr) -> int:
        if isinstance(e, lang.IntLit):
            return wrap(e.value, width)
        if isinstance(e, lang.Var):
            if e.name == prog.len_param:
                return len(packet)
            return env[e.name]
        if isinstance(e, lang.Index):
            i = ev(e.index)
            if not 0 <= i < len(packet):
                raise _Reject(f"out-of-bounds read at index {i}")
            return packet[i]
        if isinstance(e, lang.Binary):
            a = ev(e.lhs)
            if e.op == "&&" and not a:
                return 0
            if e.op == "||" and a:
                return 1
            return apply_op(e.op, a, ev(e.rhs), width)
        if isinstance(e, lang.LogicalNot):
            return int(ev(e.arg) == 0)
        raise TypeError(e)

    def run(s: lang.Stmt) -> None:
        nonlocal steps
        if isinstance(s, lang.Block):
            for x in s.stmts:
                run(x)
        elif isinstance(s, lang.Assign):
            env[s.lhs] = ev(s.rhs)
        elif isinstance(s, lang.Read):
            env[s.lhs] = ev(lang.Index(s.index))
        elif isinstance(s, lang.Assert):
            if not ev(s.cond):
                raise _Reject(f"assertion failed: {lang.format_expr(s.cond, prog.pkt_param)}")
        elif isinstance(s, lang.Abort):
            raise _Reject("abort")
        elif isinstance(s, lang.If):
            run(s.then if ev(s.cond) else s.other)
        elif isinstance(s, lang.While):
            while ev(s.cond):
                steps += 1
                if steps > max_steps:
                    raise _Reject("step budget exhausted")
                run(s.body)
        else:
            raise TypeError(s)

    try:
        run(prog.body)
    except _Reject as r:
        return Verdict(False, str(r))
    return Verdict(True)


def skip_checks_on(prog: Program, names: set[str]) -> Program:
    """Copy of ``prog`` without the assertions that read any variable in ``names``.

    Used to run generated packets past checksum comparisons, which a lifted
    format deliberately leaves out.
    """

    def strip(s: lang.Stmt) -> lang.Stmt:
        if isinstance(s, lang.Block):
            return lang.Block(tuple(strip(x) for x in s.stmts if not _reads(x, names)))
        if isinstance(s, lang.If):
            return replace(s, then=strip(s.then), other=strip(s.other))
        if isinstance(s, lang.While):
            return replace(s, body=strip(s.body))
        return s

    return replace(prog, body=strip(prog.body))


def _reads(s: lang.Stmt, names: set[str]) -> bool:
    return isinstance(s, lang.Assert) and bool(set(lang.expr_vars(s.cond)) & names)


def has_loops(prog: Program) -> bool:
    return any(isinstance(s, lang.While) for s in lang.walk_stmts(prog.body))


def run_concrete_batch(prog: Program, packets: np.ndarray, width: int = WIDTH) -> np.ndarray:
    """Acceptance of every row of ``packets`` (one length); loop-free programs only.

    Both arms of each branch are executed under row masks, so the result
    equals ``run_concrete`` applied row by row.
    """
    if has_loops(prog):
        return np.array([run_concrete(prog, bytes(r.tolist()), width).accepted for r in packets], dtype=bool)
    n, length = packets.shape
    rows = np.arange(n)
    rejected = np.zeros(n, dtype=bool)

    def ev(e: lang.Expr, env: dict) -> tuple[np.ndarray, np.ndarray]:
        if isinstance(e, lang.IntLit):
            return np.full(n, wrap(e.value, width), dtype=np.int64), np.ones(n, dtype=bool)
        if isinstance(e, lang.Var):
            if e.name == prog.len_param:
                return np.full(n, length, dtype=np.int64), np.ones(n, dtype=bool)
            return env[e.name]
        if isinstance(e, lang.Index):
            i, ok = ev(e.index, env)
            inb = ok & (i >= 0) & (i < length)
            if length == 0:
                return np.zeros(n, dtype=np.int64), inb
            return packets[rows, np.clip(i, 0, length - 1)], inb
        if isinstance(e, lang.LogicalNot):
            v, ok = ev(e.arg, env)
            return (v == 0).astype(np.int64), ok
        a, oka = ev(e.lhs, env)
        b, okb = ev(e.rhs, env)
        if e.op == "&&":
            return binop("&&", a, b, width), oka & ((a == 0) | okb)
        if e.op == "||":
            return binop("||", a, b, width), oka & ((a != 0) | okb)
        return binop(e.op, a, b, width), oka & okb

    zero = (np.zeros(n, dtype=np.int64), np.ones(n, dtype=bool))

    def run(s: lang.Stmt, env: dict, live: np.ndarray) -> dict:
        nonlocal rejected
        if isinstance(s, lang.Block):
            for x in s.stmts:
                env = run(x, env, live)
            return env
        if isinstance(s, (lang.Assign, lang.Read)):
            val, ok = ev(s.rhs if isinstance(s, lang.Assign) else lang.Index(s.index), env)
            rejected |= live & ~ok
            env = dict(env)
            env[s.lhs] = (val, np.ones(n, dtype=bool))
            return env
        if isinstance(s, lang.Assert):
            v, ok = ev(s.cond, env)
            rejected |= live & ~(ok & (v != 0))
            return env
        if isinstance(s, lang.Abort):
            rejected |= live
            return env
        if isinstance(s, lang.If):
            c, ok = ev(s.cond, env)
            rejected |= live & ~ok
            take = live & ok & (c != 0)
            env_t = run(s.then, env, take & ~rejected)
            env_f = run(s.other, env, live & ok & (c == 0) & ~rejected)
            merged = {}
            for k in env_t.keys() | env_f.keys():
                vt = env_t.get(k, zero)[0]
                vf = env_f.get(k, zero)[0]
                merged[k] = (np.where(take, vt, vf), np.ones(n, dtype=bool))
            return merged
        raise TypeError(s)

    run(prog.body, {}, np.ones(n, dtype=bool))
    return ~rejected

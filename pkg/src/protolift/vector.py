"""Batch evaluation of terms over many packets of one length, with numpy."""
from __future__ import annotations

import itertools
from typing import Mapping, Optional, Sequence

import numpy as np

from .absval import (
    WIDTH,
    Bin,
    Byte,
    Const,
    Label,
    Length,
    NameAtom,
    Not,
    RepeatAtom,
    Select,
    Tainted,
    Term,
    UnboundLabel,
    UnsupportedAtom,
)


_CMP = {">": np.greater, "<": np.less, ">=": np.greater_equal, "<=": np.less_equal, "==": np.equal, "!=": np.not_equal}
_ARITH = {
    "+": np.add,
    "-": np.subtract,
    "&": np.bitwise_and,
    "|": np.bitwise_or,
    "^": np.bitwise_xor,
    "<<": np.left_shift,
    ">>": np.right_shift,
}


def _wrap(x: np.ndarray, width: int) -> np.ndarray:
    half = 1 << (width - 1)
    return ((x + half) % (1 << width)) - half


def binop(op: str, a: np.ndarray, b: np.ndarray, width: int = WIDTH) -> np.ndarray:
    """Non-short-circuit binary operator on wrapped integer arrays."""
    if op in _CMP:
        return _CMP[op](a, b).astype(np.int64)
    if op == "&&":
        return ((a != 0) & (b != 0)).astype(np.int64)
    if op == "||":
        return ((a != 0) | (b != 0)).astype(np.int64)
    if op == "*":
        r = _wrap(a, width) * _wrap(b, width)
    elif op in ("<<", ">>"):
        r = _ARITH[op](a, b & (width - 1))
    else:
        r = _ARITH[op](a, b)
    return _wrap(r, width)


def all_packets(length: int, values: Sequence[int]) -> np.ndarray:
    """Every packet of ``length`` bytes drawn from ``values``, shape (n, length)."""
    vals = np.asarray(values, dtype=np.int64)
    if length == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.meshgrid(*([vals] * length), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def product_packets(choices: Sequence[Sequence[int]]) -> np.ndarray:
    if not choices:
        return np.zeros((1, 0), dtype=np.int64)
    rows = list(itertools.product(*choices))
    return np.asarray(rows, dtype=np.int64).reshape(len(rows), len(choices))


def eval_batch(
    t: Term,
    packets: np.ndarray,
    outcomes: Optional[Mapping[Label, bool]] = None,
    width: int = WIDTH,
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate ``t`` on each row; returns (values, in_bounds)."""
    n, length = packets.shape
    outcomes = outcomes or {}
    memo: dict = {}

    def ev(x: Term, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        key = id(x)
        if key in memo:
            return memo[key]
        res = _ev(x, mask)
        memo[key] = res
        return res

    def _ev(x: Term, mask):
        if isinstance(x, Const):
            return np.full(n, x.value, dtype=np.int64), np.ones(n, dtype=bool)
        if isinstance(x, Length):
            return np.full(n, length, dtype=np.int64), np.ones(n, dtype=bool)
        if isinstance(x, Byte):
            idx, ok = ev(x.index, mask)
            inb = (idx >= 0) & (idx < length)
            if length == 0:
                return np.zeros(n, dtype=np.int64), ok & inb
            safe = np.clip(idx, 0, length - 1)
            vals = packets[np.arange(n), safe]
            return vals, ok & inb
        if isinstance(x, Select):
            if x.label not in outcomes:
                raise UnboundLabel(x.label)
            return ev(x.then if outcomes[x.label] else x.other, mask)
        if isinstance(x, Not):
            v, ok = ev(x.arg, mask)
            return (v == 0).astype(np.int64), ok
        if isinstance(x, Tainted):
            return ev(x.inner, mask)
        if isinstance(x, NameAtom):
            _, ok = ev(x.value, mask)
            return np.ones(n, dtype=np.int64), ok
        if isinstance(x, RepeatAtom):
            raise UnsupportedAtom("repeat() is only meaningful to the dissector")
        if isinstance(x, Bin):
            a, oka = ev(x.lhs, mask)
            b, okb = ev(x.rhs, mask)
            op = x.op
            if op == "&&":
                decided = oka & (a == 0)
                return ((a != 0) & (b != 0)).astype(np.int64), oka & (decided | okb)
            if op == "||":
                decided = oka & (a != 0)
                return ((a != 0) | (b != 0)).astype(np.int64), oka & (decided | okb)
            return binop(op, a, b, width), oka & okb
        raise TypeError(f"not a term: {x!r}")

    return ev(t, None)


def holds_batch(
    t: Term,
    packets: np.ndarray,
    outcomes: Optional[Mapping[Label, bool]] = None,
    width: int = WIDTH,
) -> np.ndarray:
    v, ok = eval_batch(t, packets, outcomes, width)
    return ok & (v != 0)

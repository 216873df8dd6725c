"""Formats applied to concrete packets: matching, dissection, generation, equivalence."""
from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .absval import (
    COMPARISON,
    LOGICAL,
    WIDTH,
    Bin,
    Byte,
    ConcreteStore,
    Const,
    EvalError,
    Length,
    NameAtom,
    Not,
    RepeatAtom,
    Tainted,
    Term,
    apply_op,
    byte_indices,
    compositions,
    const_byte_indices,
    contains,
    eval_concrete,
    holds,
    render,
    transform,
)
from .concrete import run_concrete_batch
from .emit import Alternation, Format, NonTerminal, Production, Terminal, VarTerminal
from .lang import Program
from .vector import all_packets, eval_batch, holds_batch, product_packets


class Unsatisfiable(RuntimeError):
    def __init__(self, production: str, detail: str = ""):
        super().__init__(f"no packet satisfies {production}{': ' + detail if detail else ''}")
        self.production = production


class BudgetExceeded(RuntimeError):
    pass


class DomainTooLarge(ValueError):
    pass


# ---------------------------------------------------------------------------
# derivations


def derivations(f: Format, limit: int = 100_000) -> Iterator[list[str]]:
    """Every choice of alternatives, as the list of productions used (left to right)."""
    count = 0

    def expand(pending: list[str], acc: list[str]) -> Iterator[list[str]]:
        if not pending:
            yield acc
            return
        head, rest = pending[0], pending[1:]
        rule = f.rule(head)
        options: list[list[str]] = [[]]
        for s in rule.rhs:
            if isinstance(s, NonTerminal):
                options = [o + [s.name] for o in options]
            elif isinstance(s, Alternation):
                options = [o + [c] for o in options for c in s.options]
        for o in options:
            yield from expand(o + rest, acc + [head])

    for d in expand([f.start], []):
        count += 1
        if count > limit:
            raise BudgetExceeded(f"more than {limit} derivations")
        yield d


def has_repeats(f: Format) -> bool:
    return any(isinstance(a, RepeatAtom) for r in f.rules for a in r.assertions)


# ---------------------------------------------------------------------------
# flattening a derivation into packet coordinates


@dataclass
class FieldSlot:
    lo: int
    hi: int
    rule: str
    name: Optional[str] = None
    order: Optional[list[int]] = None  # most significant byte first


@dataclass
class Flat:
    rules: list[str]
    slots: list[FieldSlot] = field(default_factory=list)
    var_slots: list[tuple[int, Term, str]] = field(default_factory=list)
    checks: list[tuple[Term, str]] = field(default_factory=list)


def _remap(t: Term, fn) -> Term:
    def go(x):
        if isinstance(x, Byte) and isinstance(x.index, Const):
            return Byte(Const(fn(x.index.value)))
        if isinstance(x, RepeatAtom):
            return RepeatAtom(fn(x.lo), fn(x.hi), _remap(x.count, fn))
        return None

    return transform(t, go)


class _Layout:
    """Index mapping induced by repeated fields with chosen counts."""

    def __init__(self, repeats: list[RepeatAtom], counts: list[int]):
        self.repeats = repeats
        self.counts = counts

    def at(self, i: int, k: int = 0) -> int:
        d = 0
        for r, n in zip(self.repeats, self.counts):
            if i > r.hi:
                d += (n - 1) * (r.hi - r.lo + 1)
        return i + d + k

    def region(self, idx: set[int]) -> Optional[int]:
        if not idx:
            return None
        for j, r in enumerate(self.repeats):
            if all(r.lo <= i <= r.hi for i in idx):
                return j
        return None


def _repeats_of(f: Format, rules: list[str]) -> list[RepeatAtom]:
    reps = [a for n in rules for a in f.rule(n).assertions if isinstance(a, RepeatAtom)]
    return sorted(set(reps), key=lambda r: (r.lo, r.hi))


def _name_for(p: Production, lo: int, hi: int) -> Optional[str]:
    for a in p.assertions:
        if isinstance(a, NameAtom) and a.name is not None:
            idx = const_byte_indices(a.value)
            if idx and min(idx) == lo and max(idx) == hi and len(idx) == hi - lo + 1:
                return a.name
    return None


def _order_for(p: Production, lo: int, hi: int) -> Optional[list[int]]:
    for a in p.assertions:
        for comp in compositions(a):
            if min(comp) == lo and max(comp) == hi:
                return comp
    return None


def flatten(f: Format, rules: list[str], counts: Optional[list[int]] = None) -> Flat:
    """Terminals and assertions of one derivation, placed at packet offsets.

    ``counts`` gives the instance count of each repeated field (sorted by
    position); bytes after a repeated field move by the extra instances.
    """
    reps = _repeats_of(f, rules)
    counts = list(counts) if counts is not None else [1] * len(reps)
    lay = _Layout(reps, counts)
    out = Flat(list(rules))
    for name in rules:
        p = f.rule(name)
        for s in p.rhs:
            if isinstance(s, Terminal):
                j = lay.region(set(range(s.lo, s.hi + 1)))
                stride = 0 if j is None else reps[j].hi - reps[j].lo + 1
                inst = range(counts[j]) if j is not None else [0]
                nm, order = _name_for(p, s.lo, s.hi), _order_for(p, s.lo, s.hi)
                for k in inst:
                    slot_name = nm if j is None or nm is None else f"{nm}[{k}]"
                    shift = lay.at(s.lo, k * stride) - s.lo
                    out.slots.append(
                        FieldSlot(s.lo + shift, s.hi + shift, name, slot_name, [i + shift for i in order] if order else None)
                    )
            elif isinstance(s, VarTerminal):
                out.var_slots.append((lay.at(s.lo), _remap(s.end, lay.at), name))
        for a in p.assertions:
            if isinstance(a, RepeatAtom):
                j = reps.index(a)
                out.checks.append((Bin("==", _remap(a.count, lay.at), Const(counts[j])), name))
                continue
            j = lay.region(const_byte_indices(a))
            if j is None:
                out.checks.append((_remap(a, lay.at), name))
            else:
                stride = reps[j].hi - reps[j].lo + 1
                for k in range(counts[j]):
                    out.checks.append((_remap(a, lambda i, k=k: lay.at(i, k * stride)), name))
    return out


def _count_values(f: Format, rules: list[str], packet: bytes, width: int) -> Optional[list[int]]:
    """Instance counts read from the packet itself, in position order."""
    reps = _repeats_of(f, rules)
    counts: list[int] = []
    for j, r in enumerate(reps):
        lay = _Layout(reps[:j], counts)
        try:
            n = eval_concrete(_remap(r.count, lay.at), ConcreteStore(packet), width)
        except EvalError:
            return None
        if n < 0 or n > len(packet):
            return None
        counts.append(n)
    return counts


# ---------------------------------------------------------------------------
# matching


def _slot_failure(flat: Flat, packet: bytes, width: int) -> Optional[tuple[str, str]]:
    n = len(packet)
    for s in flat.slots:
        if s.hi >= n:
            return s.rule, f"B[{s.hi}] is beyond the packet end"
    for lo, end, rule in flat.var_slots:
        try:
            e = eval_concrete(end, ConcreteStore(packet), width)
        except EvalError:
            return rule, f"length of B[{lo}..{render(end)}] is unreadable"
        if not lo <= e < n:
            return rule, f"B[{lo}..{render(end)}] does not fit the packet"
    return None


def flat_failure(flat: Flat, packet: bytes, width: int = WIDTH) -> Optional[tuple[str, str]]:
    """First (production, reason) that rejects ``packet``, or None on a match."""
    bad = _slot_failure(flat, packet, width)
    if bad:
        return bad
    store = ConcreteStore(packet)
    for t, rule in flat.checks:
        if not holds(t, store, width):
            return rule, f"assert({render(t)})"
    return None


@dataclass
class FieldValue:
    lo: int
    hi: int
    name: Optional[str]
    value: int
    rule: str


@dataclass
class DissectionResult:
    accepted: bool
    derivation: list[str] = field(default_factory=list)
    fields: list[FieldValue] = field(default_factory=list)
    matches: int = 0
    violated: Optional[str] = None
    violated_rule: Optional[str] = None

    def __bool__(self) -> bool:
        return self.accepted


def _fields(flat: Flat, packet: bytes) -> list[FieldValue]:
    out = []
    for s in flat.slots:
        order = s.order or list(range(s.lo, s.hi + 1))
        v = 0
        for i in order:
            v = (v << 8) | packet[i]
        out.append(FieldValue(s.lo, s.hi, s.name, v, s.rule))
    return out


def dissect(f: Format, packet: bytes, width: int = WIDTH, limit: int = 100_000, max_matches: int = 64) -> DissectionResult:
    """Match ``packet`` against the derivations of ``f``.

    On success reports the first matching derivation with its field values
    and how many derivations match (counted up to ``max_matches`` when
    repeated fields force enumeration). On failure names the production and
    the assertion or terminal that rejected the packet.
    """
    packet = bytes(packet)
    if not has_repeats(f):
        return _dissect_plain(f, packet, width)
    best: Optional[tuple[int, str, str]] = None
    result = DissectionResult(False)
    for rules in derivations(f, limit):
        counts = _count_values(f, rules, packet, width)
        if counts is None:
            rep_rule = next(n for n in rules if any(isinstance(a, RepeatAtom) for a in f.rule(n).assertions))
            fail: Optional[tuple[str, str]] = (rep_rule, "repeat count is unreadable or too large")
        else:
            flat = flatten(f, rules, counts)
            fail = flat_failure(flat, packet, width)
        if fail is None:
            if not result.accepted:
                result = DissectionResult(True, rules, _fields(flat, packet))
            result.matches += 1
            if result.matches >= max_matches:
                break
        elif not result.accepted:
            depth = rules.index(fail[0])
            if best is None or depth > best[0]:
                best = (depth, fail[0], fail[1])
    if not result.accepted and best is not None:
        result.violated_rule, result.violated = best[1], best[2]
    return result


def matches_derivation(f: Format, rules: list[str], packet: bytes, width: int = WIDTH) -> bool:
    """Whether ``packet`` matches the one derivation ``rules`` (as returned by generate)."""
    packet = bytes(packet)
    counts = _count_values(f, rules, packet, width)
    if counts is None:
        return False
    return flat_failure(flatten(f, rules, counts), packet, width) is None


def _dissect_plain(f: Format, packet: bytes, width: int) -> DissectionResult:
    store = ConcreteStore(packet)
    local: dict[str, bool] = {}
    ways: dict[str, int] = {}

    def ok_here(name: str) -> bool:
        if name not in local:
            local[name] = _local_match(f.rule(name), packet, store, width)
        return local[name]

    def count(name: str) -> int:
        if name not in ways:
            n = 1 if ok_here(name) else 0
            for s in f.rule(name).rhs:
                if n == 0:
                    break
                if isinstance(s, NonTerminal):
                    n *= count(s.name)
                elif isinstance(s, Alternation):
                    n *= sum(count(o) for o in s.options)
            ways[name] = n
        return ways[name]

    def first(name: str) -> list[str]:
        out = [name]
        for s in f.rule(name).rhs:
            if isinstance(s, NonTerminal):
                out += first(s.name)
            elif isinstance(s, Alternation):
                out += first(next(o for o in s.options if count(o)))
        return out

    def blame(name: str) -> tuple[str, str]:
        p = f.rule(name)
        if not ok_here(name):
            return name, _local_reason(p, packet, store, width)
        for s in p.rhs:
            if isinstance(s, NonTerminal) and not count(s.name):
                return blame(s.name)
            if isinstance(s, Alternation) and not any(count(o) for o in s.options):
                return blame(s.options[0])
        raise AssertionError("blame called on a matching production")

    total = count(f.start)
    if total:
        rules = first(f.start)
        return DissectionResult(True, rules, _fields(flatten(f, rules), packet), total)
    rule, why = blame(f.start)
    return DissectionResult(False, violated=why, violated_rule=rule)


def _local_match(p: Production, packet: bytes, store: ConcreteStore, width: int) -> bool:
    n = len(packet)
    if any(s.hi >= n for s in p.rhs if isinstance(s, Terminal)):
        return False
    for s in p.rhs:
        if isinstance(s, VarTerminal):
            try:
                e = eval_concrete(s.end, store, width)
            except EvalError:
                return False
            if not s.lo <= e < n:
                return False
    return all(holds(a, store, width) for a in p.assertions)


def _local_reason(p: Production, packet: bytes, store: ConcreteStore, width: int) -> str:
    n = len(packet)
    for s in p.rhs:
        if isinstance(s, Terminal) and s.hi >= n:
            return f"B[{s.hi}] is beyond the packet end"
        if isinstance(s, VarTerminal):
            try:
                e = eval_concrete(s.end, store, width)
            except EvalError:
                return f"length of {s} is unreadable"
            if not s.lo <= e < n:
                return f"{s} does not fit the packet"
    for a in p.assertions:
        if not holds(a, store, width):
            return f"assert({render(a)})"
    return "no reason found"


def accepts(f: Format, packet: bytes, width: int = WIDTH) -> bool:
    """Whether some derivation of ``f`` matches ``packet``."""
    packet = bytes(packet)
    if has_repeats(f):
        return dissect(f, packet, width, max_matches=1).accepted
    store = ConcreteStore(packet)
    memo: dict[str, bool] = {}

    def match(name: str) -> bool:
        if name not in memo:
            p = f.rule(name)
            ok = _local_match(p, packet, store, width)
            for s in p.rhs:
                if not ok:
                    break
                if isinstance(s, NonTerminal):
                    ok = match(s.name)
                elif isinstance(s, Alternation):
                    ok = any(match(o) for o in s.options)
            memo[name] = ok
        return memo[name]

    return match(f.start)


def accepts_batch(f: Format, packets: np.ndarray, width: int = WIDTH) -> np.ndarray:
    """Vectorized ``accepts`` over packets of one length."""
    if has_repeats(f):
        return np.array([accepts(f, bytes(r.tolist()), width) for r in packets], dtype=bool)
    n, length = packets.shape
    memo: dict[str, np.ndarray] = {}

    def match(name: str) -> np.ndarray:
        if name in memo:
            return memo[name]
        p = f.rule(name)
        ok = np.ones(n, dtype=bool)
        for s in p.rhs:
            if isinstance(s, Terminal) and s.hi >= length:
                ok[:] = False
        for s in p.rhs:
            if isinstance(s, VarTerminal):
                e, eok = eval_batch(s.end, packets, None, width)
                ok &= eok & (s.lo <= e) & (e < length)
        for a in p.assertions:
            if not ok.any():
                break
            ok &= holds_batch(a, packets, None, width)
        for s in p.rhs:
            if not ok.any():
                break
            if isinstance(s, NonTerminal):
                ok &= match(s.name)
            elif isinstance(s, Alternation):
                alt = np.zeros(n, dtype=bool)
                for o in s.options:
                    alt |= match(o)
                ok &= alt
        memo[name] = ok
        return ok

    return match(f.start)


# ---------------------------------------------------------------------------
# equivalence against a program


@dataclass
class EquivReport:
    """Counterexamples (at most ``keep`` of each kind are stored) and totals."""

    soundness: list[bytes] = field(default_factory=list)  # format accepts, program rejects
    completeness: list[bytes] = field(default_factory=list)  # program accepts, format rejects
    checked: int = 0
    soundness_total: int = 0
    completeness_total: int = 0

    @property
    def ok(self) -> bool:
        return not self.soundness and not self.completeness

    def summary(self) -> str:
        return (
            f"checked {self.checked} packets: {self.soundness_total} soundness and "
            f"{self.completeness_total} completeness violations"
        )


def domain_size(lengths: Iterable[int], values: Iterable[int]) -> int:
    k = len(list(values))
    return sum(k**n for n in lengths)


def check_equiv(
    prog: Program,
    f: Format,
    lengths: Iterable[int] = range(0, 5),
    values: Iterable[int] = range(8),
    width: int = WIDTH,
    max_packets: int = 10_000_000,
    keep: int = 20,
    positions: Optional[Sequence[Sequence[int]]] = None,
) -> EquivReport:
    """Exhaustively compare program and format on every packet of the domain.

    ``positions[i]``, when given, replaces ``values`` as the choices for byte i.
    """
    lengths, values = list(lengths), list(values)
    positions = [list(p) for p in positions or ()]

    def choices(n: int) -> list[list[int]]:
        return [positions[i] if i < len(positions) else values for i in range(n)]

    total = sum(math.prod(len(c) for c in choices(n)) for n in lengths)
    if total > max_packets:
        raise DomainTooLarge(f"{total} packets exceed the limit of {max_packets}")
    rep = EquivReport()
    for n in lengths:
        pk = product_packets(choices(n)) if positions else all_packets(n, values)
        prog_ok = run_concrete_batch(prog, pk, width)
        fmt_ok = accepts_batch(f, pk, width)
        unsound = np.nonzero(fmt_ok & ~prog_ok)[0]
        incomplete = np.nonzero(prog_ok & ~fmt_ok)[0]
        rep.soundness_total += len(unsound)
        rep.completeness_total += len(incomplete)
        for i in unsound[: max(0, keep - len(rep.soundness))]:
            rep.soundness.append(bytes(pk[i].tolist()))
        for i in incomplete[: max(0, keep - len(rep.completeness))]:
            rep.completeness.append(bytes(pk[i].tolist()))
        rep.checked += len(pk)
    return rep


# ---------------------------------------------------------------------------
# generation


def _strict(t: Term) -> bool:
    return not contains(t, lambda x: isinstance(x, Bin) and x.op in LOGICAL)


def _symbolic(t: Term) -> bool:
    return any(not isinstance(i, Const) for i in byte_indices(t))


class _NodeBudget:
    """Search nodes left; shared by every length and repeat count tried for one derivation."""

    def __init__(self, nodes: int):
        self.left = nodes

    def spend(self) -> None:
        self.left -= 1
        if self.left < 0:
            raise BudgetExceeded("search budget exhausted")


def solve(
    checks: list[Term],
    min_length: int,
    rng: random.Random,
    width: int = WIDTH,
    extra_lengths: int = 8,
    node_budget: Union[int, _NodeBudget] = 20_000,
) -> Optional[bytes]:
    """Smallest-length packet satisfying every check, searched by propagation and backtracking.

    Each byte's candidate values are narrowed by the checks that read only
    that byte; remaining bytes are assigned in index order, checking every
    constraint as soon as its last byte is fixed. Returns None when no packet
    of the tried lengths works; raises BudgetExceeded when the search gives up.
    """
    budget = node_budget if isinstance(node_budget, _NodeBudget) else _NodeBudget(node_budget)
    for length in range(min_length, min_length + extra_lengths + 1):
        got = _solve_length(checks, length, rng, width, budget)
        if got is not None:
            return got
    return None


def _solve_length(checks, length, rng, width, budget: _NodeBudget) -> Optional[bytes]:
    final: list[Term] = []
    by_last: dict[int, list[Term]] = {}
    reads: dict[Term, set[int]] = {}
    for t in checks:
        idx = reads[t] = const_byte_indices(t)
        if _symbolic(t) or (idx and max(idx) >= length):
            if idx and max(idx) >= length and _strict(t):
                return None
            final.append(t)
        elif not idx:
            if not holds(t, ConcreteStore(bytes(length)), width):
                return None
        else:
            by_last.setdefault(max(idx), []).append(t)
    base = np.zeros((256, length), dtype=np.int64)
    column = np.arange(256, dtype=np.int64)
    domains: list[np.ndarray] = []
    for i in range(length):
        ok = np.ones(256, dtype=bool)
        rows = base.copy()
        rows[:, i] = column
        for t in by_last.get(i, []):
            if reads[t] == {i}:
                ok &= holds_batch(t, rows, None, width)
        cand = column[ok]
        if len(cand) == 0:
            return None
        domains.append(cand)
    pairs = [t for ts in by_last.values() for t in ts if len(reads[t]) == 2]
    if pairs and not _pairwise_consistent(pairs, reads, domains, length, width):
        return None
    multi = {i: [t for t in ts if len(reads[t]) > 1] for i, ts in by_last.items()}
    needed = [bool(final)] * length
    for last, ts in by_last.items():
        for t in ts:
            for j in reads[t]:
                if j < last:
                    needed[j] = True
    ranges = [(int(d[0]), int(d[-1])) for d in domains]
    packet = np.zeros(length, dtype=np.int64)

    def assign(i: int) -> bool:
        if i == length:
            pkt = bytes(packet.tolist())
            store = ConcreteStore(pkt)
            return all(holds(t, store, width) for t in final)
        budget.spend()
        cand = domains[i]
        if multi.get(i):
            rows = np.repeat(packet[None, :], len(cand), axis=0)
            rows[:, i] = cand
            ok = np.ones(len(cand), dtype=bool)
            for t in multi[i]:
                ok &= holds_batch(t, rows, None, width)
            cand = cand[ok]
        if len(cand) == 0:
            return False
        order = list(cand.tolist())
        rng.shuffle(order)
        for v in order if needed[i] else order[:1]:
            packet[i] = v
            if final and _refuted_on_prefix(final, packet[: i + 1], length, width, ranges):
                budget.spend()
                continue
            if assign(i + 1):
                return True
        return False

    return bytes(packet.tolist()) if assign(0) else None


def _pairwise_consistent(pairs: list[Term], reads: dict, domains: list[np.ndarray], length: int, width: int) -> bool:
    """Drop byte values that no value of the partner byte supports, until nothing changes.

    Narrows ``domains`` in place; False when some domain becomes empty.
    """
    changed = True
    while changed:
        changed = False
        for t in pairs:
            i, j = sorted(reads[t])
            di, dj = domains[i], domains[j]
            rows = np.zeros((len(di) * len(dj), length), dtype=np.int64)
            rows[:, i] = np.repeat(di, len(dj))
            rows[:, j] = np.tile(dj, len(di))
            ok = holds_batch(t, rows, None, width).reshape(len(di), len(dj))
            keep_i, keep_j = ok.any(axis=1), ok.any(axis=0)
            if not keep_i.any():
                return False
            if not (keep_i.all() and keep_j.all()):
                domains[i], domains[j] = di[keep_i], dj[keep_j]
                changed = True
    return True


def _refuted_on_prefix(
    checks: list[Term], prefix: np.ndarray, length: int, width: int, ranges: Optional[list[tuple[int, int]]] = None
) -> bool:
    """Whether some check is false however the bytes after ``prefix`` are filled in."""
    known = bytes(prefix.tolist())
    return any(_bounds(t, known, length, width, ranges) == (0, 0) for t in checks)


_UNKNOWN = (-math.inf, math.inf)


def _truth(b: tuple) -> Optional[bool]:
    if b == (0, 0):
        return False
    if b[0] > 0 or b[1] < 0:
        return True
    return None


def _bounds(
    t: Term, known: bytes, length: int, width: int, ranges: Optional[list[tuple[int, int]]] = None
) -> tuple:
    """Interval holding the value of ``t`` for every in-bounds completion of ``known``.

    Bytes past ``known`` range over ``ranges`` (default 0..255). A read that may fail only makes
    the check fail, so it never widens the interval of a false check. Any
    bound that could wrap around the integer width gives up.
    """
    low, high = -(1 << (width - 1)), (1 << (width - 1)) - 1

    def byte_range(k: int) -> tuple:
        if k < len(known):
            return (known[k], known[k])
        return ranges[k] if ranges is not None and k < len(ranges) else (0, 255)

    def fit(lo, hi) -> tuple:
        return (lo, hi) if low <= lo and hi <= high else _UNKNOWN

    def go(t: Term) -> tuple:
        if isinstance(t, Const):
            return (t.value, t.value)
        if isinstance(t, Length):
            return (length, length)
        if isinstance(t, Byte):
            i = go(t.index)
            first, last = max(i[0], 0), min(i[1], length - 1)
            if last < first or last - first > 64:
                return (0, 255)
            spots = [byte_range(k) for k in range(int(first), int(last) + 1)]
            return (min(lo for lo, _ in spots), max(hi for _, hi in spots))
        if isinstance(t, Not):
            v = _truth(go(t.arg))
            return _UNKNOWN_BOOL if v is None else (int(not v),) * 2
        if isinstance(t, NameAtom):
            go(t.value)
            return (1, 1)
        if isinstance(t, Tainted):
            return go(t.inner)
        if not isinstance(t, Bin):
            return _UNKNOWN
        a = go(t.lhs)
        if t.op in LOGICAL:
            ta = _truth(a)
            if t.op == "&&" and ta is False:
                return (0, 0)
            if t.op == "||" and ta is True:
                return (1, 1)
            tb = _truth(go(t.rhs))
            if ta is not None:
                return _UNKNOWN_BOOL if tb is None else (int(tb),) * 2
            if t.op == "&&" and tb is False:
                return (0, 0)
            if t.op == "||" and tb is True:
                return (1, 1)
            return _UNKNOWN_BOOL
        b = go(t.rhs)
        if math.inf in (abs(a[0]), abs(a[1]), abs(b[0]), abs(b[1])):
            return _UNKNOWN_BOOL if t.op in COMPARISON else _UNKNOWN
        if t.op in COMPARISON:
            return _compare(t.op, a, b)
        if a[0] == a[1] and b[0] == b[1]:
            r = apply_op(t.op, a[0], b[0], width)
            return (r, r)
        if t.op == "+":
            return fit(a[0] + b[0], a[1] + b[1])
        if t.op == "-":
            return fit(a[0] - b[1], a[1] - b[0])
        if t.op == "*":
            ends = [x * y for x in a for y in b]
            return fit(min(ends), max(ends))
        if a[0] < 0 or b[0] < 0:
            return _UNKNOWN
        ceiling = (1 << int(max(a[1], b[1])).bit_length()) - 1
        if t.op == "&":
            return (0, min(a[1], b[1]))
        if t.op == "|":
            return (max(a[0], b[0]), ceiling)
        if t.op == "^":
            return (0, ceiling)
        if b[0] == b[1]:
            k = b[0] & (width - 1)
            if t.op == "<<":
                return fit(a[0] << k, a[1] << k)
            if t.op == ">>":
                return (a[0] >> k, a[1] >> k)
        return _UNKNOWN

    return go(t)


_UNKNOWN_BOOL = (0, 1)


def _compare(op: str, a: tuple, b: tuple) -> tuple:
    if op in (">", ">="):
        op, a, b = {">": "<", ">=": "<="}[op], b, a
    if op == "<":
        verdict = True if a[1] < b[0] else False if a[0] >= b[1] else None
    elif op == "<=":
        verdict = True if a[1] <= b[0] else False if a[0] > b[1] else None
    else:
        same = a[0] == a[1] == b[0] == b[1]
        apart = a[1] < b[0] or b[1] < a[0]
        verdict = True if same else False if apart else None
        if op == "!=" and verdict is not None:
            verdict = not verdict
    return _UNKNOWN_BOOL if verdict is None else (int(verdict),) * 2


def _min_length(flat: Flat) -> int:
    hi = max((s.hi for s in flat.slots), default=-1)
    for t, _ in flat.checks:
        idx = const_byte_indices(t)
        if idx and _strict(t):
            hi = max(hi, max(idx))
    return hi + 1


def _count_choices(rng: random.Random, k: int) -> Iterator[tuple[int, ...]]:
    if k == 0:
        yield ()
        return
    first = tuple(rng.randint(1, 3) for _ in range(k))
    yield first
    for combo in itertools.product(range(0, 7), repeat=k):
        if combo != first:
            yield combo


def solve_derivation(
    f: Format, rules: list[str], rng: random.Random, width: int = WIDTH, node_budget: int = 20_000
) -> Optional[bytes]:
    reps = _repeats_of(f, rules)
    budget = _NodeBudget(node_budget)
    for counts in itertools.islice(_count_choices(rng, len(reps)), 64):
        flat = flatten(f, rules, list(counts))
        pkt = solve([t for t, _ in flat.checks], _min_length(flat), rng, width, node_budget=budget)
        if pkt is None:
            continue
        pkt = _extend_var_slots(flat, pkt, width)
        if pkt is not None and flat_failure(flat, pkt, width) is None:
            return pkt
    return None


def _extend_var_slots(flat: Flat, pkt: bytes, width: int) -> Optional[bytes]:
    for _ in range(4):
        bad = _slot_failure(flat, pkt, width)
        if bad is None:
            return pkt
        need = 0
        for lo, end, _ in flat.var_slots:
            try:
                need = max(need, eval_concrete(end, ConcreteStore(pkt), width) + 1)
            except EvalError:
                return None
        if need <= len(pkt) or need > len(pkt) + 4096:
            return None
        pkt = pkt + bytes(need - len(pkt))
    return None


def generate(
    f: Format,
    count: int = 1,
    seed: int = 0,
    width: int = WIDTH,
    derivation_limit: int = 4096,
    node_budget: int = 20_000,
) -> list[tuple[bytes, list[str]]]:
    """``count`` packets, each paired with the derivation it was solved for.

    Derivations are visited round-robin so every satisfiable alternative is
    exercised. Raises Unsatisfiable when no derivation has a solution.
    """
    rng = random.Random(seed)
    try:
        ders = list(derivations(f, derivation_limit))
    except BudgetExceeded:
        ders = list(itertools.islice(derivations(f, 1 << 62), derivation_limit))
    out: list[tuple[bytes, list[str]]] = []
    dead: set[int] = set()
    over_budget = False
    i = 0
    while len(out) < count and len(dead) < len(ders):
        k = i % len(ders)
        i += 1
        if k in dead:
            continue
        try:
            pkt = solve_derivation(f, ders[k], rng, width, node_budget)
        except BudgetExceeded:
            pkt, over_budget = None, True
        if pkt is None:
            dead.add(k)
            continue
        out.append((pkt, ders[k]))
    if not out:
        if over_budget:
            raise BudgetExceeded("no derivation could be solved within the search budget")
        raise Unsatisfiable(f.start, "every derivation is contradictory")
    return out


def lint(f: Format, width: int = WIDTH, node_budget: int = 20_000) -> list[str]:
    """Productions whose own assertions contradict each other."""
    rng = random.Random(0)
    bad = []
    for r in f.rules:
        checks = [a for a in r.assertions if not isinstance(a, RepeatAtom)]
        min_len = max((s.hi + 1 for s in r.rhs if isinstance(s, Terminal)), default=0)
        try:
            if solve(checks, min_len, rng, width, node_budget=node_budget) is None:
                bad.append(r.lhs)
        except BudgetExceeded:
            pass
    return bad


# ---------------------------------------------------------------------------
# packet files


def parse_hex_lines(text: str) -> list[bytes]:
    """One packet per non-blank line; spaces, ``0x`` prefixes and ``#`` comments are allowed.

    A line holding only ``-`` is the empty packet.
    """
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "-":
            out.append(b"")
            continue
        toks = line.replace(",", " ").split()
        if len(toks) == 1 and not toks[0].lower().startswith("0x"):
            out.append(bytes.fromhex(toks[0]))
        else:
            out.append(bytes(int(t, 16) for t in toks))
    return out


def to_hex_line(pkt: bytes) -> str:
    return pkt.hex(" ") if pkt else "-"


def field_report(res: DissectionResult) -> list[str]:
    """Tab-separated rows: span, name, value."""
    rows = []
    for fv in res.fields:
        span = f"B[{fv.lo}]" if fv.lo == fv.hi else f"B[{fv.lo}..{fv.hi}]"
        rows.append(f"{span}\t{fv.name or '-'}\t{fv.value}")
    return rows

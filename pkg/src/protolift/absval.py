"""Symbolic values over packet bytes.

Terms are immutable and hashable. A ``Select`` node merges the two values a
variable may hold after a labelled branch; ``normalize`` pushes selections
outward so every other node sees plain operands.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Iterator, Mapping, Optional, Sequence

WIDTH = 32

LOGICAL = frozenset({"&&", "||"})
COMPARISON = frozenset({">", "<", ">=", "<=", "==", "!="})
ARITH = frozenset({"+", "-", "*", "&", "|", "^", "<<", ">>"})
OPS = LOGICAL | COMPARISON | ARITH

NEGATED = {">": "<=", "<=": ">", "<": ">=", ">=": "<", "==": "!=", "!=": "=="}


class EvalError(Exception):
    pass


class OutOfBounds(EvalError):
    def __init__(self, index: int):
        super().__init__(f"byte index {index} out of bounds")
        self.index = index


class UnboundLabel(EvalError):
    def __init__(self, label):
        super().__init__(f"no branch outcome for {label}")
        self.label = label


class UnsupportedAtom(EvalError):
    pass


@dataclass(frozen=True, order=True)
class Label:
    """Branch label. Ordered by source position; ``copy`` distinguishes unrolled loop bodies."""

    line: int
    col: int = 0
    copy: int = 0

    def __str__(self) -> str:
        s = f"k{self.line}"
        if self.col:
            s += f":{self.col}"
        if self.copy:
            s += f"#{self.copy}"
        return s

    @classmethod
    def parse(cls, text: str) -> "Label":
        body = text[1:] if text.startswith("k") else text
        copy = 0
        if "#" in body:
            body, c = body.split("#")
            copy = int(c)
        col = 0
        if ":" in body:
            body, c = body.split(":")
            col = int(c)
        return cls(int(body), col, copy)


class Term:
    __slots__ = ()

    def children(self) -> tuple["Term", ...]:
        return ()

    def rebuild(self, kids: Sequence["Term"]) -> "Term":
        return self

    @cached_property
    def _hash(self) -> int:
        return hash((type(self).__name__,) + self._key())

    def __hash__(self) -> int:
        return self._hash

    def _key(self) -> tuple:
        raise NotImplementedError

    def __str__(self) -> str:
        return render(self)


def _term(cls):
    # frozen dataclass with a cached structural hash
    cls = dataclass(frozen=True, eq=True, repr=True)(cls)
    cls.__hash__ = Term.__hash__
    return cls


@_term
class Const(Term):
    value: int

    def _key(self):
        return (self.value,)


@_term
class Length(Term):
    def _key(self):
        return ()


@_term
class Byte(Term):
    index: Term

    def children(self):
        return (self.index,)

    def rebuild(self, kids):
        return Byte(kids[0])

    def _key(self):
        return (self.index,)


@_term
class Select(Term):
    label: Label
    then: Term
    other: Term

    def children(self):
        return (self.then, self.other)

    def rebuild(self, kids):
        return Select(self.label, kids[0], kids[1])

    def _key(self):
        return (self.label, self.then, self.other)


@_term
class Bin(Term):
    op: str
    lhs: Term
    rhs: Term

    def children(self):
        return (self.lhs, self.rhs)

    def rebuild(self, kids):
        return Bin(self.op, kids[0], kids[1])

    def _key(self):
        return (self.op, self.lhs, self.rhs)


@_term
class Not(Term):
    arg: Term

    def children(self):
        return (self.arg,)

    def rebuild(self, kids):
        return Not(kids[0])

    def _key(self):
        return (self.arg,)


@_term
class NameAtom(Term):
    """``name(B[i..j]) = "x"``: the bytes read by ``value`` form a field called ``name``.

    Evaluates to true whenever every byte it references is inside the packet.
    ``name`` is None for anonymous field markers.
    """

    value: Term
    name: Optional[str]

    def children(self):
        return (self.value,)

    def rebuild(self, kids):
        return NameAtom(kids[0], self.name)

    def _key(self):
        return (self.value, self.name)


@_term
class RepeatAtom(Term):
    """``repeat(B[lo..hi]) = count``."""

    lo: int
    hi: int
    count: Term

    def children(self):
        return (self.count,)

    def rebuild(self, kids):
        return RepeatAtom(self.lo, self.hi, kids[0])

    def _key(self):
        return (self.lo, self.hi, self.count)


@_term
class Tainted(Term):
    """Marks a value computed from loop state that was cut off by bounded unrolling."""

    inner: Term

    def children(self):
        return (self.inner,)

    def rebuild(self, kids):
        return Tainted(kids[0])

    def _key(self):
        return (self.inner,)


TRUE = Const(1)
FALSE = Const(0)


def B(i: int) -> Byte:
    return Byte(Const(i))


# ---------------------------------------------------------------------------
# fixed-width arithmetic


def wrap(x: int, width: int = WIDTH) -> int:
    half = 1 << (width - 1)
    return ((x + half) % (1 << width)) - half


def apply_op(op: str, a: int, b: int, width: int = WIDTH) -> int:
    if op == "+":
        r = a + b
    elif op == "-":
        r = a - b
    elif op == "*":
        r = a * b
    elif op == "&":
        r = a & b
    elif op == "|":
        r = a | b
    elif op == "^":
        r = a ^ b
    elif op == "<<":
        r = a << (b & (width - 1))
    elif op == ">>":
        r = a >> (b & (width - 1))
    elif op == ">":
        return int(a > b)
    elif op == "<":
        return int(a < b)
    elif op == ">=":
        return int(a >= b)
    elif op == "<=":
        return int(a <= b)
    elif op == "==":
        return int(a == b)
    elif op == "!=":
        return int(a != b)
    elif op == "&&":
        return int(bool(a) and bool(b))
    elif op == "||":
        return int(bool(a) or bool(b))
    else:
        raise ValueError(f"unknown operator {op!r}")
    return wrap(r, width)


# ---------------------------------------------------------------------------
# traversal helpers


def walk(t: Term) -> Iterator[Term]:
    stack = [t]
    while stack:
        cur = stack.pop()
        yield cur
        stack.extend(reversed(cur.children()))


def transform(t: Term, fn: Callable[[Term], Optional[Term]]) -> Term:
    """Bottom-up rewrite; ``fn`` returns a replacement or None to keep the node."""
    kids = t.children()
    if kids:
        new = tuple(transform(k, fn) for k in kids)
        if any(a is not b for a, b in zip(new, kids)):
            t = t.rebuild(new)
    out = fn(t)
    return t if out is None else out


def contains(t: Term, pred: Callable[[Term], bool]) -> bool:
    return any(pred(x) for x in walk(t))


def labels_in(t: Term) -> set[Label]:
    return {x.label for x in walk(t) if isinstance(x, Select)}


def has_select(t: Term, label: Optional[Label] = None) -> bool:
    return any(isinstance(x, Select) and (label is None or x.label == label) for x in walk(t))


def is_tainted(t: Term) -> bool:
    return any(isinstance(x, Tainted) for x in walk(t))


def is_boolean(t: Term) -> bool:
    if isinstance(t, Bin):
        return t.op in COMPARISON or t.op in LOGICAL
    if isinstance(t, (Not, NameAtom, RepeatAtom)):
        return True
    if isinstance(t, Select):
        return is_boolean(t.then) and is_boolean(t.other)
    if isinstance(t, Tainted):
        return is_boolean(t.inner)
    return False


# ---------------------------------------------------------------------------
# normalization


def resolve(t: Term, label: Label, take_then: bool) -> Term:
    """Replace every selection on ``label`` inside ``t`` by the chosen operand."""

    def fn(x):
        if isinstance(x, Select) and x.label == label:
            return x.then if take_then else x.other
        return None

    return transform(t, fn)


_RIGHT_IDENTITY = {"+": 0, "-": 0, "|": 0, "^": 0, "<<": 0, ">>": 0, "*": 1}
_LEFT_IDENTITY = {"+": 0, "|": 0, "^": 0, "*": 1}


def _fold(t: Term, width: int) -> Term:
    if isinstance(t, Bin):
        if isinstance(t.lhs, Const) and isinstance(t.rhs, Const):
            return Const(apply_op(t.op, t.lhs.value, t.rhs.value, width))
        # identities that keep the other operand, so no byte read is lost
        if isinstance(t.rhs, Const) and _RIGHT_IDENTITY.get(t.op) == t.rhs.value and not is_boolean(t.lhs):
            return t.lhs
        if isinstance(t.lhs, Const) and _LEFT_IDENTITY.get(t.op) == t.lhs.value and not is_boolean(t.rhs):
            return t.rhs
    if isinstance(t, Not) and isinstance(t.arg, Const):
        return Const(int(t.arg.value == 0))
    return t


def normalize(t: Term, width: int = WIDTH) -> Term:
    """Rewrite to normal form.

    * a selection with equal operands collapses to the operand;
    * nested selections on the same label inside an operand are resolved to
      that operand's side;
    * selections are hoisted above every other node except the logical
      connectives ``&&``/``||``, which stay in place so the graph builder can
      split on them;
    * constant subterms fold.
    """
    return _norm(t, width, {})


def _norm(t: Term, width: int, memo: dict) -> Term:
    hit = memo.get(t)
    if hit is not None:
        return hit
    kids = t.children()
    if kids:
        new = tuple(_norm(k, width, memo) for k in kids)
        if any(a is not b for a, b in zip(new, kids)):
            t2 = t.rebuild(new)
        else:
            t2 = t
    else:
        t2 = t
    out = _norm_node(t2, width, memo)
    memo[t] = out
    return out


def _norm_node(t: Term, width: int, memo: dict) -> Term:
    if isinstance(t, Select):
        a = resolve(t.then, t.label, True)
        b = resolve(t.other, t.label, False)
        if a is not t.then or b is not t.other:
            a = _norm(a, width, memo)
            b = _norm(b, width, memo)
        if a == b:
            return a
        if a is t.then and b is t.other:
            return t
        return Select(t.label, a, b)
    if isinstance(t, Bin) and t.op in LOGICAL:
        return _fold(t, width)
    kids = t.children()
    for i, k in enumerate(kids):
        if isinstance(k, Select):
            left = list(kids)
            right = list(kids)
            left[i] = k.then
            right[i] = k.other
            return _norm(
                Select(k.label, t.rebuild(left), t.rebuild(right)), width, memo
            )
    return _fold(t, width)


# ---------------------------------------------------------------------------
# concrete evaluation


@dataclass
class ConcreteStore:
    packet: bytes
    branch_outcomes: Mapping[Label, bool] = field(default_factory=dict)

    @property
    def length(self) -> int:
        return len(self.packet)


def eval_concrete(t: Term, s: ConcreteStore, width: int = WIDTH) -> int:
    if isinstance(t, Const):
        return wrap(t.value, width)
    if isinstance(t, Length):
        return s.length
    if isinstance(t, Byte):
        i = eval_concrete(t.index, s, width)
        if not 0 <= i < s.length:
            raise OutOfBounds(i)
        return s.packet[i]
    if isinstance(t, Select):
        if t.label not in s.branch_outcomes:
            raise UnboundLabel(t.label)
        return eval_concrete(t.then if s.branch_outcomes[t.label] else t.other, s, width)
    if isinstance(t, Bin):
        a = eval_concrete(t.lhs, s, width)
        # C short-circuit: the right operand's bytes are not read
        if t.op == "&&" and not a:
            return 0
        if t.op == "||" and a:
            return 1
        b = eval_concrete(t.rhs, s, width)
        return apply_op(t.op, a, b, width)
    if isinstance(t, Not):
        return int(eval_concrete(t.arg, s, width) == 0)
    if isinstance(t, NameAtom):
        eval_concrete(t.value, s, width)
        return 1
    if isinstance(t, Tainted):
        return eval_concrete(t.inner, s, width)
    if isinstance(t, RepeatAtom):
        raise UnsupportedAtom("repeat() is only meaningful to the dissector")
    raise TypeError(f"not a term: {t!r}")


def holds(t: Term, s: ConcreteStore, width: int = WIDTH) -> bool:
    """Truth of a constraint; reading outside the packet makes it false."""
    try:
        return eval_concrete(t, s, width) != 0
    except OutOfBounds:
        return False


# ---------------------------------------------------------------------------
# byte spans


@dataclass(frozen=True)
class Span:
    lo: int
    hi: int
    open: bool = False  # extends to the end of the packet

    def overlaps(self, other: "Span") -> bool:
        a_hi = float("inf") if self.open else self.hi
        b_hi = float("inf") if other.open else other.hi
        return self.lo <= b_hi and other.lo <= a_hi

    def union(self, other: "Span") -> "Span":
        return Span(min(self.lo, other.lo), max(self.hi, other.hi), self.open or other.open)

    def __str__(self) -> str:
        return f"[{self.lo}, {'*' if self.open else self.hi}]"


def value_range(t: Term) -> tuple[float, float]:
    """Crude interval bounds used for lower bounds on symbolic byte indices."""
    inf = float("inf")
    if isinstance(t, Const):
        return (t.value, t.value)
    if isinstance(t, Byte):
        return (0, 255)
    if isinstance(t, Length):
        return (0, inf)
    if isinstance(t, Select):
        a, b = value_range(t.then), value_range(t.other)
        return (min(a[0], b[0]), max(a[1], b[1]))
    if isinstance(t, Tainted):
        return value_range(t.inner)
    if isinstance(t, Bin):
        if t.op in COMPARISON or t.op in LOGICAL:
            return (0, 1)
        a, b = value_range(t.lhs), value_range(t.rhs)
        if t.op == "+":
            return (a[0] + b[0], a[1] + b[1])
        if t.op == "-":
            return (a[0] - b[1], a[1] - b[0])
        if t.op == "*" and a[0] >= 0 and b[0] >= 0:
            return (a[0] * b[0], a[1] * b[1])
        if t.op == "&" and (a[0] >= 0 or b[0] >= 0):
            hi = min(x[1] for x in (a, b) if x[0] >= 0)
            return (0, hi)
    if isinstance(t, Not):
        return (0, 1)
    return (-inf, inf)


def byte_indices(t: Term) -> Iterator[Term]:
    for x in walk(t):
        if isinstance(x, Byte):
            yield x.index
    if isinstance(t, RepeatAtom):
        yield from (Const(i) for i in range(t.lo, t.hi + 1))


@lru_cache(maxsize=1 << 16)
def byte_span(t: Term) -> Optional[Span]:
    """Smallest interval covering the bytes ``t`` reads, or None."""
    span: Optional[Span] = None
    idx = list(byte_indices(t))
    if isinstance(t, RepeatAtom):
        idx.extend(byte_indices(t.count))
    for i in idx:
        if isinstance(i, Const):
            s = Span(i.value, i.value)
        else:
            lo = value_range(i)[0]
            lo = 0 if lo == float("-inf") or lo < 0 else int(lo)
            s = Span(lo, lo, open=True)
        span = s if span is None else span.union(s)
    return span


def const_byte_indices(t: Term) -> set[int]:
    return {i.value for i in byte_indices(t) if isinstance(i, Const)}


def shift_bytes(t: Term, d: int) -> Term:
    """Add ``d`` to every constant byte index."""

    def fn(x):
        if isinstance(x, Byte) and isinstance(x.index, Const):
            return Byte(Const(x.index.value + d))
        return None

    return transform(t, fn)


# ---------------------------------------------------------------------------
# multi-byte values


def _byte_part(t: Term) -> Optional[tuple[int, int]]:
    """Match ``B[i]``, ``B[i] << 8k`` or ``B[i] * 256**k``; returns (index, k)."""
    if isinstance(t, Byte) and isinstance(t.index, Const):
        return (t.index.value, 0)
    if isinstance(t, Bin) and isinstance(t.lhs, Byte) and isinstance(t.lhs.index, Const):
        if isinstance(t.rhs, Const):
            if t.op == "<<" and t.rhs.value > 0 and t.rhs.value % 8 == 0:
                return (t.lhs.index.value, t.rhs.value // 8)
            if t.op == "*":
                v, k = t.rhs.value, 0
                while v > 1 and v % 256 == 0:
                    v //= 256
                    k += 1
                if v == 1 and k > 0:
                    return (t.lhs.index.value, k)
    return None


def _flatten(t: Term, op: str) -> list[Term]:
    if isinstance(t, Bin) and t.op == op:
        return _flatten(t.lhs, op) + _flatten(t.rhs, op)
    return [t]


def match_composition(t: Term) -> Optional[list[int]]:
    """Recognise a multi-byte integer built from consecutive bytes.

    Returns byte indices from most to least significant, e.g. ``[3, 2]`` for
    ``(B[3] << 8) | B[2]``.
    """
    for op in ("|", "+"):
        parts = _flatten(t, op)
        if len(parts) < 2:
            continue
        matched = [_byte_part(p) for p in parts]
        if any(m is None for m in matched):
            continue
        by_weight = {k: i for i, k in matched}
        n = len(matched)
        if sorted(by_weight) != list(range(n)):
            continue
        order = [by_weight[k] for k in range(n - 1, -1, -1)]
        if sorted(order) == list(range(min(order), min(order) + n)):
            return order
    return None


def compositions(t: Term) -> list[list[int]]:
    found = []

    def visit(x: Term):
        m = match_composition(x)
        if m is not None:
            found.append(m)
            return
        for k in x.children():
            visit(k)

    visit(t)
    return found


# ---------------------------------------------------------------------------
# rendering

_PREC = {
    "||": 1,
    "&&": 2,
    "|": 3,
    "^": 4,
    "&": 5,
    "==": 6,
    "!=": 6,
    ">": 7,
    "<": 7,
    ">=": 7,
    "<=": 7,
    "<<": 8,
    ">>": 8,
    "+": 9,
    "-": 9,
    "*": 10,
}
_TEXT_OP = {"==": "="}


def span_text(lo: int, hi: int) -> str:
    return f"B[{lo}]" if lo == hi else f"B[{lo}..{hi}]"


def render(t: Term, prec: int = 0) -> str:
    if isinstance(t, Const):
        return str(t.value)
    if isinstance(t, Length):
        return "length"
    if isinstance(t, Byte):
        return f"B[{render(t.index)}]"
    if isinstance(t, Select):
        return f"Θ{t.label}({render(t.then)}, {render(t.other)})"
    if isinstance(t, Not):
        return f"!{render(t.arg, 11)}"
    if isinstance(t, Tainted):
        return f"tainted({render(t.inner)})"
    if isinstance(t, NameAtom):
        target = field_text(t.value)
        if t.name is None:
            return f"field({target})"
        return f'name({target}) = "{t.name}"'
    if isinstance(t, RepeatAtom):
        return f"repeat({span_text(t.lo, t.hi)}) = {render(t.count)}"
    if isinstance(t, Bin):
        comp = match_composition(t)
        if comp is not None:
            return "".join(f"B[{i}]" for i in comp)
        p = _PREC[t.op]
        s = f"{render(t.lhs, p)} {_TEXT_OP.get(t.op, t.op)} {render(t.rhs, p + 1)}"
        return f"({s})" if p < prec else s
    raise TypeError(f"not a term: {t!r}")


def field_text(v: Term) -> str:
    idx = list(byte_indices(v))
    if idx and all(isinstance(i, Const) for i in idx):
        vals = sorted({i.value for i in idx})
        if vals == list(range(vals[0], vals[-1] + 1)):
            return span_text(vals[0], vals[-1])
    return render(v)


# ---------------------------------------------------------------------------
# JSON encoding


def to_json(t: Term):
    if isinstance(t, Const):
        return ["const", t.value]
    if isinstance(t, Length):
        return ["length"]
    if isinstance(t, Byte):
        return ["byte", to_json(t.index)]
    if isinstance(t, Select):
        return ["select", str(t.label), to_json(t.then), to_json(t.other)]
    if isinstance(t, Bin):
        return ["bin", t.op, to_json(t.lhs), to_json(t.rhs)]
    if isinstance(t, Not):
        return ["not", to_json(t.arg)]
    if isinstance(t, NameAtom):
        return ["name", to_json(t.value), t.name]
    if isinstance(t, RepeatAtom):
        return ["repeat", t.lo, t.hi, to_json(t.count)]
    if isinstance(t, Tainted):
        return ["tainted", to_json(t.inner)]
    raise TypeError(f"not a term: {t!r}")


def from_json(obj) -> Term:
    if not isinstance(obj, list) or not obj:
        raise ValueError(f"bad term encoding: {obj!r}")
    tag, args = obj[0], obj[1:]
    if tag == "const":
        return Const(int(args[0]))
    if tag == "length":
        return Length()
    if tag == "byte":
        return Byte(from_json(args[0]))
    if tag == "select":
        return Select(Label.parse(args[0]), from_json(args[1]), from_json(args[2]))
    if tag == "bin":
        if args[0] not in OPS:
            raise ValueError(f"unknown operator {args[0]!r}")
        return Bin(args[0], from_json(args[1]), from_json(args[2]))
    if tag == "not":
        return Not(from_json(args[0]))
    if tag == "name":
        return NameAtom(from_json(args[0]), args[1])
    if tag == "repeat":
        lo, hi = int(args[0]), int(args[1])
        if lo > hi:
            raise ValueError(f"repeat span [{lo}, {hi}] is reversed")
        return RepeatAtom(lo, hi, from_json(args[2]))
    if tag == "tainted":
        return Tainted(from_json(args[0]))
    raise ValueError(f"unknown term tag {tag!r}")

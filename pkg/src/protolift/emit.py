"""Grammar-with-assertions formats built from ordered constraint graphs."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Union

from .absval import (
    Const,
    NameAtom,
    RepeatAtom,
    Term,
    byte_indices,
    compositions,
    field_text,
    from_json,
    render,
    span_text,
    to_json,
)
from .afg import Afg, PathShapes, join
from .reorder import NotOrdered, entry_split, hd, is_ordered, vd

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Terminal:
    lo: int
    hi: int

    def __str__(self) -> str:
        return span_text(self.lo, self.hi)


@dataclass(frozen=True)
class VarTerminal:
    """``B[lo..end]`` whose last index is computed from other fields."""

    lo: int
    end: Term

    def __str__(self) -> str:
        return f"B[{self.lo}..{render(self.end)}]"


@dataclass(frozen=True)
class NonTerminal:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Alternation:
    options: tuple[str, ...]

    def __str__(self) -> str:
        return "(" + " | ".join(self.options) + ")"


Symbol = Union[Terminal, VarTerminal, NonTerminal, Alternation]


@dataclass(frozen=True)
class Production:
    lhs: str
    rhs: tuple = ()
    assertions: tuple = ()

    def terminals(self) -> list:
        return [s for s in self.rhs if isinstance(s, (Terminal, VarTerminal))]

    def children(self) -> list[str]:
        out = []
        for s in self.rhs:
            if isinstance(s, NonTerminal):
                out.append(s.name)
            elif isinstance(s, Alternation):
                out.extend(s.options)
        return out


@dataclass(frozen=True)
class Format:
    rules: tuple
    start: str = "S"
    _index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {r.lhs: r for r in self.rules})

    def rule(self, name: str) -> Production:
        return self._index[name]

    def __len__(self) -> int:
        return len(self.rules)


# ---------------------------------------------------------------------------
# graph to grammar


def bnf(g: Afg, check: bool = True) -> Format:
    """Translate an ordered graph into productions named S, L1, L2, ... in breadth-first order."""
    if check and not is_ordered(g):
        raise NotOrdered("input graph is not ordered")
    rules: dict[str, Production] = {}
    counter = iter(range(1, 1 << 62))
    queue: deque = deque([("S", g)])
    shapes = PathShapes()
    named: dict[frozenset, str] = {}

    def fresh(sub: Afg) -> str:
        # subgraphs with the same constraint paths share one production
        key = shapes.key(sub)
        if key not in named:
            named[key] = f"L{next(counter)}"
            queue.append((named[key], sub))
        return named[key]

    while queue:
        name, sub = queue.popleft()
        rules[name] = _production(name, sub, fresh)
    order = ["S"] + sorted((n for n in rules if n != "S"), key=lambda n: int(n[1:]))
    return Format(_merge_duplicates([rules[n] for n in order]))


def _merge_duplicates(rules: list) -> tuple:
    """Fold productions with identical bodies into the first one, then renumber L1, L2, ..."""
    while True:
        first: dict = {}
        alias: dict[str, str] = {}
        for r in rules[1:]:
            alias[r.lhs] = first.setdefault((r.rhs, r.assertions), r.lhs)
        if all(k == v for k, v in alias.items()):
            break
        rules = [_renamed(r, alias) for r in rules if alias.get(r.lhs, r.lhs) == r.lhs]
    rank = {r.lhs: f"L{i}" for i, r in enumerate(rules[1:], 1)}
    rank["S"] = "S"
    return tuple(Production(rank[r.lhs], _renamed(r, rank).rhs, r.assertions) for r in rules)


def _renamed(r: Production, alias: dict) -> Production:
    rhs = []
    for s in r.rhs:
        if isinstance(s, NonTerminal):
            s = NonTerminal(alias.get(s.name, s.name))
        elif isinstance(s, Alternation):
            opts = tuple(dict.fromkeys(alias.get(o, o) for o in s.options))
            s = NonTerminal(opts[0]) if len(opts) == 1 else Alternation(opts)
        rhs.append(s)
    return Production(r.lhs, tuple(rhs), r.assertions)


def _production(name: str, g: Afg, fresh) -> Production:
    if g.is_empty():
        return Production(name)
    segs = vd(g)
    if segs is None or len(segs) == 1 and len(g) > 1:
        return Production(name, (_alternation(g, fresh),))
    runs: list = []
    for s in segs:
        if len(s) == 1:
            if runs and isinstance(runs[-1], list):
                runs[-1].append(s)
            else:
                runs.append([s])
        else:
            runs.append(s)
    if len(runs) == 1 and isinstance(runs[0], list):
        terms, asserts = leaf([c for s in runs[0] for c in _constraints(s)])
        return Production(name, terms, asserts)
    rhs = []
    for r in runs:
        if isinstance(r, list):
            chain = Afg()
            for s in r:
                chain = join(chain, s)
            rhs.append(NonTerminal(fresh(chain)))
        else:
            rhs.append(_alternation(r, fresh))
    return Production(name, tuple(rhs))


def _alternation(g: Afg, fresh) -> Alternation:
    if len(g.entries()) == 1:
        g = entry_split(g)
    names = dict.fromkeys(fresh(p) for p in hd(g))
    return Alternation(tuple(names))


def _constraints(g: Afg) -> list[Term]:
    return [g.constraint(v) for v in g.topo_order()]


def leaf(constraints: list[Term]) -> tuple[tuple, tuple]:
    """Terminals and assertions for a run of single constraints."""
    asserts: list[Term] = []
    for c in constraints:
        if c not in asserts:
            asserts.append(c)
    idx: set[int] = set()
    for c in asserts:
        idx |= {i.value for i in byte_indices(c) if isinstance(i, Const)}
        if isinstance(c, RepeatAtom):
            idx |= {i.value for i in byte_indices(c.count) if isinstance(i, Const)}
    if not idx:
        return (), tuple(asserts)
    lo, hi = min(idx), max(idx)
    # bytes joined by a composed multi-byte value, or by a repeated field, form one terminal
    owner = list(range(lo, hi + 1))

    def find(i):
        while owner[i - lo] != i:
            i = owner[i - lo]
        return i

    def merge(a, b):
        for j in range(a + 1, b + 1):
            ra, rj = find(a), find(j)
            if ra != rj:
                owner[max(ra, rj) - lo] = min(ra, rj)

    for c in asserts:
        if isinstance(c, RepeatAtom):
            merge(c.lo, c.hi)
        for comp in compositions(c):
            merge(min(comp), max(comp))
    terms = []
    i = lo
    while i <= hi:
        j = i
        while j + 1 <= hi and find(j + 1) == find(i):
            j += 1
        terms.append(Terminal(i, j))
        i = j + 1
    return tuple(terms), tuple(asserts)


# ---------------------------------------------------------------------------
# queries


def reachable_rules(f: Format) -> list[str]:
    seen, order, queue = set(), [], deque([f.start])
    while queue:
        n = queue.popleft()
        if n in seen:
            continue
        seen.add(n)
        order.append(n)
        queue.extend(f.rule(n).children())
    return order


def field_table(f: Format) -> list[tuple[str, str]]:
    """(span text, name) for every named field in the format."""
    out = []
    for r in f.rules:
        for a in r.assertions:
            if isinstance(a, NameAtom) and a.name is not None:
                entry = (field_text(a.value), a.name)
                if entry not in out:
                    out.append(entry)
    return out


def canonical(f: Format) -> str:
    """Text form that ignores nonterminal names and the order of alternatives."""
    memo: dict[str, str] = {}

    def canon(name: str) -> str:
        if name in memo:
            return memo[name]
        r = f.rule(name)
        parts = []
        for s in r.rhs:
            if isinstance(s, NonTerminal):
                parts.append("<" + canon(s.name) + ">")
            elif isinstance(s, Alternation):
                parts.append("(" + " | ".join(sorted("<" + canon(o) + ">" for o in s.options)) + ")")
            else:
                parts.append(str(s))
        body = " ".join(parts) + " {" + "; ".join(sorted(render(a) for a in r.assertions)) + "}"
        memo[name] = body
        return body

    return canon(f.start)


# ---------------------------------------------------------------------------
# text and JSON


def render_text(f: Format) -> str:
    lines = []
    for r in f.rules:
        rhs = " ".join(str(s) for s in r.rhs)
        lines.append(f"{r.lhs} -> {rhs}".rstrip() if rhs else f"{r.lhs} ->")
        for a in r.assertions:
            lines.append(f"    assert({render(a)})")
    return "\n".join(lines) + "\n"


def _symbol_json(s) -> dict:
    if isinstance(s, Terminal):
        return {"bytes": [s.lo, s.hi]}
    if isinstance(s, VarTerminal):
        return {"var_bytes": [s.lo, to_json(s.end)]}
    if isinstance(s, NonTerminal):
        return {"rule": s.name}
    return {"choice": list(s.options)}


def format_to_obj(f: Format) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "start": f.start,
        "rules": [
            {
                "lhs": r.lhs,
                "rhs": [_symbol_json(s) for s in r.rhs],
                "assertions": [to_json(a) for a in r.assertions],
            }
            for r in f.rules
        ],
    }


def render_json(f: Format) -> str:
    return json.dumps(format_to_obj(f), indent=1, sort_keys=True) + "\n"


def _symbol_from(obj) -> Symbol:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise SchemaError(f"bad symbol {obj!r}")
    (kind, val), = obj.items()
    if kind == "bytes":
        if not (isinstance(val, list) and len(val) == 2 and all(isinstance(x, int) for x in val)):
            raise SchemaError(f"bad byte span {val!r}")
        lo, hi = val
        if lo < 0 or lo > hi:
            raise SchemaError(f"malformed span B[{lo}..{hi}]")
        return Terminal(lo, hi)
    if kind == "var_bytes":
        if not (isinstance(val, list) and len(val) == 2 and isinstance(val[0], int) and val[0] >= 0):
            raise SchemaError(f"bad variable span {val!r}")
        return VarTerminal(val[0], _term(val[1]))
    if kind == "rule":
        if not isinstance(val, str):
            raise SchemaError(f"bad rule reference {val!r}")
        return NonTerminal(val)
    if kind == "choice":
        if not (isinstance(val, list) and val and all(isinstance(x, str) for x in val)):
            raise SchemaError(f"bad alternation {val!r}")
        return Alternation(tuple(val))
    raise SchemaError(f"unknown symbol kind {kind!r}")


def _term(obj) -> Term:
    try:
        return from_json(obj)
    except (ValueError, TypeError, IndexError, KeyError) as e:
        raise SchemaError(str(e)) from e


def format_from_obj(obj) -> Format:
    if not isinstance(obj, dict):
        raise SchemaError("format must be a JSON object")
    if obj.get("version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema version {obj.get('version')!r}")
    rules = []
    for r in obj.get("rules", []):
        if not isinstance(r, dict) or not isinstance(r.get("lhs"), str):
            raise SchemaError(f"bad rule {r!r}")
        rules.append(
            Production(
                r["lhs"],
                tuple(_symbol_from(s) for s in r.get("rhs", [])),
                tuple(_term(a) for a in r.get("assertions", [])),
            )
        )
    start = obj.get("start", "S")
    f = Format(tuple(rules), start)
    names = {r.lhs for r in rules}
    if len(names) != len(rules):
        raise SchemaError("duplicate rule names")
    if start not in names:
        raise SchemaError(f"start rule {start!r} is missing")
    for r in rules:
        for c in r.children():
            if c not in names:
                raise SchemaError(f"rule {r.lhs} refers to undefined {c}")
    _check_acyclic(f)
    return f


def _check_acyclic(f: Format) -> None:
    state: dict[str, int] = {}

    def visit(n: str):
        if state.get(n) == 1:
            raise SchemaError(f"rule {n} is recursive")
        if state.get(n) == 2:
            return
        state[n] = 1
        for c in f.rule(n).children():
            visit(c)
        state[n] = 2

    for r in f.rules:
        visit(r.lhs)


def parse_json(text: str) -> Format:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"not JSON: {e}") from e
    return format_from_obj(obj)


def size(f: Format) -> int:
    return sum(len(r.assertions) + len(r.rhs) for r in f.rules)

"""Abstract interpretation of parser programs into a constraint graph.

The state is a pair (environment, graph). Branch arms are analysed from
empty local graphs and combined as ``G ⋈ (arm_true ⊎ arm_false)``, where each
arm starts with the graph of its condition. Variables that differ between the
arms are merged into ``Select`` terms labelled with the branch.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

from .absval import (
    LOGICAL,
    TRUE,
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
    byte_indices,
    is_tainted,
    normalize,
    shift_bytes,
    walk,
    wrap,
)
from .afg import (
    Afg,
    as_condition,
    join,
    negate,
    new_vertex,
    prune_constants,
    union,
)
from . import lang
from .lang import Program

log = logging.getLogger(__name__)


class AnalysisError(RuntimeError):
    pass


@dataclass(frozen=True)
class AnalysisConfig:
    unroll_bound: int = 3
    width: int = WIDTH
    naming: bool = True
    simplify: bool = False
    # loops whose condition stays constant are unrolled exactly up to this many iterations
    const_unroll_cap: int = 256


@dataclass
class Anchor:
    """Vertices of the two arms of branch ``label`` (condition plus body)."""

    label: Label
    g_true: set[int]
    g_false: set[int]


@dataclass
class AnalysisResult:
    env: dict[str, Term]
    graph: Afg
    anchors: list[Anchor]
    notices: list[str]


@dataclass
class _State:
    env: dict[str, Term]
    graph: Afg
    dead: bool = False
    named: frozenset = frozenset()  # spans already carrying a name on every path
    covered: int = -1  # highest byte index known to be inside the packet on every path
    pending: list = field(default_factory=list)  # [(key, NameAtom)] awaiting the enclosing merge
    depth: int = 0

    def arm(self, graph: Afg) -> "_State":
        return _State(dict(self.env), graph, False, self.named, self.covered, [], self.depth + 1)


def merge_env(
    e1: dict[str, Term], e2: dict[str, Term], label: Label, width: int = WIDTH, tainted: bool = False
) -> dict[str, Term]:
    """Bind each variable that differs between the arms to ``Select(label, v1, v2)``.

    Variables bound in only one arm keep that binding.
    """
    out = dict(e1)
    for k, v2 in e2.items():
        v1 = e1.get(k)
        if v1 is None or v1 == v2:
            out[k] = v2
            continue
        merged = normalize(Select(label, v1, v2), width)
        out[k] = Tainted(merged) if tainted and not is_tainted(merged) else merged
    return out


def _plain(t: Term) -> bool:
    """No selection and no short-circuit operator: every byte is read unconditionally."""
    return not any(
        isinstance(x, Select) or (isinstance(x, Bin) and x.op in LOGICAL) for x in walk(t)
    )


def _span_key(t: Term) -> Optional[tuple[int, ...]]:
    idx = list(byte_indices(t))
    if not idx or not all(isinstance(i, Const) for i in idx):
        return None
    return tuple(sorted({i.value for i in idx}))


def _contiguous(key: tuple[int, ...]) -> bool:
    return key[-1] - key[0] + 1 == len(key)


def _span_value(key: tuple[int, ...]) -> Term:
    t: Term = Byte(Const(key[0]))
    for i in key[1:]:
        t = Bin("+", t, Byte(Const(i)))
    return t


class _Interpreter:
    def __init__(self, prog: Program, cfg: AnalysisConfig):
        self.prog = prog
        self.cfg = cfg
        self.anchors: list[Anchor] = []
        self.notices: list[str] = []

    # expressions ------------------------------------------------------------

    def value(self, e: lang.Expr, env: dict[str, Term]) -> Term:
        w = self.cfg.width
        if isinstance(e, lang.IntLit):
            return Const(wrap(e.value, w))
        if isinstance(e, lang.Var):
            if e.name == self.prog.len_param:
                return Length()
            if e.name not in env:
                raise AnalysisError(f"variable {e.name!r} read before assignment")
            return env[e.name]
        if isinstance(e, lang.Index):
            return normalize(Byte(self.value(e.index, env)), w)
        if isinstance(e, lang.Binary):
            return normalize(Bin(e.op, self.value(e.lhs, env), self.value(e.rhs, env)), w)
        if isinstance(e, lang.LogicalNot):
            return normalize(Not(self.value(e.arg, env)), w)
        raise AnalysisError(f"unknown expression {e!r}")

    # graph helpers ----------------------------------------------------------

    def conjoin(self, st: _State, g: Afg) -> None:
        st.graph = join(st.graph, g)

    def note_read(self, st: _State, var: str, val: Term) -> None:
        """Attach name / bounds atoms for an assignment whose value reads packet bytes."""
        if is_tainted(val) or not any(isinstance(x, Byte) for x in walk(val)):
            return
        key = _span_key(val)
        plain = _plain(val)
        if key is not None and plain and not _contiguous(key):
            parts = [(Byte(Const(i)), (i,)) for i in key]
        else:
            parts = [(val, key)]
        for v, k in parts:
            if k is None or k not in st.named:
                name = var if self.cfg.naming else None
                self.add_name(st, k, normalize(NameAtom(v, name), self.cfg.width))
                if k is not None:
                    st.named = st.named | {k}
            elif not (plain and max(k) <= st.covered):
                # already named, but these bytes are not yet known to be in bounds
                self.add_name(st, None, normalize(NameAtom(v, None), self.cfg.width))
            if k is not None and plain:
                st.covered = max(st.covered, max(k))

    def condition_graph(self, st: _State, t: Term) -> Afg:
        """Graph of a program condition, faithful to left-to-right short-circuit evaluation.

        ``a || b`` rejects when evaluating ``a`` leaves the packet, even if ``b``
        holds; a bounds atom on ``a`` is prepended unless already implied.
        """
        w = self.cfg.width
        if isinstance(t, Not):
            return self.condition_graph(st, negate(t.arg, w))
        if isinstance(t, Bin) and t.op == "&&":
            return join(self.condition_graph(st, t.lhs), self.condition_graph(st, t.rhs))
        if isinstance(t, Bin) and t.op == "||":
            left = self.condition_graph(st, t.lhs)
            right = self.condition_graph(st, t.rhs)
            if not any(isinstance(x, Byte) for x in walk(t.lhs)):
                return union(left, right)
            if any(isinstance(x, Bin) and x.op in LOGICAL for x in walk(t.lhs)):
                refuted = self.condition_graph(st, negate(t.lhs, w))
                return union(left, join(refuted, right))
            key = _span_key(t.lhs)
            if key is not None and _plain(t.lhs):
                if max(key) <= st.covered:
                    return union(left, right)
                guard = NameAtom(Byte(Const(max(key))), None)
            else:
                guard = normalize(NameAtom(t.lhs, None), w)
            return join(Afg.single(guard), union(left, right))
        return Afg.single(as_condition(t, w))

    def add_name(self, st: _State, key, atom: Term) -> None:
        if st.depth == 0:
            self.conjoin(st, Afg.single(atom))
        else:
            st.pending.append((key, atom))

    # statements -------------------------------------------------------------

    def run(self) -> AnalysisResult:
        st = _State({}, Afg())
        st = self.exec(self.prog.body, st)
        graph = Afg.single(Const(0)) if st.dead else st.graph
        return AnalysisResult(st.env, graph, self.anchors, self.notices)

    def exec(self, s: lang.Stmt, st: _State) -> _State:
        if st.dead:
            return st
        w = self.cfg.width
        if isinstance(s, lang.Block):
            for x in s.stmts:
                st = self.exec(x, st)
                if st.dead:
                    break
            return st
        if isinstance(s, lang.Assign):
            v = self.value(s.rhs, st.env)
            st.env[s.lhs] = v
            self.note_read(st, s.lhs, v)
            return st
        if isinstance(s, lang.Read):
            v = normalize(Byte(self.value(s.index, st.env)), w)
            st.env[s.lhs] = v
            self.note_read(st, s.lhs, v)
            return st
        if isinstance(s, lang.Assert):
            v = self.value(s.cond, st.env)
            self.assert_term(st, v)
            return st
        if isinstance(s, lang.Abort):
            st.dead = True
            return st
        if isinstance(s, lang.If):
            return self.branch(
                st,
                s.label,
                self.value(s.cond, st.env),
                lambda a: self.exec(s.then, a),
                lambda a: self.exec(s.other, a),
            )
        if isinstance(s, lang.While):
            return self.loop(s, st)
        raise AnalysisError(f"unknown statement {s!r}")

    def assert_term(self, st: _State, v: Term) -> None:
        if is_tainted(v):
            self.notices.append(f"dropped assertion on approximate loop state: {v}")
            return
        c = as_condition(v, self.cfg.width)
        if isinstance(c, Const):
            if c.value == 0:
                st.dead = True
            return
        self.conjoin(st, self.condition_graph(st, c))

    def branch(
        self,
        st: _State,
        label: Label,
        cond: Term,
        then_fn: Callable[[_State], _State],
        else_fn: Callable[[_State], _State],
    ) -> _State:
        w = self.cfg.width
        tainted = is_tainted(cond)
        if tainted:
            self.notices.append(f"branch {label} depends on approximate loop state; both arms kept")
            t = then_fn(st.arm(Afg()))
            f = else_fn(st.arm(Afg()))
        else:
            c = as_condition(cond, w)
            if isinstance(c, Const):
                return then_fn(st) if c.value else else_fn(st)
            t = then_fn(st.arm(self.condition_graph(st, c)))
            f = else_fn(st.arm(self.condition_graph(st, negate(c, w))))
        return self.merge(st, label, t, f, tainted)

    def merge(self, st: _State, label: Label, t: _State, f: _State, tainted: bool) -> _State:
        if t.dead and f.dead:
            st.dead = True
            return st
        if t.dead or f.dead:
            live = f if t.dead else t
            st.graph = join(st.graph, live.graph)
            st.env = live.env
            st.named, st.covered = live.named, live.covered
            for key, atom in live.pending:
                self.add_name(st, key, atom)
            return st
        hoisted = self.split_pending(t, f)
        tg = t.graph if not t.graph.is_empty() else Afg.single(TRUE)
        fg = f.graph if not f.graph.is_empty() else Afg.single(TRUE)
        if not tainted:
            self.anchors.append(Anchor(label, set(tg.vertices), set(fg.vertices)))
        st.graph = join(st.graph, union(tg, fg))
        st.env = merge_env(t.env, f.env, label, self.cfg.width, tainted)
        st.named = (t.named & f.named) | {k for k, _ in hoisted if k is not None}
        st.covered = min(t.covered, f.covered)
        for key, atom in hoisted:
            self.add_name(st, key, atom)
        return st

    def split_pending(self, t: _State, f: _State) -> list:
        """Names present in both arms move after the merge; the rest stay in their arm."""

        def sig(atom: NameAtom):
            if not isinstance(atom, NameAtom) or not _plain(atom.value):
                return None
            k = _span_key(atom.value)
            return None if k is None else (k, atom.name)

        f_sigs = {}
        for i, (_, atom) in enumerate(f.pending):
            s = sig(atom)
            if s is not None:
                f_sigs.setdefault(s, i)
        hoisted, used_f, keep_t = [], set(), []
        for key, atom in t.pending:
            s = sig(atom)
            if s is not None and s in f_sigs and f_sigs[s] not in used_f:
                used_f.add(f_sigs[s])
                other = f.pending[f_sigs[s]][1]
                value = atom.value if atom.value == other.value else _span_value(s[0])
                hoisted.append((key, NameAtom(value, atom.name)))
            else:
                keep_t.append(atom)
        keep_f = [a for i, (_, a) in enumerate(f.pending) if i not in used_f]
        for arm, atoms in ((t, keep_t), (f, keep_f)):
            for atom in atoms:
                arm.graph = join(arm.graph, Afg.single(atom))
            arm.pending = []
        return hoisted

    # loops ------------------------------------------------------------------

    def loop(self, w: lang.While, st: _State) -> _State:
        assigned = _assigned_vars(w.body)
        const_iters = 0
        while True:
            c = self.value(w.cond, st.env)
            if is_tainted(c):
                break
            c = as_condition(c, self.cfg.width)
            if not isinstance(c, Const):
                break
            if c.value == 0:
                return st
            if const_iters >= self.cfg.const_unroll_cap:
                self.notices.append(f"loop {w.label} exceeded {const_iters} constant iterations")
                self.taint(st, assigned)
                return st
            const_iters += 1
            st = self.exec(w.body, st)
            if st.dead:
                return st
        if const_iters == 0:
            summary = self.summarize_loop(w, st)
            if summary is not None:
                return summary
        return self.unroll_loop(w, st, assigned)

    def taint(self, st: _State, names) -> None:
        for v in names:
            if v in st.env and not is_tainted(st.env[v]):
                st.env[v] = Tainted(st.env[v])

    def unroll_loop(self, w: lang.While, st: _State, assigned: set[str], k: int = 1) -> _State:
        """Inline the body up to the unroll bound under freshly labelled branches."""
        c = self.value(w.cond, st.env)
        if not is_tainted(c):
            cc = as_condition(c, self.cfg.width)
            if isinstance(cc, Const) and cc.value == 0:
                return st
        if k > self.cfg.unroll_bound:
            self.notices.append(f"loop {w.label} cut after {self.cfg.unroll_bound} iterations")
            self.taint(st, assigned)
            return st
        label = Label(w.label.line, w.label.col, k)

        def then_fn(a: _State) -> _State:
            a = self.exec(w.body, a)
            if a.dead:
                return a
            return self.unroll_loop(w, a, assigned, k + 1)

        return self.branch(st, label, c, then_fn, lambda a: a)

    def summarize_loop(self, w: lang.While, st: _State) -> Optional[_State]:
        """Summarize a counting loop whose iterations touch byte-shifted copies of one field.

        Returns the updated state, or None when the loop does not fit the template.
        """
        cfg = self.cfg
        shape = _counter_shape(w.cond)
        if shape is None:
            return None
        counter, bound, inclusive = shape
        body = _flatten(w.body)
        if body is None:
            return None
        assigned = _assigned_vars(w.body)
        if counter not in assigned or set(lang.expr_vars(bound)) & assigned:
            return None
        if not _iteration_local(body, assigned - {counter}):
            return None
        start = st.env.get(counter)
        if not isinstance(start, Const):
            return None
        limit = self.value(bound, st.env)
        if is_tainted(limit):
            return None
        iters = []
        env = dict(st.env)
        for k in range(3):
            if env[counter] != Const(start.value + k):
                return None
            asserts, reads, env = self.straight_line(body, env)
            reads = [(n, v) for n, v in reads if any(isinstance(x, Byte) for x in walk(v))]
            iters.append((asserts, reads))
        if env[counter] != Const(start.value + 3):
            return None
        terms = [t for t in iters[0][0]] + [v for _, v in iters[0][1]]
        terms2 = [t for t in iters[1][0]] + [v for _, v in iters[1][1]]
        idx1 = [i for t in terms for i in byte_indices(t)]
        idx2 = [i for t in terms2 for i in byte_indices(t)]
        if not all(isinstance(i, Const) for i in idx1 + idx2):
            return None
        if not idx1:
            if terms:
                return None
            self.notices.append(f"loop {w.label} reads no packet bytes; summarized as empty")
            self.taint(st, assigned)
            return st
        lo = min(i.value for i in idx1)
        stride = min(i.value for i in idx2) - lo
        if stride < 1 or max(i.value for i in idx1) - lo >= stride:
            return None
        for k in (1, 2):
            asserts, reads = iters[k]
            if [shift_bytes(t, k * stride) for t in iters[0][0]] != asserts:
                return None
            if [(n, shift_bytes(v, k * stride)) for n, v in iters[0][1]] != reads:
                return None
        count = Bin("-", limit, Const(start.value))
        if inclusive:
            count = Bin("+", count, Const(1))
        count = normalize(count, cfg.width)
        for name, v in iters[0][1]:
            atom = NameAtom(v, name if cfg.naming else None)
            self.conjoin(st, Afg.single(normalize(atom, cfg.width)))
        for a in iters[0][0]:
            c = as_condition(a, cfg.width)
            if isinstance(c, Const):
                if c.value == 0:
                    return None
                continue
            self.conjoin(st, self.condition_graph(st, c))
        self.conjoin(st, Afg.single(RepeatAtom(lo, lo + stride - 1, count)))
        for v in assigned:
            st.env[v] = Tainted(env[v])
        log.debug("summarized loop %s: stride %d count %s", w.label, stride, count)
        return st

    def straight_line(self, body, env):
        env = dict(env)
        asserts, reads = [], []
        for s in body:
            if isinstance(s, lang.Assign):
                env[s.lhs] = self.value(s.rhs, env)
                reads.append((s.lhs, env[s.lhs]))
            elif isinstance(s, lang.Read):
                env[s.lhs] = normalize(Byte(self.value(s.index, env)), self.cfg.width)
                reads.append((s.lhs, env[s.lhs]))
            elif isinstance(s, lang.Assert):
                asserts.append(self.value(s.cond, env))
        return asserts, reads, env


def _flatten(b: lang.Block) -> Optional[list]:
    out = []
    for s in b.stmts:
        if isinstance(s, lang.Block):
            inner = _flatten(s)
            if inner is None:
                return None
            out.extend(inner)
        elif isinstance(s, (lang.Assign, lang.Read, lang.Assert)):
            out.append(s)
        else:
            return None
    return out


def _assigned_vars(s: lang.Stmt) -> set[str]:
    return {x.lhs for x in lang.walk_stmts(s) if isinstance(x, (lang.Assign, lang.Read))}


def _counter_shape(cond: lang.Expr):
    if not isinstance(cond, lang.Binary):
        return None
    if cond.op in ("<", "<=") and isinstance(cond.lhs, lang.Var):
        return cond.lhs.name, cond.rhs, cond.op == "<="
    if cond.op in (">", ">=") and isinstance(cond.rhs, lang.Var):
        return cond.rhs.name, cond.lhs, cond.op == ">="
    return None


def _iteration_local(body: list, names: set[str]) -> bool:
    """Every listed variable is written before it is read within one iteration."""
    written: set[str] = set()
    for s in body:
        used = set()
        if isinstance(s, lang.Assign):
            used = set(lang.expr_vars(s.rhs))
        elif isinstance(s, lang.Read):
            used = set(lang.expr_vars(s.index))
        elif isinstance(s, lang.Assert):
            used = set(lang.expr_vars(s.cond))
        if (used & names) - written:
            return False
        if isinstance(s, (lang.Assign, lang.Read)):
            written.add(s.lhs)
    return True


# ---------------------------------------------------------------------------
# optional graph simplification


def simplify_graph(g: Afg, width: int = WIDTH) -> Afg:
    """Collapse complementary parallel conditions into a field marker and drop constant vertices.

    Meant for unfolded graphs: it may merge the arms of a branch.
    """
    g = g.copy()
    changed = True
    while changed:
        changed = False
        ids = sorted(g.vertices)
        for a in ids:
            if a not in g:
                continue
            for b in ids:
                if b <= a or b not in g:
                    continue
                if g.pred[a] != g.pred[b] or g.succ[a] != g.succ[b]:
                    continue
                ca, cb = g.constraint(a), g.constraint(b)
                try:
                    if negate(ca, width) != cb:
                        continue
                except ValueError:
                    continue
                marker = new_vertex(NameAtom(ca, None))
                g.add(marker)
                for p in g.pred[a]:
                    g.add_edge(p, marker.id)
                for s in g.succ[a]:
                    g.add_edge(marker.id, s)
                g.remove(a)
                g.remove(b)
                changed = True
                break
    return prune_constants(g)


def interpret(prog: Program, cfg: Optional[AnalysisConfig] = None) -> AnalysisResult:
    return _Interpreter(prog, cfg or AnalysisConfig()).run()

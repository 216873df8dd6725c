"""Front end for protocol-parser programs.

Concrete syntax::

    parse(pkt, len) {
        code = (pkt[0] << 8) | pkt[1];
        assert(code == 10);
        if (pkt[3] == 0) { state = pkt[2] + 1; } else { abort; }
        while (j < pkt[0]) { j = j + 1; }
    }

Inside expressions a single ``=`` is accepted as equality. Branches may carry
an explicit label ``if @k7 (...)``; otherwise the label is the source line,
with the column added when a line holds more than one branch.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Optional, Union

from .absval import Label

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
_UNARY_PREC = 11
KEYWORDS = frozenset({"if", "else", "while", "assert", "abort"})


class ParseError(SyntaxError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{msg} at {line}:{col}")
        self.msg = msg
        self.lineno = self.line = line
        self.offset = self.col = col


class ValidationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class Index:
    """``pkt[index]`` used inside an expression."""

    index: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class LogicalNot:
    arg: "Expr"


Expr = Union[Var, IntLit, Index, Binary, LogicalNot]


@dataclass(frozen=True)
class Assign:
    lhs: str
    rhs: Expr


@dataclass(frozen=True)
class Read:
    lhs: str
    index: Expr


@dataclass(frozen=True)
class Assert:
    cond: Expr


@dataclass(frozen=True)
class If:
    label: Label
    cond: Expr
    then: "Block"
    other: "Block"


@dataclass(frozen=True)
class While:
    label: Label
    cond: Expr
    body: "Block"


@dataclass(frozen=True)
class Abort:
    pass


@dataclass(frozen=True)
class Block:
    stmts: tuple = ()


Stmt = Union[Assign, Read, Assert, If, While, Abort, Block]


@dataclass(frozen=True)
class Program:
    name: str
    pkt_param: str
    len_param: str
    body: Block


# ---------------------------------------------------------------------------
# lexer

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<label>@k\d+(?::\d+)?(?:\#\d+)?)
  | (?P<num>0[xX][0-9a-fA-F]+|\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\|\||&&|==|!=|>=|<=|<<|>>|[-+*&|^<>=!(){}\[\];,])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(src: str) -> list[Token]:
    out = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if not m:
            raise ParseError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind, text = m.lastgroup, m.group()
        if kind not in ("ws", "comment"):
            if kind == "ident" and text in KEYWORDS:
                kind = "kw"
            out.append(Token(kind, text, line, pos - line_start + 1))
        nl = text.count("\n")
        if nl:
            line += nl
            line_start = pos + text.rfind("\n") + 1
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, src: str):
        self.toks = tokenize(src)
        self.i = 0
        self.lines_with_branch: set[int] = set()
        self.pkt_name: Optional[str] = None

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def accept(self, text: str) -> Optional[Token]:
        if self.tok.text == text and self.tok.kind in ("op", "kw"):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            shown = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {shown!r}")
        return t

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            raise self.error(f"expected identifier, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t

    def program(self) -> Program:
        name = self.ident().text
        self.expect("(")
        pkt = self.pkt_name = self.ident().text
        self.expect(",")
        ln = self.ident().text
        self.expect(")")
        body = self.block()
        if self.tok.kind != "eof":
            raise self.error("trailing input after program body")
        return Program(name, pkt, ln, body)

    def block(self) -> Block:
        self.expect("{")
        stmts = []
        while not self.accept("}"):
            if self.tok.kind == "eof":
                raise self.error("unterminated block")
            stmts.append(self.statement())
        return Block(tuple(stmts))

    def label(self, kw: Token) -> Label:
        if self.tok.kind == "label":
            t = self.tok
            self.i += 1
            return Label.parse(t.text[1:])
        if kw.line in self.lines_with_branch:
            return Label(kw.line, kw.col)
        self.lines_with_branch.add(kw.line)
        return Label(kw.line)

    def statement(self) -> Stmt:
        t = self.tok
        if t.kind == "kw":
            if t.text == "assert":
                self.i += 1
                self.expect("(")
                e = self.expr()
                self.expect(")")
                self.expect(";")
                return Assert(e)
            if t.text == "abort":
                self.i += 1
                self.expect(";")
                return Abort()
            if t.text == "if":
                return self.if_stmt()
            if t.text == "while":
                self.i += 1
                lab = self.label(t)
                self.expect("(")
                cond = self.expr()
                self.expect(")")
                return While(lab, cond, self.block())
            raise self.error(f"unexpected {t.text!r}")
        if t.text == "{":
            return self.block()
        if t.kind == "ident":
            name = self.ident().text
            self.expect("=")
            rhs = self.expr()
            self.expect(";")
            if isinstance(rhs, Index):
                return Read(name, rhs.index)
            return Assign(name, rhs)
        raise self.error(f"unexpected {t.text or 'end of input'!r}")

    def if_stmt(self) -> If:
        kw = self.expect("if")
        lab = self.label(kw)
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        then = self.block()
        if not self.accept("else"):
            raise self.error("'if' requires an 'else' branch (use 'else { }' for none)")
        if self.tok.text == "if" and self.tok.kind == "kw":
            other = Block((self.if_stmt(),))
        else:
            other = self.block()
        return If(lab, cond, then, other)

    def expr(self, min_prec: int = 1) -> Expr:
        lhs = self.unary()
        while True:
            t = self.tok
            op = "==" if t.text == "=" else t.text
            if t.kind != "op" or op not in _PREC or _PREC[op] < min_prec:
                return lhs
            self.i += 1
            rhs = self.expr(_PREC[op] + 1)
            lhs = Binary(op, lhs, rhs)

    def unary(self) -> Expr:
        if self.accept("!"):
            return LogicalNot(self.unary())
        if self.accept("-"):
            inner = self.unary()
            if isinstance(inner, IntLit):
                return IntLit(-inner.value)
            return Binary("-", IntLit(0), inner)
        return self.primary()

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return IntLit(int(t.text, 0))
        if t.kind == "ident":
            self.i += 1
            if self.accept("["):
                e = self.expr()
                self.expect("]")
                return Index(e) if t.text == self.pkt_name else self._bad_index(t)
            return Var(t.text)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        raise self.error(f"expected expression, found {t.text or 'end of input'!r}")

    def _bad_index(self, t: Token):
        raise self.error(f"only the packet parameter can be indexed, not {t.text!r}", t)


def parse_program(source: str) -> Program:
    """Parse and validate a program; raises ParseError or ValidationError."""
    prog = _Parser(source).program()
    validate(prog)
    return prog


# ---------------------------------------------------------------------------
# validation


def walk_stmts(s: Stmt) -> Iterator[Stmt]:
    yield s
    if isinstance(s, Block):
        for x in s.stmts:
            yield from walk_stmts(x)
    elif isinstance(s, If):
        yield from walk_stmts(s.then)
        yield from walk_stmts(s.other)
    elif isinstance(s, While):
        yield from walk_stmts(s.body)


def expr_vars(e: Expr) -> Iterator[str]:
    if isinstance(e, Var):
        yield e.name
    elif isinstance(e, Index):
        yield from expr_vars(e.index)
    elif isinstance(e, Binary):
        yield from expr_vars(e.lhs)
        yield from expr_vars(e.rhs)
    elif isinstance(e, LogicalNot):
        yield from expr_vars(e.arg)


class _All(frozenset):
    """Assigned-set of a path that never completes."""


_EVERYTHING = _All()


def _meet(a: frozenset, b: frozenset) -> frozenset:
    if isinstance(a, _All):
        return b
    if isinstance(b, _All):
        return a
    return a & b


def validate(p: Program) -> None:
    if p.pkt_param == p.len_param:
        raise ValidationError(f"duplicate parameter name {p.pkt_param!r}")
    seen: set[Label] = set()
    for s in walk_stmts(p.body):
        if isinstance(s, (If, While)):
            if s.label in seen:
                raise ValidationError(f"duplicate branch label {s.label}")
            seen.add(s.label)
        if isinstance(s, (Assign, Read)) and s.lhs in (p.pkt_param, p.len_param):
            raise ValidationError(f"cannot assign to parameter {s.lhs!r}")

    def check(e: Expr, defined: frozenset):
        if isinstance(defined, _All):
            return
        for v in expr_vars(e):
            if v == p.pkt_param:
                raise ValidationError(f"packet parameter {v!r} used without an index")
            if v != p.len_param and v not in defined:
                raise ValidationError(f"variable {v!r} may be used before assignment")

    def flow(s: Stmt, defined: frozenset) -> frozenset:
        if isinstance(s, Block):
            for x in s.stmts:
                defined = flow(x, defined)
            return defined
        if isinstance(s, Assign):
            check(s.rhs, defined)
            return defined if isinstance(defined, _All) else defined | {s.lhs}
        if isinstance(s, Read):
            check(s.index, defined)
            return defined if isinstance(defined, _All) else defined | {s.lhs}
        if isinstance(s, Assert):
            check(s.cond, defined)
            return defined
        if isinstance(s, Abort):
            return _EVERYTHING
        if isinstance(s, If):
            check(s.cond, defined)
            return _meet(flow(s.then, defined), flow(s.other, defined))
        if isinstance(s, While):
            check(s.cond, defined)
            flow(s.body, defined)
            return defined
        raise TypeError(s)

    flow(p.body, frozenset())


# ---------------------------------------------------------------------------
# printing


def format_expr(e: Expr, pkt: str = "pkt", prec: int = 0) -> str:
    if isinstance(e, IntLit):
        s = str(e.value)
        return f"({s})" if e.value < 0 and prec > 0 else s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Index):
        return f"{pkt}[{format_expr(e.index, pkt)}]"
    if isinstance(e, LogicalNot):
        return "!" + format_expr(e.arg, pkt, _UNARY_PREC)
    if isinstance(e, Binary):
        p = _PREC[e.op]
        s = f"{format_expr(e.lhs, pkt, p)} {e.op} {format_expr(e.rhs, pkt, p + 1)}"
        return f"({s})" if p < prec else s
    raise TypeError(e)


def pretty_print(p: Program) -> str:
    out = [f"{p.name}({p.pkt_param}, {p.len_param}) {{"]

    def ex(e: Expr) -> str:
        return format_expr(e, p.pkt_param)

    def emit_block(b: Block, depth: int):
        for s in b.stmts:
            emit(s, depth)

    def emit(s: Stmt, depth: int):
        pad = "    " * depth
        if isinstance(s, Assign):
            out.append(f"{pad}{s.lhs} = {ex(s.rhs)};")
        elif isinstance(s, Read):
            out.append(f"{pad}{s.lhs} = {p.pkt_param}[{ex(s.index)}];")
        elif isinstance(s, Assert):
            out.append(f"{pad}assert({ex(s.cond)});")
        elif isinstance(s, Abort):
            out.append(f"{pad}abort;")
        elif isinstance(s, Block):
            out.append(f"{pad}{{")
            emit_block(s, depth + 1)
            out.append(f"{pad}}}")
        elif isinstance(s, If):
            out.append(f"{pad}if @{s.label} ({ex(s.cond)}) {{")
            emit_block(s.then, depth + 1)
            out.append(f"{pad}}} else {{")
            emit_block(s.other, depth + 1)
            out.append(f"{pad}}}")
        elif isinstance(s, While):
            out.append(f"{pad}while @{s.label} ({ex(s.cond)}) {{")
            emit_block(s.body, depth + 1)
            out.append(f"{pad}}}")
        else:
            raise TypeError(s)

    emit_block(p.body, 1)
    out.append("}")
    return "\n".join(out) + "\n"

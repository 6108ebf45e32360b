"""Lexer, recursive-descent parser and pretty-printer for the surface language.

Grammar (EBNF)::

    program   = { sep } { stmt { sep } } EOF
    sep       = NEWLINE | ";"
    stmt      = assign | if | choose | observe | prune | for | "skip"
    assign    = NAME "=" expr
    if        = "if" cond block [ "else" ( block | if ) ]
    choose    = "choose" expr block [ "else" block ]
    observe   = "observe" "(" cond ")"
    prune     = "prune" "(" expr ")"
    for       = "for" NAME "in" "range" "(" expr [ "," expr ] ")" block
    block     = "{" { sep } { stmt { sep } } "}"
    cond      = "true" | "false" | expr CMP expr | "(" cond ")"
    expr      = term { ( "+" | "-" ) term }
    term      = unary { ( "*" | "/" ) unary }
    unary     = "-" unary | power
    power     = atom [ "^" INT ]
    atom      = NUMBER | NAME [ "(" [ arg { "," arg } ] ")" ] | "(" expr ")"
    arg       = expr | "[" [ expr { "," expr } ] "]"
    CMP       = "<" | "<=" | ">" | ">=" | "==" | "!="

Newlines inside parentheses or brackets are ignored; ``#`` starts a comment.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import ProgramSyntaxError
from .ast import (
    Assign, BinOp, BoolLit, Call, Choose, Compare, For, If, ListExpr, Name,
    Neg, Num, Observe, Pow, Program, Prune, Skip,
)

KEYWORDS = {"if", "else", "for", "in", "range", "observe", "prune", "skip",
            "true", "false", "choose"}
CMP_OPS = ("<=", ">=", "==", "!=", "<", ">")

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|==|!=|[-+*/^<>=(){}\[\],;])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # NUMBER NAME KW OP NEWLINE EOF
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, pos, depth = 1, 0, 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            raise ProgramSyntaxError(f"unexpected character {source[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "newline":
            if depth == 0:
                tokens.append(Token("NEWLINE", "\n", line, col))
            line += 1
            line_start = m.end()
        elif kind == "number":
            tokens.append(Token("NUMBER", text, line, col))
        elif kind == "name":
            tokens.append(Token("KW" if text in KEYWORDS else "NAME", text, line, col))
        elif kind == "op":
            if text in "([":
                depth += 1
            elif text in ")]":
                depth = max(0, depth - 1)
            tokens.append(Token("OP", text, line, col))
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


class Parser:
    def __init__(self, source: str):
        self.toks = tokenize(source)
        self.i = 0

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def _describe(self, t: Token) -> str:
        if t.kind == "EOF":
            return "end of input"
        if t.kind == "NEWLINE":
            return "end of line"
        return repr(t.text)

    def error(self, msg: str, t: Token | None = None):
        t = t or self.tok
        raise ProgramSyntaxError(f"{msg}, found {self._describe(t)}", t.line, t.col)

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.tok
        return t.kind == kind and (text is None or t.text == text)

    def accept(self, kind: str, text: str | None = None):
        if self.at(kind, text):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, kind: str, text: str | None = None, what: str | None = None) -> Token:
        t = self.accept(kind, text)
        if t is None:
            self.error(f"expected {what or text or kind.lower()}")
        return t

    def skip_seps(self):
        while self.at("NEWLINE") or self.at("OP", ";"):
            self.i += 1

    # -- statements
    def parse_program(self) -> Program:
        self.skip_seps()
        body = self.parse_stmts(until_brace=False)
        self.expect("EOF", what="end of input")
        return Program(tuple(body))

    def parse_stmts(self, until_brace: bool) -> list:
        out = []
        while True:
            self.skip_seps()
            if self.at("EOF") or (until_brace and self.at("OP", "}")):
                return out
            out.append(self.parse_stmt())
            if not (self.at("NEWLINE") or self.at("OP", ";") or self.at("EOF")
                    or (until_brace and self.at("OP", "}"))):
                self.error("expected end of statement")

    def parse_block(self) -> tuple:
        self.expect("OP", "{")
        body = self.parse_stmts(until_brace=True)
        self.expect("OP", "}")
        return tuple(body)

    def parse_stmt(self):
        t = self.tok
        if t.kind == "KW":
            if t.text == "if":
                return self.parse_if()
            if t.text == "choose":
                self.i += 1
                prob = self.parse_expr()
                then = self.parse_block()
                orelse = ()
                if self.accept("KW", "else"):
                    orelse = self.parse_block()
                return Choose(prob, then, orelse, line=t.line, col=t.col)
            if t.text == "observe":
                self.i += 1
                self.expect("OP", "(")
                cond = self.parse_cond()
                self.expect("OP", ")")
                return Observe(cond, line=t.line, col=t.col)
            if t.text == "prune":
                self.i += 1
                self.expect("OP", "(")
                bound = self.parse_expr()
                self.expect("OP", ")")
                return Prune(bound, line=t.line, col=t.col)
            if t.text == "for":
                return self.parse_for()
            if t.text == "skip":
                self.i += 1
                return Skip(line=t.line, col=t.col)
            self.error("expected a statement")
        if t.kind == "NAME":
            self.i += 1
            self.expect("OP", "=", what="'='")
            expr = self.parse_expr()
            return Assign(t.text, expr, line=t.line, col=t.col)
        self.error("expected a statement")

    def parse_if(self) -> If:
        t = self.expect("KW", "if")
        cond = self.parse_cond()
        then = self.parse_block()
        orelse = ()
        if self.accept("KW", "else"):
            if self.at("KW", "if"):
                orelse = (self.parse_if(),)
            else:
                orelse = self.parse_block()
        return If(cond, then, orelse, line=t.line, col=t.col)

    def parse_for(self) -> For:
        t = self.expect("KW", "for")
        var = self.expect("NAME", what="loop variable").text
        self.expect("KW", "in")
        self.expect("KW", "range")
        self.expect("OP", "(")
        args = [self.parse_expr()]
        if self.accept("OP", ","):
            args.append(self.parse_expr())
        self.expect("OP", ")")
        body = self.parse_block()
        return For(var, tuple(args), body, line=t.line, col=t.col)

    # -- conditions
    def parse_cond(self):
        t = self.tok
        if self.accept("KW", "true"):
            return BoolLit(True, line=t.line, col=t.col)
        if self.accept("KW", "false"):
            return BoolLit(False, line=t.line, col=t.col)
        start = self.i
        try:
            left = self.parse_expr()
            op = self.tok
            if not (op.kind == "OP" and op.text in CMP_OPS):
                self.error("expected a comparison operator")
            self.i += 1
            right = self.parse_expr()
            return Compare(op.text, left, right, line=left.line, col=left.col)
        except ProgramSyntaxError:
            if self.toks[start].kind == "OP" and self.toks[start].text == "(":
                saved = self.i
                self.i = start + 1
                try:
                    inner = self.parse_cond()
                    self.expect("OP", ")")
                    return inner
                except ProgramSyntaxError:
                    self.i = saved
            raise

    # -- expressions
    def parse_expr(self):
        left = self.parse_term()
        while self.at("OP", "+") or self.at("OP", "-"):
            op = self.tok
            self.i += 1
            right = self.parse_term()
            left = BinOp(op.text, left, right, line=op.line, col=op.col)
        return left

    def parse_term(self):
        left = self.parse_unary()
        while self.at("OP", "*") or self.at("OP", "/"):
            op = self.tok
            self.i += 1
            right = self.parse_unary()
            left = BinOp(op.text, left, right, line=op.line, col=op.col)
        return left

    def parse_unary(self):
        t = self.tok
        if self.accept("OP", "-"):
            return Neg(self.parse_unary(), line=t.line, col=t.col)
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        t = self.tok
        if self.accept("OP", "^"):
            e = self.expect("NUMBER", what="integer exponent")
            if not e.text.isdigit():
                self.error("exponent must be a nonnegative integer literal", e)
            return Pow(base, int(e.text), line=t.line, col=t.col)
        return base

    def parse_atom(self):
        t = self.tok
        if self.accept("NUMBER"):
            return Num(float(t.text), line=t.line, col=t.col)
        if self.accept("NAME"):
            if self.accept("OP", "("):
                args = []
                if not self.at("OP", ")"):
                    args.append(self.parse_arg())
                    while self.accept("OP", ","):
                        args.append(self.parse_arg())
                self.expect("OP", ")")
                return Call(t.text, tuple(args), line=t.line, col=t.col)
            return Name(t.text, line=t.line, col=t.col)
        if self.accept("OP", "("):
            e = self.parse_expr()
            self.expect("OP", ")")
            return e
        self.error("expected an expression")

    def parse_arg(self):
        t = self.tok
        if self.accept("OP", "["):
            items = []
            if not self.at("OP", "]"):
                items.append(self.parse_expr())
                while self.accept("OP", ","):
                    items.append(self.parse_expr())
            self.expect("OP", "]")
            return ListExpr(tuple(items), line=t.line, col=t.col)
        return self.parse_expr()


def parse(source: str) -> Program:
    """Parse program text into a surface ``Program``."""
    return Parser(source).parse_program()


# -- pretty printer ----------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _num(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def format_expr(e, prec: int = 0) -> str:
    if isinstance(e, Num):
        s = _num(e.value)
        return f"({s})" if e.value < 0 else s
    if isinstance(e, Name):
        return e.id
    if isinstance(e, Neg):
        s = "-" + format_expr(e.operand, 3)
        return f"({s})" if prec > 0 else s
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        # right operand binds tighter so that a - (b - c) keeps its parentheses
        s = f"{format_expr(e.left, p)} {e.op} {format_expr(e.right, p + 1)}"
        return f"({s})" if p < prec else s
    if isinstance(e, Pow):
        return f"{format_expr(e.base, 4)}^{e.exponent}"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(format_expr(a) for a in e.args)})"
    if isinstance(e, ListExpr):
        return "[" + ", ".join(format_expr(a) for a in e.items) + "]"
    raise TypeError(f"not an expression: {e!r}")


def format_cond(c) -> str:
    if isinstance(c, BoolLit):
        return "true" if c.value else "false"
    return f"{format_expr(c.left)} {c.op} {format_expr(c.right)}"


def _format_block(stmts, depth: int) -> list[str]:
    lines = []
    for s in stmts:
        lines.extend(_format_stmt(s, depth))
    return lines


def _format_stmt(s, depth: int) -> list[str]:
    pad = "    " * depth
    if isinstance(s, Assign):
        return [f"{pad}{s.target} = {format_expr(s.expr)}"]
    if isinstance(s, Skip):
        return [f"{pad}skip"]
    if isinstance(s, Observe):
        return [f"{pad}observe({format_cond(s.cond)})"]
    if isinstance(s, Prune):
        return [f"{pad}prune({format_expr(s.bound)})"]
    if isinstance(s, (If, Choose)):
        head = f"if {format_cond(s.cond)}" if isinstance(s, If) else f"choose {format_expr(s.prob)}"
        lines = [f"{pad}{head} {{"]
        lines += _format_block(s.then, depth + 1)
        if s.orelse:
            lines.append(f"{pad}}} else {{")
            lines += _format_block(s.orelse, depth + 1)
        lines.append(f"{pad}}}")
        return lines
    if isinstance(s, For):
        args = ", ".join(format_expr(a) for a in s.args)
        lines = [f"{pad}for {s.var} in range({args}) {{"]
        lines += _format_block(s.body, depth + 1)
        lines.append(f"{pad}}}")
        return lines
    raise TypeError(f"not a statement: {s!r}")


def format_program(p: Program) -> str:
    return "\n".join(_format_block(p.body, 0)) + "\n"

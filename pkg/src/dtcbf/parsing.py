"""Infix formula parser for problem files.

Grammar (whitespace-insensitive, ASCII):

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := ('+' | '-')* power
    power  := atom ('^' ['-'] INTEGER)?
    atom   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'

Identifiers: x1..xn (state), u1..um (input), t1..tk (barrier-template
coefficients), m1..mk (policy-template coefficients), `r` (rate-function
argument, only where enabled), function names sin cos tan exp log sqrt
abs, and named constants declared by the enclosing file.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ParseError
from .expressions import (
    FUNCTIONS,
    Const,
    Expr,
    Var,
    add,
    call,
    div,
    mul,
    neg,
    pow_int,
    sub,
)

__all__ = ["VarContext", "parse_formula"]


@dataclass(frozen=True)
class VarContext:
    """Declared dimensions and named constants for one formula family."""

    n_state: int = 0
    n_input: int = 0
    n_theta: int = 0
    n_mu: int = 0
    constants: dict[str, float] = field(default_factory=dict)
    allow_r: bool = False


_TOKEN_RE = re.compile(
    r"""
    (?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
  | (?P<ws>\s+)
  | (?P<bad>.)
    """,
    re.VERBOSE,
)

_VAR_RE = re.compile(r"^([xutm])(\d+)$")


@dataclass(frozen=True)
class _Tok:
    kind: str  # "num" | "ident" | "op" | "end"
    text: str
    col: int


def _lex(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    for mo in _TOKEN_RE.finditer(text):
        kind = mo.lastgroup
        if kind == "ws":
            continue
        if kind == "bad":
            raise ParseError(f"unexpected character {mo.group()!r}", 1, mo.start() + 1)
        toks.append(_Tok(kind, mo.group(), mo.start() + 1))
    toks.append(_Tok("end", "", len(text) + 1))
    return toks


class _Parser:
    def __init__(self, text: str, ctx: VarContext):
        self.text = text
        self.ctx = ctx
        self.toks = _lex(text)
        self.pos = 0

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def take(self) -> _Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect_op(self, op: str):
        t = self.take()
        if t.kind != "op" or t.text != op:
            raise ParseError(f"expected {op!r}, got {t.text or 'end of formula'!r}", 1, t.col)

    def parse(self) -> Expr:
        e = self.expr()
        t = self.peek()
        if t.kind != "end":
            raise ParseError(f"unexpected trailing input {t.text!r}", 1, t.col)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            t = self.peek()
            if t.kind == "op" and t.text in "+-":
                self.take()
                rhs = self.term()
                e = add(e, rhs) if t.text == "+" else sub(e, rhs)
            else:
                return e

    def term(self) -> Expr:
        e = self.factor()
        while True:
            t = self.peek()
            if t.kind == "op" and t.text in "*/":
                self.take()
                rhs = self.factor()
                e = mul(e, rhs) if t.text == "*" else div(e, rhs)
            else:
                return e

    def factor(self) -> Expr:
        signs = 0
        while True:
            t = self.peek()
            if t.kind == "op" and t.text in "+-":
                self.take()
                if t.text == "-":
                    signs += 1
            else:
                break
        e = self.power()
        return neg(e) if signs % 2 == 1 else e

    def power(self) -> Expr:
        e = self.atom()
        t = self.peek()
        if t.kind == "op" and t.text == "^":
            self.take()
            e = pow_int(e, self.exponent())
        return e

    def exponent(self) -> int:
        negate = False
        t = self.take()
        if t.kind == "op" and t.text == "-":
            negate = True
            t = self.take()
        if t.kind != "num" or not re.fullmatch(r"\d+", t.text):
            raise ParseError(
                f"exponent must be an integer literal, got {t.text or 'end of formula'!r}",
                1,
                t.col,
            )
        v = int(t.text)
        return -v if negate else v

    def atom(self) -> Expr:
        t = self.take()
        if t.kind == "num":
            return Const(float(t.text))
        if t.kind == "op" and t.text == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        if t.kind == "ident":
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == "(":
                if t.text not in FUNCTIONS:
                    raise ParseError(f"unknown function {t.text!r}", 1, t.col)
                self.take()
                arg = self.expr()
                self.expect_op(")")
                return call(t.text, arg)
            return self.identifier(t)
        raise ParseError(f"expected a value, got {t.text or 'end of formula'!r}", 1, t.col)

    def identifier(self, t: _Tok) -> Expr:
        name = t.text
        ctx = self.ctx
        if name == "r" and ctx.allow_r:
            return Var("x", 0)
        mo = _VAR_RE.match(name)
        if mo:
            letter, num = mo.group(1), int(mo.group(2))
            limits = {
                "x": ("state", ctx.n_state),
                "u": ("input", ctx.n_input),
                "t": ("barrier coefficient", ctx.n_theta),
                "m": ("policy coefficient", ctx.n_mu),
            }
            label, dim = limits[letter]
            if 1 <= num <= dim:
                if letter == "x":
                    return Var("x", num - 1)
                if letter == "u":
                    return Var("u", num - 1)
                if letter == "t":
                    return Var("p", num - 1)
                return Var("p", ctx.n_theta + num - 1)
            if name in ctx.constants:
                return Const(ctx.constants[name])
            raise ParseError(
                f"{label} variable {name!r} out of range (declared {dim})", 1, t.col
            )
        if name in ctx.constants:
            return Const(ctx.constants[name])
        if name in FUNCTIONS:
            raise ParseError(f"function {name!r} requires an argument list", 1, t.col)
        raise ParseError(f"unknown identifier {name!r}", 1, t.col)


def parse_formula(text: str, ctx: VarContext) -> Expr:
    """Parse one formula string into an expression."""
    return _Parser(text, ctx).parse()

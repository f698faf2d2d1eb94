"""Recursive-descent parser for the expression grammar.

Grammar (documented in the README):

    expr    := term (("+" | "-") term)*
    term    := factor (("*" | "/") factor)*
    factor  := "-" factor | power
    power   := primary ("^" ["-"] integer)?
    primary := integer | "(" expr ")" | ident | ident "(" expr {"," expr} ")"
             | "D" "(" expr "," ident {"," ident} ")"

Identifiers resolve against a Context: a bare identifier must be a declared
symbol; ``f(...)`` must be a declared opaque function; ``f_xy(...)`` is the
opaque function f differentiated once per suffix letter group, matched
greedily against f's declared slot names.  ``D(e, s)`` parses e and
differentiates it with respect to s.  The pretty-printer in exprs.py emits
text this grammar accepts, and parse(print(e)) == e.
"""

from __future__ import annotations

import re

from .exprs import Context, Expr, ExprError

__all__ = ["ParseError", "parse_expr"]

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z0-9_]*)|(\*|\+|-|/|\^|\(|\)|,))")


class ParseError(ExprError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip():
                raise ParseError(f"unexpected character {text[pos]!r}", pos)
            break
        if m.group(1):
            tokens.append(("int", m.group(1), m.start(1)))
        elif m.group(2):
            tokens.append(("ident", m.group(2), m.start(2)))
        else:
            tokens.append(("op", m.group(3), m.start(3)))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str, ctx: Context):
        self.text = text
        self.ctx = ctx
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.next()
        if kind != "op" or val != value:
            raise ParseError(f"expected {value!r}, found {val or 'end of input'!r}", pos)

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing {val!r}", pos)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, val, pos = self.peek()
            if kind == "op" and val in "+-":
                self.next()
                rhs = self.term()
                e = e + rhs if val == "+" else e - rhs
            else:
                return e

    def term(self) -> Expr:
        e = self.factor()
        while True:
            kind, val, pos = self.peek()
            if kind == "op" and val in "*/":
                self.next()
                rhs = self.factor()
                try:
                    e = e * rhs if val == "*" else e / rhs
                except ZeroDivisionError:
                    raise ParseError("division by zero", pos) from None
            else:
                return e

    def factor(self) -> Expr:
        kind, val, pos = self.peek()
        if kind == "op" and val == "-":
            self.next()
            return -self.factor()
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        kind, val, pos = self.peek()
        if kind == "op" and val == "^":
            self.next()
            sign = 1
            kind, val, pos = self.peek()
            if kind == "op" and val == "-":
                self.next()
                sign = -1
            kind, val, pos = self.next()
            if kind != "int":
                raise ParseError("exponent must be an integer literal", pos)
            try:
                return base ** (sign * int(val))
            except ZeroDivisionError:
                raise ParseError("zero to a negative power", pos) from None
        return base

    def primary(self) -> Expr:
        kind, val, pos = self.next()
        if kind == "int":
            return self.ctx.expr(int(val))
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "ident":
            nxt = self.peek()
            calls = nxt[0] == "op" and nxt[1] == "("
            if calls and val == "D":
                return self._derivative(pos)
            if calls:
                return self._application(val, pos)
            if self.ctx.has_symbol(val):
                return self.ctx.sym(val)
            raise ParseError(f"unknown symbol {val!r}", pos)
        raise ParseError(f"unexpected {val or 'end of input'!r}", pos)

    def _arguments(self) -> list[Expr]:
        self.expect("(")
        args = [self.expr()]
        while True:
            kind, val, pos = self.peek()
            if kind == "op" and val == ",":
                self.next()
                args.append(self.expr())
            else:
                self.expect(")")
                return args

    def _derivative(self, pos: int) -> Expr:
        self.expect("(")
        e = self.expr()
        syms = []
        while True:
            kind, val, p2 = self.next()
            if kind == "op" and val == ")":
                break
            if not (kind == "op" and val == ","):
                raise ParseError("expected ',' or ')' in D(...)", p2)
            kind, val, p3 = self.next()
            if kind != "ident" or not self.ctx.has_symbol(val):
                raise ParseError(f"D(...) expects a declared symbol, found {val!r}", p3)
            syms.append(self.ctx.get_symbol(val))
        if not syms:
            raise ParseError("D(...) needs at least one differentiation symbol", pos)
        for s in syms:
            e = e.diff(s)
        return e

    def _application(self, name: str, pos: int) -> Expr:
        fn = self.ctx.get_opaque(name)
        deriv = None
        if fn is None and "_" in name:
            base, _, suffix = name.partition("_")
            fn = self.ctx.get_opaque(base)
            if fn is not None:
                deriv = self._parse_suffix(fn, suffix, pos)
        if fn is None:
            raise ParseError(f"unknown function {name!r}", pos)
        args = self._arguments()
        if len(args) != fn.arity:
            raise ParseError(f"{fn.name} expects {fn.arity} arguments, got {len(args)}", pos)
        return self.ctx.apply(fn, args, deriv)

    def _parse_suffix(self, fn, suffix: str, pos: int) -> list[int]:
        deriv = [0] * fn.arity
        ordered = sorted(range(fn.arity), key=lambda k: -len(fn.slots[k]))
        rest = suffix
        while rest:
            for k in ordered:
                slot = fn.slots[k]
                if rest.startswith(slot):
                    deriv[k] += 1
                    rest = rest[len(slot):]
                    break
            else:
                raise ParseError(
                    f"cannot match derivative suffix {suffix!r} against slots {fn.slots}", pos
                )
        return deriv


def parse_expr(text: str, ctx: Context) -> Expr:
    """Parse ``text`` against the declared symbols and functions of ``ctx``."""
    return _Parser(text, ctx).parse()

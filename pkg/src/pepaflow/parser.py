"""Recursive-descent parser and canonical printer for ``.pepa`` model files.

Grammar::

    model    := {def | binding} system
    def      := IDENT "=" choice ";"
    binding  := IDENT "=" NUMBER ";" | IDENT ":=" INT ";"
    choice   := seq {"+" seq}
    seq      := "(" IDENT "," rate ")" "." seq | "(" choice ")" | IDENT
    rate     := IDENT | NUMBER | "infty"
    system   := "system" "=" coop ";"
    coop     := pop {"<" [IDENT {"," IDENT}] ">" pop}
    pop      := IDENT "[" countexpr "]" | "(" coop ")"
    countexpr:= term {"*" term};  term := IDENT | INT

``//`` starts a comment that runs to the end of the line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .syntax import (
    Choice,
    Constant,
    Cooperation,
    CountExpr,
    Literal,
    Model,
    NamedRate,
    Passive,
    Population,
    Prefix,
)


@dataclass(frozen=True)
class SourceModel:
    text: str
    origin: str = "<inline>"

    @classmethod
    def from_path(cls, path) -> "SourceModel":
        path = Path(path)
        return cls(path.read_text(encoding="utf-8"), str(path))


class ParseError(Exception):
    def __init__(self, line: int, column: int, expected: str, found: str = "", origin: str = "<inline>"):
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found
        self.origin = origin
        super().__init__(f"{origin}:{line}:{column}: expected {expected}, found {found or 'end of input'}")


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*)
  | (?P<op>:=|<>|[=;+().,<>\[\]*])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # ident | number | op | eof
    text: str
    line: int
    column: int


def _tokenize(text: str, origin: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(line, pos - line_start + 1, "a token", repr(text[pos]), origin)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        chunk = m.group()
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rfind("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, src: SourceModel):
        self.origin = src.origin
        self.toks = _tokenize(src.text, src.origin)
        self.i = 0

    # token helpers
    def peek(self, k: int = 0) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def fail(self, expected: str):
        tok = self.peek()
        raise ParseError(tok.line, tok.column, expected, tok.text, self.origin)

    def accept(self, text: str) -> bool:
        if self.peek().kind == "op" and self.peek().text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        tok = self.peek()
        if not self.accept(text):
            self.fail(repr(text))
        return tok

    def ident(self, what: str = "identifier") -> str:
        tok = self.peek()
        if tok.kind != "ident":
            self.fail(what)
        self.i += 1
        return tok.text

    # grammar
    def model(self) -> Model:
        definitions, rates, counts = {}, {}, {}
        system = None
        while self.peek().kind != "eof":
            start = self.peek()
            if start.kind == "ident" and start.text == "system" and self.peek(1).text == "=":
                if system is not None:
                    self.fail("end of input (system equation already given)")
                self.i += 2
                system = self.coop()
                self.expect(";")
                continue
            name = self.ident("definition or binding")
            if name in definitions or name in rates or name in counts:
                raise ParseError(start.line, start.column, f"a fresh name (duplicate {name})", name, self.origin)
            if self.accept(":="):
                tok = self.peek()
                if tok.kind != "number" or not tok.text.isdigit():
                    self.fail("integer count")
                self.i += 1
                counts[name] = int(tok.text)
            else:
                self.expect("=")
                if self.peek().kind == "number":
                    rates[name] = float(self.peek().text)
                    self.i += 1
                else:
                    definitions[name] = self.choice()
            self.expect(";")
        if system is None:
            self.fail("system equation")
        return Model(definitions, system, rates, counts)

    def choice(self):
        expr = self.seq()
        while self.accept("+"):
            expr = Choice(expr, self.seq())
        return expr

    def seq(self):
        if self.accept("("):
            if self.peek().kind == "ident" and self.peek(1).text == ",":
                action = self.ident()
                self.expect(",")
                rate = self.rate()
                self.expect(")")
                self.expect(".")
                return Prefix(action, rate, self.seq())
            inner = self.choice()
            self.expect(")")
            return inner
        return Constant(self.ident("prefix or constant"))

    def rate(self):
        tok = self.peek()
        if tok.kind == "number":
            self.i += 1
            return Literal(float(tok.text))
        if tok.kind == "ident":
            self.i += 1
            return Passive() if tok.text == "infty" else NamedRate(tok.text)
        self.fail("rate")

    def coop(self):
        expr = self.pop()
        while True:
            if self.accept("<>"):
                actions = frozenset()
            elif self.accept("<"):
                names = []
                if not self.accept(">"):
                    names.append(self.ident("action name"))
                    while self.accept(","):
                        names.append(self.ident("action name"))
                    self.expect(">")
                actions = frozenset(names)
            else:
                return expr
            expr = Cooperation(expr, actions, self.pop())

    def pop(self):
        if self.accept("("):
            inner = self.coop()
            self.expect(")")
            return inner
        name = self.ident("population")
        self.expect("[")
        factors = [self.term()]
        while self.accept("*"):
            factors.append(self.term())
        self.expect("]")
        return Population(Constant(name), CountExpr(tuple(factors)))

    def term(self):
        tok = self.peek()
        if tok.kind == "ident":
            self.i += 1
            return tok.text
        if tok.kind == "number" and tok.text.isdigit():
            self.i += 1
            return int(tok.text)
        self.fail("count name or integer")


def parse_model(src: SourceModel | str) -> Model:
    """Parse model text.  Raises :class:`ParseError`; does not validate."""
    if isinstance(src, str):
        src = SourceModel(src)
    return _Parser(src).model()


def parse_file(path) -> Model:
    return parse_model(SourceModel.from_path(path))


# -- printing ---------------------------------------------------------------------


def _fmt_number(x: float) -> str:
    return str(int(x)) if float(x).is_integer() and abs(x) < 1e15 else repr(float(x))


def _fmt_rate(rate) -> str:
    if isinstance(rate, NamedRate):
        return rate.name
    if isinstance(rate, Passive):
        return "infty"
    return _fmt_number(rate.value)


def format_process(expr) -> str:
    if isinstance(expr, Constant):
        return expr.name
    if isinstance(expr, Prefix):
        cont = format_process(expr.continuation)
        if isinstance(expr.continuation, Choice):
            cont = f"({cont})"
        return f"({expr.action}, {_fmt_rate(expr.rate)}).{cont}"
    if isinstance(expr, Choice):
        right = format_process(expr.right)
        if isinstance(expr.right, Choice):
            right = f"({right})"
        return f"{format_process(expr.left)} + {right}"
    if isinstance(expr, Population):
        count = "*".join(str(f) for f in expr.count.factors)
        return f"{expr.body.name}[{count}]"
    if isinstance(expr, Cooperation):
        right = format_process(expr.right)
        if isinstance(expr.right, Cooperation):
            right = f"({right})"
        coop = "<>" if not expr.actions else "<" + ", ".join(sorted(expr.actions)) + ">"
        return f"{format_process(expr.left)} {coop} {right}"
    raise TypeError(f"unknown term {expr!r}")


def serialize_model(model: Model) -> str:
    """Canonical text for ``model``; ``parse_model`` maps it back to an equal Model."""
    lines = []
    for name, value in model.rate_bindings.items():
        lines.append(f"{name} = {_fmt_number(value)};")
    for name, value in model.count_bindings.items():
        lines.append(f"{name} := {value};")
    if lines:
        lines.append("")
    for name, body in model.definitions.items():
        lines.append(f"{name} = {format_process(body)};")
    lines.append("")
    lines.append(f"system = {format_process(model.system)};")
    return "\n".join(lines) + "\n"

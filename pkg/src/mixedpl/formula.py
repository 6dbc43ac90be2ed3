"""Multi-response model formulas such as ``y1 + y2 + z1 ~ 0 + X1 + X2``.

Grammar (whitespace-insensitive)::

    formula := lhs "~" rhs ["|" "1"]
    lhs     := name ("+" name)*
    rhs     := ("0" | "1") | [("0" | "1") "+"] name ("+" name)*
    name    := [A-Za-z_][A-Za-z0-9._]*

A leading ``0`` on the right-hand side marks the intercept as suppressed.
The trailing ``| 1`` part is accepted for compatibility and otherwise ignored.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

_TOKEN = re.compile(r"\s*(?:(?P<name>[A-Za-z_][A-Za-z0-9._]*)|(?P<num>[0-9]+(?:\.[0-9]*)?)|(?P<op>[~+|]))")


class FormulaError(ValueError):
    """Malformed formula; ``offset`` is the byte offset where parsing failed."""

    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


@dataclass(frozen=True)
class FormulaSpec:
    response_names: tuple[str, ...]
    covariate_names: tuple[str, ...]
    intercept_suppressed: bool = False
    compat_part: bool = False

    def render(self) -> str:
        rhs = list(self.covariate_names)
        if self.intercept_suppressed:
            rhs.insert(0, "0")
        elif not rhs:
            rhs = ["1"]
        out = " + ".join(self.response_names) + " ~ " + " + ".join(rhs)
        return out + " | 1" if self.compat_part else out


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            offset = len(text[:start].encode("utf-8"))
            raise FormulaError(f"unexpected character {text[start]!r}", offset, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), len(text[:start].encode("utf-8"))))
        pos = m.end()
    tokens.append(("end", "", len(text.encode("utf-8"))))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected: str):
        kind, value, offset = self.peek()
        found = "end of input" if kind == "end" else repr(value)
        raise FormulaError(f"expected {expected}, found {found}", offset, self.text)

    def expect_op(self, op: str):
        kind, value, _ = self.peek()
        if kind != "op" or value != op:
            self.fail(f"{op!r}")
        self.take()

    def names(self, side: str, seen: dict[str, int]) -> list[str]:
        out = []
        while True:
            kind, value, offset = self.peek()
            if kind != "name":
                self.fail(f"a variable name on the {side}")
            if value in seen:
                raise FormulaError(f"duplicate name {value!r}", offset, self.text)
            seen[value] = offset
            out.append(value)
            self.take()
            kind, value, _ = self.peek()
            if kind == "op" and value == "+":
                self.take()
                continue
            return out

    def parse(self) -> FormulaSpec:
        seen: dict[str, int] = {}
        lhs = self.names("left-hand side", seen)
        self.expect_op("~")

        suppressed = False
        rhs: list[str] = []
        kind, value, offset = self.peek()
        if kind == "num":
            if value not in ("0", "1"):
                raise FormulaError(f"only 0 or 1 may appear as an intercept term, got {value!r}", offset, self.text)
            suppressed = value == "0"
            self.take()
            kind, value, _ = self.peek()
            if kind == "op" and value == "+":
                self.take()
                rhs = self.names("right-hand side", seen)
        else:
            rhs = self.names("right-hand side", seen)

        compat = False
        kind, value, _ = self.peek()
        if kind == "op" and value == "|":
            self.take()
            kind, value, offset = self.peek()
            if kind != "num" or value != "1":
                self.fail("'1' after '|' (only the '| 1' part is supported)")
            self.take()
            compat = True
        if self.peek()[0] != "end":
            self.fail("'+', '|' or end of input")
        return FormulaSpec(tuple(lhs), tuple(rhs), suppressed, compat)


def parse_formula(text: str) -> FormulaSpec:
    if not isinstance(text, str):
        raise TypeError("formula must be a string")
    return _Parser(text).parse()

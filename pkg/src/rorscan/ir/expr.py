"""Prefix S-expression syntax for IR expressions.

Grammar::

    expr  := INT | HEX | 'true' | 'false' | 'sender' | 'value' | 'this'
           | IDENT
           | '(' 'load' IDENT [expr] ')'
           | '(' 'balance' expr ')'
           | '(' OP expr+ ')'

``sender``/``value``/``this`` are ``msg.sender``, ``msg.value`` and the
executing contract's own address.  Comparison and boolean operators yield
0 or 1; arithmetic wraps modulo 2**256 and division by zero yields 0.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from ..errors import IRError

BINARY_OPS = frozenset(
    {"+", "-", "*", "/", "%", "==", "!=", "<", "<=", ">", ">=", "and", "or"}
)
UNARY_OPS = frozenset({"not"})
SPECIAL_ATOMS = frozenset({"sender", "value", "this"})

_TOKEN_RE = re.compile(r"\s*(\(|\)|[^\s()]+)")
_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class Lit:
    value: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Env:
    """One of ``sender``, ``value``, ``this``."""

    name: str


@dataclass(frozen=True)
class Load:
    var: str
    key: "Expr | None" = None


@dataclass(frozen=True)
class Balance:
    target: "Expr"


@dataclass(frozen=True)
class Op:
    op: str
    args: tuple["Expr", ...]


Expr = Union[Lit, Var, Env, Load, Balance, Op]


def _tokenize(text: str) -> list[str]:
    pos, tokens = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise IRError(f"cannot tokenize expression {text!r} at offset {pos}")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens


def _atom(tok: str) -> Expr:
    low = tok.lower()
    if low == "true":
        return Lit(1)
    if low == "false":
        return Lit(0)
    if tok in SPECIAL_ATOMS:
        return Env(tok)
    if low.startswith("0x"):
        try:
            return Lit(int(low, 16))
        except ValueError:
            raise IRError(f"bad hex literal {tok!r}") from None
    if tok.isdigit():
        return Lit(int(tok))
    if _IDENT_RE.match(tok):
        return Var(tok)
    raise IRError(f"bad atom {tok!r}")


def parse_expr(source: str | int | bool) -> Expr:
    if isinstance(source, bool):
        return Lit(int(source))
    if isinstance(source, int):
        return Lit(source)
    if not isinstance(source, str):
        raise IRError(f"expression must be a string or integer, got {source!r}")
    tokens = _tokenize(source)
    if not tokens:
        raise IRError("empty expression")
    expr, pos = _parse(tokens, 0)
    if pos != len(tokens):
        raise IRError(f"trailing tokens in expression {source!r}")
    return expr


def _parse(tokens: list[str], pos: int) -> tuple[Expr, int]:
    tok = tokens[pos]
    if tok == ")":
        raise IRError("unexpected ')'")
    if tok != "(":
        return _atom(tok), pos + 1
    pos += 1
    if pos >= len(tokens):
        raise IRError("unterminated '('")
    head = tokens[pos]
    pos += 1
    args: list[Expr] = []
    raw_ident = None
    if head == "load":
        if pos >= len(tokens) or not _IDENT_RE.match(tokens[pos]):
            raise IRError("load needs a state variable name")
        raw_ident = tokens[pos]
        pos += 1
    while pos < len(tokens) and tokens[pos] != ")":
        arg, pos = _parse(tokens, pos)
        args.append(arg)
    if pos >= len(tokens):
        raise IRError("unterminated '('")
    pos += 1
    if head == "load":
        if len(args) > 1:
            raise IRError("load takes at most one key")
        return Load(raw_ident, args[0] if args else None), pos
    if head == "balance":
        if len(args) != 1:
            raise IRError("balance takes exactly one argument")
        return Balance(args[0]), pos
    if head in UNARY_OPS:
        if len(args) != 1:
            raise IRError(f"{head} takes exactly one argument")
        return Op(head, tuple(args)), pos
    if head in BINARY_OPS:
        if len(args) < 2:
            raise IRError(f"{head} needs at least two arguments")
        return Op(head, tuple(args)), pos
    raise IRError(f"unknown operator {head!r}")


def render(expr: Expr) -> str:
    if isinstance(expr, Lit):
        return str(expr.value) if expr.value < 1 << 64 else hex(expr.value)
    if isinstance(expr, (Var, Env)):
        return expr.name
    if isinstance(expr, Load):
        return f"(load {expr.var})" if expr.key is None else f"(load {expr.var} {render(expr.key)})"
    if isinstance(expr, Balance):
        return f"(balance {render(expr.target)})"
    return "(" + " ".join([expr.op, *(render(a) for a in expr.args)]) + ")"


def walk(expr: Expr):
    """Yield every sub-expression, outermost first."""
    yield expr
    if isinstance(expr, Load) and expr.key is not None:
        yield from walk(expr.key)
    elif isinstance(expr, Balance):
        yield from walk(expr.target)
    elif isinstance(expr, Op):
        for a in expr.args:
            yield from walk(a)

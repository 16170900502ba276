"""Executable contract representation and its JSON loader."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cache
from importlib import resources
from typing import Union

import jsonschema

from ..errors import IRError, UnboundIdentifierError
from ..words import selector_of, to_address
from .expr import Balance, Env, Expr, Load, Op, Var, parse_expr, walk

FALLBACK = "fallback"
# State variables with these names are treated as owner slots even without
# an explicit ``privileged`` flag.
OWNER_NAMES = frozenset({"owner", "admin", "governance"})


@dataclass(frozen=True)
class StateVar:
    name: str
    slot: int
    kind: str = "scalar"  # scalar | map
    privileged: bool = False

    @property
    def is_map(self) -> bool:
        return self.kind == "map"


@dataclass(frozen=True)
class Param:
    name: str
    type: str


@dataclass(frozen=True)
class NonReentrant:
    pass


@dataclass(frozen=True)
class AccessControl:
    """``require(msg.sender == allowed)`` as a modifier."""

    allowed: Expr


Guard = Union[NonReentrant, AccessControl]


# Statements carry ``index``: their pre-order position inside the function body.
@dataclass(frozen=True)
class Require:
    index: int
    cond: Expr
    reason: str = ""


@dataclass(frozen=True)
class Let:
    index: int
    name: str
    expr: Expr


@dataclass(frozen=True)
class ReadState:
    index: int
    var: str
    key: Expr | None
    into: str


@dataclass(frozen=True)
class WriteState:
    index: int
    var: str
    key: Expr | None
    expr: Expr


@dataclass(frozen=True)
class Call:
    index: int
    target: Expr
    signature: str
    args: tuple[Expr, ...] = ()
    value: Expr | None = None
    static: bool = False
    into: tuple[str, ...] = ()

    @property
    def selector(self) -> str:
        return selector_of(self.signature)

    @property
    def callee_name(self) -> str:
        return self.signature.split("(", 1)[0]


@dataclass(frozen=True)
class NativeTransfer:
    index: int
    target: Expr
    amount: Expr


@dataclass(frozen=True)
class Return:
    index: int
    values: tuple[Expr, ...]


@dataclass(frozen=True)
class If:
    index: int
    cond: Expr
    then: tuple["Stmt", ...]
    orelse: tuple["Stmt", ...] = ()


@dataclass(frozen=True)
class InternalCall:
    index: int
    function: str
    args: tuple[Expr, ...] = ()
    into: tuple[str, ...] = ()


Stmt = Union[Require, Let, ReadState, WriteState, Call, NativeTransfer, Return, If, InternalCall]


@dataclass(frozen=True)
class FunctionDef:
    name: str
    params: tuple[Param, ...] = ()
    visibility: str = "public"
    payable: bool = False
    guards: tuple[Guard, ...] = ()
    body: tuple[Stmt, ...] = ()

    @property
    def signature(self) -> str:
        return f"{self.name}({','.join(p.type for p in self.params)})"

    @property
    def selector(self) -> str:
        return selector_of(self.signature)

    @property
    def is_public(self) -> bool:
        return self.visibility == "public"

    @property
    def non_reentrant(self) -> bool:
        return any(isinstance(g, NonReentrant) for g in self.guards)

    @property
    def is_fallback(self) -> bool:
        return self.name == FALLBACK

    def statements(self):
        """All statements in pre-order (nested ``If`` bodies included)."""
        yield from iter_statements(self.body)


def iter_statements(block):
    for stmt in block:
        yield stmt
        if isinstance(stmt, If):
            yield from iter_statements(stmt.then)
            yield from iter_statements(stmt.orelse)


@dataclass(frozen=True, order=True)
class FunctionRef:
    """A function identified by the contract it lives in."""

    address: str
    name: str

    def __str__(self) -> str:
        return f"{self.address}.{self.name}"


@dataclass(frozen=True, eq=False)
class ContractIR:
    address: str
    name: str
    state_vars: dict[str, StateVar]
    functions: dict[str, FunctionDef]
    by_selector: dict[str, FunctionDef] = field(default_factory=dict, compare=False)

    def function(self, name: str) -> FunctionDef:
        try:
            return self.functions[name]
        except KeyError:
            raise IRError(f"{self.name}: no function named {name!r}") from None

    def lookup_selector(self, selector: str) -> FunctionDef | None:
        return self.by_selector.get(selector.lower())

    @property
    def fallback(self) -> FunctionDef | None:
        return self.functions.get(FALLBACK)

    def is_owner_var(self, name: str) -> bool:
        var = self.state_vars.get(name)
        return var is not None and not var.is_map and (var.privileged or name in OWNER_NAMES)

    def public_functions(self) -> list[FunctionDef]:
        return [f for f in self.functions.values() if f.is_public and not f.is_fallback]


@cache
def ir_schema() -> dict:
    return json.loads(resources.files("rorscan.schemas").joinpath("ir.schema.json").read_text())


@cache
def _ir_validator():
    schema = ir_schema()
    return jsonschema.validators.validator_for(schema)(schema)


def _into(raw) -> tuple[str, ...]:
    if raw is None:
        return ()
    return (raw,) if isinstance(raw, str) else tuple(raw)


class _BodyBuilder:
    def __init__(self) -> None:
        self.counter = 0

    def _next(self) -> int:
        i = self.counter
        self.counter += 1
        return i

    def block(self, raw_block) -> tuple[Stmt, ...]:
        return tuple(self.stmt(s) for s in raw_block)

    def stmt(self, raw: dict) -> Stmt:
        idx = self._next()
        key = lambda: parse_expr(raw["key"]) if "key" in raw else None  # noqa: E731
        if "require" in raw:
            return Require(idx, parse_expr(raw["require"]), raw.get("reason", ""))
        if "let" in raw:
            return Let(idx, raw["let"], parse_expr(raw["expr"]))
        if "read" in raw:
            return ReadState(idx, raw["read"], key(), raw["into"])
        if "write" in raw:
            return WriteState(idx, raw["write"], key(), parse_expr(raw["expr"]))
        if "call" in raw:
            return Call(
                idx,
                parse_expr(raw["call"]),
                raw["sig"],
                tuple(parse_expr(a) for a in raw.get("args", [])),
                parse_expr(raw["value"]) if "value" in raw else None,
                bool(raw.get("static", False)),
                _into(raw.get("into")),
            )
        if "transfer" in raw:
            return NativeTransfer(idx, parse_expr(raw["transfer"]), parse_expr(raw["amount"]))
        if "return" in raw:
            vals = raw["return"]
            vals = vals if isinstance(vals, list) else [vals]
            return Return(idx, tuple(parse_expr(v) for v in vals))
        if "if" in raw:
            cond = parse_expr(raw["if"])
            then = self.block(raw["then"])
            orelse = self.block(raw.get("else", []))
            return If(idx, cond, then, orelse)
        if "internal" in raw:
            return InternalCall(
                idx,
                raw["internal"],
                tuple(parse_expr(a) for a in raw.get("args", [])),
                _into(raw.get("into")),
            )
        raise IRError(f"unknown statement {raw!r}")


def _parse_guard(raw) -> Guard:
    if raw == "nonReentrant":
        return NonReentrant()
    return AccessControl(parse_expr(raw["onlyCaller"]))


def parse_contract(doc: dict, address: str | None = None, name: str | None = None) -> ContractIR:
    """Validate an IR document and resolve every identifier it uses.

    ``address``/``name`` override the values in the document (the snapshot
    is authoritative for where a contract lives).
    """
    try:
        error = jsonschema.exceptions.best_match(_ir_validator().iter_errors(doc))
        if error is not None:
            raise error
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise IRError(f"IR schema error at {where}: {exc.message}") from None

    addr = address or doc.get("address")
    if addr is None:
        raise IRError("IR document has no address and none was supplied")
    addr = to_address(addr)
    cname = name or doc.get("name") or addr

    state_vars: dict[str, StateVar] = {}
    slots: set[int] = set()
    for raw in doc["state_vars"]:
        var = StateVar(raw["name"], raw["slot"], raw.get("kind", "scalar"), raw.get("privileged", False))
        if var.name in state_vars:
            raise IRError(f"{cname}: duplicate state variable {var.name!r}")
        if var.slot in slots:
            raise IRError(f"{cname}: slot {var.slot} used twice")
        state_vars[var.name] = var
        slots.add(var.slot)

    functions: dict[str, FunctionDef] = {}
    for raw in doc["functions"]:
        fn = FunctionDef(
            name=raw["name"],
            params=tuple(Param(p["name"], p["type"]) for p in raw.get("params", [])),
            visibility=raw.get("visibility", "public"),
            payable=raw.get("payable", False),
            guards=tuple(_parse_guard(g) for g in raw.get("guards", [])),
            body=_BodyBuilder().block(raw.get("body", [])),
        )
        if fn.name in functions:
            raise IRError(f"{cname}: duplicate function {fn.name!r}")
        if fn.is_fallback and fn.params:
            raise IRError(f"{cname}: fallback takes no parameters")
        functions[fn.name] = fn

    by_selector = {}
    for fn in functions.values():
        if fn.is_public and not fn.is_fallback:
            if fn.selector in by_selector:
                raise IRError(f"{cname}: selector clash on {fn.signature}")
            by_selector[fn.selector] = fn

    contract = ContractIR(addr, cname, state_vars, functions, by_selector)
    for fn in functions.values():
        _check_bindings(contract, fn)
    _check_no_recursion(contract)
    return contract


def _assigned_locals(fn: FunctionDef) -> set[str]:
    names: set[str] = set()
    for stmt in fn.statements():
        if isinstance(stmt, Let):
            names.add(stmt.name)
        elif isinstance(stmt, ReadState):
            names.add(stmt.into)
        elif isinstance(stmt, (Call, InternalCall)):
            names.update(stmt.into)
    return names


def _stmt_exprs(stmt: Stmt) -> list[Expr]:
    if isinstance(stmt, Require):
        return [stmt.cond]
    if isinstance(stmt, Let):
        return [stmt.expr]
    if isinstance(stmt, ReadState):
        return [stmt.key] if stmt.key is not None else []
    if isinstance(stmt, WriteState):
        return [stmt.expr] + ([stmt.key] if stmt.key is not None else [])
    if isinstance(stmt, Call):
        return [stmt.target, *stmt.args] + ([stmt.value] if stmt.value is not None else [])
    if isinstance(stmt, NativeTransfer):
        return [stmt.target, stmt.amount]
    if isinstance(stmt, Return):
        return list(stmt.values)
    if isinstance(stmt, If):
        return [stmt.cond]
    if isinstance(stmt, InternalCall):
        return list(stmt.args)
    return []


def _check_var(contract: ContractIR, fn: FunctionDef, var: str, keyed: bool) -> None:
    sv = contract.state_vars.get(var)
    if sv is None:
        raise UnboundIdentifierError(f"{contract.name}.{fn.name}: undeclared state variable {var!r}")
    if sv.is_map != keyed:
        need = "a key" if sv.is_map else "no key"
        raise IRError(f"{contract.name}.{fn.name}: state variable {var!r} needs {need}")


def _check_bindings(contract: ContractIR, fn: FunctionDef) -> None:
    bound = {p.name for p in fn.params} | _assigned_locals(fn)
    exprs: list[Expr] = [g.allowed for g in fn.guards if isinstance(g, AccessControl)]
    for stmt in fn.statements():
        exprs.extend(_stmt_exprs(stmt))
        if isinstance(stmt, (ReadState, WriteState)):
            _check_var(contract, fn, stmt.var, stmt.key is not None)
        elif isinstance(stmt, InternalCall):
            callee = contract.functions.get(stmt.function)
            if callee is None:
                raise UnboundIdentifierError(
                    f"{contract.name}.{fn.name}: unknown internal function {stmt.function!r}"
                )
            if len(stmt.args) != len(callee.params):
                raise IRError(f"{contract.name}.{fn.name}: wrong arity calling {stmt.function}")
    for expr in exprs:
        for sub in walk(expr):
            if isinstance(sub, Var) and sub.name not in bound:
                raise UnboundIdentifierError(
                    f"{contract.name}.{fn.name}: unbound identifier {sub.name!r}"
                )
            if isinstance(sub, Load):
                _check_var(contract, fn, sub.var, sub.key is not None)


def _check_no_recursion(contract: ContractIR) -> None:
    graph = {
        name: {s.function for s in fn.statements() if isinstance(s, InternalCall)}
        for name, fn in contract.functions.items()
    }
    state: dict[str, int] = {}

    def visit(node: str) -> None:
        state[node] = 1
        for nxt in graph[node]:
            if state.get(nxt) == 1:
                raise IRError(f"{contract.name}: recursive internal call through {nxt!r}")
            if nxt not in state:
                visit(nxt)
        state[node] = 2

    for node in graph:
        if node not in state:
            visit(node)


__all__ = [
    "AccessControl", "Balance", "Call", "ContractIR", "Env", "Expr", "FunctionDef", "FunctionRef", "Guard",
    "If", "InternalCall", "Let", "Load", "NativeTransfer", "NonReentrant", "Op", "Param",
    "ReadState", "Require", "Return", "StateVar", "Stmt", "Var", "WriteState", "FALLBACK",
    "iter_statements", "parse_contract",
]

"""Static per-function facts: state reads/writes, guards, call-site provenance.

Facts are computed through intra-contract internal calls.  Each internal
call is analysed in the context of its call site, so a parameter of an
internal helper inherits the provenance of the argument passed to it.
Call sites are keyed by their *path*: the chain of ``(function, stmt_index)``
internal-call statements leading to the site, ending with the site itself.
The replay VM builds the same paths at runtime to look sites up.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

from ..errors import InternalFunctionError
from .expr import Balance, Env, Expr, Lit, Load, Op, Var, walk
from .model import (
    AccessControl,
    Call,
    ContractIR,
    FunctionDef,
    If,
    InternalCall,
    Let,
    NativeTransfer,
    ReadState,
    Require,
    Return,
    WriteState,
)

Tags = frozenset
SitePath = tuple[tuple[str, int], ...]

CONSTANT = "constant"
PARAMETER = "parameter-derived"
SENDER = "sender-derived"
STATE = "state-derived"
CONTROLLABLE = frozenset({PARAMETER, SENDER})


@dataclass(frozen=True)
class CallSite:
    path: SitePath
    function: str  # function whose body holds the statement
    stmt_index: int
    target_kind: str
    static: bool
    kind: str  # call | transfer
    signature: str | None = None

    @property
    def controllable(self) -> bool:
        return self.target_kind in CONTROLLABLE


@dataclass(frozen=True)
class FunctionMeta:
    function: str
    reads: frozenset[str]
    writes: frozenset[str]
    call_sites: tuple[CallSite, ...]
    guarded_vars: frozenset[str]
    access_checked: bool
    non_reentrant: bool
    payable: bool
    has_params: bool
    is_view: bool
    sites_by_path: dict[SitePath, CallSite] = field(default_factory=dict, compare=False, repr=False)

    @property
    def guarded_write(self) -> bool:
        """Every write is dominated by an access-control check."""
        return self.writes <= self.guarded_vars

    @property
    def hijack_sites(self) -> tuple[CallSite, ...]:
        return tuple(s for s in self.call_sites if s.controllable)


@dataclass(frozen=True)
class AbiSpec:
    name: str
    selector: str
    param_types: tuple[str, ...]
    payable: bool

    @property
    def signature(self) -> str:
        return f"{self.name}({','.join(self.param_types)})"


def _expr_tags(expr: Expr, env: dict[str, Tags]) -> Tags:
    """Provenance of ``expr``; loads and balances yield ``state`` only."""
    if isinstance(expr, Var):
        return env.get(expr.name, frozenset({"const"}))
    if isinstance(expr, Env):
        return frozenset({{"sender": "sender", "value": "param", "this": "const"}[expr.name]})
    if isinstance(expr, (Load, Balance)):
        return frozenset({"state"})
    if isinstance(expr, Op):
        out: frozenset[str] = frozenset()
        for a in expr.args:
            out |= _expr_tags(a, env)
        return out
    return frozenset({"const"})


def target_kind(tags: Tags) -> str:
    if "sender" in tags:
        return SENDER
    if "param" in tags:
        return PARAMETER
    if "state" in tags:
        return STATE
    return CONSTANT


def is_owner_check(expr: Expr, contract: ContractIR) -> bool:
    """``msg.sender == <constant | owner slot>``, possibly inside a conjunction."""
    if not isinstance(expr, Op):
        return False
    if expr.op == "and":
        return any(is_owner_check(a, contract) for a in expr.args)
    if expr.op != "==" or len(expr.args) != 2:
        return False
    a, b = expr.args
    if isinstance(b, Env) and b.name == "sender":
        a, b = b, a
    if not (isinstance(a, Env) and a.name == "sender"):
        return False
    if isinstance(b, Lit):
        return b.value != 0
    return isinstance(b, Load) and b.key is None and contract.is_owner_var(b.var)


class _Analyzer:
    def __init__(self, contract: ContractIR) -> None:
        self.contract = contract
        self._ret_cache: dict[tuple[str, tuple], Tags] = {}

    def local_env(self, fn: FunctionDef, param_tags: dict[str, Tags]) -> dict[str, Tags]:
        """Flow-insensitive provenance of every local, iterated to a fixpoint."""
        env = dict(param_tags)
        changed = True
        while changed:
            changed = False
            for stmt in fn.statements():
                updates: list[tuple[str, Tags]] = []
                if isinstance(stmt, Let):
                    updates.append((stmt.name, _expr_tags(stmt.expr, env)))
                elif isinstance(stmt, ReadState):
                    updates.append((stmt.into, frozenset({"state"})))
                elif isinstance(stmt, Call):
                    updates.extend((n, frozenset({"state"})) for n in stmt.into)
                elif isinstance(stmt, InternalCall):
                    callee = self.contract.functions[stmt.function]
                    rets = self.return_tags(callee, self._arg_tags(callee, stmt.args, env))
                    updates.extend((n, rets[i] if i < len(rets) else frozenset({"const"}))
                                   for i, n in enumerate(stmt.into))
                for name, tags in updates:
                    merged = env.get(name, frozenset()) | tags
                    if merged != env.get(name):
                        env[name] = merged
                        changed = True
        return env

    def _arg_tags(self, callee: FunctionDef, args, env) -> dict[str, Tags]:
        return {p.name: _expr_tags(a, env) for p, a in zip(callee.params, args)}

    def return_tags(self, fn: FunctionDef, param_tags: dict[str, Tags]) -> tuple[Tags, ...]:
        key = (fn.name, tuple(sorted((k, tuple(sorted(v))) for k, v in param_tags.items())))
        if key in self._ret_cache:
            return self._ret_cache[key]
        env = self.local_env(fn, param_tags)
        out: list[Tags] = []
        for stmt in fn.statements():
            if isinstance(stmt, Return):
                for i, v in enumerate(stmt.values):
                    t = _expr_tags(v, env)
                    if i < len(out):
                        out[i] |= t
                    else:
                        out.append(t)
        self._ret_cache[key] = tuple(out)
        return self._ret_cache[key]


class _Collector:
    def __init__(self) -> None:
        self.reads: set[str] = set()
        self.writes: set[str] = set()
        self.unguarded_writes: set[str] = set()
        self.sites: list[CallSite] = []
        self.access_checked = False
        self.nonstatic_calls = False


def _loads(expr: Expr):
    for sub in walk(expr):
        if isinstance(sub, Load):
            yield sub.var


def _collect(an: _Analyzer, fn: FunctionDef, param_tags, guarded: bool, prefix: SitePath,
             out: _Collector) -> None:
    contract = an.contract
    env = an.local_env(fn, param_tags)
    for g in fn.guards:
        if isinstance(g, AccessControl):
            guarded = True
            out.access_checked = True
            out.reads.update(_loads(g.allowed))

    def exprs_read(*exprs):
        for e in exprs:
            if e is not None:
                out.reads.update(_loads(e))

    def block(stmts, guarded: bool) -> None:
        for stmt in stmts:
            if isinstance(stmt, Require):
                exprs_read(stmt.cond)
                if is_owner_check(stmt.cond, contract):
                    guarded = True
                    out.access_checked = True
            elif isinstance(stmt, Let):
                exprs_read(stmt.expr)
            elif isinstance(stmt, ReadState):
                exprs_read(stmt.key)
                out.reads.add(stmt.var)
            elif isinstance(stmt, WriteState):
                exprs_read(stmt.key, stmt.expr)
                out.writes.add(stmt.var)
                if not guarded:
                    out.unguarded_writes.add(stmt.var)
            elif isinstance(stmt, Call):
                exprs_read(stmt.target, stmt.value, *stmt.args)
                if not stmt.static:
                    out.nonstatic_calls = True
                out.sites.append(CallSite(
                    prefix + ((fn.name, stmt.index),), fn.name, stmt.index,
                    target_kind(_expr_tags(stmt.target, env)), stmt.static, "call", stmt.signature,
                ))
            elif isinstance(stmt, NativeTransfer):
                exprs_read(stmt.target, stmt.amount)
                out.nonstatic_calls = True
                out.sites.append(CallSite(
                    prefix + ((fn.name, stmt.index),), fn.name, stmt.index,
                    target_kind(_expr_tags(stmt.target, env)), False, "transfer",
                ))
            elif isinstance(stmt, Return):
                exprs_read(*stmt.values)
            elif isinstance(stmt, If):
                exprs_read(stmt.cond)
                owner = is_owner_check(stmt.cond, contract)
                if owner:
                    out.access_checked = True
                block(stmt.then, guarded or owner)
                block(stmt.orelse, guarded)
            elif isinstance(stmt, InternalCall):
                exprs_read(*stmt.args)
                callee = contract.functions[stmt.function]
                _collect(an, callee, an._arg_tags(callee, stmt.args, env), guarded,
                         prefix + ((fn.name, stmt.index),), out)

    block(fn.body, guarded)


@lru_cache(maxsize=4096)
def _meta_cached(contract: ContractIR, name: str) -> FunctionMeta:
    fn = contract.function(name)
    an = _Analyzer(contract)
    out = _Collector()
    _collect(an, fn, {p.name: frozenset({"param"}) for p in fn.params}, False, (), out)
    writes = frozenset(out.writes)
    sites = tuple(out.sites)
    return FunctionMeta(
        function=name,
        reads=frozenset(out.reads),
        writes=writes,
        call_sites=sites,
        guarded_vars=writes - out.unguarded_writes,
        access_checked=out.access_checked,
        non_reentrant=fn.non_reentrant,
        payable=fn.payable,
        has_params=bool(fn.params),
        is_view=not writes and not out.nonstatic_calls,
        sites_by_path={s.path: s for s in sites},
    )


def function_meta(contract: ContractIR, fn: str) -> FunctionMeta:
    """Static facts for ``contract.fn`` (sound over-approximation of its runtime events)."""
    return _meta_cached(contract, fn)


def is_access_controlled(contract: ContractIR, fn: str) -> bool:
    """True when every state write of ``fn`` sits behind an owner/caller check."""
    return function_meta(contract, fn).guarded_write


def is_safe_callee(contract: ContractIR, fn: str) -> bool:
    """State-changing function whose changes are all access-controlled."""
    meta = function_meta(contract, fn)
    return not meta.is_view and meta.access_checked and meta.guarded_write


def abi_of(contract: ContractIR, fn: str) -> AbiSpec:
    f = contract.function(fn)
    if not f.is_public or f.is_fallback:
        raise InternalFunctionError(f"{contract.name}.{fn} is not externally callable")
    return AbiSpec(f.name, f.selector, tuple(p.type for p in f.params), f.payable)

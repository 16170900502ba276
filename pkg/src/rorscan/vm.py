"""Deterministic, gas-free executor for contract IR over a chain store.

State reads fall through a write overlay to the store and finally to zero.
A ``Revert`` anywhere unwinds to the enclosing transaction, which restores the
overlay, balances and reentrancy locks it started with.  Every storage access
and every outgoing call or transfer is logged as a :class:`ContextRecord`.

At call/transfer sites whose target an outside caller controls, execution
stops at a *hijack point* and an optional hook may run further transactions
against the in-flight state before execution resumes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

from .boundary import BoundaryResolver
from .calldata import decode_call, word_of
from .chain import ChainStore, TransactionRecord
from .errors import MalformedCalldataError, ReplayError, UnknownContractError, UnknownSelectorError
from .ir.expr import Balance, Env, Expr, Lit, Load, Op, Var
from .ir.meta import SitePath, function_meta
from .ir.model import (
    AccessControl,
    Call,
    ContractIR,
    FunctionDef,
    FunctionRef,
    If,
    InternalCall,
    Let,
    NativeTransfer,
    NonReentrant,
    ReadState,
    Require,
    Return,
    WriteState,
)
from .words import WORD_MOD, address_word, map_slot, to_address

READ, WRITE, INVOKE = "read", "write", "invoke"
PROCEED, ABORT = "proceed", "abort"
SUCCESS, REVERT = "success", "revert"

REENTRANT_CALL = "ReentrancyGuard: reentrant call"


@dataclass(frozen=True)
class ContextRecord:
    """One observed operation: which contract/DApp it touched and from which frame."""

    seq: int
    operation: str
    address: str  # storage owner for read/write, callee for invoke
    dapp: str | None
    frame: FunctionRef
    var: str | None = None
    slot: int | None = None
    key: int | None = None
    callee_function: str | None = None
    selector: str | None = None
    static: bool = False
    kind: str | None = None  # call | transfer
    site: SitePath = ()
    value: int | None = None  # word written, or funds moved by an invoke

    def to_json(self) -> dict:
        doc = {
            "seq": self.seq,
            "op": self.operation,
            "address": self.address,
            "dapp": self.dapp,
            "frame": {"address": self.frame.address, "function": self.frame.name},
        }
        if self.operation == INVOKE:
            doc.update(callee=self.callee_function, selector=self.selector, static=self.static,
                       kind=self.kind, site=[list(p) for p in self.site], value=str(self.value or 0))
        else:
            doc.update(var=self.var, slot=hex(self.slot), key=None if self.key is None else hex(self.key))
            if self.operation == WRITE:
                doc["value"] = hex(self.value or 0)
        return doc


@dataclass(frozen=True)
class HijackPoint:
    seq: int  # seq of the invoke record emitted at the site
    contract: str
    function: str  # external frame holding the site
    site: SitePath
    kind: str
    recipient: str

    @property
    def stmt_index(self) -> int:
        return self.site[-1][1]

    def to_json(self) -> dict:
        return {"seq": self.seq, "contract": self.contract, "function": self.function,
                "site": [list(p) for p in self.site], "kind": self.kind, "recipient": self.recipient}


@dataclass(frozen=True)
class ExecutionTrace:
    tx_hash: str
    records: tuple[ContextRecord, ...]
    outcome: str
    return_data: tuple[int, ...] = ()
    revert_reason: str | None = None
    state_overlay: dict[tuple[str, int], int] = field(default_factory=dict)
    balance_overlay: dict[str, int] = field(default_factory=dict)
    hijack_points: tuple[HijackPoint, ...] = ()

    @property
    def success(self) -> bool:
        return self.outcome == SUCCESS

    @property
    def last_seq(self) -> int:
        return self.records[-1].seq if self.records else -1

    def to_json(self) -> dict:
        return {
            "tx": self.tx_hash,
            "outcome": self.outcome,
            "revert_reason": self.revert_reason,
            "return": [hex(v) for v in self.return_data],
            "records": [r.to_json() for r in self.records],
            "state_overlay": [[a, hex(s), hex(v)] for (a, s), v in sorted(self.state_overlay.items())],
            "balance_overlay": {a: hex(v) for a, v in sorted(self.balance_overlay.items())},
            "hijack_points": [h.to_json() for h in self.hijack_points],
        }

    def canonical(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


class Revert(Exception):
    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


class _Returned(Exception):
    def __init__(self, values: tuple[int, ...]) -> None:
        self.values = values


Hook = Callable[["Machine", HijackPoint], str]


@dataclass
class _Frame:
    """One external call frame (internal calls share it)."""

    contract: ContractIR
    entry: FunctionDef  # the public function (or fallback) that was called
    sender: int
    value: int
    static: bool

    @property
    def ref(self) -> FunctionRef:
        return FunctionRef(self.contract.address, self.entry.name)


@dataclass
class _Run:
    """Per-transaction bookkeeping: its own record stream and hijack points."""

    hook: Optional[Hook]
    records: list[ContextRecord] = field(default_factory=list)
    hijacks: list[HijackPoint] = field(default_factory=list)
    written: dict[tuple[str, int], int] = field(default_factory=dict)
    touched: set[str] = field(default_factory=set)


def _truth(v: int) -> int:
    return 1 if v else 0


_ARITH = {
    "+": lambda a, b: (a + b) % WORD_MOD,
    "-": lambda a, b: (a - b) % WORD_MOD,
    "*": lambda a, b: (a * b) % WORD_MOD,
    "/": lambda a, b: a // b if b else 0,
    "%": lambda a, b: a % b if b else 0,
    "==": lambda a, b: _truth(a == b),
    "!=": lambda a, b: _truth(a != b),
    "<": lambda a, b: _truth(a < b),
    "<=": lambda a, b: _truth(a <= b),
    ">": lambda a, b: _truth(a > b),
    ">=": lambda a, b: _truth(a >= b),
}


class Machine:
    """World state shared by one top-level transaction and anything a hook injects."""

    def __init__(self, store: ChainStore, resolver: BoundaryResolver | None = None) -> None:
        self.store = store
        self.resolver = resolver
        self.storage: dict[tuple[str, int], int] = {}
        self.balances: dict[str, int] = {}
        self.locks: set[str] = set()
        self._seq = 0
        self._runs: list[_Run] = []
        self._depth = 0

    # -- state -----------------------------------------------------------
    def sload(self, address: str, slot: int) -> int:
        key = (address, slot)
        if key in self.storage:
            return self.storage[key]
        return self.store.fetch_storage(address, slot)

    def balance_of(self, address: str) -> int:
        if address in self.balances:
            return self.balances[address]
        return self.store.fetch_balance(address)

    def _move(self, src: str, dst: str, amount: int) -> None:
        if amount == 0:
            return
        have = self.balance_of(src)
        if have < amount:
            raise Revert("insufficient balance")
        self.balances[src] = have - amount
        self.balances[dst] = (self.balance_of(dst) + amount) % WORD_MOD
        self._run.touched.update((src, dst))

    def _dapp(self, address: str) -> str | None:
        return self.resolver.resolve(address).name if self.resolver else None

    @property
    def _run(self) -> _Run:
        return self._runs[-1]

    def _emit(self, **fields) -> ContextRecord:
        rec = ContextRecord(seq=self._seq, dapp=self._dapp(fields["address"]), **fields)
        self._seq += 1
        self._run.records.append(rec)
        return rec

    # -- transactions ------------------------------------------------------
    def execute(self, tx: TransactionRecord, hook: Optional[Hook] = None) -> ExecutionTrace:
        """Run ``tx`` to completion; state changes persist only when it succeeds."""
        if tx.to is None:
            raise ReplayError(f"{tx.hash}: contract creation is not replayed")
        record = self.store.contract(tx.to)
        if record is None:
            raise UnknownContractError(f"{tx.hash}: target {tx.to} is not a known contract")
        try:
            fn, args = decode_call(record.ir, tx.calldata)
        except (UnknownSelectorError, MalformedCalldataError) as exc:
            # on chain such a call simply reverts; history may well contain it
            return ExecutionTrace(tx.hash, (), REVERT, revert_reason=str(exc))
        words = tuple(word_of(p.type, a) for p, a in zip(fn.params, args))

        checkpoint = (dict(self.storage), dict(self.balances), set(self.locks))
        run = _Run(hook)
        self._runs.append(run)
        try:
            if tx.value and not fn.payable:
                raise Revert("non-payable function received value")
            self._move(tx.sender, record.address, tx.value)
            frame = _Frame(record.ir, fn, address_word(tx.sender), tx.value, False)
            ret = self._enter(frame, fn, words, ())
            return ExecutionTrace(
                tx.hash, tuple(run.records), SUCCESS, ret,
                state_overlay=dict(run.written),
                balance_overlay={a: self.balance_of(a) for a in sorted(run.touched)},
                hijack_points=tuple(run.hijacks),
            )
        except Revert as exc:
            self.storage, self.balances, self.locks = checkpoint
            return ExecutionTrace(tx.hash, tuple(run.records), REVERT, revert_reason=exc.reason,
                                  hijack_points=tuple(run.hijacks))
        finally:
            self._runs.pop()

    # -- function bodies -----------------------------------------------------
    def _enter(self, frame: _Frame, fn: FunctionDef, args: tuple[int, ...], prefix: SitePath) -> tuple[int, ...]:
        """Apply ``fn``'s guards, then run its body with ``args`` bound."""
        contract = frame.contract
        local = {p.name: a for p, a in zip(fn.params, args)}
        locked = False
        for g in fn.guards:
            if isinstance(g, NonReentrant):
                if contract.address in self.locks:
                    raise Revert(REENTRANT_CALL)
                self.locks.add(contract.address)
                locked = True
            elif isinstance(g, AccessControl):
                if frame.sender != self._eval(g.allowed, frame, local):
                    raise Revert("caller is not allowed")
        try:
            self._block(fn.body, frame, fn, local, prefix)
            values: tuple[int, ...] = ()
        except _Returned as r:
            values = r.values
        if locked:
            self.locks.discard(contract.address)
        return values

    def _block(self, stmts, frame: _Frame, fn: FunctionDef, local: dict, prefix: SitePath) -> None:
        for stmt in stmts:
            self._stmt(stmt, frame, fn, local, prefix)

    def _slot(self, contract: ContractIR, var: str, key_word: int | None) -> int:
        base = contract.state_vars[var].slot
        return base if key_word is None else map_slot(base, key_word)

    def _read(self, frame: _Frame, var: str, key: Expr | None, local: dict) -> int:
        key_word = None if key is None else self._eval(key, frame, local)
        address = frame.contract.address
        slot = self._slot(frame.contract, var, key_word)
        value = self.sload(address, slot)
        self._emit(operation=READ, address=address, frame=frame.ref, var=var, slot=slot, key=key_word)
        return value

    def _stmt(self, stmt, frame: _Frame, fn: FunctionDef, local: dict, prefix: SitePath) -> None:
        ev = lambda e: self._eval(e, frame, local)  # noqa: E731
        if isinstance(stmt, Require):
            if not ev(stmt.cond):
                raise Revert(stmt.reason or "requirement failed")
        elif isinstance(stmt, Let):
            local[stmt.name] = ev(stmt.expr)
        elif isinstance(stmt, ReadState):
            local[stmt.into] = self._read(frame, stmt.var, stmt.key, local)
        elif isinstance(stmt, WriteState):
            key_word = None if stmt.key is None else ev(stmt.key)
            value = ev(stmt.expr)
            if frame.static:
                raise Revert("state write in static context")
            address = frame.contract.address
            slot = self._slot(frame.contract, stmt.var, key_word)
            self.storage[(address, slot)] = value
            self._run.written[(address, slot)] = value
            self._emit(operation=WRITE, address=address, frame=frame.ref, var=stmt.var, slot=slot,
                       key=key_word, value=value)
        elif isinstance(stmt, If):
            self._block(stmt.then if ev(stmt.cond) else stmt.orelse, frame, fn, local, prefix)
        elif isinstance(stmt, Return):
            raise _Returned(tuple(ev(v) for v in stmt.values))
        elif isinstance(stmt, InternalCall):
            callee = frame.contract.functions[stmt.function]
            args = tuple(ev(a) for a in stmt.args)
            values = self._enter(frame, callee, args, prefix + ((fn.name, stmt.index),))
            for i, name in enumerate(stmt.into):
                local[name] = values[i] if i < len(values) else 0
        elif isinstance(stmt, Call):
            target = to_address(ev(stmt.target))
            args = tuple(ev(a) for a in stmt.args)
            value = ev(stmt.value) if stmt.value is not None else 0
            static = frame.static or stmt.static
            if static and value:
                raise Revert("value transfer in static context")
            values = self._call(frame, fn, stmt, prefix, target, args, value, static)
            for i, name in enumerate(stmt.into):
                local[name] = values[i] if i < len(values) else 0
        elif isinstance(stmt, NativeTransfer):
            target = to_address(ev(stmt.target))
            amount = ev(stmt.amount)
            if frame.static:
                raise Revert("value transfer in static context")
            self._transfer(frame, fn, stmt, prefix, target, amount)

    def _site(self, frame: _Frame, fn: FunctionDef, stmt, prefix: SitePath) -> SitePath:
        return prefix + ((fn.name, stmt.index),)

    def _hijack(self, frame: _Frame, path: SitePath, rec: ContextRecord, kind: str, recipient: str) -> None:
        site = function_meta(frame.contract, frame.entry.name).sites_by_path.get(path)
        if site is None or not site.controllable:
            return
        point = HijackPoint(rec.seq, frame.contract.address, frame.entry.name, path, kind, recipient)
        run = self._run
        run.hijacks.append(point)
        if run.hook is not None and run.hook(self, point) == ABORT:
            raise Revert("aborted at hijack point")

    def _call(self, frame, fn, stmt: Call, prefix, target, args, value, static) -> tuple[int, ...]:
        path = self._site(frame, fn, stmt, prefix)
        callee_rec = self.store.contract(target)
        callee_fn = callee_rec.ir.lookup_selector(stmt.selector) if callee_rec else None
        if callee_rec is not None and callee_fn is None:
            callee_fn = callee_rec.ir.fallback
        rec = self._emit(operation=INVOKE, address=target, frame=frame.ref,
                         callee_function=callee_fn.name if callee_fn else None, selector=stmt.selector,
                         static=static, kind="call", site=path, value=value)
        self._hijack(frame, path, rec, "call", target)
        self._move(frame.contract.address, target, value)
        if callee_rec is None:
            return ()  # plain account: nothing runs, nothing comes back
        if callee_fn is None:
            raise Revert(f"{callee_rec.name}: no function for selector {stmt.selector}")
        if value and not callee_fn.payable:
            raise Revert("non-payable function received value")
        inner = _Frame(callee_rec.ir, callee_fn, address_word(frame.contract.address), value, static)
        return self._nested(inner, callee_fn, args)

    def _transfer(self, frame, fn, stmt: NativeTransfer, prefix, target, amount) -> None:
        path = self._site(frame, fn, stmt, prefix)
        callee_rec = self.store.contract(target)
        fallback = callee_rec.ir.fallback if callee_rec else None
        self._move(frame.contract.address, target, amount)
        rec = self._emit(operation=INVOKE, address=target, frame=frame.ref,
                         callee_function=fallback.name if fallback else None, selector=None,
                         static=False, kind="transfer", site=path, value=amount)
        self._hijack(frame, path, rec, "transfer", target)
        if fallback is None and callee_rec is not None and callee_rec.ir.functions:
            raise Revert(f"{callee_rec.name}: cannot receive funds without a fallback")
        if fallback is not None:
            if amount and not fallback.payable:
                raise Revert("non-payable function received value")
            inner = _Frame(callee_rec.ir, fallback, address_word(frame.contract.address), amount, False)
            self._nested(inner, fallback, ())

    def _nested(self, frame: _Frame, fn: FunctionDef, args: tuple[int, ...]) -> tuple[int, ...]:
        self._depth += 1
        try:
            if self._depth > 256:
                raise Revert("call depth exceeded")
            return self._enter(frame, fn, args, ())
        finally:
            self._depth -= 1

    # -- expressions -------------------------------------------------------------
    def _eval(self, expr: Expr, frame: _Frame, local: dict) -> int:
        if isinstance(expr, Lit):
            return expr.value % WORD_MOD
        if isinstance(expr, Var):
            return local.get(expr.name, 0)
        if isinstance(expr, Env):
            if expr.name == "sender":
                return frame.sender
            if expr.name == "value":
                return frame.value
            return address_word(frame.contract.address)
        if isinstance(expr, Load):
            return self._read(frame, expr.var, expr.key, local)
        if isinstance(expr, Balance):
            return self.balance_of(to_address(self._eval(expr.target, frame, local)))
        if isinstance(expr, Op):
            if expr.op == "not":
                return _truth(not self._eval(expr.args[0], frame, local))
            if expr.op == "and":
                return _truth(all(self._eval(a, frame, local) for a in expr.args))
            if expr.op == "or":
                return _truth(any(self._eval(a, frame, local) for a in expr.args))
            fn = _ARITH[expr.op]
            acc = self._eval(expr.args[0], frame, local)
            for a in expr.args[1:]:
                acc = fn(acc, self._eval(a, frame, local))
            return acc
        raise ReplayError(f"cannot evaluate {expr!r}")


def replay(tx: TransactionRecord, store: ChainStore, resolver: BoundaryResolver | None = None) -> ExecutionTrace:
    """Execute ``tx`` on a fresh overlay over ``store``."""
    return Machine(store, resolver).execute(tx)


def replay_with_hijack(tx: TransactionRecord, store: ChainStore, resolver: BoundaryResolver | None,
                       hook: Hook) -> ExecutionTrace:
    """Like :func:`replay`, but ``hook`` runs at every controllable call/transfer site."""
    return Machine(store, resolver).execute(tx, hook)


def state_diff(trace: ExecutionTrace, after_seq: int) -> set[tuple[str, int]]:
    """Slots the trace wrote strictly after ``after_seq``."""
    if not trace.success:
        return set()
    return {(r.address, r.slot) for r in trace.records if r.operation == WRITE and r.seq > after_seq}


def reads_of(trace: ExecutionTrace) -> set[tuple[str, int]]:
    return {(r.address, r.slot) for r in trace.records if r.operation == READ}


__all__ = [
    "ABORT", "PROCEED", "ContextRecord", "ExecutionTrace", "HijackPoint", "Machine", "Revert",
    "reads_of", "replay", "replay_with_hijack", "state_diff",
]

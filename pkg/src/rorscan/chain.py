"""Chain data access: offline snapshots, a storage cache and the store interface.

Everything the detector needs from a chain goes through a :class:`ChainStore`.
:class:`SnapshotStore` serves an in-memory :class:`ChainSnapshot` loaded from a
JSON file; :class:`rorscan.rpc.RpcChainStore` serves the same operations from a
remote endpoint.  Both share the storage cache implemented here.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from functools import cache
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import jsonschema

from .calldata import encode_call
from .errors import (
    DanglingReferenceError,
    IRError,
    SnapshotError,
    UnknownContractError,
    UnknownTransactionError,
)
from .ir.model import ContractIR, parse_contract
from .words import address_word, is_address, map_slot, parse_word, to_address

EMPTY_IR = {"state_vars": [], "functions": []}


@dataclass(frozen=True)
class TransactionRecord:
    hash: str
    sender: str
    to: str | None  # None: contract creation
    value: int
    calldata: bytes
    block_number: int
    timestamp: int

    @property
    def is_create(self) -> bool:
        return self.to is None

    @property
    def selector(self) -> str | None:
        return "0x" + self.calldata[:4].hex() if len(self.calldata) >= 4 else None

    def to_json(self) -> dict:
        return {
            "hash": self.hash,
            "from": self.sender,
            "to": self.to,
            "value": str(self.value),
            "input": "0x" + self.calldata.hex(),
            "block": self.block_number,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TransactionRecord":
        raw = doc.get("input", "0x")
        return cls(
            hash=doc["hash"].lower(),
            sender=to_address(doc["from"]),
            to=to_address(doc["to"]) if doc.get("to") else None,
            value=parse_word(doc.get("value", 0)),
            calldata=bytes.fromhex(raw[2:]),
            block_number=doc["block"],
            timestamp=doc["timestamp"],
        )


@dataclass(frozen=True)
class InternalTx:
    kind: str  # call | create
    sender: str
    to: str
    value: int = 0

    def to_json(self) -> dict:
        return {"kind": self.kind, "from": self.sender, "to": self.to, "value": str(self.value)}


@dataclass(frozen=True)
class InternalTransactionList:
    parent_hash: str
    entries: tuple[InternalTx, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)

    def creator_of(self, address: str) -> str | None:
        """The contract that created ``address`` inside this transaction, if any."""
        for entry in self.entries:
            if entry.kind == "create" and entry.to == address:
                return entry.sender
        return None


@dataclass(frozen=True)
class Creation:
    deploy_tx: str
    creator: str


@dataclass(frozen=True)
class ContractRecord:
    address: str
    name: str
    ir: ContractIR
    creation: Creation
    ir_doc: Mapping = field(default_factory=dict, compare=False, repr=False)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "ir": dict(self.ir_doc),
            "creation": {"deploy_tx": self.creation.deploy_tx, "creator": self.creation.creator},
        }


@dataclass(frozen=True)
class BuilderEntry:
    builder: str
    dapp: str


@dataclass(frozen=True)
class ChainSnapshot:
    contracts: Mapping[str, ContractRecord]
    transactions: Mapping[str, TransactionRecord]
    internal_txs: Mapping[str, InternalTransactionList]
    storage: Mapping[tuple[str, int], int]
    balances: Mapping[str, int]
    builders: tuple[BuilderEntry, ...] = ()
    source: Path | None = field(default=None, compare=False)


@cache
def snapshot_schema() -> dict:
    return json.loads(resources.files("rorscan.schemas").joinpath("snapshot.schema.json").read_text())


@cache
def _validator(part: str | None = None):
    schema = snapshot_schema()
    if part is not None:
        # keep the root's $defs so internal references still resolve
        schema = {"$schema": schema.get("$schema"), "$defs": schema["$defs"], "$ref": f"#/$defs/{part}"}
    cls = jsonschema.validators.validator_for(schema)
    return cls(schema)


def _validate(doc, part: str | None = None) -> None:
    """Raise the most relevant schema violation, as ``jsonschema.validate`` would."""
    error = jsonschema.exceptions.best_match(_validator(part).iter_errors(doc))
    if error is not None:
        raise error


def _schema_fail(exc: jsonschema.ValidationError, origin: str) -> SnapshotError:
    where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
    return SnapshotError(f"{origin}: schema error at {where}: {exc.message}")


def load_snapshot(path: str | Path) -> ChainSnapshot:
    """Parse, validate and cross-link a snapshot file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return snapshot_from_doc(doc, base_dir=path.parent, origin=str(path))


def load_builders(path: str | Path) -> tuple[BuilderEntry, ...]:
    """Standalone builder dataset: a JSON list or an object with a ``builders`` key."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise SnapshotError(f"cannot read builders file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    items = doc.get("builders") if isinstance(doc, dict) else doc
    try:
        _validate(items, "builders")
    except jsonschema.ValidationError as exc:
        raise _schema_fail(exc, str(path)) from None
    return _builders(items, str(path))


def _builders(items, origin: str) -> tuple[BuilderEntry, ...]:
    seen: dict[str, BuilderEntry] = {}
    for raw in items or []:
        entry = BuilderEntry(to_address(raw["builder"]), raw["dapp"])
        if entry.builder in seen and seen[entry.builder].dapp != entry.dapp:
            raise SnapshotError(f"{origin}: builder {entry.builder} listed for two DApps")
        seen[entry.builder] = entry
    return tuple(seen.values())


def _load_ir(raw, base_dir: Path | None, origin: str, address: str):
    if raw is None:
        return EMPTY_IR
    if isinstance(raw, dict):
        return raw
    ir_path = (base_dir or Path.cwd()) / raw
    try:
        return json.loads(ir_path.read_text(encoding="utf-8"))
    except OSError:
        raise DanglingReferenceError(f"{origin}: contract {address} refers to missing IR file {raw}") from None
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"{ir_path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _resolve_slot(entry: dict, contracts: Mapping[str, ContractRecord], origin: str) -> int:
    if "slot" in entry:
        return parse_word(entry["slot"])
    address = to_address(entry["address"])
    record = contracts.get(address)
    if record is None:
        raise DanglingReferenceError(f"{origin}: storage entry names unknown contract {address}")
    var = record.ir.state_vars.get(entry["var"])
    if var is None:
        raise DanglingReferenceError(f"{origin}: {record.name} has no state variable {entry['var']!r}")
    if var.is_map:
        if "key" not in entry:
            raise SnapshotError(f"{origin}: storage entry for map {record.name}.{var.name} needs a key")
        key = entry["key"]
        key_word = address_word(key) if is_address(key) else parse_word(key)
        return map_slot(var.slot, key_word)
    return var.slot


def _storage_value(raw) -> int:
    return address_word(raw) if is_address(raw) else parse_word(raw)


def snapshot_from_doc(doc: dict, base_dir: Path | None = None, origin: str = "<snapshot>") -> ChainSnapshot:
    try:
        _validate(doc)
    except jsonschema.ValidationError as exc:
        raise _schema_fail(exc, origin) from None

    contracts: dict[str, ContractRecord] = {}
    for raw_addr, raw in doc["contracts"].items():
        address = to_address(raw_addr)
        name = raw.get("name") or address
        ir_doc = _load_ir(raw.get("ir"), base_dir, origin, address)
        try:
            ir = parse_contract(ir_doc, address, name)
        except IRError as exc:
            raise SnapshotError(f"{origin}: contract {name}: {exc}") from None
        creation = Creation(raw["creation"]["deploy_tx"].lower(), to_address(raw["creation"]["creator"]))
        contracts[address] = ContractRecord(address, name, ir, creation, ir_doc)

    transactions: dict[str, TransactionRecord] = {}
    for raw in doc["transactions"]:
        tx_doc = dict(raw)
        if "call" in tx_doc:
            target = contracts.get(to_address(tx_doc["to"])) if tx_doc.get("to") else None
            if target is None:
                raise DanglingReferenceError(
                    f"{origin}: tx {raw['hash']} uses 'call' but its target is not a known contract"
                )
            fn_name = tx_doc["call"]["function"]
            fn = target.ir.functions.get(fn_name)
            if fn is None:
                raise DanglingReferenceError(f"{origin}: tx {raw['hash']}: {target.name} has no function {fn_name!r}")
            tx_doc["input"] = "0x" + encode_call(fn, tx_doc["call"].get("args", [])).hex()
        tx = TransactionRecord.from_json(tx_doc)
        if tx.hash in transactions:
            raise SnapshotError(f"{origin}: duplicate transaction hash {tx.hash}")
        transactions[tx.hash] = tx

    for record in contracts.values():
        if record.creation.deploy_tx not in transactions:
            raise DanglingReferenceError(
                f"{origin}: contract {record.name} has unknown deploy_tx {record.creation.deploy_tx}"
            )

    internal: dict[str, InternalTransactionList] = {}
    for parent, entries in (doc.get("internal_txs") or {}).items():
        parent = parent.lower()
        if parent not in transactions:
            raise DanglingReferenceError(f"{origin}: internal_txs refers to unknown transaction {parent}")
        internal[parent] = InternalTransactionList(parent, tuple(
            InternalTx(e["kind"], to_address(e["from"]), to_address(e["to"]), parse_word(e.get("value", 0)))
            for e in entries
        ))

    storage: dict[tuple[str, int], int] = {}
    for entry in doc.get("storage") or []:
        storage[(to_address(entry["address"]), _resolve_slot(entry, contracts, origin))] = _storage_value(entry["value"])

    balances = {to_address(a): parse_word(v) for a, v in (doc.get("balances") or {}).items()}

    return ChainSnapshot(
        contracts=MappingProxyType(contracts),
        transactions=MappingProxyType(transactions),
        internal_txs=MappingProxyType(internal),
        storage=MappingProxyType(storage),
        balances=MappingProxyType(balances),
        builders=_builders(doc.get("builders"), origin),
        source=Path(origin) if base_dir is not None else None,
    )


class ChainStore:
    """Operations the detector needs from a chain, with a storage cache.

    Subclasses implement the ``_read_*`` backing methods; ``fetch_storage``
    serves repeated keys from the cache without touching the backing store.
    """

    def __init__(self) -> None:
        self._storage_cache: dict[tuple[str, int], int] = {}
        self._lock = threading.Lock()
        self.backing_reads = 0

    # backing store -----------------------------------------------------
    def _read_storage(self, address: str, slot: int) -> int:
        raise NotImplementedError

    def contract(self, address: str) -> ContractRecord | None:
        raise NotImplementedError

    def contract_addresses(self) -> list[str]:
        raise NotImplementedError

    def fetch_deployment_tx(self, address: str) -> TransactionRecord:
        raise NotImplementedError

    def fetch_internal_tx_list(self, tx_hash: str) -> InternalTransactionList:
        raise NotImplementedError

    def fetch_transactions_of(self, address: str, limit: int) -> list[TransactionRecord]:
        raise NotImplementedError

    def fetch_balance(self, address: str) -> int:
        raise NotImplementedError

    @property
    def builders(self) -> tuple[BuilderEntry, ...]:
        raise NotImplementedError

    # shared --------------------------------------------------------------
    def fetch_storage(self, address: str, slot: int) -> int:
        key = (to_address(address), slot)
        with self._lock:
            if key in self._storage_cache:
                return self._storage_cache[key]
        value = self._read_storage(*key)
        with self._lock:
            self.backing_reads += 1
            return self._storage_cache.setdefault(key, value)

    def is_contract(self, address: str) -> bool:
        return self.contract(address) is not None

    def require_contract(self, address: str) -> ContractRecord:
        record = self.contract(address)
        if record is None:
            raise UnknownContractError(f"no contract at {address}")
        return record

    def contract_name(self, address: str) -> str:
        record = self.contract(address)
        return record.name if record else address


class SnapshotStore(ChainStore):
    def __init__(self, snapshot: ChainSnapshot) -> None:
        super().__init__()
        self.snapshot = snapshot
        by_target: dict[str, list[TransactionRecord]] = {}
        for tx in snapshot.transactions.values():
            if tx.to is not None:
                by_target.setdefault(tx.to, []).append(tx)
        # newest first; file order breaks ties between equal (block, timestamp)
        self._history = {
            addr: [tx for _, tx in sorted(enumerate(txs), key=lambda p: (-p[1].block_number, -p[1].timestamp, -p[0]))]
            for addr, txs in by_target.items()
        }

    @classmethod
    def from_file(cls, path: str | Path) -> "SnapshotStore":
        return cls(load_snapshot(path))

    def _read_storage(self, address: str, slot: int) -> int:
        return self.snapshot.storage.get((address, slot), 0)

    def contract(self, address: str) -> ContractRecord | None:
        return self.snapshot.contracts.get(to_address(address))

    def contract_addresses(self) -> list[str]:
        return sorted(self.snapshot.contracts)

    def fetch_deployment_tx(self, address: str) -> TransactionRecord:
        record = self.require_contract(address)
        return self.snapshot.transactions[record.creation.deploy_tx]

    def fetch_internal_tx_list(self, tx_hash: str) -> InternalTransactionList:
        tx_hash = tx_hash.lower()
        if tx_hash not in self.snapshot.transactions:
            raise UnknownTransactionError(f"unknown transaction {tx_hash}")
        return self.snapshot.internal_txs.get(tx_hash, InternalTransactionList(tx_hash))

    def fetch_transactions_of(self, address: str, limit: int) -> list[TransactionRecord]:
        if limit < 1:
            raise ValueError("limit must be at least 1")
        return list(self._history.get(to_address(address), [])[:limit])

    def fetch_balance(self, address: str) -> int:
        return self.snapshot.balances.get(to_address(address), 0)

    @property
    def builders(self) -> tuple[BuilderEntry, ...]:
        return self.snapshot.builders

    def transaction(self, tx_hash: str) -> TransactionRecord:
        try:
            return self.snapshot.transactions[tx_hash.lower()]
        except KeyError:
            raise UnknownTransactionError(f"unknown transaction {tx_hash}") from None

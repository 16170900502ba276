"""JSON-RPC access to chain data: a client store and a small snapshot server.

The wire methods mirror the store operations one to one::

    ror_getDeploymentTx(address)         -> transaction
    ror_getInternalTxList(hash)          -> [internal tx]
    ror_getTransactionsOf(address, n)    -> [transaction], newest first
    ror_getStorageAt(address, slot)      -> 0x word
    ror_getBalance(address)              -> 0x word
    ror_getContract(address)             -> contract entry or null
    ror_listContracts()                  -> [address]
    ror_getBuilders()                    -> [{builder, dapp}]
"""

from __future__ import annotations

import json
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from itertools import count

from .chain import (
    BuilderEntry,
    ChainStore,
    ContractRecord,
    Creation,
    InternalTransactionList,
    InternalTx,
    SnapshotStore,
    TransactionRecord,
)
from .errors import IRError, RorScanError, RpcError, UnknownContractError, UnknownTransactionError
from .ir.model import parse_contract
from .words import parse_word, to_address, word_hex

# Application error codes carried in the JSON-RPC error object.
UNKNOWN_CONTRACT = -32001
UNKNOWN_TX = -32002


class RpcChainStore(ChainStore):
    """Chain store backed by a remote endpoint; every answer is cached locally."""

    def __init__(self, url: str, timeout: float = 10.0) -> None:
        super().__init__()
        self.url = url
        self.timeout = timeout
        self._ids = count(1)
        self._contracts: dict[str, ContractRecord | None] = {}
        self._builders: tuple[BuilderEntry, ...] | None = None
        self._memo: dict[tuple, object] = {}
        self._memo_lock = threading.Lock()

    def call(self, method: str, *params):
        body = json.dumps({"jsonrpc": "2.0", "id": next(self._ids), "method": method, "params": list(params)})
        req = urllib.request.Request(self.url, body.encode(), {"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                reply = json.loads(resp.read())
        except (urllib.error.URLError, OSError) as exc:
            raise RpcError(f"{method}: cannot reach {self.url}: {exc}") from None
        except json.JSONDecodeError:
            raise RpcError(f"{method}: endpoint returned invalid JSON") from None
        if "error" in reply:
            err = reply["error"]
            if err.get("code") == UNKNOWN_CONTRACT:
                raise UnknownContractError(err.get("message", ""))
            if err.get("code") == UNKNOWN_TX:
                raise UnknownTransactionError(err.get("message", ""))
            raise RpcError(f"{method}: {err.get('message', err)}")
        return reply.get("result")

    def _memoized(self, key: tuple, fetch):
        with self._memo_lock:
            if key in self._memo:
                return self._memo[key]
        value = fetch()
        with self._memo_lock:
            return self._memo.setdefault(key, value)

    def _read_storage(self, address: str, slot: int) -> int:
        return parse_word(self.call("ror_getStorageAt", address, word_hex(slot)))

    def contract(self, address: str) -> ContractRecord | None:
        address = to_address(address)
        if address not in self._contracts:
            raw = self.call("ror_getContract", address)
            record = None
            if raw is not None:
                try:
                    ir = parse_contract(raw["ir"], address, raw["name"])
                except IRError as exc:
                    raise RpcError(f"contract {address}: {exc}") from None
                c = raw["creation"]
                record = ContractRecord(address, raw["name"], ir, Creation(c["deploy_tx"], c["creator"]), raw["ir"])
            self._contracts[address] = record
        return self._contracts[address]

    def contract_addresses(self) -> list[str]:
        return self._memoized(("list",), lambda: sorted(self.call("ror_listContracts")))

    def fetch_deployment_tx(self, address: str) -> TransactionRecord:
        address = to_address(address)
        return self._memoized(("deploy", address),
                              lambda: TransactionRecord.from_json(self.call("ror_getDeploymentTx", address)))

    def fetch_internal_tx_list(self, tx_hash: str) -> InternalTransactionList:
        tx_hash = tx_hash.lower()

        def fetch():
            entries = self.call("ror_getInternalTxList", tx_hash)
            return InternalTransactionList(tx_hash, tuple(
                InternalTx(e["kind"], e["from"], e["to"], parse_word(e.get("value", 0))) for e in entries
            ))

        return self._memoized(("internal", tx_hash), fetch)

    def fetch_transactions_of(self, address: str, limit: int) -> list[TransactionRecord]:
        if limit < 1:
            raise ValueError("limit must be at least 1")
        address = to_address(address)
        txs = self._memoized(("history", address, limit), lambda: tuple(
            TransactionRecord.from_json(t) for t in self.call("ror_getTransactionsOf", address, limit)
        ))
        return list(txs)

    def fetch_balance(self, address: str) -> int:
        address = to_address(address)
        return self._memoized(("balance", address), lambda: parse_word(self.call("ror_getBalance", address)))

    @property
    def builders(self) -> tuple[BuilderEntry, ...]:
        if self._builders is None:
            self._builders = tuple(BuilderEntry(to_address(b["builder"]), b["dapp"])
                                   for b in self.call("ror_getBuilders"))
        return self._builders


def _dispatch(store: SnapshotStore, method: str, params: list):
    if method == "ror_getDeploymentTx":
        return store.fetch_deployment_tx(params[0]).to_json()
    if method == "ror_getInternalTxList":
        return [e.to_json() for e in store.fetch_internal_tx_list(params[0]).entries]
    if method == "ror_getTransactionsOf":
        return [t.to_json() for t in store.fetch_transactions_of(params[0], int(params[1]))]
    if method == "ror_getStorageAt":
        return word_hex(store.fetch_storage(params[0], parse_word(params[1])))
    if method == "ror_getBalance":
        return word_hex(store.fetch_balance(params[0]))
    if method == "ror_getContract":
        record = store.contract(params[0])
        return record.to_json() if record else None
    if method == "ror_listContracts":
        return store.contract_addresses()
    if method == "ror_getBuilders":
        return [{"builder": b.builder, "dapp": b.dapp} for b in store.builders]
    raise KeyError(method)


def make_handler(store: SnapshotStore):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # keep test output quiet
            pass

        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            try:
                req = json.loads(self.rfile.read(length))
            except json.JSONDecodeError:
                return self._reply({"jsonrpc": "2.0", "id": None,
                                    "error": {"code": -32700, "message": "parse error"}})
            reply = {"jsonrpc": "2.0", "id": req.get("id")}
            try:
                reply["result"] = _dispatch(store, req.get("method", ""), req.get("params", []))
            except KeyError:
                reply["error"] = {"code": -32601, "message": f"unknown method {req.get('method')}"}
            except UnknownContractError as exc:
                reply["error"] = {"code": UNKNOWN_CONTRACT, "message": str(exc)}
            except UnknownTransactionError as exc:
                reply["error"] = {"code": UNKNOWN_TX, "message": str(exc)}
            except (RorScanError, ValueError, IndexError) as exc:
                reply["error"] = {"code": -32602, "message": str(exc)}
            self._reply(reply)

        def _reply(self, doc):
            data = json.dumps(doc).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

    return Handler


def serve_snapshot(store: SnapshotStore, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Start serving ``store`` on a background thread; returns the (running) server."""
    server = ThreadingHTTPServer((host, port), make_handler(store))
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server

"""Test-side generators and brute-force oracles that avoid the package's own logic."""

from __future__ import annotations

import json
import random
from collections import Counter
from pathlib import Path

from rorscan.chain import SnapshotStore
from rorscan.words import tx_hash_of

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

# fixture file -> victim contract name
SCENARIOS = {
    "fig2": "Pool",
    "fig8": "Periphery",
    "fig4": "Factory",
    "neg_same_dapp": "Pool",
    "neg_owner_guard": "Pool",
    "neg_locked_read": "Pool",
    "neg_guarded_callee": "KeeperPool",
    "neg_settled_first": "Pool",
}
NEGATIVES = ["neg_same_dapp", "neg_owner_guard", "neg_locked_read", "neg_guarded_callee", "neg_settled_first"]

POOL = "0x1000000000000000000000000000000000000001"
ORACLE = "0x1000000000000000000000000000000000000002"
VAULT = "0x2000000000000000000000000000000000000001"
PERIPHERY = "0x3000000000000000000000000000000000000001"
JOIN_VAULT = "0x4000000000000000000000000000000000000001"
FACTORY = "0x7000000000000000000000000000000000000001"
CREATED = "0x7000000000000000000000000000000000000002"
EOA1 = "0xe0a0000000000000000000000000000000000001"


def fixture_path(name: str) -> str:
    return str(FIXTURES / f"{name}.json")


def load_store(name: str) -> SnapshotStore:
    return SnapshotStore.from_file(fixture_path(name))


def _addr(prefix: int, n: int) -> str:
    return "0x" + f"{prefix:02x}" + f"{n:038x}"


def factory_chain_doc(depth: int, rng: random.Random) -> tuple[dict, str, str]:
    """Snapshot where contract k+1 is created by contract k; contract 0 is deployed by ``root``.

    Every transaction into a factory is sent by an unrelated EOA, so the recorded
    creator of each deeper contract is never the root. Returns (doc, root, deepest contract).
    """
    root = _addr(0xEE, rng.randrange(1, 1 << 32))
    contracts, txs, internal = {}, [], {}
    prev = None
    for k in range(depth + 1):
        address = _addr(0xCC, 1000 * depth + k + 1)
        if prev is None:
            sender, to, payload = root, None, []
        else:
            sender, to = _addr(0xDD, rng.randrange(1, 1 << 32)), prev
            # a few unrelated internal transfers around the create
            payload = [{"kind": "call", "from": prev, "to": _addr(0xAB, j), "value": "0x1"}
                       for j in range(rng.randrange(3))]
            payload.append({"kind": "create", "from": prev, "to": address})
        h = tx_hash_of("chain", depth, k, address)
        txs.append({"hash": h, "from": sender, "to": to, "input": "0x", "block": k + 1,
                    "timestamp": 1_700_000_000 + k})
        if payload:
            internal[h] = payload
        contracts[address] = {"name": f"C{k}", "ir": None, "creation": {"deploy_tx": h, "creator": sender}}
        prev = address
    doc = {"contracts": contracts, "transactions": txs, "internal_txs": internal,
           "builders": [{"builder": root, "dapp": "rootDApp"}]}
    return doc, root, prev


def manual_builder_walk(doc: dict, address: str) -> str:
    """Follow creation records in the raw document until a top-level deployment is found."""
    by_hash = {t["hash"]: t for t in doc["transactions"]}
    current = address.lower()
    for _ in range(100):
        deploy = by_hash[doc["contracts"][current]["creation"]["deploy_tx"]]
        if deploy["to"] is None:
            return deploy["from"].lower()
        creates = [e for e in doc.get("internal_txs", {}).get(deploy["hash"], [])
                   if e["kind"] == "create" and e["to"].lower() == current]
        current = creates[0]["from"].lower()
        if current not in doc["contracts"]:
            return current
    raise AssertionError("creation records loop")


def brute_force_usage(trace_log_text: str) -> dict[tuple[str, str], Counter]:
    """Count invoke/read/write events per (address, function) from a dumped trace log.

    Only lines of successful transactions count; an invoke is credited to the
    callee, a read or write to the frame it happened in.
    """
    counts: dict[tuple[str, str], Counter] = {}
    for line in trace_log_text.splitlines():
        ev = json.loads(line)
        if ev["outcome"] != "success":
            continue
        if ev["op"] == "invoke":
            if ev["callee"] is None:
                continue
            key = (ev["address"], ev["callee"])
        else:
            key = (ev["frame"]["address"], ev["frame"]["function"])
        counts.setdefault(key, Counter())[ev["op"]] += 1
    return counts


def random_arg(ptype: str, rng: random.Random, addresses: list[str]):
    if ptype == "uint256":
        return rng.choice([0, 1, rng.randrange(1, 1000), rng.randrange(1 << 256)])
    if ptype == "address":
        return rng.choice(addresses)
    if ptype == "bool":
        return rng.random() < 0.5
    return rng.randbytes(rng.choice([0, 4, 32]))


def random_transaction(store: SnapshotStore, rng: random.Random, label: str = "rand"):
    """A call to a random public function of a random fixture contract with random inputs."""
    from rorscan.calldata import encode_call
    from rorscan.chain import TransactionRecord

    targets = [a for a in store.contract_addresses() if store.contract(a).ir.functions]
    to = rng.choice(targets)
    fn = rng.choice(store.contract(to).ir.public_functions())
    known = sorted({t.sender for t in store.snapshot.transactions.values()})
    addresses = known + store.contract_addresses() + ["0x" + "00" * 20]
    args = [random_arg(p.type, rng, addresses) for p in fn.params]
    value = rng.choice([0, 0, 1, 500, 1000, 2000]) if fn.payable else 0
    sender = rng.choice(known)
    return TransactionRecord(tx_hash_of(label, rng.random()), sender, to, value, encode_call(fn, args),
                             200, 1_700_002_000)

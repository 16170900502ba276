"""Confirm candidate entries by injecting the victim transaction at hijack points.

For every candidate entry function, seed transactions come from its own
history (or are synthesised from its ABI using the victim transaction's
caller and block), then funds and arguments are mutated.  Each case runs on a
fresh machine; whenever control reaches a controllable call/transfer site the
victim transaction is executed against the half-finished state.  A finding is
reported when the entry transaction later writes a foreign slot the victim
transaction read.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .analysis import CandidateEntry, ContextDataset
from .boundary import BoundaryResolver
from .calldata import decode_call, encode_call
from .chain import ChainStore, TransactionRecord
from .errors import ReplayError
from .ir.model import FunctionDef, FunctionRef
from .vm import PROCEED, ExecutionTrace, HijackPoint, Machine, reads_of, state_diff
from .words import ATTACKER_ADDRESS, WORD_MAX, WORD_MOD, ZERO_ADDRESS, to_address, tx_hash_of

MAX_MUTANTS_PER_SEED = 32
INPUT_DRAWS = 4
# position of the rng-drawn value in each parameter type's mutation pool
_RANDOM_DRAW = {"uint256": 3, "address": 3, "bytes": 1}


@dataclass(frozen=True)
class FuzzCase:
    tx: TransactionRecord
    origin: str  # historical | synthesized
    seed_hash: str
    mutations: tuple[str, ...] = ()
    rng_draws: int = 0

    def to_json(self) -> dict:
        return {
            "tx": self.tx.to_json(),
            "origin": self.origin,
            "seed": self.seed_hash,
            "mutations": list(self.mutations),
            "rng_draws": self.rng_draws,
        }


@dataclass(frozen=True)
class FuzzConfig:
    txs_per_entry: int = 300
    history_window: int = 1000
    fund_fuzz: bool = True
    input_fuzz: bool = True


def _default_arg(ptype: str, tx_o: TransactionRecord):
    return {"uint256": 0, "address": tx_o.sender, "bool": False, "bytes": b""}[ptype]


def _synthesize(fn: FunctionDef, entry: FunctionRef, tx_o: TransactionRecord) -> TransactionRecord:
    data = encode_call(fn, [_default_arg(p.type, tx_o) for p in fn.params])
    return TransactionRecord(tx_hash_of("synth", entry, tx_o.hash), tx_o.sender, entry.address, 0, data,
                             tx_o.block_number, tx_o.timestamp)


def _fund_mutants(seed: TransactionRecord, rng: random.Random) -> list[tuple[int, str]]:
    v = seed.value
    values = [(0, "value=0"), (v // 2, "value=v/2"), ((2 * v) % WORD_MOD, "value=2v"),
              ((10 * v) % WORD_MOD, "value=10v"), (rng.randrange(WORD_MOD), "value=random")]
    out, seen = [], {v}
    for amount, label in values:
        if amount not in seen:
            seen.add(amount)
            out.append((amount, label))
    return out


def _param_pool(ptype: str, original, tx_o: TransactionRecord, rng: random.Random, contracts: list[str]) -> list:
    if ptype == "uint256":
        return [0, 1, WORD_MAX, rng.randrange(WORD_MOD)]
    if ptype == "address":
        return [tx_o.sender, ZERO_ADDRESS, ATTACKER_ADDRESS, rng.choice(contracts) if contracts else ZERO_ADDRESS]
    if ptype == "bool":
        return [not original]
    return [b"", rng.randbytes(32)]


def _same_arg(ptype: str, a, b) -> bool:
    if ptype == "address":
        return to_address(a) == to_address(b)
    if ptype == "bytes":
        return bytes(a) == bytes(b)
    return a == b


def build_candidate_list(fn: FunctionDef, entry: FunctionRef, tx_o: TransactionRecord, store: ChainStore,
                         config: FuzzConfig, rng: random.Random) -> list[FuzzCase]:
    """Seeds first (history or one synthesised call), then their fund and input mutants."""
    history = [t for t in store.fetch_transactions_of(entry.address, config.history_window)
               if t.selector == fn.selector][: config.txs_per_entry]
    if history:
        seeds = [FuzzCase(t, "historical", t.hash) for t in history]
    else:
        tx = _synthesize(fn, entry, tx_o)
        seeds = [FuzzCase(tx, "synthesized", tx.hash)]
    contracts = store.contract_addresses()
    ir = store.contract(entry.address).ir
    cases = list(seeds)
    for seed in seeds:
        mutants: list[FuzzCase] = []
        if config.fund_fuzz and fn.payable:
            for amount, label in _fund_mutants(seed.tx, rng):
                tx = TransactionRecord(tx_hash_of(seed.tx.hash, label, amount), seed.tx.sender, seed.tx.to,
                                       amount, seed.tx.calldata, seed.tx.block_number, seed.tx.timestamp)
                mutants.append(FuzzCase(tx, seed.origin, seed.seed_hash, (f"{label}:{amount}",),
                                        int(label == "value=random")))
        if config.input_fuzz and fn.params:
            _, args = decode_call(ir, seed.tx.calldata)
            for i, p in enumerate(fn.params):
                for draw, new in enumerate(_param_pool(p.type, args[i], tx_o, rng, contracts)[:INPUT_DRAWS]):
                    if _same_arg(p.type, new, args[i]):
                        continue
                    new_args = list(args)
                    new_args[i] = new
                    data = encode_call(fn, new_args)
                    shown = new.hex() if isinstance(new, bytes) else new
                    label = f"arg{i}={shown}"
                    tx = TransactionRecord(tx_hash_of(seed.tx.hash, label), seed.tx.sender, seed.tx.to,
                                           seed.tx.value, data, seed.tx.block_number, seed.tx.timestamp)
                    drawn = int(_RANDOM_DRAW.get(p.type) == draw)
                    mutants.append(FuzzCase(tx, seed.origin, seed.seed_hash, (label,), drawn))
        cases.extend(mutants[:MAX_MUTANTS_PER_SEED])
    return cases


@dataclass(frozen=True)
class SlotRef:
    address: str
    slot: int
    var: str | None

    def to_json(self) -> dict:
        return {"address": self.address, "slot": hex(self.slot), "var": self.var}


@dataclass(frozen=True)
class RorFinding:
    entry: FunctionRef
    entry_dapp: str | None
    victim: FunctionRef
    victim_dapp: str | None
    manipulable: FunctionRef
    manipulable_dapp: str | None
    manipulable_is_view: bool
    hijack: HijackPoint
    overlap: tuple[SlotRef, ...]
    witness_entry: FuzzCase
    witness_victim_tx: str
    victim_sender: str
    narrative: tuple[str, ...] = field(default=(), compare=False)

    @property
    def key(self) -> tuple:
        return (self.entry, self.victim, tuple((s.address, s.slot) for s in self.overlap))

    def to_json(self) -> dict:
        ref = lambda r, d: {"address": r.address, "function": r.name, "dapp": d}  # noqa: E731
        return {
            "entry": ref(self.entry, self.entry_dapp),
            "victim": ref(self.victim, self.victim_dapp),
            "manipulable": {**ref(self.manipulable, self.manipulable_dapp), "view": self.manipulable_is_view},
            "hijack_site": {"contract": self.hijack.contract, "function": self.hijack.function,
                            "stmt_index": self.hijack.stmt_index, "path": [list(p) for p in self.hijack.site],
                            "kind": self.hijack.kind, "recipient": self.hijack.recipient},
            "overlap_slots": [s.to_json() for s in self.overlap],
            "witness_entry_tx": self.witness_entry.to_json(),
            "witness_victim_tx": self.witness_victim_tx,
            "narrative": list(self.narrative),
        }


@dataclass
class VerifyOutcome:
    trace: ExecutionTrace
    injections: list[tuple[HijackPoint, ExecutionTrace]]
    finding: RorFinding | None = None


def _slot_vars(trace: ExecutionTrace) -> dict[tuple[str, int], str]:
    return {(r.address, r.slot): r.var for r in trace.records if r.operation != "invoke"}


def _narrative(f: RorFinding, store: ChainStore) -> tuple[str, ...]:
    name = lambda ref: f"{store.contract_name(ref.address)}.{ref.name}"  # noqa: E731
    label = lambda d: d or "unknown DApp"  # noqa: E731
    slots = ", ".join(f"{store.contract_name(s.address)}.{s.var or hex(s.slot)}" for s in f.overlap)
    site = " -> ".join(f"{fn}#{i}" for fn, i in f.hijack.site)
    return (
        f"1. {f.witness_entry.tx.sender} calls entry {name(f.entry)} ({label(f.entry_dapp)})",
        f"2. control leaves {name(f.entry)} at {site} ({f.hijack.kind} to {f.hijack.recipient}) "
        f"before its state is settled",
        f"3. victim {name(f.victim)} ({label(f.victim_dapp)}) is re-entered by tx {f.witness_victim_tx}",
        f"4. {name(f.victim)} reads stale {slots} through {name(f.manipulable)}",
        f"5. {name(f.entry)} resumes and updates {slots} after the victim used it",
        f"note: the victim call keeps its recorded sender {f.victim_sender}; a real exploit issues it from "
        f"the attacker contract that receives control in step 2",
    )


def verify(case: FuzzCase, tx_o: TransactionRecord, store: ChainStore, resolver: BoundaryResolver,
           candidate: CandidateEntry) -> VerifyOutcome:
    """Run ``case`` injecting ``tx_o`` at every hijack point; first overlapping point wins."""
    machine = Machine(store, resolver)
    injections: list[tuple[HijackPoint, ExecutionTrace]] = []

    def hook(vm: Machine, point: HijackPoint) -> str:
        injections.append((point, vm.execute(tx_o)))
        return PROCEED

    try:
        trace = machine.execute(case.tx, hook)
    except ReplayError:
        return VerifyOutcome(None, injections)  # type: ignore[arg-type]
    outcome = VerifyOutcome(trace, injections)
    if not trace.success:
        return outcome
    victim_addr = tx_o.to
    for point, victim_trace in injections:
        if not victim_trace.success:
            continue
        written = state_diff(trace, point.seq)
        overlap = sorted(
            slot for slot in written & reads_of(victim_trace)
            if slot[0] != victim_addr and not resolver.same_dapp(slot[0], victim_addr)
        )
        if not overlap:
            continue
        names = {**_slot_vars(victim_trace), **_slot_vars(trace)}
        victim_fn, _ = decode_call(store.contract(victim_addr).ir, tx_o.calldata)
        finding = RorFinding(
            entry=candidate.entry,
            entry_dapp=resolver.resolve(candidate.entry.address).name,
            victim=FunctionRef(victim_addr, victim_fn.name),
            victim_dapp=resolver.resolve(victim_addr).name,
            manipulable=candidate.manipulable,
            manipulable_dapp=resolver.resolve(candidate.manipulable.address).name,
            manipulable_is_view=candidate.manipulable_is_view,
            hijack=point,
            overlap=tuple(SlotRef(a, s, names.get((a, s))) for a, s in overlap),
            witness_entry=case,
            witness_victim_tx=tx_o.hash,
            victim_sender=tx_o.sender,
        )
        outcome.finding = RorFinding(**{**finding.__dict__, "narrative": _narrative(finding, store)})
        return outcome
    return outcome


@dataclass
class CampaignResult:
    findings: list[RorFinding]
    verify_calls: int
    cases_built: int
    budget_exhausted: bool


def case_rng(seed: int, candidate: CandidateEntry, tx_o: TransactionRecord) -> random.Random:
    return random.Random(f"{seed}|{candidate.entry}|{candidate.manipulable}|{tx_o.hash}")


def run_campaign(candidates: Iterable[CandidateEntry], ds: ContextDataset, store: ChainStore,
                 resolver: BoundaryResolver, budget: int = 5000, seed: int = 0,
                 config: FuzzConfig = FuzzConfig(),
                 log: Callable[[dict], None] | None = None) -> CampaignResult:
    """Verify candidates in order; each stops at its first finding, the run at ``budget`` verify calls.

    All unmutated seeds of a candidate (across its victim transactions) run
    before any mutant, so enabling mutation never hides a seed finding.
    """
    findings: list[RorFinding] = []
    keys: set[tuple] = set()
    calls = built = 0
    exhausted = False
    for cand in candidates:
        if exhausted:
            break
        fn = store.contract(cand.entry.address).ir.functions[cand.entry.name]
        seeds, mutants = [], []
        for tx_hash in cand.origin_txs:
            tx_o = ds.transaction(tx_hash)
            cases = build_candidate_list(fn, cand.entry, tx_o, store, config, case_rng(seed, cand, tx_o))
            built += len(cases)
            for c in cases:
                (mutants if c.mutations else seeds).append((c, tx_o))
        for case, tx_o in seeds + mutants:
            if calls >= budget:
                exhausted = True
                break
            calls += 1
            result = verify(case, tx_o, store, resolver, cand)
            if log is not None:
                log({
                    "candidate": str(cand.entry), "manipulable": str(cand.manipulable), "victim_tx": tx_o.hash,
                    "case": case.tx.hash, "origin": case.origin, "mutations": list(case.mutations),
                    "outcome": result.trace.outcome if result.trace else "unreplayable",
                    "hijack_points": len(result.trace.hijack_points) if result.trace else 0,
                    "finding": result.finding is not None,
                })
            if result.finding is not None:
                if result.finding.key not in keys:
                    keys.add(result.finding.key)
                    findings.append(result.finding)
                break
    return CampaignResult(findings, calls, built, exhausted)


def jsonl_logger(handle) -> Callable[[dict], None]:
    def write(entry: dict) -> None:
        handle.write(json.dumps(entry, sort_keys=True) + "\n")
    return write


__all__ = [
    "CampaignResult", "FuzzCase", "FuzzConfig", "RorFinding", "SlotRef", "VerifyOutcome",
    "build_candidate_list", "jsonl_logger", "run_campaign", "verify",
]

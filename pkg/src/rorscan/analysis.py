"""Cross-DApp analysis: which foreign functions a victim depends on, and who can skew them.

1. Replay the victim's recent transactions and keep the traces.
2. Functions of other DApps seen in those traces are *manipulable*; rank
   them by how often the traces touch them.
3. Inside each manipulable function's DApp, link every reader of a state
   variable to every writer of it, then prune links that cannot be abused.
4. Writers still linked to a manipulable function are candidate entries.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .boundary import BoundaryResolver, DAppIdentity
from .chain import ChainStore, TransactionRecord
from .ir.meta import function_meta, is_safe_callee
from .ir.model import ContractIR, FunctionRef
from .vm import INVOKE, READ, WRITE, ExecutionTrace, Machine

RULE_ACCESS = "access-control"
RULE_LOCK = "non-reentrant"
RULE_CROSS = "cross-contract"
# rule numbers accepted by ``disabled_rules``
RULES = {2: RULE_ACCESS, 3: RULE_LOCK, 4: RULE_CROSS}


@dataclass(frozen=True)
class ReplayedTx:
    tx: TransactionRecord
    trace: ExecutionTrace


@dataclass
class ContextDataset:
    victim: str
    victim_dapp: DAppIdentity
    traces: list[ReplayedTx] = field(default_factory=list)

    @property
    def successful(self) -> list[ReplayedTx]:
        return [t for t in self.traces if t.trace.success]

    @property
    def revert_count(self) -> int:
        return sum(1 for t in self.traces if not t.trace.success)

    def transaction(self, tx_hash: str) -> TransactionRecord:
        for t in self.traces:
            if t.tx.hash == tx_hash:
                return t.tx
        raise KeyError(tx_hash)


def collect_contextual_data(victim: str, store: ChainStore, resolver: BoundaryResolver,
                            limit: int = 1000) -> ContextDataset:
    """Replay up to ``limit`` latest transactions sent to ``victim``, each on fresh state."""
    ds = ContextDataset(victim, resolver.resolve(victim))
    for tx in store.fetch_transactions_of(victim, limit):
        ds.traces.append(ReplayedTx(tx, Machine(store, resolver).execute(tx)))
    return ds


def _functions_touched(trace: ExecutionTrace) -> set[FunctionRef]:
    refs = set()
    for rec in trace.records:
        refs.add(rec.frame)
        if rec.operation == INVOKE and rec.callee_function is not None:
            refs.add(FunctionRef(rec.address, rec.callee_function))
    return refs


def find_manipulable_functions(ds: ContextDataset, resolver: BoundaryResolver) -> list[FunctionRef]:
    """Functions of other DApps that the victim's successful traces reached."""
    seen: set[FunctionRef] = set()
    for item in ds.successful:
        seen |= _functions_touched(item.trace)
    return sorted(
        ref for ref in seen
        if ref.address != ds.victim and not resolver.same_dapp(ref.address, ds.victim)
    )


@dataclass(frozen=True)
class UsageStats:
    function: FunctionRef
    c_invoke: int = 0
    c_read: int = 0
    c_write: int = 0
    is_view: bool = False

    @property
    def importance(self) -> int:
        return self.c_invoke + self.c_read + self.c_write

    def to_json(self) -> dict:
        return {
            "address": self.function.address,
            "function": self.function.name,
            "c_invoke": self.c_invoke,
            "c_read": self.c_read,
            "c_write": self.c_write,
            "importance": self.importance,
            "view": self.is_view,
        }


def usage_counts(ds: ContextDataset) -> dict[FunctionRef, Counter]:
    """Invoke/read/write counts per function over the successful traces."""
    counts: dict[FunctionRef, Counter] = {}
    for item in ds.successful:
        for rec in item.trace.records:
            if rec.operation == INVOKE:
                if rec.callee_function is not None:
                    counts.setdefault(FunctionRef(rec.address, rec.callee_function), Counter())[INVOKE] += 1
            else:
                counts.setdefault(rec.frame, Counter())[rec.operation] += 1
    return counts


def rank_manipulable(ds: ContextDataset, fns: Iterable[FunctionRef], store: ChainStore) -> list[UsageStats]:
    """Most-used first; equal importance falls back to (address, name)."""
    counts = usage_counts(ds)
    stats = []
    for ref in fns:
        c = counts.get(ref, Counter())
        record = store.contract(ref.address)
        view = bool(record) and ref.name in record.ir.functions and function_meta(record.ir, ref.name).is_view
        stats.append(UsageStats(ref, c[INVOKE], c[READ], c[WRITE], view))
    return sorted(stats, key=lambda s: (-s.importance, s.function.address, s.function.name))


@dataclass(frozen=True, order=True)
class Edge:
    """``reader`` depends on state ``var`` that ``writer`` modifies."""

    reader: FunctionRef
    writer: FunctionRef
    var: str

    def to_json(self) -> dict:
        return {"reader": str(self.reader), "writer": str(self.writer), "var": self.var}


@dataclass
class IntraDAppGraph:
    dapp: str
    nodes: list[FunctionRef]
    edges: list[Edge]  # survivors
    pruned: list[tuple[Edge, str]]
    safe: set[FunctionRef] = field(default_factory=set)

    @property
    def all_edges(self) -> list[Edge]:
        return sorted(self.edges + [e for e, _ in self.pruned])

    def out_edges(self, reader: FunctionRef) -> list[Edge]:
        return [e for e in self.edges if e.reader == reader]

    def to_json(self) -> dict:
        return {
            "dapp": self.dapp,
            "nodes": [str(n) for n in self.nodes],
            "edges": [e.to_json() for e in self.edges],
            "pruned": [{**e.to_json(), "rule": rule} for e, rule in self.pruned],
        }


def build_intra_dapp_graph(contracts: Sequence[ContractIR], dapp: str = "",
                           disabled_rules: Iterable[int] = ()) -> IntraDAppGraph:
    """Reader -> writer dependency edges between public functions, pruned by guard rules."""
    disabled = set(disabled_rules)
    nodes: list[FunctionRef] = []
    edges: list[Edge] = []
    pruned: list[tuple[Edge, str]] = []
    safe: set[FunctionRef] = set()
    for contract in sorted(contracts, key=lambda c: c.address):
        fns = sorted(contract.public_functions(), key=lambda f: f.name)
        metas = {f.name: function_meta(contract, f.name) for f in fns}
        for f in fns:
            ref = FunctionRef(contract.address, f.name)
            nodes.append(ref)
            if is_safe_callee(contract, f.name):
                safe.add(ref)
        for reader in fns:
            for writer in fns:
                if reader.name == writer.name:
                    continue
                shared = metas[reader.name].reads & metas[writer.name].writes
                for var in sorted(shared):
                    edge = Edge(FunctionRef(contract.address, reader.name), FunctionRef(contract.address, writer.name), var)
                    wmeta, rmeta = metas[writer.name], metas[reader.name]
                    if 2 not in disabled and var in wmeta.guarded_vars:
                        pruned.append((edge, RULE_ACCESS))
                    elif 3 not in disabled and rmeta.non_reentrant and wmeta.non_reentrant:
                        pruned.append((edge, RULE_LOCK))
                    elif 4 not in disabled and edge.reader in safe:
                        pruned.append((edge, RULE_CROSS))
                    else:
                        edges.append(edge)
    if 4 in disabled:
        safe = set()
    return IntraDAppGraph(dapp, nodes, sorted(edges), sorted(pruned), safe)


@dataclass(frozen=True)
class CandidateEntry:
    entry: FunctionRef
    manipulable: FunctionRef
    shared_state: tuple[str, ...]
    importance: int
    origin_txs: tuple[str, ...]
    dapp: str | None = None
    manipulable_is_view: bool = False

    def to_json(self) -> dict:
        return {
            "entry": {"address": self.entry.address, "function": self.entry.name},
            "manipulable": {"address": self.manipulable.address, "function": self.manipulable.name},
            "dapp": self.dapp,
            "shared_state": list(self.shared_state),
            "importance": self.importance,
            "manipulable_is_view": self.manipulable_is_view,
            "origin_txs": list(self.origin_txs),
        }


def origin_txs_of(ds: ContextDataset, fn: FunctionRef) -> tuple[str, ...]:
    """Victim transactions whose traces touched ``fn``, in dataset order."""
    return tuple(item.tx.hash for item in ds.successful if fn in _functions_touched(item.trace))


def candidate_entries(graph: IntraDAppGraph, ds: ContextDataset, stats: UsageStats,
                      store: ChainStore) -> list[CandidateEntry]:
    """Writers one dependency hop away from a manipulable function."""
    shared: dict[FunctionRef, list[str]] = {}
    for edge in graph.out_edges(stats.function):
        shared.setdefault(edge.writer, []).append(edge.var)
    out = []
    origin = origin_txs_of(ds, stats.function)
    for writer in sorted(shared):
        record = store.contract(writer.address)
        fn = record.ir.functions[writer.name]
        if not fn.is_public or function_meta(record.ir, writer.name).is_view:
            continue
        out.append(CandidateEntry(writer, stats.function, tuple(sorted(shared[writer])), stats.importance,
                                  origin, graph.dapp, stats.is_view))
    return out


def order_candidates(cands: Iterable[CandidateEntry]) -> list[CandidateEntry]:
    return sorted(cands, key=lambda c: (-c.importance, c.entry.address, c.entry.name,
                                        c.manipulable.address, c.manipulable.name))


@dataclass
class AnalysisResult:
    dataset: ContextDataset
    manipulable: list[FunctionRef]
    ranking: list[UsageStats]
    graphs: dict[str, IntraDAppGraph]
    candidates: list[CandidateEntry]


def analyze(victim: str, store: ChainStore, resolver: BoundaryResolver, limit: int = 1000,
            disabled_rules: Iterable[int] = ()) -> AnalysisResult:
    """Collect traces for ``victim`` and derive ranked manipulable functions and candidate entries."""
    ds = collect_contextual_data(victim, store, resolver, limit)
    manip = find_manipulable_functions(ds, resolver)
    ranking = rank_manipulable(ds, manip, store)
    graphs: dict[str, IntraDAppGraph] = {}
    cands: list[CandidateEntry] = []
    for stats in ranking:
        key = resolver.group_key(stats.function.address)
        if key not in graphs:
            contracts = [store.contract(a).ir for a in resolver.dapp_contracts(stats.function.address)]
            graphs[key] = build_intra_dapp_graph(contracts, key, disabled_rules)
        graph = graphs[key]
        if stats.function in graph.safe:
            continue  # guarded same-DApp callee: its paths are not explored
        cands.extend(candidate_entries(graph, ds, stats, store))
    return AnalysisResult(ds, manip, ranking, graphs, order_candidates(cands))


def _dot_id(ref: FunctionRef) -> str:
    return f'"{ref.address}.{ref.name}"'


def graph_to_dot(result: AnalysisResult, store: ChainStore) -> str:
    """DOT rendering: victim -> manipulable flow, then one cluster per analysed DApp."""
    name = lambda ref: f"{store.contract_name(ref.address)}.{ref.name}"  # noqa: E731
    lines = ["digraph ror {", "  rankdir=LR;", "  node [shape=box, fontname=monospace];"]
    victim = f'"victim:{result.dataset.victim}"'
    lines.append(f'  {victim} [label="{store.contract_name(result.dataset.victim)} (victim)", shape=ellipse];')
    for stats in result.ranking:
        lines.append(f'  {victim} -> {_dot_id(stats.function)} [label="importance {stats.importance}", color=red];')
    for i, (key, graph) in enumerate(sorted(result.graphs.items())):
        lines.append(f"  subgraph cluster_{i} {{")
        lines.append(f'    label="{key}";')
        for node in graph.nodes:
            style = ", style=dashed" if node in graph.safe else ""
            lines.append(f'    {_dot_id(node)} [label="{name(node)}"{style}];')
        for e in graph.edges:
            lines.append(f'    {_dot_id(e.reader)} -> {_dot_id(e.writer)} [label="{e.var}"];')
        for e, rule in graph.pruned:
            lines.append(f'    {_dot_id(e.reader)} -> {_dot_id(e.writer)} [label="{e.var} ({rule})", style=dotted, color=gray];')
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


__all__ = [
    "AnalysisResult", "CandidateEntry", "ContextDataset", "Edge", "IntraDAppGraph", "ReplayedTx", "UsageStats",
    "analyze", "build_intra_dapp_graph", "candidate_entries", "collect_contextual_data",
    "find_manipulable_functions", "graph_to_dot", "rank_manipulable", "usage_counts",
]

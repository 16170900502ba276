"""End-to-end run: boundaries, context collection, static analysis, verification."""

from __future__ import annotations

import json
import time
from contextlib import ExitStack
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .analysis import AnalysisResult, analyze, graph_to_dot
from .boundary import BoundaryResolver
from .chain import ChainStore, SnapshotStore, load_builders
from .errors import ConfigError, UnknownContractError
from .verifier import CampaignResult, FuzzConfig, jsonl_logger, run_campaign
from .words import is_address, to_address

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    target: str
    snapshot: str | None = None
    builders: str | None = None
    rpc_url: str | None = None
    max_txs: int = 1000
    txs_per_entry: int = 300
    budget: int = 5000
    seed: int = 0
    boundary_mode: str = "on"
    fund_fuzz: bool = True
    input_fuzz: bool = True
    analyze_only: bool = False
    disabled_rules: tuple[int, ...] = ()
    output_format: str = "json"
    trace_out: str | None = None
    graph_out: str | None = None
    fuzz_log: str | None = None

    def validate(self) -> None:
        if self.snapshot is None and self.rpc_url is None:
            raise ConfigError("either a snapshot file or an RPC endpoint is required")
        if self.boundary_mode not in ("on", "off"):
            raise ConfigError(f"boundary mode must be 'on' or 'off', not {self.boundary_mode!r}")
        if self.output_format not in ("json", "text"):
            raise ConfigError(f"unknown output format {self.output_format!r}")
        for name in ("max_txs", "txs_per_entry"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.budget < 0:
            raise ConfigError("budget must be non-negative")
        bad = set(self.disabled_rules) - {2, 3, 4}
        if bad:
            raise ConfigError(f"only rules 2, 3 and 4 can be disabled, got {sorted(bad)}")

    def echo(self) -> dict:
        """Effective settings that influence results (output paths left out)."""
        doc = asdict(self)
        for k in ("trace_out", "graph_out", "fuzz_log", "output_format"):
            doc.pop(k)
        doc["disabled_rules"] = list(self.disabled_rules)
        return doc


@dataclass
class Report:
    config: dict
    target: dict
    dataset: dict
    ranking: list[dict]
    candidates: list[dict]
    graphs: list[dict]
    findings: list[dict]
    verification: dict | None
    timing: dict[str, float] = field(default_factory=dict)

    def to_json(self, include_timing: bool = False) -> dict:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "target": self.target,
            "dataset": self.dataset,
            "ranking": self.ranking,
            "candidates": self.candidates,
            "graphs": self.graphs,
            "verification": self.verification,
            "findings": self.findings,
        }
        if include_timing:
            doc["timing"] = {k: round(v, 6) for k, v in self.timing.items()}
        return doc


def open_store(config: RunConfig) -> ChainStore:
    if config.rpc_url:
        from .rpc import RpcChainStore

        return RpcChainStore(config.rpc_url)
    return SnapshotStore.from_file(config.snapshot)


def resolve_target(store: ChainStore, target: str) -> str:
    """Accept an address or a unique contract name."""
    if is_address(target):
        address = to_address(target)
        if not store.is_contract(address):
            raise UnknownContractError(f"target {address} is not a contract in the snapshot")
        return address
    matches = [a for a in store.contract_addresses() if store.contract(a).name == target]
    if len(matches) != 1:
        what = "no contract" if not matches else f"{len(matches)} contracts"
        raise UnknownContractError(f"{what} named {target!r}")
    return matches[0]


def make_resolver(config: RunConfig, store: ChainStore) -> BoundaryResolver:
    if config.boundary_mode == "off":
        return BoundaryResolver.disabled(store)
    builders = load_builders(config.builders) if config.builders else store.builders
    return BoundaryResolver(store, builders)


def run_pipeline(config: RunConfig, store: ChainStore | None = None) -> Report:
    config.validate()
    timing: dict[str, float] = {}
    clock = time.perf_counter

    t0 = clock()
    store = store or open_store(config)
    victim = resolve_target(store, config.target)
    resolver = make_resolver(config, store)
    victim_dapp = resolver.resolve(victim)
    timing["boundaries"] = clock() - t0

    t0 = clock()
    result: AnalysisResult = analyze(victim, store, resolver, config.max_txs, config.disabled_rules)
    timing["context_and_analysis"] = clock() - t0

    campaign: CampaignResult | None = None
    if not config.analyze_only:
        t0 = clock()
        fuzz = FuzzConfig(config.txs_per_entry, config.max_txs, config.fund_fuzz, config.input_fuzz)
        with ExitStack() as stack:
            log = None
            if config.fuzz_log:
                log = jsonl_logger(stack.enter_context(open(config.fuzz_log, "w", encoding="utf-8")))
            campaign = run_campaign(result.candidates, result.dataset, store, resolver,
                                    config.budget, config.seed, fuzz, log)
        timing["verification"] = clock() - t0

    if config.trace_out:
        write_trace_log(result, config.trace_out)
    if config.graph_out:
        Path(config.graph_out).write_text(graph_to_dot(result, store), encoding="utf-8")

    ds = result.dataset
    name = store.contract_name
    return Report(
        config=config.echo(),
        target={"address": victim, "name": name(victim), "dapp": victim_dapp.name},
        dataset={
            "txs_replayed": len(ds.traces),
            "reverted": ds.revert_count,
            "successful": len(ds.successful),
            "manipulable": [{"address": f.address, "function": f.name, "contract": name(f.address),
                             "dapp": resolver.resolve(f.address).name} for f in result.manipulable],
        },
        ranking=[{**s.to_json(), "contract": name(s.function.address)} for s in result.ranking],
        candidates=[{**c.to_json(), "contract": name(c.entry.address)} for c in result.candidates],
        graphs=[g.to_json() for _, g in sorted(result.graphs.items())],
        findings=[f.to_json() for f in campaign.findings] if campaign else [],
        verification=None if campaign is None else {
            "verify_calls": campaign.verify_calls,
            "cases_built": campaign.cases_built,
            "budget_exhausted": campaign.budget_exhausted,
        },
        timing=timing,
    )


def write_trace_log(result: AnalysisResult, path: str) -> None:
    """One JSON line per context record, tagged with the replayed transaction."""
    with open(path, "w", encoding="utf-8") as fh:
        for item in result.dataset.traces:
            for rec in item.trace.records:
                fh.write(json.dumps({"tx": item.tx.hash, "outcome": item.trace.outcome, **rec.to_json()},
                                    sort_keys=True) + "\n")

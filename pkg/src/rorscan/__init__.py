"""Read-only reentrancy detection across DApp boundaries over offline chain snapshots."""

from .analysis import analyze, build_intra_dapp_graph, candidate_entries, collect_contextual_data
from .boundary import BoundaryResolver, DAppIdentity, find_builder, resolve_dapp, same_dapp
from .chain import ChainSnapshot, SnapshotStore, TransactionRecord, load_snapshot
from .errors import RorScanError
from .pipeline import Report, RunConfig, run_pipeline
from .report import render_report
from .verifier import RorFinding, build_candidate_list, run_campaign, verify
from .vm import Machine, reads_of, replay, replay_with_hijack, state_diff

__version__ = "0.1.0"

__all__ = [
    "BoundaryResolver", "ChainSnapshot", "DAppIdentity", "Machine", "Report", "RorFinding", "RorScanError",
    "RunConfig", "SnapshotStore", "TransactionRecord", "analyze", "build_candidate_list",
    "build_intra_dapp_graph", "candidate_entries", "collect_contextual_data", "find_builder", "load_snapshot",
    "reads_of", "render_report", "replay", "replay_with_hijack", "resolve_dapp", "run_campaign",
    "run_pipeline", "same_dapp", "state_diff", "verify",
]

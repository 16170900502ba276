"""Command-line entry point.

Exit status: 0 when the run is clean, 2 when findings were reported, 1 on errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from .boundary import BoundaryResolver, find_builder
from .chain import SnapshotStore, load_builders
from .errors import RorScanError
from .pipeline import RunConfig, resolve_target, run_pipeline
from .report import render_report

EXIT_CLEAN, EXIT_ERROR, EXIT_FINDINGS = 0, 1, 2


def _source_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--snapshot", help="chain snapshot JSON file")
    src.add_argument("--rpc-url", help="JSON-RPC endpoint serving chain data")
    p.add_argument("--builders", help="builder dataset JSON (overrides the snapshot's builders)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rorscan", description="Detect read-only reentrancy across DApps.")
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="run the full detection pipeline against one victim contract")
    _source_args(d)
    d.add_argument("--target", required=True, help="victim contract address or name")
    d.add_argument("--max-txs", type=int, default=1000, help="victim transactions to replay (default 1000)")
    d.add_argument("--txs-per-entry", type=int, default=300, help="historical seeds per entry (default 300)")
    d.add_argument("--budget", type=int, default=5000, help="maximum verify calls (default 5000)")
    d.add_argument("--seed", type=int, default=0, help="fuzzing RNG seed (default 0)")
    d.add_argument("--boundary-mode", choices=("on", "off"), default="on",
                   help="'off' treats every contract as its own unknown DApp")
    d.add_argument("--no-fund-fuzz", action="store_true", help="do not mutate transferred funds")
    d.add_argument("--no-input-fuzz", action="store_true", help="do not mutate call arguments")
    d.add_argument("--disable-rule", type=int, action="append", default=[], choices=(2, 3, 4),
                   metavar="N", help="skip pruning rule N (2 access control, 3 nonReentrant, 4 guarded callee)")
    d.add_argument("--analyze-only", action="store_true", help="stop before verification")
    d.add_argument("--format", choices=("json", "text"), default="json")
    d.add_argument("--timing", action="store_true", help="include per-stage timing (output no longer stable)")
    d.add_argument("--trace-out", help="write replayed context records as JSON lines")
    d.add_argument("--graph-out", help="write dependency graphs in DOT format")
    d.add_argument("--fuzz-log", help="write one JSON line per verified case")
    d.add_argument("-o", "--output", help="write the report here instead of stdout")

    b = sub.add_parser("builder", help="show the builder and DApp of a contract")
    _source_args(b)
    b.add_argument("address", help="contract address or name")

    s = sub.add_parser("serve", help="serve a snapshot over JSON-RPC")
    s.add_argument("--snapshot", required=True)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8545)
    return parser


def _store(args):
    if args.rpc_url:
        from .rpc import RpcChainStore

        return RpcChainStore(args.rpc_url)
    return SnapshotStore.from_file(args.snapshot)


def cmd_detect(args) -> int:
    config = RunConfig(
        target=args.target, snapshot=args.snapshot, builders=args.builders, rpc_url=args.rpc_url,
        max_txs=args.max_txs, txs_per_entry=args.txs_per_entry, budget=args.budget, seed=args.seed,
        boundary_mode=args.boundary_mode, fund_fuzz=not args.no_fund_fuzz, input_fuzz=not args.no_input_fuzz,
        analyze_only=args.analyze_only, disabled_rules=tuple(sorted(set(args.disable_rule))),
        output_format=args.format, trace_out=args.trace_out, graph_out=args.graph_out, fuzz_log=args.fuzz_log,
    )
    report = run_pipeline(config)
    text = render_report(report, args.format, args.timing)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_FINDINGS if report.findings else EXIT_CLEAN


def cmd_builder(args) -> int:
    store = _store(args)
    address = resolve_target(store, args.address)
    builders = load_builders(args.builders) if args.builders else store.builders
    identity = BoundaryResolver(store, builders).resolve(address)
    print(json.dumps({"address": address, "builder": find_builder(address, store), "dapp": identity.name},
                     indent=2, sort_keys=True))
    return EXIT_CLEAN


def cmd_serve(args) -> int:
    from .rpc import make_handler
    from http.server import ThreadingHTTPServer

    store = SnapshotStore.from_file(args.snapshot)
    server = ThreadingHTTPServer((args.host, args.port), make_handler(store))
    print(f"serving {args.snapshot} on http://{args.host}:{server.server_address[1]}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_CLEAN


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 0 for --help, 2 for usage errors
        return EXIT_CLEAN if exc.code == 0 else EXIT_ERROR
    handler = {"detect": cmd_detect, "builder": cmd_builder, "serve": cmd_serve}[args.command]
    try:
        return handler(args)
    except (RorScanError, OSError, ValueError) as exc:
        print(f"rorscan: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

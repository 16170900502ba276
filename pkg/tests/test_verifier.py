from __future__ import annotations

import io
import json
import random

import pytest

from rorscan.analysis import analyze
from rorscan.boundary import BoundaryResolver
from rorscan.ir.model import FunctionRef
from rorscan.verifier import FuzzConfig, build_candidate_list, jsonl_logger, run_campaign, verify

from helpers import JOIN_VAULT, POOL, SCENARIOS, VAULT, load_store


def setup(name, boundaries=True):
    store = load_store(name)
    resolver = BoundaryResolver(store, store.builders) if boundaries else BoundaryResolver.disabled(store)
    victim = next(a for a in store.contract_addresses() if store.contract_name(a) == SCENARIOS[name])
    return store, resolver, analyze(victim, store, resolver)


def campaign(name, config=FuzzConfig(), budget=5000, seed=0, boundaries=True, log=None):
    store, resolver, result = setup(name, boundaries)
    return run_campaign(result.candidates, result.dataset, store, resolver, budget, seed, config, log)


def test_entry_without_history_gets_one_synthesized_seed(fig2_store):
    fn = fig2_store.contract(VAULT).ir.functions["exitVault"]
    tx_o = fig2_store.fetch_transactions_of(POOL, 1)[0]
    cases = build_candidate_list(fn, FunctionRef(VAULT, "exitVault"), tx_o, fig2_store, FuzzConfig(),
                                 random.Random(0))
    (case,) = cases  # no params and not payable: nothing to mutate
    assert case.origin == "synthesized" and case.tx.sender == tx_o.sender and case.tx.value == 0
    assert case.tx.block_number == tx_o.block_number


def test_payable_entry_with_history_gets_fund_and_input_mutants():
    store = load_store("fig8")
    fn = store.contract(JOIN_VAULT).ir.functions["joinPool"]
    tx_o = store.fetch_transactions_of("0x3000000000000000000000000000000000000001", 1)[0]
    entry = FunctionRef(JOIN_VAULT, "joinPool")
    cases = build_candidate_list(fn, entry, tx_o, store, FuzzConfig(), random.Random(0))
    seeds = [c for c in cases if not c.mutations]
    assert len(seeds) == 3 and all(c.origin == "historical" for c in seeds)
    funds = [c for c in cases if c.mutations and c.mutations[0].startswith("value=")]
    inputs = [c for c in cases if c.mutations and c.mutations[0].startswith("arg0=")]
    assert len(funds) + len(inputs) + len(seeds) == len(cases)
    # per seed of value v=1000: 0, v/2, 2v, 10v and one random amount
    for seed in seeds:
        values = sorted(c.tx.value for c in funds if c.seed_hash == seed.seed_hash)
        assert values[:4] == [0, 500, 2000, 10000] and len(values) == 5
    assert all(c.tx.value == 1000 for c in inputs)
    assert all(c.tx.calldata != seeds[0].tx.calldata for c in inputs if c.seed_hash == seeds[0].seed_hash)


def test_candidate_lists_respect_switches_and_seeds():
    store = load_store("fig8")
    fn = store.contract(JOIN_VAULT).ir.functions["joinPool"]
    tx_o = store.fetch_transactions_of("0x3000000000000000000000000000000000000001", 1)[0]
    entry = FunctionRef(JOIN_VAULT, "joinPool")
    build = lambda cfg, seed: build_candidate_list(fn, entry, tx_o, store, cfg, random.Random(seed))  # noqa: E731
    assert all(not c.mutations for c in build(FuzzConfig(fund_fuzz=False, input_fuzz=False), 0))
    assert all(not m.startswith("value=") for c in build(FuzzConfig(fund_fuzz=False), 0) for m in c.mutations)
    assert build(FuzzConfig(), 7) == build(FuzzConfig(), 7)
    assert len(build(FuzzConfig(txs_per_entry=1), 0)) < len(build(FuzzConfig(), 0))


def test_verify_reports_the_fig2_overlap():
    store, resolver, result = setup("fig2")
    (cand,) = result.candidates
    tx_o = result.dataset.transaction(cand.origin_txs[0])
    fn = store.contract(VAULT).ir.functions["exitVault"]
    (case,) = build_candidate_list(fn, cand.entry, tx_o, store, FuzzConfig(), random.Random(0))
    outcome = verify(case, tx_o, store, resolver, cand)
    assert outcome.trace.success and len(outcome.injections) == 1
    f = outcome.finding
    assert [(s.address, s.var) for s in f.overlap] == [(VAULT, "balance")]
    assert f.hijack.recipient == tx_o.sender and f.victim.name == "decrease"
    assert len(f.narrative) == 6


def test_settled_first_has_no_overlap():
    store, resolver, result = setup("neg_settled_first")
    assert result.candidates
    for cand in result.candidates:
        tx_o = result.dataset.transaction(cand.origin_txs[0])
        fn = store.contract(cand.entry.address).ir.functions[cand.entry.name]
        for case in build_candidate_list(fn, cand.entry, tx_o, store, FuzzConfig(), random.Random(0)):
            assert verify(case, tx_o, store, resolver, cand).finding is None


@pytest.mark.parametrize("name", sorted(SCENARIOS))
@pytest.mark.parametrize("boundaries", [True, False])
def test_mutation_never_loses_seed_findings(name, boundaries):
    plain = campaign(name, FuzzConfig(fund_fuzz=False, input_fuzz=False), boundaries=boundaries)
    full = campaign(name, boundaries=boundaries)
    assert {f.key for f in plain.findings} <= {f.key for f in full.findings}


def test_witness_replays_to_the_same_finding():
    store, resolver, result = setup("fig8")
    (finding,) = run_campaign(result.candidates, result.dataset, store, resolver).findings
    cand = next(c for c in result.candidates if c.entry == finding.entry)
    tx_o = result.dataset.transaction(finding.witness_victim_tx)
    again = verify(finding.witness_entry, tx_o, store, resolver, cand).finding
    assert again is not None and again.key == finding.key


def test_budget_stops_the_campaign():
    out = campaign("fig8", budget=1)
    assert out.verify_calls == 1 and out.budget_exhausted and out.findings == []
    assert campaign("fig8", budget=0).verify_calls == 0


def test_fuzz_log_has_a_line_per_verify_call():
    buf = io.StringIO()
    out = campaign("fig8", log=jsonl_logger(buf))
    lines = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert len(lines) == out.verify_calls
    assert sum(entry["finding"] for entry in lines) == 1
    assert lines[-1]["finding"] and lines[-1]["mutations"][0].startswith("value=")


def test_seed_changes_only_random_draws():
    a, b = campaign("fig8", seed=0), campaign("fig8", seed=99)
    assert [f.key for f in a.findings] == [f.key for f in b.findings]

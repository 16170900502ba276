from __future__ import annotations

from itertools import combinations

import pytest

from rorscan.analysis import (
    analyze, build_intra_dapp_graph, collect_contextual_data, find_manipulable_functions, graph_to_dot,
    rank_manipulable, usage_counts,
)
from rorscan.boundary import BoundaryResolver
from rorscan.ir.model import FunctionRef

from helpers import NEGATIVES, ORACLE, POOL, SCENARIOS, VAULT, load_store

GET_FUNDS = FunctionRef(VAULT, "getFunds")
EXIT = FunctionRef(VAULT, "exitVault")


def run(name, disabled=(), boundaries=True):
    store = load_store(name)
    resolver = BoundaryResolver(store, store.builders) if boundaries else BoundaryResolver.disabled(store)
    victim = next(a for a in store.contract_addresses() if store.contract_name(a) == SCENARIOS[name])
    return analyze(victim, store, resolver, 1000, disabled), store


def test_contextual_data_keeps_reverts_apart(fig2_store, fig2_resolver):
    ds = collect_contextual_data(POOL, fig2_store, fig2_resolver, 1000)
    assert len(ds.traces) == 5 and ds.revert_count == 1 and len(ds.successful) == 4
    assert ds.victim_dapp.name == "victimDApp"


def test_manipulable_functions_exclude_victim_dapp(fig2_store, fig2_resolver):
    ds = collect_contextual_data(POOL, fig2_store, fig2_resolver, 1000)
    assert find_manipulable_functions(ds, fig2_resolver) == [GET_FUNDS]
    off = BoundaryResolver.disabled(fig2_store)
    ds_off = collect_contextual_data(POOL, fig2_store, off, 1000)
    assert find_manipulable_functions(ds_off, off) == [
        FunctionRef(ORACLE, "doHardWork"), FunctionRef(ORACLE, "getPrice"), GET_FUNDS]


def test_get_funds_importance_is_nine(fig2_store, fig2_resolver):
    # three successful decrease calls, each invoking getFunds once and reading two vars in it
    ds = collect_contextual_data(POOL, fig2_store, fig2_resolver, 1000)
    (stats,) = rank_manipulable(ds, [GET_FUNDS], fig2_store)
    assert (stats.c_invoke, stats.c_read, stats.c_write, stats.importance) == (3, 6, 0, 9)
    assert stats.is_view
    assert usage_counts(ds)[FunctionRef(POOL, "decrease")]["write"] == 3


def test_ranking_ties_break_on_address_then_name():
    result, _ = run("fig2", boundaries=False)
    assert [(s.function.name, s.importance) for s in result.ranking] == [
        ("getPrice", 9), ("getFunds", 9), ("doHardWork", 6)]


def test_fig2_graph_edges_and_pruning():
    result, _ = run("fig2")
    graph = result.graphs["entryDApp"]
    assert [(e.reader.name, e.writer.name, e.var) for e in graph.edges] == [
        ("getFunds", "exitVault", "balance"), ("getRate", "exitVault", "rate")]
    assert sorted((e.reader.name, e.writer.name, rule) for e, rule in graph.pruned) == [
        ("getRate", "setRate", "access-control"),
        ("swap", "exitVault", "non-reentrant"),
        ("swap", "setRate", "access-control"),
    ]
    assert FunctionRef(VAULT, "setRate") in graph.safe


def test_fig2_single_candidate():
    result, _ = run("fig2")
    (cand,) = result.candidates
    assert (cand.entry, cand.manipulable, cand.shared_state, cand.importance) == (EXIT, GET_FUNDS, ("balance",), 9)
    assert len(cand.origin_txs) == 3


@pytest.mark.parametrize("name, rule, boundaries", [
    ("neg_owner_guard", 2, True),
    ("neg_locked_read", 3, True),
    # the keeper shares the victim's DApp, so it only becomes manipulable with boundaries off
    ("neg_guarded_callee", 4, False),
])
def test_disabling_the_responsible_rule_restores_a_candidate(name, rule, boundaries):
    assert run(name, boundaries=boundaries)[0].candidates == []
    assert run(name, disabled=(rule,), boundaries=boundaries)[0].candidates


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_disabling_rules_only_adds_edges_and_candidates(name):
    subsets = [s for n in range(4) for s in combinations((2, 3, 4), n)]
    results = {s: run(name, disabled=s)[0] for s in subsets}
    for small in subsets:
        for big in subsets:
            if set(small) <= set(big):
                a, b = results[small], results[big]
                for key, graph in a.graphs.items():
                    assert set(graph.edges) <= set(b.graphs[key].edges)
                    assert set(graph.all_edges) == set(b.graphs[key].all_edges)
                assert set(a.candidates) <= set(b.candidates)


def test_build_graph_from_contracts_directly(fig2_store):
    vault = fig2_store.contract(VAULT).ir
    full = build_intra_dapp_graph([vault], "v", disabled_rules=(2, 3, 4))
    assert full.pruned == [] and full.safe == set()
    assert len(full.edges) == 5


@pytest.mark.parametrize("name", NEGATIVES)
def test_negative_fixtures_are_handled_statically_or_dynamically(name):
    result, _ = run(name)
    # only the settled-first variant keeps its candidate for the dynamic stage to reject
    assert bool(result.candidates) == (name == "neg_settled_first")


def test_dot_rendering():
    result, store = run("fig2")
    dot = graph_to_dot(result, store)
    assert dot.startswith("digraph")
    assert "getFunds" in dot and "exitVault" in dot and "non-reentrant" in dot

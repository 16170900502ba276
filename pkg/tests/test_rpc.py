from __future__ import annotations

import pytest

from rorscan.errors import UnknownContractError, UnknownTransactionError
from rorscan.pipeline import RunConfig, run_pipeline
from rorscan.report import render_json
from rorscan.rpc import RpcChainStore, serve_snapshot

from helpers import CREATED, EOA1, POOL, VAULT, fixture_path, load_store


@pytest.fixture
def served():
    servers = []

    def start(name: str):
        local = load_store(name)
        server = serve_snapshot(local, "127.0.0.1", 0)
        servers.append(server)
        host, port = server.server_address[:2]
        return local, RpcChainStore(f"http://{host}:{port}")

    yield start
    for s in servers:
        s.shutdown()
        s.server_close()


def test_store_operations_match_local_snapshot(served):
    local, remote = served("fig2")
    assert remote.contract_addresses() == local.contract_addresses()
    assert remote.fetch_transactions_of(POOL, 3) == local.fetch_transactions_of(POOL, 3)
    assert remote.fetch_deployment_tx(VAULT) == local.fetch_deployment_tx(VAULT)
    slot = local.contract(VAULT).ir.state_vars["balance"].slot
    assert remote.fetch_storage(VAULT, slot) == 1_000_000
    assert remote.fetch_balance(VAULT) == local.fetch_balance(VAULT)
    assert remote.builders == local.builders
    assert remote.contract(VAULT).ir.functions.keys() == local.contract(VAULT).ir.functions.keys()


def test_remote_errors_map_to_local_exceptions(served):
    _, remote = served("fig2")
    with pytest.raises(UnknownContractError):
        remote.fetch_deployment_tx("0x" + "99" * 20)
    with pytest.raises(UnknownTransactionError):
        remote.fetch_internal_tx_list("0x" + "ab" * 32)


def test_internal_lists_over_rpc(served):
    local, remote = served("fig4")
    deploy = remote.fetch_deployment_tx(CREATED)
    assert remote.fetch_internal_tx_list(deploy.hash) == local.fetch_internal_tx_list(deploy.hash)
    from rorscan.boundary import find_builder

    assert find_builder(CREATED, remote) == EOA1


def test_storage_is_fetched_once_per_slot(served):
    _, remote = served("fig2")
    for _ in range(4):
        remote.fetch_storage(VAULT, 2)
    assert remote.backing_reads == 1


def test_pipeline_over_rpc_matches_snapshot_run(served):
    local, remote = served("fig2")
    via_rpc = run_pipeline(RunConfig(target="Pool", rpc_url="http://unused"), store=remote)
    via_file = run_pipeline(RunConfig(target="Pool", snapshot=fixture_path("fig2")))
    strip = lambda text: text.replace('"rpc_url": "http://unused"', '"rpc_url": null').replace(  # noqa: E731
        f'"snapshot": "{fixture_path("fig2")}"', '"snapshot": null')
    assert strip(render_json(via_rpc)) == strip(render_json(via_file))

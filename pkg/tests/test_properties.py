from __future__ import annotations

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from rorscan.boundary import BoundaryResolver
from rorscan.calldata import decode_call, encode_call
from rorscan.chain import TransactionRecord
from rorscan.ir.meta import function_meta
from rorscan.vm import PROCEED, Machine
from rorscan.words import WORD_MAX, parse_word, to_address, tx_hash_of, word_hex

from helpers import load_store

STORES = {name: load_store(name) for name in ("fig2", "fig8", "neg_guarded_callee", "neg_locked_read")}
SETTINGS = settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def _arg(ptype: str, addresses: list[str]):
    if ptype == "uint256":
        return st.one_of(st.sampled_from([0, 1, 10, 1000, WORD_MAX]), st.integers(0, WORD_MAX))
    if ptype == "address":
        return st.sampled_from(addresses)
    if ptype == "bool":
        return st.booleans()
    return st.binary(max_size=40)


@st.composite
def transactions(draw):
    name = draw(st.sampled_from(sorted(STORES)))
    store = STORES[name]
    senders = sorted({t.sender for t in store.snapshot.transactions.values()})
    addresses = senders + store.contract_addresses()
    to = draw(st.sampled_from(store.contract_addresses()))
    fn = draw(st.sampled_from(store.contract(to).ir.public_functions()))
    args = [draw(_arg(p.type, addresses)) for p in fn.params]
    value = draw(st.sampled_from([0, 1, 999, 1000, 5000])) if fn.payable else 0
    sender = draw(st.sampled_from(senders))
    tx = TransactionRecord(tx_hash_of("prop", to, fn.name, args, value, sender), sender, to, value,
                           encode_call(fn, args), 300, 1_700_003_000)
    inject = draw(st.sampled_from(sorted(store.snapshot.transactions.values(), key=lambda t: t.hash)))
    return store, tx, inject


def _check_within_meta(store, trace):
    for rec in trace.records:
        meta = function_meta(store.contract(rec.frame.address).ir, rec.frame.name)
        if rec.operation == "read":
            assert rec.var in meta.reads, rec
        elif rec.operation == "write":
            assert rec.var in meta.writes, rec
        else:
            assert rec.site in meta.sites_by_path, rec


@SETTINGS
@given(transactions())
def test_runtime_events_stay_within_static_facts(case):
    store, tx, inject = case
    injected = []

    def hook(vm, point):
        if inject.to is not None:
            injected.append(vm.execute(inject))
        return PROCEED

    trace = Machine(store, BoundaryResolver(store, store.builders)).execute(tx, hook)
    for t in [trace, *injected]:
        _check_within_meta(store, t)
    if not trace.success:
        assert trace.state_overlay == {} and trace.balance_overlay == {}


@SETTINGS
@given(transactions())
def test_replay_is_a_pure_function_of_the_transaction(case):
    store, tx, _ = case
    assert Machine(store).execute(tx).canonical() == Machine(store).execute(tx).canonical()


@SETTINGS
@given(transactions())
def test_calldata_round_trips(case):
    store, tx, _ = case
    fn, args = decode_call(store.contract(tx.to).ir, tx.calldata)
    assert encode_call(fn, list(args)) == tx.calldata


@given(st.integers(0, WORD_MAX))
def test_word_hex_round_trip(n):
    assert parse_word(word_hex(n)) == n
    assert parse_word(str(n)) == n


@given(st.binary(min_size=20, max_size=20))
def test_address_normalisation(raw):
    text = "0x" + raw.hex()
    assert to_address(text.upper().replace("0X", "0x")) == text
    assert to_address(int(text, 16)) == text

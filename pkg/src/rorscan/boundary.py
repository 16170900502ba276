"""DApp boundaries from contract-creation lineage.

A contract's builder is found by walking deployment transactions upwards:
when the deployment transaction created the contract through an internal
``create`` issued by a factory, the walk continues at the factory; otherwise
the recorded creator is the builder.  The builder is then looked up in the
builder dataset.  Anything that cannot be attributed counts as a separate,
unknown DApp.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable

from .chain import BuilderEntry, ChainStore
from .errors import BuilderCycleError
from .words import to_address


@dataclass(frozen=True)
class DAppIdentity:
    name: str | None = None  # None: Unknown

    @property
    def known(self) -> bool:
        return self.name is not None

    def __str__(self) -> str:
        return self.name if self.name is not None else "Unknown"

    def to_json(self):
        return self.name


UNKNOWN = DAppIdentity()


def find_builder(address: str, store: ChainStore) -> str:
    """Root account that deployed ``address``, directly or through factories."""
    current = to_address(address)
    seen = {current}
    while True:
        deploy = store.fetch_deployment_tx(current)
        factory = store.fetch_internal_tx_list(deploy.hash).creator_of(current)
        if factory is None:
            return deploy.sender
        if factory in seen:
            raise BuilderCycleError(f"factory chain of {address} revisits {factory}")
        if not store.is_contract(factory):
            # an EOA cannot issue an internal create, but be lenient with odd data
            return factory
        seen.add(factory)
        current = factory


class BoundaryResolver:
    """Memoized ``address -> DAppIdentity`` lookups for one run."""

    def __init__(self, store: ChainStore, builders: Iterable[BuilderEntry]) -> None:
        self.store = store
        self.table = {b.builder: b.dapp for b in builders}
        self._memo: dict[str, DAppIdentity] = {}
        self._lock = threading.Lock()

    @classmethod
    def disabled(cls, store: ChainStore) -> "BoundaryResolver":
        """Empty builder set: every contract is its own unknown DApp."""
        return cls(store, ())

    def resolve(self, address: str) -> DAppIdentity:
        address = to_address(address)
        with self._lock:
            hit = self._memo.get(address)
        if hit is not None:
            return hit
        if not self.store.is_contract(address):
            identity = UNKNOWN
        else:
            dapp = self.table.get(find_builder(address, self.store))
            identity = DAppIdentity(dapp) if dapp is not None else UNKNOWN
        with self._lock:
            self._memo[address] = identity
        return identity

    def same_dapp(self, a: str, b: str) -> bool:
        """Same only when both sides are known and carry the same label."""
        da, db = self.resolve(a), self.resolve(b)
        return da.known and db.known and da.name == db.name

    def group_key(self, address: str) -> str:
        """Label grouping contracts into DApps; unknown contracts stand alone."""
        identity = self.resolve(address)
        return identity.name if identity.known else f"?{to_address(address)}"

    def dapp_contracts(self, address: str) -> list[str]:
        """Known contracts sharing ``address``'s DApp (only itself when unknown)."""
        identity = self.resolve(address)
        if not identity.known:
            return [to_address(address)] if self.store.is_contract(address) else []
        return [a for a in self.store.contract_addresses() if self.resolve(a) == identity]


def resolve_dapp(address: str, builders: Iterable[BuilderEntry], store: ChainStore) -> DAppIdentity:
    return BoundaryResolver(store, builders).resolve(address)


def same_dapp(a: str, b: str, builders: Iterable[BuilderEntry], store: ChainStore) -> bool:
    return BoundaryResolver(store, builders).same_dapp(a, b)

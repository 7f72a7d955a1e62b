"""Co-spend address clustering.

All distinct input addresses of a transaction are assumed to be controlled by
the same actor. Coinbase and single-input transactions carry no co-spend
signal; transactions with any multisig input are skipped because the shared
control assumption breaks there; CoinJoin-shaped transactions are filtered as
false-positive sources. Merging runs through a union-find over dense address
ids, and the resulting partition names each entity after its smallest member.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable

from .chain import IdMap, RawChain, RawTransaction
from .errors import ParamError


class UnionFind:
    """Disjoint sets over 0..size-1, union by size with path compression."""

    def __init__(self, size: int):
        if size < 0:
            raise ParamError("size must be non-negative")
        self.parent = list(range(size))
        self.size = [1] * size

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: int, y: int) -> int:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return rx
        if self.size[rx] < self.size[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        self.size[rx] += self.size[ry]
        return rx


@dataclass(frozen=True, slots=True)
class EntityPartition:
    """Partition of all address ids into entities.

    entity_of[a] is the entity of address a; an entity's id is the smallest
    address id among its members, so ids are stable under evidence order.
    """

    entity_of: tuple[int, ...]
    members: dict[int, tuple[int, ...]]

    @property
    def n_addresses(self) -> int:
        return len(self.entity_of)

    @property
    def n_entities(self) -> int:
        return len(self.members)

    def entity(self, address_id: int) -> int:
        if not 0 <= address_id < len(self.entity_of):
            raise ParamError(f"address id {address_id} out of range")
        return self.entity_of[address_id]

    def members_of(self, entity_id: int) -> tuple[int, ...]:
        try:
            return self.members[entity_id]
        except KeyError:
            raise ParamError(f"unknown entity id {entity_id}") from None

    def entities(self) -> Iterable[int]:
        return sorted(self.members)


def is_coinjoin(tx: RawTransaction) -> bool:
    """Shape heuristic: with n the multiplicity of the most frequent output
    value, flag when n >= 2, there are at least n inputs, and the output
    count lies in [n, 2n]."""
    if not tx.inputs or not tx.outputs:
        return False
    n = max(Counter(slot.value for slot in tx.outputs).values())
    return n >= 2 and len(tx.inputs) >= n and n <= len(tx.outputs) <= 2 * n


CoinjoinDetector = Callable[[RawTransaction], bool]


def clustering_evidence(chain: RawChain, idmap: IdMap,
                        coinjoin_detector: CoinjoinDetector | None = is_coinjoin,
                        ) -> list[set[int]]:
    """One address-id set per transaction that carries a co-spend signal.

    Pass coinjoin_detector=None to disable the CoinJoin filter.
    """
    evidence: list[set[int]] = []
    for _, tx in chain.transactions():
        if tx.coinbase:
            continue
        if any(slot.address_type == "multisig" for slot in tx.inputs):
            continue
        if coinjoin_detector is not None and coinjoin_detector(tx):
            continue
        ids = {idmap.address_id(slot.address) for slot in tx.inputs}
        if len(ids) >= 2:
            evidence.append(ids)
    return evidence


def cluster(evidence: Iterable[Iterable[int]], universe_size: int) -> EntityPartition:
    """Merge overlapping evidence sets into entities; addresses untouched by
    evidence become singletons."""
    uf = UnionFind(universe_size)
    for group in evidence:
        ids = list(group)
        for address_id in ids:
            if not 0 <= address_id < universe_size:
                raise ParamError(f"address id {address_id} outside universe of {universe_size}")
        first = ids[0]
        for other in ids[1:]:
            uf.union(first, other)
    groups: dict[int, list[int]] = {}
    for address_id in range(universe_size):
        groups.setdefault(uf.find(address_id), []).append(address_id)
    members: dict[int, tuple[int, ...]] = {}
    entity_of = [0] * universe_size
    for group_members in groups.values():
        entity_id = min(group_members)
        members[entity_id] = tuple(sorted(group_members))
        for address_id in group_members:
            entity_of[address_id] = entity_id
    return EntityPartition(entity_of=tuple(entity_of), members=members)


def cluster_chain(chain: RawChain, idmap: IdMap,
                  coinjoin_detector: CoinjoinDetector | None = is_coinjoin,
                  ) -> EntityPartition:
    """clustering_evidence + cluster over the chain's full address universe."""
    return cluster(clustering_evidence(chain, idmap, coinjoin_detector), idmap.n_addresses)

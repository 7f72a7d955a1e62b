"""Entity property graph: the address graph aggregated over the clustering
partition.

Node statistics are sums (counts, amounts) and extremes (first/last activity)
over the member addresses. Counterparty counts are at entity granularity and
exclude the entity itself, while self-edges stay in the edge table so value
flows are never dropped. Each entity edge counts a transaction once no matter
how many address pairs it touched, and edges whose distinct transaction count
exceeds the cap carry no transaction list at all.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction

from .addrgraph import AddressGraph, TxRef
from .cluster import EntityPartition
from .errors import PartitionGap, UnknownId
from .tagpack import TagStore

TX_LIST_CAP = 100


@dataclass(frozen=True, slots=True)
class EntityNode:
    entity_id: int
    n_addresses: int
    deposits: int
    withdrawals: int
    depositing_entities: int
    withdrawing_entities: int
    coins_received: int
    coins_spent: int
    balance: int
    first_tx: TxRef
    last_tx: TxRef
    activity_period: int
    tag_coherence: float | None = None
    received_usd: Decimal | None = None
    received_eur: Decimal | None = None
    spent_usd: Decimal | None = None
    spent_eur: Decimal | None = None


@dataclass(frozen=True, slots=True)
class EntityEdge:
    src: int
    dst: int
    estimated_value: Fraction
    n_transactions: int
    tx_list: tuple[int, ...] | None
    value_usd: Decimal | None = None
    value_eur: Decimal | None = None


class EntityGraph:
    """Immutable entity node/edge tables with id-based lookup."""

    def __init__(self, nodes: tuple[EntityNode, ...], edges: tuple[EntityEdge, ...]):
        self.nodes = nodes
        self.edges = edges
        self._node_by_id = {n.entity_id: n for n in nodes}
        self._edge_by_pair = {(e.src, e.dst): e for e in edges}

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def node(self, entity_id: int) -> EntityNode:
        try:
            return self._node_by_id[entity_id]
        except KeyError:
            raise UnknownId(f"unknown entity id: {entity_id}") from None

    def edge(self, src: int, dst: int) -> EntityEdge:
        try:
            return self._edge_by_pair[(src, dst)]
        except KeyError:
            raise UnknownId(f"no edge {src}->{dst}") from None

    def has_edge(self, src: int, dst: int) -> bool:
        return (src, dst) in self._edge_by_pair


def levenshtein(a: str, b: str) -> int:
    """Edit distance (insert/delete/substitute, unit costs)."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ch_a in enumerate(a, start=1):
        current = [i]
        for j, ch_b in enumerate(b, start=1):
            cost = 0 if ch_a == ch_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def label_similarity(x: str, y: str) -> Fraction:
    """1 - distance/max-length, so identical strings score 1."""
    if x == y:
        return Fraction(1)
    longest = max(len(x), len(y))
    if longest == 0:
        return Fraction(1)
    return 1 - Fraction(levenshtein(x, y), longest)


def tag_coherence(members: tuple[int, ...], tagstore: TagStore | None) -> float | None:
    """Mean pairwise similarity of the distinct normalized labels tagged onto
    the member addresses; None when no member carries a tag."""
    if tagstore is None:
        return None
    labels = sorted({tag.normalized_label
                     for address_id in members
                     for tag in tagstore.for_address(address_id)})
    if not labels:
        return None
    if len(labels) == 1:
        return 1.0
    total = Fraction(0)
    pairs = 0
    for i, x in enumerate(labels):
        for y in labels[i + 1:]:
            total += label_similarity(x, y)
            pairs += 1
    return float(total / pairs)


class _EdgeAcc:
    # Exact values accumulate as per-denominator integer sums; adding reduced
    # fractions directly would grind on gcd once denominators diverge.
    __slots__ = ("parts", "tx_ids", "usd", "eur")

    def __init__(self) -> None:
        self.parts: dict[int, int] = {}
        self.tx_ids: set[int] = set()
        self.usd = Decimal(0)
        self.eur = Decimal(0)

    def add_value(self, value: Fraction) -> None:
        den = value.denominator
        self.parts[den] = self.parts.get(den, 0) + value.numerator

    def value(self) -> Fraction:
        # Balanced pairwise summation keeps gcd operands similarly sized.
        terms = [Fraction(num, den) for den, num in sorted(self.parts.items())]
        while len(terms) > 1:
            paired = [terms[i] + terms[i + 1] for i in range(0, len(terms) - 1, 2)]
            if len(terms) % 2:
                paired.append(terms[-1])
            terms = paired
        return terms[0] if terms else Fraction(0)


def build_entity_graph(addr_graph: AddressGraph, partition: EntityPartition,
                       tagstore: TagStore | None = None) -> EntityGraph:
    """Group address nodes and edges by entity. Raises PartitionGap when the
    partition does not cover every address node."""
    for node in addr_graph.nodes:
        if node.address_id >= partition.n_addresses:
            raise PartitionGap(f"address {node.address_id} has no entity")

    sample = addr_graph.nodes[0] if addr_graph.nodes else None
    with_usd = sample is not None and sample.received_usd is not None
    with_eur = sample is not None and sample.received_eur is not None

    edges: dict[tuple[int, int], _EdgeAcc] = {}
    for edge in addr_graph.edges:
        key = (partition.entity(edge.src), partition.entity(edge.dst))
        acc = edges.get(key)
        if acc is None:
            acc = edges[key] = _EdgeAcc()
        acc.add_value(edge.estimated_value)
        acc.tx_ids.update(edge.tx_list)
        if with_usd:
            acc.usd += edge.value_usd
        if with_eur:
            acc.eur += edge.value_eur

    in_sets: dict[int, set[int]] = {}
    out_sets: dict[int, set[int]] = {}
    for src, dst in edges:
        if src != dst:
            out_sets.setdefault(src, set()).add(dst)
            in_sets.setdefault(dst, set()).add(src)

    node_rows = []
    for entity_id in partition.entities():
        members = partition.members_of(entity_id)
        nodes = [addr_graph.node(a) for a in members]
        first = min((n.first_tx for n in nodes), key=lambda r: r.tx_id)
        last = max((n.last_tx for n in nodes), key=lambda r: r.tx_id)
        node_rows.append(EntityNode(
            entity_id=entity_id,
            n_addresses=len(members),
            deposits=sum(n.deposits for n in nodes),
            withdrawals=sum(n.withdrawals for n in nodes),
            depositing_entities=len(in_sets.get(entity_id, ())),
            withdrawing_entities=len(out_sets.get(entity_id, ())),
            coins_received=sum(n.coins_received for n in nodes),
            coins_spent=sum(n.coins_spent for n in nodes),
            balance=sum(n.balance for n in nodes),
            first_tx=first,
            last_tx=last,
            activity_period=last.timestamp - first.timestamp,
            tag_coherence=tag_coherence(members, tagstore),
            received_usd=sum(n.received_usd for n in nodes) if with_usd else None,
            received_eur=sum(n.received_eur for n in nodes) if with_eur else None,
            spent_usd=sum(n.spent_usd for n in nodes) if with_usd else None,
            spent_eur=sum(n.spent_eur for n in nodes) if with_eur else None,
        ))

    edge_rows = []
    for (src, dst) in sorted(edges):
        acc = edges[(src, dst)]
        n_transactions = len(acc.tx_ids)
        edge_rows.append(EntityEdge(
            src=src,
            dst=dst,
            estimated_value=acc.value(),
            n_transactions=n_transactions,
            tx_list=tuple(sorted(acc.tx_ids)) if n_transactions <= TX_LIST_CAP else None,
            value_usd=acc.usd if with_usd else None,
            value_eur=acc.eur if with_eur else None,
        ))
    return EntityGraph(nodes=tuple(node_rows), edges=tuple(edge_rows))

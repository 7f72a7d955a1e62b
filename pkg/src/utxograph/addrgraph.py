"""Address property graph: per-address statistics and value-weighted edges.

Exact transfer amounts between addresses are unknowable in a UTXO ledger, so
edge values use proportional attribution: each output is split across the
inputs in proportion to their share of the total input value, with inputs
aggregated per distinct address first. Per-edge sums are kept as exact
rationals (one integer numerator per distinct denominator) and only rounded
when persisted, so value conservation holds exactly in memory.
"""

from __future__ import annotations

import datetime as dt
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction

from .chain import IdMap, RawBlock, RawChain, RawTransaction
from .errors import MissingRate, UnknownId, ValidationError
from .rates import BASE_UNITS_PER_COIN, RateTable

FIAT_CURRENCIES = ("USD", "EUR")


@dataclass(frozen=True, slots=True)
class TxRef:
    tx_id: int
    timestamp: int


@dataclass(frozen=True, slots=True)
class AddressNode:
    address_id: int
    deposits: int
    withdrawals: int
    depositing_addresses: int
    withdrawing_addresses: int
    coins_received: int
    coins_spent: int
    balance: int
    first_tx: TxRef
    last_tx: TxRef
    activity_period: int
    received_usd: Decimal | None = None
    received_eur: Decimal | None = None
    spent_usd: Decimal | None = None
    spent_eur: Decimal | None = None


@dataclass(frozen=True, slots=True)
class AddressEdge:
    src: int
    dst: int
    estimated_value: Fraction
    tx_list: tuple[int, ...]
    value_usd: Decimal | None = None
    value_eur: Decimal | None = None

    @property
    def n_transactions(self) -> int:
        return len(self.tx_list)


def round_value(value: Fraction) -> int:
    """Half-even rounding of an exact rational to integer base units."""
    floor, remainder = divmod(value.numerator, value.denominator)
    doubled = 2 * remainder
    if doubled > value.denominator or (doubled == value.denominator and floor % 2):
        return floor + 1
    return floor


class AddressGraph:
    """Immutable node/edge tables with id-based lookup."""

    def __init__(self, nodes: tuple[AddressNode, ...], edges: tuple[AddressEdge, ...]):
        self.nodes = nodes
        self.edges = edges
        self._node_by_id = {n.address_id: n for n in nodes}
        self._edge_by_pair = {(e.src, e.dst): e for e in edges}

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def node(self, address_id: int) -> AddressNode:
        try:
            return self._node_by_id[address_id]
        except KeyError:
            raise UnknownId(f"unknown address id: {address_id}") from None

    def edge(self, src: int, dst: int) -> AddressEdge:
        try:
            return self._edge_by_pair[(src, dst)]
        except KeyError:
            raise UnknownId(f"no edge {src}->{dst}") from None

    def has_edge(self, src: int, dst: int) -> bool:
        return (src, dst) in self._edge_by_pair


def attribute_values(tx: RawTransaction) -> list[tuple[str, str, Fraction]]:
    """Proportional attribution per ordered (input address, output address)
    pair. Coinbase txs yield nothing; every pair is listed even when its
    attributed value is zero (zero-value outputs still mark counterparties)."""
    if tx.coinbase:
        return []
    in_totals: dict[str, int] = {}
    for slot in tx.inputs:
        in_totals[slot.address] = in_totals.get(slot.address, 0) + slot.value
    out_totals: dict[str, int] = {}
    for slot in tx.outputs:
        out_totals[slot.address] = out_totals.get(slot.address, 0) + slot.value
    total_in = sum(in_totals.values())
    pairs = []
    for src, v_in in in_totals.items():
        for dst, v_out in out_totals.items():
            if total_in == 0:
                share = Fraction(0)
            else:
                share = Fraction(v_out * v_in, total_in)
            pairs.append((src, dst, share))
    return pairs


def _day(timestamp: int) -> str:
    return dt.datetime.fromtimestamp(timestamp, tz=dt.timezone.utc).date().isoformat()


class _FiatContext:
    """Pre-resolved per-day rates for the currencies actually enabled."""

    def __init__(self, currencies: tuple[str, ...], usd_by_day: dict[str, Decimal],
                 fx_usd_by_day: dict[str, Decimal]):
        self.currencies = currencies
        self.usd_by_day = usd_by_day
        self.fx_usd_by_day = fx_usd_by_day

    def usd(self, value: Fraction | int, day: str) -> Decimal:
        with localcontext() as ctx:
            ctx.prec = 50
            if isinstance(value, Fraction):
                amount = Decimal(value.numerator) / Decimal(value.denominator)
            else:
                amount = Decimal(value)
            return amount / BASE_UNITS_PER_COIN * self.usd_by_day[day]

    def eur(self, usd_amount: Decimal, day: str) -> Decimal:
        with localcontext() as ctx:
            ctx.prec = 50
            return usd_amount / self.fx_usd_by_day[day]


def _resolve_fiat(chain: RawChain, rates: RateTable | None, fiat: bool | None,
                  asset: str) -> _FiatContext | None:
    if fiat is False or rates is None:
        if fiat is True:
            raise MissingRate(asset, _day(chain.blocks[0].timestamp) if chain.blocks else "?", None)
        return None
    days = sorted({_day(b.timestamp) for b in chain.blocks if b.transactions})
    if not days:
        return None
    usd_by_day: dict[str, Decimal] = {}
    fx_by_day: dict[str, Decimal] = {}
    usd_ok = True
    fx_ok = True
    for day in days:
        if (day, asset) in rates.usd:
            usd_by_day[day] = rates.usd[(day, asset)]
        else:
            usd_ok = False
        if (day, "USD") in rates.fx:
            fx_by_day[day] = rates.fx[(day, "USD")]
        else:
            fx_ok = False
    if fiat is True:
        # Force the informative error with the nearest-date hint.
        if not usd_ok:
            missing = next(d for d in days if (d, asset) not in rates.usd)
            rates.usd_rate(missing, asset)
        if not fx_ok:
            missing = next(d for d in days if (d, "USD") not in rates.fx)
            rates.fx_rate(missing, "USD")
    if not usd_ok:
        return None
    currencies = FIAT_CURRENCIES if fx_ok else ("USD",)
    return _FiatContext(currencies, usd_by_day, fx_by_day)


class _NodeAcc:
    __slots__ = ("deposits", "withdrawals", "received", "spent",
                 "first", "last", "received_usd", "received_eur", "spent_usd", "spent_eur")

    def __init__(self) -> None:
        self.deposits = 0
        self.withdrawals = 0
        self.received = 0
        self.spent = 0
        self.first: TxRef | None = None
        self.last: TxRef | None = None
        self.received_usd = Decimal(0)
        self.received_eur = Decimal(0)
        self.spent_usd = Decimal(0)
        self.spent_eur = Decimal(0)

    def touch(self, ref: TxRef) -> None:
        if self.first is None or ref.tx_id < self.first.tx_id:
            self.first = ref
        if self.last is None or ref.tx_id > self.last.tx_id:
            self.last = ref

    def merge(self, other: "_NodeAcc") -> None:
        self.deposits += other.deposits
        self.withdrawals += other.withdrawals
        self.received += other.received
        self.spent += other.spent
        if other.first is not None:
            self.touch(other.first)
        if other.last is not None:
            self.touch(other.last)
        self.received_usd += other.received_usd
        self.received_eur += other.received_eur
        self.spent_usd += other.spent_usd
        self.spent_eur += other.spent_eur


class _EdgeAcc:
    __slots__ = ("parts", "tx_ids", "usd", "eur")

    def __init__(self) -> None:
        # Exact rational sum as {denominator: summed numerator}.
        self.parts: dict[int, int] = {}
        self.tx_ids: list[int] = []
        self.usd = Decimal(0)
        self.eur = Decimal(0)

    def add(self, share: Fraction) -> None:
        den = share.denominator
        self.parts[den] = self.parts.get(den, 0) + share.numerator

    def total(self) -> Fraction:
        return sum((Fraction(num, den) for den, num in self.parts.items()), Fraction(0))

    def merge(self, other: "_EdgeAcc") -> None:
        for den, num in other.parts.items():
            self.parts[den] = self.parts.get(den, 0) + num
        self.tx_ids.extend(other.tx_ids)
        self.usd += other.usd
        self.eur += other.eur


def _aggregate_blocks(blocks: tuple[RawBlock, ...], idmap: IdMap,
                      fiat: _FiatContext | None,
                      ) -> tuple[dict[int, _NodeAcc], dict[tuple[int, int], _EdgeAcc]]:
    nodes: dict[int, _NodeAcc] = {}
    edges: dict[tuple[int, int], _EdgeAcc] = {}

    def acc(address_id: int) -> _NodeAcc:
        node = nodes.get(address_id)
        if node is None:
            node = nodes[address_id] = _NodeAcc()
        return node

    for block in blocks:
        day = _day(block.timestamp) if fiat else ""
        for tx in block.transactions:
            tx_id = idmap.tx_id(tx.hash)
            ref = TxRef(tx_id=tx_id, timestamp=block.timestamp)

            recv: dict[str, int] = {}
            for slot in tx.outputs:
                recv[slot.address] = recv.get(slot.address, 0) + slot.value
            for address, value in recv.items():
                node = acc(idmap.address_id(address))
                node.deposits += 1
                node.received += value
                node.touch(ref)
                if fiat:
                    usd = fiat.usd(value, day)
                    node.received_usd += usd
                    if "EUR" in fiat.currencies:
                        node.received_eur += fiat.eur(usd, day)

            if tx.coinbase:
                continue

            spend: dict[str, int] = {}
            for slot in tx.inputs:
                spend[slot.address] = spend.get(slot.address, 0) + slot.value
            for address, value in spend.items():
                node = acc(idmap.address_id(address))
                node.withdrawals += 1
                node.spent += value
                node.touch(ref)
                if fiat:
                    usd = fiat.usd(value, day)
                    node.spent_usd += usd
                    if "EUR" in fiat.currencies:
                        node.spent_eur += fiat.eur(usd, day)

            for src, dst, share in attribute_values(tx):
                key = (idmap.address_id(src), idmap.address_id(dst))
                edge = edges.get(key)
                if edge is None:
                    edge = edges[key] = _EdgeAcc()
                edge.add(share)
                edge.tx_ids.append(tx_id)
                if fiat:
                    usd = fiat.usd(share, day)
                    edge.usd += usd
                    if "EUR" in fiat.currencies:
                        edge.eur += fiat.eur(usd, day)
    return nodes, edges


def _chunk(blocks: tuple[RawBlock, ...], workers: int) -> list[tuple[RawBlock, ...]]:
    if workers <= 1 or len(blocks) <= 1:
        return [blocks]
    n = min(workers, len(blocks))
    size, extra = divmod(len(blocks), n)
    chunks = []
    start = 0
    for i in range(n):
        end = start + size + (1 if i < extra else 0)
        chunks.append(blocks[start:end])
        start = end
    return chunks


def build_address_graph(chain: RawChain, idmap: IdMap, rates: RateTable | None = None,
                        *, fiat: bool | None = None, asset: str = "BTC",
                        workers: int = 1) -> AddressGraph:
    """Aggregate the chain into node and edge tables.

    Fiat columns appear when the rate table covers every block day (or are
    forced with fiat=True, raising MissingRate on the first gap). Work splits
    over contiguous block ranges; partial aggregates merge in chain order, so
    the result is independent of the worker count.
    """
    fiat_ctx = _resolve_fiat(chain, rates, fiat, asset)
    chunks = _chunk(chain.blocks, workers)
    if len(chunks) == 1:
        nodes, edges = _aggregate_blocks(chunks[0], idmap, fiat_ctx)
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            partials = list(pool.map(lambda c: _aggregate_blocks(c, idmap, fiat_ctx), chunks))
        nodes, edges = partials[0]
        for part_nodes, part_edges in partials[1:]:
            for address_id, node in part_nodes.items():
                if address_id in nodes:
                    nodes[address_id].merge(node)
                else:
                    nodes[address_id] = node
            for key, edge in part_edges.items():
                if key in edges:
                    edges[key].merge(edge)
                else:
                    edges[key] = edge

    in_counts: dict[int, int] = {}
    out_counts: dict[int, int] = {}
    for src, dst in edges:
        out_counts[src] = out_counts.get(src, 0) + 1
        in_counts[dst] = in_counts.get(dst, 0) + 1

    node_rows = []
    for address_id in range(idmap.n_addresses):
        node = nodes[address_id]
        if node.deposits < 1:
            raise ValidationError("unfunded spend", detail=idmap.addresses[address_id])
        balance = node.received - node.spent
        if balance < 0:
            raise ValidationError("overdraft", detail=idmap.addresses[address_id])
        assert node.first is not None and node.last is not None
        with_fiat = fiat_ctx is not None
        with_eur = with_fiat and "EUR" in fiat_ctx.currencies
        node_rows.append(AddressNode(
            address_id=address_id,
            deposits=node.deposits,
            withdrawals=node.withdrawals,
            depositing_addresses=in_counts.get(address_id, 0),
            withdrawing_addresses=out_counts.get(address_id, 0),
            coins_received=node.received,
            coins_spent=node.spent,
            balance=balance,
            first_tx=node.first,
            last_tx=node.last,
            activity_period=node.last.timestamp - node.first.timestamp,
            received_usd=node.received_usd if with_fiat else None,
            received_eur=node.received_eur if with_eur else None,
            spent_usd=node.spent_usd if with_fiat else None,
            spent_eur=node.spent_eur if with_eur else None,
        ))

    edge_rows = []
    for (src, dst) in sorted(edges):
        edge = edges[(src, dst)]
        with_fiat = fiat_ctx is not None
        with_eur = with_fiat and "EUR" in fiat_ctx.currencies
        edge_rows.append(AddressEdge(
            src=src,
            dst=dst,
            estimated_value=edge.total(),
            tx_list=tuple(edge.tx_ids),
            value_usd=edge.usd if with_fiat else None,
            value_eur=edge.eur if with_eur else None,
        ))
    return AddressGraph(nodes=tuple(node_rows), edges=tuple(edge_rows))

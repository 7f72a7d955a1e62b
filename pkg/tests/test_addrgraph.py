"""Address graph construction: attribution arithmetic and node/edge stats."""

from __future__ import annotations

from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from utxograph.addrgraph import attribute_values, build_address_graph, round_value
from utxograph.chain import (
    RawBlock,
    RawChain,
    RawTransaction,
    TxSlot,
    assign_ids,
    generate_chain,
)
from utxograph.errors import MissingRate, UnknownId, ValidationError
from utxograph.rates import RateTable

C = 10**8
T0 = 1_600_000_000  # falls on 2020-09-13 UTC
DAY0 = "2020-09-13"


def _hex(n: int) -> str:
    return format(n, "064x")


def _tx(n, inputs, outputs, coinbase=False):
    return RawTransaction(
        hash=_hex(n),
        inputs=tuple(TxSlot(a, v) for a, v in inputs),
        outputs=tuple(TxSlot(a, v) for a, v in outputs),
        coinbase=coinbase,
    )


def _chain(*tx_groups) -> RawChain:
    blocks = []
    for height, txs in enumerate(tx_groups):
        blocks.append(RawBlock(height=height, hash=_hex(10_000 + height),
                               timestamp=T0 + 600 * height, transactions=tuple(txs)))
    return RawChain(blocks=tuple(blocks))


def _graph(chain, **kwargs):
    return build_address_graph(chain, assign_ids(chain), **kwargs)


# -- attribution --------------------------------------------------------------

def test_single_path_gets_full_output():
    tx = _tx(1, [("A", 10)], [("B", 9)])
    assert attribute_values(tx) == [("A", "B", Fraction(9))]


def test_proportional_split():
    tx = _tx(1, [("A", 6), ("B", 4)], [("C", 5), ("D", 4)])
    assert dict(((s, d), v) for s, d, v in attribute_values(tx)) == {
        ("A", "C"): Fraction(3),
        ("A", "D"): Fraction(12, 5),
        ("B", "C"): Fraction(2),
        ("B", "D"): Fraction(8, 5),
    }


def test_self_transfer_is_a_loop():
    tx = _tx(1, [("A", 10)], [("A", 9)])
    assert attribute_values(tx) == [("A", "A", Fraction(9))]


def test_coinbase_attributes_nothing():
    assert attribute_values(_tx(1, [], [("A", 50 * C)], coinbase=True)) == []


def test_inputs_aggregate_per_distinct_address():
    # A appearing twice acts as one input of 10, not two of 5.
    split = _tx(1, [("A", 5), ("A", 5), ("B", 10)], [("C", 18)])
    merged = _tx(1, [("A", 10), ("B", 10)], [("C", 18)])
    assert attribute_values(split) == attribute_values(merged)


def test_zero_value_output_still_marks_counterparty():
    tx = _tx(1, [("A", 10)], [("B", 0), ("C", 9)])
    assert ("A", "B", Fraction(0)) in attribute_values(tx)


slots = st.lists(
    st.tuples(st.sampled_from("abcdef"), st.integers(min_value=0, max_value=10**10)),
    min_size=1, max_size=5,
)


@given(inputs=slots, outputs=slots)
def test_attribution_conserves_output_total(inputs, outputs):
    tx = _tx(1, inputs, outputs)
    total_out = sum(v for _, v in outputs)
    if sum(v for _, v in inputs) == 0:
        total_out = 0
    assert sum((v for _, _, v in attribute_values(tx)), Fraction(0)) == total_out


@pytest.mark.parametrize(
    ("value", "expected"),
    [(Fraction(5), 5), (Fraction(5, 2), 2), (Fraction(7, 2), 4),
     (Fraction(12, 5), 2), (Fraction(13, 5), 3), (Fraction(0), 0)],
)
def test_round_value_is_half_even(value, expected):
    assert round_value(value) == expected


# -- node statistics ----------------------------------------------------------

def test_lone_coinbase_output():
    graph = _graph(_chain([_tx(1, [], [("A", 50 * C)], coinbase=True)]))
    assert graph.n_nodes == 1
    assert graph.n_edges == 0
    node = graph.node(0)
    assert node.deposits == 1
    assert node.withdrawals == 0
    assert node.coins_received == 50 * C
    assert node.coins_spent == 0
    assert node.balance == 50 * C
    assert node.first_tx == node.last_tx
    assert node.activity_period == 0


def test_repeated_payment_aggregates_on_one_edge():
    chain = _chain(
        [_tx(1, [], [("A", 10 * C)], coinbase=True)],
        [_tx(2, [], [("X", 50 * C)], coinbase=True),
         _tx(3, [("A", 4 * C)], [("B", 4 * C)])],
        [_tx(4, [], [("X", 50 * C)], coinbase=True),
         _tx(5, [("A", 6 * C)], [("B", 5 * C)])],
    )
    graph = _graph(chain)
    idmap = assign_ids(chain)
    edge = graph.edge(idmap.address_id("A"), idmap.address_id("B"))
    assert edge.n_transactions == 2
    assert len(edge.tx_list) == 2
    assert edge.estimated_value == Fraction(9 * C)
    assert list(edge.tx_list) == sorted(edge.tx_list)


def test_deposits_count_transactions_not_outputs():
    # Two outputs to A in one tx are a single deposit.
    chain = _chain([_tx(1, [], [("A", 30 * C), ("A", 20 * C)], coinbase=True)])
    node = _graph(chain).node(0)
    assert node.deposits == 1
    assert node.coins_received == 50 * C


def test_counterparty_counts_match_edge_sets():
    chain = _chain(
        [_tx(1, [], [("A", 10 * C)], coinbase=True)],
        [_tx(2, [], [("X", 50 * C)], coinbase=True),
         _tx(3, [("A", 10 * C)], [("B", 5 * C), ("C", 4 * C)])],
    )
    graph = _graph(chain)
    idmap = assign_ids(chain)
    a = graph.node(idmap.address_id("A"))
    assert a.withdrawing_addresses == 2
    assert a.depositing_addresses == 0
    b = graph.node(idmap.address_id("B"))
    assert b.depositing_addresses == 1
    assert b.deposits == 1


def test_zero_value_output_creates_edge_and_counterparty():
    chain = _chain(
        [_tx(1, [], [("A", 10 * C)], coinbase=True)],
        [_tx(2, [], [("X", 50 * C)], coinbase=True),
         _tx(3, [("A", 10 * C)], [("B", 0), ("C", 9 * C)])],
    )
    graph = _graph(chain)
    idmap = assign_ids(chain)
    edge = graph.edge(idmap.address_id("A"), idmap.address_id("B"))
    assert edge.estimated_value == 0
    assert graph.node(idmap.address_id("B")).depositing_addresses == 1


def test_first_last_and_activity_period():
    chain = _chain(
        [_tx(1, [], [("A", 10 * C)], coinbase=True)],
        [_tx(2, [], [("X", 50 * C)], coinbase=True)],
        [_tx(3, [], [("Y", 50 * C)], coinbase=True),
         _tx(4, [("A", 10 * C)], [("B", 9 * C)])],
    )
    graph = _graph(chain)
    idmap = assign_ids(chain)
    a = graph.node(idmap.address_id("A"))
    assert a.first_tx.timestamp == T0
    assert a.last_tx.timestamp == T0 + 1200
    assert a.activity_period == 1200
    assert a.first_tx.tx_id != a.last_tx.tx_id


def test_unfunded_spend_rejected():
    chain = _chain(
        [_tx(1, [], [("X", 50 * C)], coinbase=True),
         _tx(2, [("GHOST", 10 * C)], [("B", 9 * C)])],
    )
    with pytest.raises(ValidationError) as exc:
        _graph(chain)
    assert exc.value.rule == "unfunded spend"


def test_overdraft_rejected():
    chain = _chain(
        [_tx(1, [], [("A", 10 * C)], coinbase=True)],
        [_tx(2, [], [("X", 50 * C)], coinbase=True),
         _tx(3, [("A", 20 * C)], [("B", 19 * C)])],
    )
    with pytest.raises(ValidationError) as exc:
        _graph(chain)
    assert exc.value.rule == "overdraft"


def test_unknown_lookups_raise():
    graph = _graph(_chain([_tx(1, [], [("A", 50 * C)], coinbase=True)]))
    with pytest.raises(UnknownId):
        graph.node(99)
    with pytest.raises(UnknownId):
        graph.edge(0, 0)


# -- whole-chain invariants ---------------------------------------------------

def test_conservation_on_synthetic_chain():
    chain = generate_chain(11, blocks=25, txs_per_block=20, address_pool=300,
                           reuse_rate=0.4, coinjoin_rate=0.1)
    assert chain.n_transactions >= 500
    graph = _graph(chain)
    total_edges = sum((e.estimated_value for e in graph.edges), Fraction(0))
    total_outputs = sum(tx.total_output for _, tx in chain.transactions() if not tx.coinbase)
    assert total_edges == total_outputs


def test_per_tx_conservation_within_rounding():
    chain = generate_chain(12, blocks=10, txs_per_block=10, address_pool=150,
                           reuse_rate=0.4, coinjoin_rate=0.1)
    for _, tx in chain.transactions():
        if tx.coinbase:
            continue
        shares = attribute_values(tx)
        assert sum((v for _, _, v in shares), Fraction(0)) == tx.total_output
        rounded = sum(round_value(v) for _, _, v in shares)
        assert abs(rounded - tx.total_output) <= len(shares)


def test_degree_consistency_on_synthetic_chain():
    chain = generate_chain(13, blocks=15, txs_per_block=8, address_pool=200,
                           reuse_rate=0.5, coinjoin_rate=0.0)
    graph = _graph(chain)
    in_sets: dict[int, set[int]] = {}
    out_sets: dict[int, set[int]] = {}
    for e in graph.edges:
        out_sets.setdefault(e.src, set()).add(e.dst)
        in_sets.setdefault(e.dst, set()).add(e.src)
    for node in graph.nodes:
        assert node.depositing_addresses == len(in_sets.get(node.address_id, ()))
        assert node.withdrawing_addresses == len(out_sets.get(node.address_id, ()))
        assert node.deposits >= 1
        assert node.balance == node.coins_received - node.coins_spent
        assert node.balance >= 0
        assert node.activity_period >= 0


def test_global_balance_matches_flow_oracle():
    chain = generate_chain(14, blocks=12, txs_per_block=6, address_pool=100,
                           reuse_rate=0.5, coinjoin_rate=0.1)
    graph = _graph(chain)
    outputs = sum(tx.total_output for _, tx in chain.transactions())
    inputs = sum(tx.total_input for _, tx in chain.transactions())
    assert sum(n.balance for n in graph.nodes) == outputs - inputs


def test_build_is_deterministic_and_worker_independent():
    chain = generate_chain(15, blocks=16, txs_per_block=6, address_pool=120,
                           reuse_rate=0.5, coinjoin_rate=0.1)
    idmap = assign_ids(chain)
    one = build_address_graph(chain, idmap)
    again = build_address_graph(chain, idmap)
    four = build_address_graph(chain, idmap, workers=4)
    assert one.nodes == again.nodes == four.nodes
    assert one.edges == again.edges == four.edges


@settings(deadline=None, max_examples=20)
@given(workers=st.integers(min_value=1, max_value=8))
def test_any_worker_count_agrees(workers):
    chain = generate_chain(16, blocks=8, txs_per_block=4, address_pool=60,
                           reuse_rate=0.5, coinjoin_rate=0.0)
    idmap = assign_ids(chain)
    base = build_address_graph(chain, idmap)
    other = build_address_graph(chain, idmap, workers=workers)
    assert base.nodes == other.nodes and base.edges == other.edges


# -- fiat columns -------------------------------------------------------------

def _rates(usd="100", fx_usd="1.25") -> RateTable:
    t = RateTable()
    t.usd[(DAY0, "BTC")] = Decimal(usd)
    if fx_usd:
        t.fx[(DAY0, "USD")] = Decimal(fx_usd)
    return t


def test_fiat_columns_present_when_rates_cover_chain():
    chain = _chain([_tx(1, [], [("A", 50 * C)], coinbase=True)])
    graph = _graph(chain, rates=_rates())
    node = graph.node(0)
    assert node.received_usd == Decimal("5000")
    assert node.received_eur == Decimal("4000")
    assert node.spent_usd == Decimal("0")


def test_fiat_absent_without_rates():
    chain = _chain([_tx(1, [], [("A", 50 * C)], coinbase=True)])
    node = _graph(chain).node(0)
    assert node.received_usd is None
    assert node.received_eur is None


def test_usd_only_when_fx_missing():
    chain = _chain([_tx(1, [], [("A", 50 * C)], coinbase=True)])
    node = _graph(chain, rates=_rates(fx_usd=None)).node(0)
    assert node.received_usd == Decimal("5000")
    assert node.received_eur is None


def test_edge_fiat_value():
    chain = _chain(
        [_tx(1, [], [("A", 10 * C)], coinbase=True)],
        [_tx(2, [], [("X", 50 * C)], coinbase=True),
         _tx(3, [("A", 10 * C)], [("B", 9 * C)])],
    )
    graph = _graph(chain, rates=_rates())
    idmap = assign_ids(chain)
    edge = graph.edge(idmap.address_id("A"), idmap.address_id("B"))
    assert edge.value_usd == Decimal("900")
    assert edge.value_eur == Decimal("720")


def test_forced_fiat_without_coverage_raises_with_hint():
    chain = _chain([_tx(1, [], [("A", 50 * C)], coinbase=True)])
    rates = RateTable()
    rates.usd[("2020-09-20", "BTC")] = Decimal("100")
    with pytest.raises(MissingRate) as exc:
        _graph(chain, rates=rates, fiat=True)
    assert exc.value.date == DAY0
    assert exc.value.nearest == "2020-09-20"


def test_partial_coverage_disables_fiat_silently():
    two_days_apart = RawChain(blocks=(
        RawBlock(height=0, hash=_hex(10_000), timestamp=T0,
                 transactions=(_tx(1, [], [("A", 50 * C)], coinbase=True),)),
        RawBlock(height=1, hash=_hex(10_001), timestamp=T0 + 86_400,
                 transactions=(_tx(2, [], [("B", 50 * C)], coinbase=True),)),
    ))
    graph = _graph(two_days_apart, rates=_rates())
    assert graph.node(0).received_usd is None

"""Shared fixture builders for the test suite."""

from __future__ import annotations

from pathlib import Path

from utxograph.addrgraph import build_address_graph
from utxograph.chain import RawBlock, RawChain, RawTransaction, TxSlot, assign_ids
from utxograph.cluster import cluster_chain
from utxograph.entitygraph import build_entity_graph
from utxograph.store import (
    chain_tables,
    graph_tables,
    keyspace_stats,
    rates_table,
    summary_table,
    tags_table,
    write_keyspace,
)

C = 10**8
T0 = 1_600_000_000  # 2020-09-13 UTC


def hx(n: int) -> str:
    return format(n, "064x")


def tx(n, inputs, outputs, coinbase=False):
    return RawTransaction(
        hash=hx(n),
        inputs=tuple(TxSlot(a, v) for a, v in inputs),
        outputs=tuple(TxSlot(a, v) for a, v in outputs),
        coinbase=coinbase,
    )


def chain_of(*tx_groups) -> RawChain:
    blocks = []
    for height, txs in enumerate(tx_groups):
        blocks.append(RawBlock(height=height, hash=hx(10_000 + height),
                               timestamp=T0 + 600 * height, transactions=tuple(txs)))
    return RawChain(blocks=tuple(blocks))


def cospend_chain() -> RawChain:
    """a1+a2 co-spend into a4, a1 alone pays a3: entities {a1,a2},{a4},{a3}."""
    return chain_of(
        [tx(1, [], [("a1", 50 * C)], coinbase=True)],
        [tx(2, [], [("a2", 50 * C)], coinbase=True)],
        [tx(3, [], [("a1", 10 * C)], coinbase=True),
         tx(4, [("a1", 50 * C), ("a2", 50 * C)], [("a4", 999 * C // 10)])],
        [tx(5, [], [("a2", 10 * C)], coinbase=True),
         tx(6, [("a1", 10 * C)], [("a3", 99 * C // 10)])],
    )


def transform_to_keyspace(chain: RawChain, root: Path, currency: str = "btc",
                          partitions: int = 4, rates=None, tagstore=None):
    """Run the in-memory pipeline and persist one transformed keyspace."""
    idmap = assign_ids(chain)
    addr_graph = build_address_graph(chain, idmap, rates)
    partition = cluster_chain(chain, idmap)
    entity_graph = build_entity_graph(addr_graph, partition, tagstore)
    stats = keyspace_stats(currency, chain, idmap, addr_graph, entity_graph, tagstore)
    tables = chain_tables(chain, idmap)
    tables += graph_tables(addr_graph, entity_graph, partition, idmap)
    tables.append(tags_table(tagstore, partition))
    tables.append(rates_table(rates))
    tables.append(summary_table(stats))
    return write_keyspace(tables, root, f"{currency}_transformed", partitions,
                          extra={"stats": stats})

"""Embedded partitioned keyspace store.

A keyspace version is an immutable directory of tables, each table split into
P partition files by a deterministic hash of its lookup key, each partition
sorted and serialized as canonical JSON so byte content (and therefore the
manifest's hashes and the run id) is a pure function of the data. Edge lists
are stored twice - forward partitioned by source, reverse by destination - so
neighbors resolve in one partition read in either direction. Publishing swaps
a CURRENT pointer file atomically; old versions are never touched.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

from .addrgraph import AddressGraph, round_value
from .chain import IdMap, RawChain
from .cluster import EntityPartition
from .entitygraph import EntityGraph
from .errors import KeyspaceError, ParamError, StoreIoError, UnknownId
from .rates import RateTable, quantize_fiat
from .tagpack import TagStore

FORMAT_VERSION = 1
CURRENT_FILE = "CURRENT"
MANIFEST_FILE = "manifest.json"

RAW_TABLES = ("block", "tx", "rates", "tags")
TRANSFORMED_TABLES = ("block", "tx", "address_node", "address_edge_fwd",
                      "address_edge_rev", "entity_node", "entity_edge_fwd",
                      "entity_edge_rev", "tags", "rates", "summary")

_M64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    z = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _M64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _M64
    return (z ^ (z >> 31)) & _M64


def partition_of(key: int | str, partitions: int) -> int:
    if isinstance(key, str):
        digest = hashlib.sha256(key.encode()).digest()
        return int.from_bytes(digest[:8], "big") % partitions
    return _splitmix64(key) % partitions


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False).encode()


@dataclass
class TableSpec:
    """One table ready to persist: equal-length columns, a partition key
    column, and the in-partition sort order."""

    name: str
    columns: dict[str, list]
    key: str
    sort: tuple[str, ...] = ()
    rows: int = field(init=False)

    def __post_init__(self) -> None:
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ParamError(f"table {self.name}: ragged columns")
        self.rows = lengths.pop() if lengths else 0
        if self.key not in self.columns:
            raise ParamError(f"table {self.name}: key column {self.key!r} missing")
        if not self.sort:
            self.sort = (self.key,)


def _partition_rows(table: TableSpec, partitions: int) -> list[list[dict]]:
    buckets: list[list[dict]] = [[] for _ in range(partitions)]
    names = list(table.columns)
    for i in range(table.rows):
        row = {name: table.columns[name][i] for name in names}
        buckets[partition_of(row[table.key], partitions)].append(row)
    for bucket in buckets:
        bucket.sort(key=lambda r: tuple(r[c] for c in table.sort))
    return buckets


def _partition_bytes(table: TableSpec, rows: list[dict]) -> bytes:
    columns = {name: [row[name] for row in rows] for name in table.columns}
    return canonical_json({
        "format_version": FORMAT_VERSION,
        "table": table.name,
        "rows": len(rows),
        "columns": columns,
    })


def write_keyspace(tables: list[TableSpec], root: str | Path, name: str,
                   partitions: int, extra: dict | None = None,
                   ) -> tuple[dict, bool, Path]:
    """Persist one keyspace version under root/name/{run_id}.

    The run id is derived from the partition file contents, so identical data
    is a no-op: the existing version is re-pointed and returned unchanged.
    Returns (manifest, created, version_path).
    """
    if partitions < 1:
        raise ParamError("partitions must be >= 1")
    blobs: dict[str, list[bytes]] = {}
    manifest_tables: dict[str, dict] = {}
    run_hash = hashlib.sha256()
    run_hash.update(canonical_json({"format_version": FORMAT_VERSION,
                                    "partitions": partitions}))
    for table in tables:
        buckets = _partition_rows(table, partitions)
        parts = [_partition_bytes(table, rows) for rows in buckets]
        blobs[table.name] = parts
        hashes = [hashlib.sha256(p).hexdigest() for p in parts]
        counts = [len(rows) for rows in buckets]
        non_empty = [c for c in counts if c]
        skew = (max(counts) / min(non_empty)) if non_empty and min(non_empty) else None
        manifest_tables[table.name] = {
            "rows": table.rows,
            "key": table.key,
            "sort": list(table.sort),
            "partition_rows": counts,
            "partition_sha256": hashes,
            "skew": skew,
        }
        run_hash.update(table.name.encode())
        for h in hashes:
            run_hash.update(bytes.fromhex(h))
    run_id = run_hash.hexdigest()[:16]
    manifest = {
        "format_version": FORMAT_VERSION,
        "keyspace": name,
        "run_id": run_id,
        "partitions": partitions,
        "tables": manifest_tables,
    }
    if extra:
        manifest.update(extra)

    keyspace_dir = Path(root) / name
    version_dir = keyspace_dir / run_id
    if version_dir.exists():
        _publish(keyspace_dir, run_id)
        return _read_manifest(version_dir), False, version_dir

    keyspace_dir.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".stage-{run_id}-", dir=keyspace_dir))
    try:
        for table in tables:
            table_dir = tmp / table.name
            table_dir.mkdir()
            for i, blob in enumerate(blobs[table.name]):
                (table_dir / f"part-{i}.bin").write_bytes(blob)
        (tmp / MANIFEST_FILE).write_bytes(canonical_json(manifest))
        try:
            os.rename(tmp, version_dir)
        except OSError as exc:
            if version_dir.exists():
                # Lost a race to an identical writer; their bytes equal ours.
                _rmtree(tmp)
            else:
                raise StoreIoError(f"cannot publish {version_dir}: {exc}") from exc
    except OSError as exc:
        _rmtree(tmp)
        raise StoreIoError(f"cannot write keyspace {name}: {exc}") from exc
    _publish(keyspace_dir, run_id)
    return manifest, True, version_dir


def _rmtree(path: Path) -> None:
    for sub in sorted(path.rglob("*"), reverse=True):
        if sub.is_dir():
            sub.rmdir()
        else:
            sub.unlink()
    if path.exists():
        path.rmdir()


def _publish(keyspace_dir: Path, run_id: str) -> None:
    fd, tmp_name = tempfile.mkstemp(prefix=".current-", dir=keyspace_dir)
    with os.fdopen(fd, "w") as fh:
        fh.write(run_id + "\n")
    os.replace(tmp_name, keyspace_dir / CURRENT_FILE)


def _read_manifest(version_dir: Path) -> dict:
    try:
        return json.loads((version_dir / MANIFEST_FILE).read_text())
    except (OSError, ValueError) as exc:
        raise KeyspaceError(f"unreadable manifest in {version_dir}: {exc}") from exc


def current_run_id(root: str | Path, name: str) -> str | None:
    pointer = Path(root) / name / CURRENT_FILE
    try:
        return pointer.read_text().strip() or None
    except OSError:
        return None


class Keyspace:
    """Reader over one published keyspace version. Lazy per-partition loads,
    cached; all reads are pure functions of the on-disk bytes."""

    def __init__(self, path: Path, manifest: dict):
        self.path = path
        self.manifest = manifest
        self.name = manifest["keyspace"]
        self.run_id = manifest["run_id"]
        self.partitions = manifest["partitions"]
        self._cache: dict[tuple[str, int], dict] = {}

    @property
    def tables(self) -> tuple[str, ...]:
        return tuple(self.manifest["tables"])

    def row_count(self, table: str) -> int:
        return self._table_meta(table)["rows"]

    def _table_meta(self, table: str) -> dict:
        try:
            return self.manifest["tables"][table]
        except KeyError:
            raise KeyspaceError(f"{self.name} has no table {table!r}") from None

    def _partition(self, table: str, index: int) -> dict:
        cached = self._cache.get((table, index))
        if cached is not None:
            return cached
        meta = self._table_meta(table)
        blob = (self.path / table / f"part-{index}.bin").read_bytes()
        digest = hashlib.sha256(blob).hexdigest()
        if digest != meta["partition_sha256"][index]:
            raise KeyspaceError(f"{table}/part-{index}.bin content hash mismatch")
        data = json.loads(blob)
        if data.get("format_version") != FORMAT_VERSION:
            raise KeyspaceError(f"unsupported partition format in {table}")
        key_column = data["columns"][meta["key"]]
        index_map: dict = {}
        for i, key in enumerate(key_column):
            index_map.setdefault(key, []).append(i)
        loaded = {"columns": data["columns"], "index": index_map, "rows": data["rows"]}
        self._cache[(table, index)] = loaded
        return loaded

    def _row(self, table_columns: dict, i: int) -> dict:
        return {name: values[i] for name, values in table_columns.items()}

    def get_all(self, table: str, key: int | str) -> list[dict]:
        part = self._partition(table, partition_of(key, self.partitions))
        return [self._row(part["columns"], i) for i in part["index"].get(key, ())]

    def get(self, table: str, key: int | str) -> dict | None:
        rows = self.get_all(table, key)
        return rows[0] if rows else None

    def scan(self, table: str):
        for i in range(self.partitions):
            part = self._partition(table, i)
            for row_index in range(part["rows"]):
                yield self._row(part["columns"], row_index)

    def column(self, table: str, name: str) -> list:
        values: list = []
        for i in range(self.partitions):
            values.extend(self._partition(table, i)["columns"][name])
        return values

    def table_columns(self, table: str) -> dict[str, list]:
        """Full column dict, partitions concatenated in index order."""
        merged: dict[str, list] = {}
        for i in range(self.partitions):
            for name, values in self._partition(table, i)["columns"].items():
                merged.setdefault(name, []).extend(values)
        return merged

    def neighbors(self, level: str, node_id: int, direction: str,
                  cursor: str | None = None, limit: int = 25,
                  ) -> tuple[list[dict], str | None]:
        """One page of edges, sorted by counterpart id. Cursors encode
        (partition, offset) and stay valid for the life of the version."""
        if level not in ("address", "entity"):
            raise ParamError(f"unknown level {level!r}")
        if direction not in ("out", "in"):
            raise ParamError(f"direction must be 'out' or 'in', got {direction!r}")
        if limit < 1:
            raise ParamError("limit must be >= 1")
        self._check_node(level, node_id)
        table = f"{level}_edge_{'fwd' if direction == 'out' else 'rev'}"
        partition_index = partition_of(node_id, self.partitions)
        part = self._partition(table, partition_index)
        indices = part["index"].get(node_id, [])
        offset = 0
        if cursor is not None:
            offset = self._decode_cursor(cursor, partition_index, len(indices))
        page = [self._row(part["columns"], i) for i in indices[offset:offset + limit]]
        next_offset = offset + len(page)
        next_cursor = (f"{partition_index}:{next_offset}"
                       if next_offset < len(indices) else None)
        return page, next_cursor

    def _check_node(self, level: str, node_id: int) -> None:
        if level == "address":
            if not 0 <= node_id < self.row_count("address_node"):
                raise UnknownId(f"unknown address id: {node_id}")
        else:
            if self.get("entity_node", node_id) is None:
                raise UnknownId(f"unknown entity id: {node_id}")

    @staticmethod
    def _decode_cursor(cursor: str, expected_partition: int, total: int) -> int:
        try:
            partition_text, offset_text = cursor.split(":")
            partition_index, offset = int(partition_text), int(offset_text)
        except ValueError:
            raise ParamError(f"malformed cursor {cursor!r}") from None
        if partition_index != expected_partition or not 0 <= offset <= total:
            raise ParamError(f"cursor {cursor!r} does not belong to this query")
        return offset

    def verify_edge_duality(self, level: str) -> bool:
        """fwd and rev must hold the same edge multiset."""
        fwd = sorted(canonical_json(r) for r in self.scan(f"{level}_edge_fwd"))
        rev = sorted(canonical_json(r) for r in self.scan(f"{level}_edge_rev"))
        return fwd == rev


def open_keyspace(root: str | Path, name: str, run_id: str | None = None) -> Keyspace:
    keyspace_dir = Path(root) / name
    if run_id is None:
        run_id = current_run_id(root, name)
    if run_id is None:
        raise KeyspaceError(f"keyspace {name} has no published version under {root}")
    version_dir = keyspace_dir / run_id
    if not version_dir.is_dir():
        raise KeyspaceError(f"keyspace version {name}/{run_id} not found")
    manifest = _read_manifest(version_dir)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise KeyspaceError(
            f"unsupported keyspace format {manifest.get('format_version')!r}")
    if manifest.get("run_id") != run_id:
        raise KeyspaceError(f"manifest run id mismatch in {version_dir}")
    return Keyspace(version_dir, manifest)


# ---------------------------------------------------------------------------
# Table builders: domain objects -> TableSpec column sets.

def _fiat_str(value: Decimal | None) -> str | None:
    return None if value is None else str(quantize_fiat(value))


def chain_tables(chain: RawChain, idmap: IdMap) -> list[TableSpec]:
    heights, block_hashes, timestamps, tx_counts = [], [], [], []
    for block in chain.blocks:
        heights.append(block.height)
        block_hashes.append(block.hash)
        timestamps.append(block.timestamp)
        tx_counts.append(len(block.transactions))
    block_table = TableSpec("block", {
        "height": heights, "hash": block_hashes,
        "timestamp": timestamps, "n_txs": tx_counts,
    }, key="height")

    columns: dict[str, list] = {name: [] for name in (
        "hash", "tx_id", "height", "timestamp", "coinbase",
        "total_input", "total_output", "fee", "inputs", "outputs")}
    for block in chain.blocks:
        for tx in block.transactions:
            columns["hash"].append(tx.hash)
            columns["tx_id"].append(idmap.tx_id(tx.hash))
            columns["height"].append(block.height)
            columns["timestamp"].append(block.timestamp)
            columns["coinbase"].append(tx.coinbase)
            columns["total_input"].append(tx.total_input)
            columns["total_output"].append(tx.total_output)
            columns["fee"].append(tx.fee)
            columns["inputs"].append(
                [[s.address, s.value, s.address_type] for s in tx.inputs])
            columns["outputs"].append(
                [[s.address, s.value, s.address_type] for s in tx.outputs])
    tx_table = TableSpec("tx", columns, key="hash", sort=("tx_id",))
    return [block_table, tx_table]


def rates_table(rates: RateTable | None) -> TableSpec:
    kinds, dates, codes, values = [], [], [], []
    if rates is not None:
        for (date, asset), rate in sorted(rates.usd.items()):
            kinds.append("crypto_usd")
            dates.append(date)
            codes.append(asset)
            values.append(str(rate))
        for (date, fiat), rate in sorted(rates.fx.items()):
            kinds.append("ecb_fx")
            dates.append(date)
            codes.append(fiat)
            values.append(str(rate))
    return TableSpec("rates", {"kind": kinds, "date": dates, "code": codes,
                               "rate": values}, key="date", sort=("kind", "date", "code"))


def tags_table(tagstore: TagStore | None,
               partition: EntityPartition | None = None) -> TableSpec:
    names = ("address", "address_id", "entity_id", "label", "normalized_label",
             "currency", "lastmod", "source", "category", "abuse", "unobserved",
             "pack_title", "pack_creator", "pack_lastmod")
    columns: dict[str, list] = {name: [] for name in names}
    if tagstore is not None:
        for tag in tagstore.tags:
            entity_id = None
            if tag.address_id is not None and partition is not None:
                entity_id = partition.entity(tag.address_id)
            columns["address"].append(tag.address)
            columns["address_id"].append(tag.address_id)
            columns["entity_id"].append(entity_id)
            columns["label"].append(tag.label)
            columns["normalized_label"].append(tag.normalized_label)
            columns["currency"].append(tag.currency)
            columns["lastmod"].append(tag.lastmod)
            columns["source"].append(tag.source)
            columns["category"].append(tag.category)
            columns["abuse"].append(tag.abuse)
            columns["unobserved"].append(tag.unobserved)
            columns["pack_title"].append(tag.pack_title)
            columns["pack_creator"].append(tag.pack_creator)
            columns["pack_lastmod"].append(tag.pack_lastmod)
    return TableSpec("tags", columns, key="address",
                     sort=("address", "pack_title", "label"))


def graph_tables(addr_graph: AddressGraph, entity_graph: EntityGraph,
                 partition: EntityPartition, idmap: IdMap) -> list[TableSpec]:
    with_usd = any(n.received_usd is not None for n in addr_graph.nodes[:1])
    with_eur = any(n.received_eur is not None for n in addr_graph.nodes[:1])

    node_names = ["address", "address_id", "entity_id", "deposits", "withdrawals",
                  "depositing_addresses", "withdrawing_addresses", "coins_received",
                  "coins_spent", "balance", "first_tx_id", "first_timestamp",
                  "last_tx_id", "last_timestamp", "activity_period"]
    if with_usd:
        node_names += ["received_usd", "spent_usd"]
    if with_eur:
        node_names += ["received_eur", "spent_eur"]
    node_columns: dict[str, list] = {name: [] for name in node_names}
    for node in addr_graph.nodes:
        node_columns["address"].append(idmap.addresses[node.address_id])
        node_columns["address_id"].append(node.address_id)
        node_columns["entity_id"].append(partition.entity(node.address_id))
        node_columns["deposits"].append(node.deposits)
        node_columns["withdrawals"].append(node.withdrawals)
        node_columns["depositing_addresses"].append(node.depositing_addresses)
        node_columns["withdrawing_addresses"].append(node.withdrawing_addresses)
        node_columns["coins_received"].append(node.coins_received)
        node_columns["coins_spent"].append(node.coins_spent)
        node_columns["balance"].append(node.balance)
        node_columns["first_tx_id"].append(node.first_tx.tx_id)
        node_columns["first_timestamp"].append(node.first_tx.timestamp)
        node_columns["last_tx_id"].append(node.last_tx.tx_id)
        node_columns["last_timestamp"].append(node.last_tx.timestamp)
        node_columns["activity_period"].append(node.activity_period)
        if with_usd:
            node_columns["received_usd"].append(_fiat_str(node.received_usd))
            node_columns["spent_usd"].append(_fiat_str(node.spent_usd))
        if with_eur:
            node_columns["received_eur"].append(_fiat_str(node.received_eur))
            node_columns["spent_eur"].append(_fiat_str(node.spent_eur))
    address_node = TableSpec("address_node", node_columns, key="address",
                             sort=("address_id",))

    edge_names = ["src", "dst", "src_address", "dst_address", "estimated_value",
                  "n_transactions", "tx_list"]
    if with_usd:
        edge_names.append("value_usd")
    if with_eur:
        edge_names.append("value_eur")
    edge_columns: dict[str, list] = {name: [] for name in edge_names}
    for edge in addr_graph.edges:
        edge_columns["src"].append(edge.src)
        edge_columns["dst"].append(edge.dst)
        edge_columns["src_address"].append(idmap.addresses[edge.src])
        edge_columns["dst_address"].append(idmap.addresses[edge.dst])
        edge_columns["estimated_value"].append(round_value(edge.estimated_value))
        edge_columns["n_transactions"].append(edge.n_transactions)
        edge_columns["tx_list"].append(list(edge.tx_list))
        if with_usd:
            edge_columns["value_usd"].append(_fiat_str(edge.value_usd))
        if with_eur:
            edge_columns["value_eur"].append(_fiat_str(edge.value_eur))
    address_edge_fwd = TableSpec("address_edge_fwd", edge_columns,
                                 key="src", sort=("src", "dst"))
    address_edge_rev = TableSpec("address_edge_rev", dict(edge_columns),
                                 key="dst", sort=("dst", "src"))

    entity_names = ["entity_id", "n_addresses", "addresses", "deposits",
                    "withdrawals", "depositing_entities", "withdrawing_entities",
                    "coins_received", "coins_spent", "balance", "first_tx_id",
                    "first_timestamp", "last_tx_id", "last_timestamp",
                    "activity_period", "tag_coherence"]
    if with_usd:
        entity_names += ["received_usd", "spent_usd"]
    if with_eur:
        entity_names += ["received_eur", "spent_eur"]
    entity_columns: dict[str, list] = {name: [] for name in entity_names}
    for node in entity_graph.nodes:
        members = partition.members_of(node.entity_id)
        entity_columns["entity_id"].append(node.entity_id)
        entity_columns["n_addresses"].append(node.n_addresses)
        entity_columns["addresses"].append([idmap.addresses[m] for m in members])
        entity_columns["deposits"].append(node.deposits)
        entity_columns["withdrawals"].append(node.withdrawals)
        entity_columns["depositing_entities"].append(node.depositing_entities)
        entity_columns["withdrawing_entities"].append(node.withdrawing_entities)
        entity_columns["coins_received"].append(node.coins_received)
        entity_columns["coins_spent"].append(node.coins_spent)
        entity_columns["balance"].append(node.balance)
        entity_columns["first_tx_id"].append(node.first_tx.tx_id)
        entity_columns["first_timestamp"].append(node.first_tx.timestamp)
        entity_columns["last_tx_id"].append(node.last_tx.tx_id)
        entity_columns["last_timestamp"].append(node.last_tx.timestamp)
        entity_columns["activity_period"].append(node.activity_period)
        entity_columns["tag_coherence"].append(node.tag_coherence)
        if with_usd:
            entity_columns["received_usd"].append(_fiat_str(node.received_usd))
            entity_columns["spent_usd"].append(_fiat_str(node.spent_usd))
        if with_eur:
            entity_columns["received_eur"].append(_fiat_str(node.received_eur))
            entity_columns["spent_eur"].append(_fiat_str(node.spent_eur))
    entity_node = TableSpec("entity_node", entity_columns, key="entity_id")

    entity_edge_names = ["src", "dst", "estimated_value", "n_transactions", "tx_list"]
    if with_usd:
        entity_edge_names.append("value_usd")
    if with_eur:
        entity_edge_names.append("value_eur")
    entity_edge_columns: dict[str, list] = {name: [] for name in entity_edge_names}
    for edge in entity_graph.edges:
        entity_edge_columns["src"].append(edge.src)
        entity_edge_columns["dst"].append(edge.dst)
        entity_edge_columns["estimated_value"].append(round_value(edge.estimated_value))
        entity_edge_columns["n_transactions"].append(edge.n_transactions)
        entity_edge_columns["tx_list"].append(
            None if edge.tx_list is None else list(edge.tx_list))
        if with_usd:
            entity_edge_columns["value_usd"].append(_fiat_str(edge.value_usd))
        if with_eur:
            entity_edge_columns["value_eur"].append(_fiat_str(edge.value_eur))
    entity_edge_fwd = TableSpec("entity_edge_fwd", entity_edge_columns,
                                key="src", sort=("src", "dst"))
    entity_edge_rev = TableSpec("entity_edge_rev", dict(entity_edge_columns),
                                key="dst", sort=("dst", "src"))

    return [address_node, address_edge_fwd, address_edge_rev,
            entity_node, entity_edge_fwd, entity_edge_rev]


def summary_table(stats: dict) -> TableSpec:
    return TableSpec("summary", {name: [value] for name, value in stats.items()},
                     key="currency")


def keyspace_stats(currency: str, chain: RawChain, idmap: IdMap,
                   addr_graph: AddressGraph, entity_graph: EntityGraph,
                   tagstore: TagStore | None) -> dict:
    last_timestamp = chain.blocks[-1].timestamp if chain.blocks else None
    return {
        "currency": currency,
        "n_blocks": chain.n_blocks,
        "n_transactions": chain.n_transactions,
        "n_addresses": idmap.n_addresses,
        "n_entities": entity_graph.n_nodes,
        "n_address_edges": addr_graph.n_edges,
        "n_entity_edges": entity_graph.n_edges,
        "n_tags": 0 if tagstore is None else len(tagstore),
        "last_block_timestamp": last_timestamp,
    }

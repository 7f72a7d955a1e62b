"""Command line interface: ingest raw data, transform, inspect, serve.

Exit codes: 0 success, 1 domain validation failure (bad content), 2
operational fault (I/O, unparseable files, network, keyspace problems).
Option values resolve as flags > UTXOGRAPH_* environment variables > config
file defaults; ingestion is idempotent because keyspace versions are
content-addressed.
"""

from __future__ import annotations

import functools
import json
import sys
import time
from decimal import Decimal
from pathlib import Path

import click
import yaml

from .addrgraph import build_address_graph
from .api import ApiConfig
from .api import serve as api_serve
from .chain import (
    RawBlock,
    RawChain,
    RawTransaction,
    TxSlot,
    assign_ids,
    generate_chain,
    load_chain,
    write_chain,
)
from .cluster import cluster_chain, is_coinjoin
from .entitygraph import build_entity_graph
from .errors import (
    BindError,
    KeyspaceError,
    NetworkError,
    ParseError,
    StoreIoError,
    UtxographError,
    ValidationError,
    YamlError,
)
from .rates import RateTable, load_rates
from .store import (
    Keyspace,
    TableSpec,
    chain_tables,
    current_run_id,
    graph_tables,
    keyspace_stats,
    open_keyspace,
    rates_table,
    summary_table,
    tags_table,
    write_keyspace,
)
from .tagpack import (
    Tag,
    TagPack,
    default_taxonomies,
    ingest_tags,
    parse_tagpack,
    validate_tagpack,
)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_OPERATIONAL = 2

# Unreadable or unparseable inputs and infrastructure faults; everything else
# under UtxographError is a domain validation failure.
OPERATIONAL_ERRORS = (ParseError, YamlError, NetworkError, StoreIoError,
                      KeyspaceError, BindError, OSError)

DEFAULT_PARTITIONS = 8

RAW_TAG_COLUMNS = ("address", "label", "currency", "lastmod", "source",
                   "category", "abuse", "pack_title", "pack_creator",
                   "pack_lastmod")


def _fail(exc: BaseException, exit_code: int) -> None:
    problem = {"code": getattr(exc, "code", "io_error"), "message": str(exc)}
    click.echo(json.dumps(problem), err=True)
    sys.exit(exit_code)


def handles_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except OPERATIONAL_ERRORS as exc:
            _fail(exc, EXIT_OPERATIONAL)
        except UtxographError as exc:
            _fail(exc, EXIT_DOMAIN)
    return wrapper


def emit(payload, pretty: bool) -> None:
    click.echo(json.dumps(payload, indent=2 if pretty else None))


pretty_option = click.option("--pretty", is_flag=True, help="Indent JSON output.")
currency_option = click.option("--currency", required=True,
                               help="Currency code naming the keyspace pair.")
data_dir_option = click.option(
    "--data-dir", required=True, type=click.Path(path_type=Path),
    help="Directory holding the keyspaces.")


@click.group(context_settings={"auto_envvar_prefix": "UTXOGRAPH"})
@click.option("--config", type=click.Path(path_type=Path), default=None,
              help="YAML file mapping subcommand names to option defaults.")
@click.pass_context
@handles_errors
def cli(ctx, config: Path | None):
    """Ingest chain data, build the address and entity graphs, serve them."""
    if config is not None:
        try:
            with open(config, "r", encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise YamlError(f"{config}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise YamlError(f"{config}: top level must be a mapping")
        ctx.default_map = loaded


# ---------------------------------------------------------------------------
# Raw keyspace assembly

def _raw_name(currency: str) -> str:
    return f"{currency}_raw"


def _transformed_name(currency: str) -> str:
    return f"{currency}_transformed"


def _raw_tags_table(rows: list[dict]) -> TableSpec:
    columns: dict[str, list] = {name: [] for name in RAW_TAG_COLUMNS}
    for row in rows:
        for name in RAW_TAG_COLUMNS:
            columns[name].append(row[name])
    return TableSpec("tags", columns, key="address",
                     sort=("address", "pack_title", "label"))


def _empty_raw_tables() -> dict[str, TableSpec]:
    empty_chain = RawChain(blocks=())
    block, tx = chain_tables(empty_chain, assign_ids(empty_chain))
    return {"block": block, "tx": tx, "rates": rates_table(None),
            "tags": _raw_tags_table([])}


def _preserved_table(raw: Keyspace, name: str) -> TableSpec:
    meta = raw.manifest["tables"][name]
    return TableSpec(name, raw.table_columns(name), key=meta["key"],
                     sort=tuple(meta["sort"]))


def _rewrite_raw(data_dir: Path, currency: str, partitions: int,
                 replace: dict[str, TableSpec]):
    """Write a new raw keyspace version with `replace` tables swapped in and
    all other tables carried over byte-identically."""
    name = _raw_name(currency)
    existing = None
    if current_run_id(data_dir, name) is not None:
        existing = open_keyspace(data_dir, name)
        partitions = existing.manifest["partitions"]
    tables = []
    for table_name, empty in _empty_raw_tables().items():
        if table_name in replace:
            tables.append(replace[table_name])
        elif existing is not None:
            tables.append(_preserved_table(existing, table_name))
        else:
            tables.append(empty)
    return write_keyspace(tables, data_dir, name, partitions)


def _chain_from_keyspace(raw: Keyspace) -> RawChain:
    by_height: dict[int, list[RawTransaction]] = {}
    for row in sorted(raw.scan("tx"), key=lambda r: r["tx_id"]):
        by_height.setdefault(row["height"], []).append(RawTransaction(
            hash=row["hash"],
            inputs=tuple(TxSlot(a, v, t) for a, v, t in row["inputs"]),
            outputs=tuple(TxSlot(a, v, t) for a, v, t in row["outputs"]),
            coinbase=row["coinbase"],
        ))
    blocks = []
    for row in sorted(raw.scan("block"), key=lambda r: r["height"]):
        blocks.append(RawBlock(
            height=row["height"], hash=row["hash"], timestamp=row["timestamp"],
            transactions=tuple(by_height.get(row["height"], ()))))
    return RawChain(blocks=tuple(blocks))


def _rates_from_keyspace(raw: Keyspace) -> RateTable | None:
    table = RateTable()
    for row in raw.scan("rates"):
        bucket = table.usd if row["kind"] == "crypto_usd" else table.fx
        bucket[(row["date"], row["code"])] = Decimal(row["rate"])
    if not table.usd and not table.fx:
        return None
    return table


def _packs_from_keyspace(raw: Keyspace) -> list[TagPack]:
    grouped: dict[tuple[str, str, str], list[Tag]] = {}
    for row in raw.scan("tags"):
        identity = (row["pack_title"], row["pack_creator"], row["pack_lastmod"])
        grouped.setdefault(identity, []).append(Tag(
            address=row["address"], label=row["label"], currency=row["currency"],
            lastmod=row["lastmod"], source=row["source"],
            category=row["category"], abuse=row["abuse"]))
    return [TagPack(title=t, creator=c, lastmod=m, tags=tuple(tags))
            for (t, c, m), tags in sorted(grouped.items())]


# ---------------------------------------------------------------------------
# Ingestion commands

@cli.command("ingest-chain")
@click.argument("chain_file", type=click.Path(path_type=Path))
@currency_option
@data_dir_option
@click.option("--partitions", type=int, default=DEFAULT_PARTITIONS,
              show_default=True, help="Partition count for a new keyspace.")
@pretty_option
@handles_errors
def cmd_ingest_chain(chain_file: Path, currency: str, data_dir: Path,
                     partitions: int, pretty: bool):
    """Load a newline-delimited JSON chain file into the raw keyspace."""
    chain = load_chain(chain_file)
    idmap = assign_ids(chain)
    block, tx = chain_tables(chain, idmap)
    manifest, created, _ = _rewrite_raw(data_dir, currency, partitions,
                                        {"block": block, "tx": tx})
    emit({"keyspace": manifest["keyspace"], "run_id": manifest["run_id"],
          "created": created, "n_blocks": chain.n_blocks,
          "n_transactions": chain.n_transactions}, pretty)


@cli.command("ingest-rates")
@click.argument("csv_file", type=click.Path(path_type=Path))
@currency_option
@data_dir_option
@click.option("--kind", type=click.Choice(["crypto_usd", "ecb_fx"]),
              required=True, help="Schema of the CSV file.")
@click.option("--partitions", type=int, default=DEFAULT_PARTITIONS,
              show_default=True)
@pretty_option
@handles_errors
def cmd_ingest_rates(csv_file: Path, currency: str, data_dir: Path, kind: str,
                     partitions: int, pretty: bool):
    """Merge a rates CSV into the raw keyspace (conflicts are an error)."""
    incoming = load_rates(csv_file, kind)
    merged = RateTable()
    if current_run_id(data_dir, _raw_name(currency)) is not None:
        existing = _rates_from_keyspace(open_keyspace(data_dir, _raw_name(currency)))
        if existing is not None:
            merged.merge(existing)
    merged.merge(incoming)
    manifest, created, _ = _rewrite_raw(data_dir, currency, partitions,
                                        {"rates": rates_table(merged)})
    emit({"keyspace": manifest["keyspace"], "run_id": manifest["run_id"],
          "created": created,
          "n_rates": len(merged.usd) + len(merged.fx)}, pretty)


@cli.command("ingest-tagpack")
@click.argument("pack_file", type=click.Path(path_type=Path))
@currency_option
@data_dir_option
@click.option("--partitions", type=int, default=DEFAULT_PARTITIONS,
              show_default=True)
@pretty_option
@handles_errors
def cmd_ingest_tagpack(pack_file: Path, currency: str, data_dir: Path,
                       partitions: int, pretty: bool):
    """Validate a tag pack and add its tags to the raw keyspace.

    A pack with the same title and creator replaces its previous tags, so
    re-ingesting a corrected pack never duplicates."""
    pack = parse_tagpack(pack_file)
    report = validate_tagpack(pack, default_taxonomies().values())
    if not report.ok:
        raise ValidationError("tag pack rejected", detail="; ".join(
            f"tag {v.tag_index} {v.field}={v.value!r}: {v.rule}"
            for v in report.violations))
    rows = []
    if current_run_id(data_dir, _raw_name(currency)) is not None:
        existing = open_keyspace(data_dir, _raw_name(currency))
        rows = [row for row in existing.scan("tags")
                if (row["pack_title"], row["pack_creator"]) !=
                   (pack.title, pack.creator)]
    for tag in pack.tags:
        rows.append({"address": tag.address, "label": tag.label,
                     "currency": tag.currency, "lastmod": tag.lastmod,
                     "source": tag.source, "category": tag.category,
                     "abuse": tag.abuse, "pack_title": pack.title,
                     "pack_creator": pack.creator, "pack_lastmod": pack.lastmod})
    manifest, created, _ = _rewrite_raw(data_dir, currency, partitions,
                                        {"tags": _raw_tags_table(rows)})
    emit({"keyspace": manifest["keyspace"], "run_id": manifest["run_id"],
          "created": created, "n_tags": len(pack.tags)}, pretty)


@cli.command("validate-tagpack")
@click.argument("pack_file", type=click.Path(path_type=Path))
@pretty_option
@handles_errors
def cmd_validate_tagpack(pack_file: Path, pretty: bool):
    """Check a tag pack against the bundled concept taxonomies."""
    pack = parse_tagpack(pack_file)
    report = validate_tagpack(pack, default_taxonomies().values())
    emit({"ok": report.ok, "n_tags": len(pack.tags),
          "violations": [{"tag_index": v.tag_index, "field": v.field,
                          "value": v.value, "rule": v.rule}
                         for v in report.violations]}, pretty)
    if not report.ok:
        sys.exit(EXIT_DOMAIN)


@cli.command("generate-chain")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--blocks", type=int, default=100, show_default=True)
@click.option("--txs-per-block", type=int, default=10, show_default=True)
@click.option("--address-pool", type=int, default=1000, show_default=True)
@click.option("--reuse-rate", type=float, default=0.4, show_default=True)
@click.option("--coinjoin-rate", type=float, default=0.0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="Output chain file (newline-delimited JSON).")
@pretty_option
@handles_errors
def cmd_generate_chain(seed: int, blocks: int, txs_per_block: int,
                       address_pool: int, reuse_rate: float,
                       coinjoin_rate: float, out: Path, pretty: bool):
    """Write a deterministic synthetic chain for testing and benchmarks."""
    chain = generate_chain(seed, blocks=blocks, txs_per_block=txs_per_block,
                           address_pool=address_pool, reuse_rate=reuse_rate,
                           coinjoin_rate=coinjoin_rate)
    write_chain(chain, out)
    emit({"path": str(out), "seed": seed, "n_blocks": len(chain.blocks),
          "n_transactions": sum(len(b.transactions) for b in chain.blocks)},
         pretty)


# ---------------------------------------------------------------------------
# Transform

@cli.command("transform")
@currency_option
@data_dir_option
@click.option("--partitions", type=int, default=None,
              help="Partition count; defaults to the raw keyspace's.")
@click.option("--workers", type=int, default=1, show_default=True,
              help="Threads for the address graph aggregation.")
@click.option("--coinjoin-filter/--no-coinjoin-filter", default=True,
              show_default=True,
              help="Exclude detected CoinJoins from clustering evidence.")
@click.option("--fiat", type=click.Choice(["auto", "require", "off"]),
              default="auto", show_default=True,
              help="auto: add fiat columns when rates cover the chain; "
                   "require: fail on any missing rate; off: never add them.")
@pretty_option
@handles_errors
def cmd_transform(currency: str, data_dir: Path, partitions: int | None,
                  workers: int, coinjoin_filter: bool, fiat: str, pretty: bool):
    """Build the address and entity graphs from the raw keyspace and publish
    them as a new transformed keyspace version."""
    stages: list[dict] = []

    def stage(name: str, started: float, rows: int) -> None:
        stages.append({"stage": name, "rows": rows,
                       "seconds": round(time.perf_counter() - started, 6)})

    t = time.perf_counter()
    raw = open_keyspace(data_dir, _raw_name(currency))
    # An ingested-but-empty chain publishes a zero-count keyspace.
    chain = _chain_from_keyspace(raw)
    rates = _rates_from_keyspace(raw)
    packs = _packs_from_keyspace(raw)
    idmap = assign_ids(chain)
    tagstore = ingest_tags(packs, idmap) if packs else None
    stage("load", t, raw.row_count("block") + raw.row_count("tx")
          + raw.row_count("rates") + raw.row_count("tags"))

    t = time.perf_counter()
    detector = is_coinjoin if coinjoin_filter else None
    partition = cluster_chain(chain, idmap, detector)
    stage("cluster", t, len(partition.members))

    t = time.perf_counter()
    fiat_mode = {"auto": None, "require": True, "off": False}[fiat]
    addr_graph = build_address_graph(chain, idmap, rates, fiat=fiat_mode,
                                     workers=workers)
    stage("address_graph", t, len(addr_graph.nodes) + len(addr_graph.edges))

    t = time.perf_counter()
    entity_graph = build_entity_graph(addr_graph, partition, tagstore)
    stage("entity_graph", t, len(entity_graph.nodes) + len(entity_graph.edges))

    t = time.perf_counter()
    stats = keyspace_stats(currency, chain, idmap, addr_graph, entity_graph,
                           tagstore)
    tables = chain_tables(chain, idmap)
    tables += graph_tables(addr_graph, entity_graph, partition, idmap)
    tables.append(tags_table(tagstore, partition))
    tables.append(rates_table(rates))
    tables.append(summary_table(stats))
    manifest, created, _ = write_keyspace(
        tables, data_dir, _transformed_name(currency),
        partitions or raw.manifest["partitions"], extra={"stats": stats})
    stage("write", t, sum(meta["rows"] for meta in manifest["tables"].values()))

    skews = [meta["skew"] for meta in manifest["tables"].values()
             if meta["skew"] is not None]
    emit({"currency": currency, "run_id": manifest["run_id"],
          "created": created, "stages": stages,
          "n_entities": stats["n_entities"],
          "max_entity_size": max((len(m) for m in partition.members.values()),
                                 default=0),
          "skew": max(skews, default=1.0)}, pretty)


# ---------------------------------------------------------------------------
# Inspection and serving

@cli.command("stats")
@currency_option
@data_dir_option
@click.option("--run-id", default=None,
              help="Inspect a specific keyspace version instead of CURRENT.")
@pretty_option
@handles_errors
def cmd_stats(currency: str, data_dir: Path, run_id: str | None, pretty: bool):
    """Print the summary statistics of a transformed keyspace."""
    keyspace = open_keyspace(data_dir, _transformed_name(currency), run_id)
    emit(keyspace.manifest["stats"], pretty)


@cli.command("serve")
@data_dir_option
@click.option("--currencies", required=True,
              help="Comma separated currency codes to serve.")
@click.option("--bind", default="127.0.0.1:9000", show_default=True,
              help="host:port to listen on.")
@click.option("--cors-origin", "cors_origins", multiple=True,
              help="Origin allowed for cross-origin reads (repeatable).")
@click.option("--page-size-limit", type=int, default=1000, show_default=True)
@handles_errors
def cmd_serve(data_dir: Path, currencies: str, bind: str,
              cors_origins: tuple[str, ...], page_size_limit: int):
    """Serve the transformed keyspaces over HTTP (read only)."""
    parsed = tuple(c.strip() for c in currencies.split(",") if c.strip())
    config = ApiConfig(data_dir=data_dir, currencies=parsed, bind=bind,
                       page_size_limit=page_size_limit,
                       cors_origins=cors_origins)
    api_serve(config)


def main() -> None:
    cli()


if __name__ == "__main__":
    main()

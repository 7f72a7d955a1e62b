"""Read-only REST service over published transformed keyspaces.

Every endpoint is a GET returning an envelope {currency, run_id, data,
next_cursor?}; errors are JSON problem documents {code, message} with
machine-readable codes. Keyspaces are opened once at startup (fail fast) and
are immutable, so responses are pure functions of the URL.
"""

from __future__ import annotations

import socket
from bisect import bisect_left
from dataclasses import dataclass
from pathlib import Path
from typing import Generic, Literal, TypeVar

import uvicorn
from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import __version__
from .errors import (
    BindError,
    ParamError,
    QueryTooShort,
    UnknownCurrency,
    UnknownId,
    UtxographError,
)
from .store import Keyspace, open_keyspace

DEFAULT_PAGE_SIZE = 25
SEARCH_MIN_LENGTH = 3
SEARCH_LIMIT = 10


@dataclass(frozen=True)
class ApiConfig:
    data_dir: Path
    currencies: tuple[str, ...]
    bind: str = "127.0.0.1:9000"
    page_size_limit: int = 1000
    cors_origins: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.page_size_limit < 1:
            raise ParamError("page size limit must be >= 1")
        if not self.currencies:
            raise ParamError("at least one currency must be served")

    @property
    def host_port(self) -> tuple[str, int]:
        host, _, port_text = self.bind.rpartition(":")
        if not host or not port_text.isdigit():
            raise ParamError(f"bind must be host:port, got {self.bind!r}")
        return host, int(port_text)


T = TypeVar("T")


class Envelope(BaseModel, Generic[T]):
    currency: str
    run_id: str
    data: T
    next_cursor: str | None = None


class Problem(BaseModel):
    code: str
    message: str


class Block(BaseModel):
    height: int
    hash: str
    timestamp: int
    n_txs: int


class TxSlotOut(BaseModel):
    address: str
    value: int
    address_type: str


class Tx(BaseModel):
    hash: str
    tx_id: int
    height: int
    timestamp: int
    coinbase: bool
    total_input: int
    total_output: int
    fee: int
    inputs: list[TxSlotOut]
    outputs: list[TxSlotOut]


class AddressStats(BaseModel):
    address: str
    address_id: int
    entity_id: int
    deposits: int
    withdrawals: int
    depositing_addresses: int
    withdrawing_addresses: int
    coins_received: int
    coins_spent: int
    balance: int
    first_tx_id: int
    first_timestamp: int
    last_tx_id: int
    last_timestamp: int
    activity_period: int
    received_usd: str | None = None
    spent_usd: str | None = None
    received_eur: str | None = None
    spent_eur: str | None = None


class EntityStats(BaseModel):
    entity_id: int
    n_addresses: int
    deposits: int
    withdrawals: int
    depositing_entities: int
    withdrawing_entities: int
    coins_received: int
    coins_spent: int
    balance: int
    first_tx_id: int
    first_timestamp: int
    last_tx_id: int
    last_timestamp: int
    activity_period: int
    tag_coherence: float | None = None
    received_usd: str | None = None
    spent_usd: str | None = None
    received_eur: str | None = None
    spent_eur: str | None = None


class AddressEdgeOut(BaseModel):
    src: int
    dst: int
    src_address: str
    dst_address: str
    estimated_value: int
    n_transactions: int
    tx_list: list[int]
    value_usd: str | None = None
    value_eur: str | None = None


class EntityEdgeOut(BaseModel):
    src: int
    dst: int
    estimated_value: int
    n_transactions: int
    tx_list: list[int] | None = None
    value_usd: str | None = None
    value_eur: str | None = None


class TagOut(BaseModel):
    address: str
    address_id: int | None = None
    entity_id: int | None = None
    label: str
    normalized_label: str
    currency: str
    lastmod: str
    source: str | None = None
    category: str | None = None
    abuse: str | None = None
    unobserved: bool
    pack_title: str
    pack_creator: str
    pack_lastmod: str


class SearchResult(BaseModel):
    addresses: list[str]
    transactions: list[str]
    labels: list[str]


class StatsOut(BaseModel):
    currency: str
    n_blocks: int
    n_transactions: int
    n_addresses: int
    n_entities: int
    n_address_edges: int
    n_entity_edges: int
    n_tags: int
    last_block_timestamp: int | None = None


_PROBLEMS = {"description": "Error", "model": Problem}
_COMMON_ERRORS = {400: _PROBLEMS, 404: _PROBLEMS}
_ERROR_STATUS = {
    "unknown_currency": 404,
    "unknown_id": 404,
    "query_too_short": 400,
    "param_error": 400,
    "keyspace_error": 503,
    "store_io_error": 503,
}


class _SearchIndex:
    """Sorted address/tx-hash lists for prefix search, label list for
    substring search. Built lazily on first use; keyspaces are immutable."""

    def __init__(self, keyspace: Keyspace):
        self.keyspace = keyspace
        self._addresses: list[str] | None = None
        self._tx_hashes: list[str] | None = None
        self._labels: list[str] | None = None

    @property
    def addresses(self) -> list[str]:
        if self._addresses is None:
            self._addresses = sorted(self.keyspace.column("address_node", "address"))
        return self._addresses

    @property
    def tx_hashes(self) -> list[str]:
        if self._tx_hashes is None:
            self._tx_hashes = sorted(self.keyspace.column("tx", "hash"))
        return self._tx_hashes

    @property
    def labels(self) -> list[str]:
        if self._labels is None:
            self._labels = sorted(set(self.keyspace.column("tags", "normalized_label")))
        return self._labels

    @staticmethod
    def _prefix_matches(haystack: list[str], prefix: str, limit: int) -> list[str]:
        start = bisect_left(haystack, prefix)
        matches = []
        for value in haystack[start:start + limit]:
            if not value.startswith(prefix):
                break
            matches.append(value)
        return matches

    def search(self, query: str, limit: int) -> dict:
        needle = query.lower()
        labels = []
        for label in self.labels:
            if needle in label:
                labels.append(label)
                if len(labels) >= limit:
                    break
        return {
            "addresses": self._prefix_matches(self.addresses, query, limit),
            "transactions": self._prefix_matches(self.tx_hashes, query, limit),
            "labels": labels,
        }


def _problem(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


FiatParam = Literal["USD", "EUR"] | None

_FIAT_SUFFIX = {"USD": "_usd", "EUR": "_eur"}


def _fiat_view(row: dict, fiat: str | None) -> dict:
    """Keep only the requested fiat companion columns; none by default.
    A keyspace without the requested columns simply yields none."""
    keep = _FIAT_SUFFIX.get(fiat or "")
    return {name: value for name, value in row.items()
            if not name.endswith(("_usd", "_eur"))
            or (keep is not None and name.endswith(keep))}


def create_app(config: ApiConfig) -> FastAPI:
    keyspaces: dict[str, Keyspace] = {}
    indexes: dict[str, _SearchIndex] = {}
    for currency in config.currencies:
        keyspace = open_keyspace(config.data_dir, f"{currency}_transformed")
        keyspaces[currency] = keyspace
        indexes[currency] = _SearchIndex(keyspace)

    app = FastAPI(title="utxograph API", version=__version__)
    if config.cors_origins:
        app.add_middleware(CORSMiddleware, allow_origins=list(config.cors_origins),
                           allow_methods=["GET"], allow_headers=["*"])

    def ks(currency: str) -> Keyspace:
        try:
            return keyspaces[currency]
        except KeyError:
            raise UnknownCurrency(f"currency {currency!r} is not served") from None

    def envelope(currency: str, data, next_cursor: str | None = None) -> dict:
        return {"currency": currency, "run_id": ks(currency).run_id,
                "data": data, "next_cursor": next_cursor}

    def page_size(pagesize: int | None) -> int:
        if pagesize is None:
            return min(DEFAULT_PAGE_SIZE, config.page_size_limit)
        if pagesize < 1:
            raise ParamError("pagesize must be >= 1")
        return min(pagesize, config.page_size_limit)

    @app.exception_handler(UtxographError)
    async def on_domain_error(request: Request, exc: UtxographError):
        return _problem(_ERROR_STATUS.get(exc.code, 500), exc.code, str(exc))

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return _problem(400, "param_error", str(exc.errors()[:1]))

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(request: Request, exc: StarletteHTTPException):
        code = "method_not_allowed" if exc.status_code == 405 else "http_error"
        return _problem(exc.status_code, code, str(exc.detail))

    def _get(table: str, currency: str, key, what: str) -> dict:
        row = ks(currency).get(table, key)
        if row is None:
            raise UnknownId(f"unknown {what}: {key}")
        return row

    @app.get("/{currency}/blocks/{height}", response_model=Envelope[Block],
             response_model_exclude_none=True, responses=_COMMON_ERRORS)
    def get_block(currency: str, height: int):
        return envelope(currency, _get("block", currency, height, "block height"))

    @app.get("/{currency}/txs/{tx_hash}", response_model=Envelope[Tx],
             response_model_exclude_none=True, responses=_COMMON_ERRORS)
    def get_tx(currency: str, tx_hash: str):
        row = _get("tx", currency, tx_hash.lower(), "transaction")
        row = dict(row)
        row["inputs"] = [{"address": a, "value": v, "address_type": t}
                         for a, v, t in row["inputs"]]
        row["outputs"] = [{"address": a, "value": v, "address_type": t}
                          for a, v, t in row["outputs"]]
        return envelope(currency, row)

    @app.get("/{currency}/addresses/{address}", response_model=Envelope[AddressStats],
             response_model_exclude_none=True, responses=_COMMON_ERRORS)
    def get_address(currency: str, address: str, fiat: FiatParam = None):
        row = _get("address_node", currency, address, "address")
        return envelope(currency, _fiat_view(row, fiat))

    @app.get("/{currency}/addresses/{address}/entity",
             response_model=Envelope[EntityStats],
             response_model_exclude_none=True, responses=_COMMON_ERRORS)
    def get_address_entity(currency: str, address: str, fiat: FiatParam = None):
        node = _get("address_node", currency, address, "address")
        entity = _get("entity_node", currency, node["entity_id"], "entity")
        return envelope(currency, _fiat_view(entity, fiat))

    @app.get("/{currency}/addresses/{address}/tags",
             response_model=Envelope[list[TagOut]],
             response_model_exclude_none=True, responses=_COMMON_ERRORS)
    def get_address_tags(currency: str, address: str):
        _get("address_node", currency, address, "address")
        return envelope(currency, ks(currency).get_all("tags", address))

    @app.get("/{currency}/addresses/{address}/neighbors",
             response_model=Envelope[list[AddressEdgeOut]],
             response_model_exclude_none=True,
             responses=_COMMON_ERRORS)
    def get_address_neighbors(currency: str, address: str,
                              direction: Literal["out", "in"],
                              cursor: str | None = None,
                              pagesize: int | None = Query(default=None),
                              fiat: FiatParam = None):
        node = _get("address_node", currency, address, "address")
        rows, next_cursor = ks(currency).neighbors(
            "address", node["address_id"], direction, cursor, page_size(pagesize))
        return envelope(currency, [_fiat_view(r, fiat) for r in rows], next_cursor)

    @app.get("/{currency}/entities/{entity_id}", response_model=Envelope[EntityStats],
             response_model_exclude_none=True, responses=_COMMON_ERRORS)
    def get_entity(currency: str, entity_id: int, fiat: FiatParam = None):
        row = _get("entity_node", currency, entity_id, "entity")
        return envelope(currency, _fiat_view(row, fiat))

    @app.get("/{currency}/entities/{entity_id}/addresses",
             response_model=Envelope[list[AddressStats]],
             response_model_exclude_none=True,
             responses=_COMMON_ERRORS)
    def get_entity_addresses(currency: str, entity_id: int,
                             cursor: str | None = None,
                             pagesize: int | None = Query(default=None),
                             fiat: FiatParam = None):
        entity = _get("entity_node", currency, entity_id, "entity")
        members = entity["addresses"]
        offset = 0
        if cursor is not None:
            try:
                offset = int(cursor)
            except ValueError:
                raise ParamError(f"malformed cursor {cursor!r}") from None
            if not 0 <= offset <= len(members):
                raise ParamError(f"cursor {cursor!r} out of range")
        size = page_size(pagesize)
        page = members[offset:offset + size]
        rows = [_fiat_view(_get("address_node", currency, address, "address"), fiat)
                for address in page]
        next_cursor = str(offset + size) if offset + size < len(members) else None
        return envelope(currency, rows, next_cursor)

    @app.get("/{currency}/entities/{entity_id}/tags",
             response_model=Envelope[list[TagOut]],
             response_model_exclude_none=True, responses=_COMMON_ERRORS)
    def get_entity_tags(currency: str, entity_id: int):
        entity = _get("entity_node", currency, entity_id, "entity")
        tags = []
        for address in entity["addresses"]:
            tags.extend(ks(currency).get_all("tags", address))
        return envelope(currency, tags)

    @app.get("/{currency}/entities/{entity_id}/neighbors",
             response_model=Envelope[list[EntityEdgeOut]],
             response_model_exclude_none=True,
             responses=_COMMON_ERRORS)
    def get_entity_neighbors(currency: str, entity_id: int,
                             direction: Literal["out", "in"],
                             cursor: str | None = None,
                             pagesize: int | None = Query(default=None),
                             fiat: FiatParam = None):
        rows, next_cursor = ks(currency).neighbors(
            "entity", entity_id, direction, cursor, page_size(pagesize))
        return envelope(currency, [_fiat_view(r, fiat) for r in rows], next_cursor)

    @app.get("/{currency}/search", response_model=Envelope[SearchResult],
             response_model_exclude_none=True,
             responses=_COMMON_ERRORS)
    def search(currency: str, q: str):
        ks(currency)
        if len(q) < SEARCH_MIN_LENGTH:
            raise QueryTooShort(f"query must be at least {SEARCH_MIN_LENGTH} characters")
        return envelope(currency, indexes[currency].search(q, SEARCH_LIMIT))

    @app.get("/{currency}/stats", response_model=Envelope[StatsOut],
             response_model_exclude_none=True, responses=_COMMON_ERRORS)
    def stats(currency: str):
        return envelope(currency, ks(currency).manifest["stats"])

    return app


def serve(config: ApiConfig) -> None:
    """Build the app (fail fast on unreadable keyspaces) and run it."""
    app = create_app(config)
    host, port = config.host_port
    try:
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
        probe.close()
    except OSError as exc:
        raise BindError(f"cannot bind {config.bind}: {exc}") from exc
    uvicorn.run(app, host=host, port=port, log_level="warning")

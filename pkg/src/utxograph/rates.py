"""Historical exchange rates: CSV ingestion, optional HTTP providers, fiat conversion.

Crypto rates are daily USD closes; fiat cross-rates follow the ECB convention
(units of fiat per EUR), so the published eurofxref-hist data drops in
unchanged. Missing dates are a hard error carrying the nearest known date:
silent interpolation would blur provenance.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import os
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation, localcontext
from pathlib import Path

import requests

from .errors import DuplicateError, MissingRate, NetworkError, ParseError, SchemaError

BASE_UNITS_PER_COIN = 10**8
FIAT_PRECISION = Decimal("0.01")

PROVIDERS = ("coindesk", "coinmarketcap", "ecb")
ENV_PREFIX = "UTXOGRAPH_RATE_PROVIDER_URL_"


@dataclass(slots=True)
class RateTable:
    """Daily USD rates per asset plus ECB per-EUR fiat cross-rates."""

    usd: dict[tuple[str, str], Decimal] = field(default_factory=dict)  # (date, asset)
    fx: dict[tuple[str, str], Decimal] = field(default_factory=dict)   # (date, fiat)

    def merge(self, other: "RateTable") -> None:
        for key, value in other.usd.items():
            if key in self.usd and self.usd[key] != value:
                raise DuplicateError(f"conflicting usd rate for {key}")
            self.usd[key] = value
        for key, value in other.fx.items():
            if key in self.fx and self.fx[key] != value:
                raise DuplicateError(f"conflicting fx rate for {key}")
            self.fx[key] = value

    def usd_rate(self, date: str, asset: str) -> Decimal:
        try:
            return self.usd[(date, asset)]
        except KeyError:
            raise MissingRate(asset, date, self._nearest(asset, date)) from None

    def fx_rate(self, date: str, fiat: str) -> Decimal:
        if fiat == "EUR":
            return Decimal(1)
        try:
            return self.fx[(date, fiat)]
        except KeyError:
            nearest = self._nearest_fx(fiat, date)
            raise MissingRate(fiat, date, nearest) from None

    def dates_for(self, asset: str) -> set[str]:
        return {d for d, a in self.usd if a == asset}

    def fx_dates_for(self, fiat: str) -> set[str]:
        return {d for d, f in self.fx if f == fiat}

    def _nearest(self, asset: str, date: str) -> str | None:
        return _nearest_date(self.dates_for(asset), date)

    def _nearest_fx(self, fiat: str, date: str) -> str | None:
        return _nearest_date(self.fx_dates_for(fiat), date)


def _nearest_date(candidates: set[str], target: str) -> str | None:
    if not candidates:
        return None
    want = _parse_date(target, line=None)
    # Ties break toward the earlier date.
    return min(sorted(candidates), key=lambda d: abs((_parse_date(d, line=None) - want).days))


def _parse_date(text: str, line: int | None) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise ParseError(f"invalid date {text!r}", line=line) from None


def _parse_rate(text: str, line: int | None) -> Decimal:
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise ParseError(f"invalid number {text!r}", line=line) from None
    if value <= 0:
        raise ParseError(f"rate must be positive, got {text!r}", line=line)
    return value


def load_rates(path: str | Path, kind: str) -> RateTable:
    """Load one CSV fragment; kind is 'crypto_usd' or 'ecb_fx'."""
    if kind not in ("crypto_usd", "ecb_fx"):
        raise ParseError(f"unknown rates kind {kind!r}")
    expected = ["date", "asset", "usd_rate"] if kind == "crypto_usd" else ["date", "fiat", "per_eur"]
    table = RateTable()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("missing CSV header", line=1, path=str(path)) from None
        if [h.strip() for h in header] != expected:
            raise ParseError(f"expected header {','.join(expected)}", line=1, path=str(path))
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 columns, got {len(row)}", line=lineno, path=str(path))
            date = _parse_date(row[0].strip(), lineno).isoformat()
            code = row[1].strip().upper()
            rate = _parse_rate(row[2].strip(), lineno)
            target = table.usd if kind == "crypto_usd" else table.fx
            if (date, code) in target:
                raise DuplicateError(f"duplicate rate for ({date}, {code}) at line {lineno}")
            target[(date, code)] = rate
    return table


def to_fiat(value: int, asset: str, date: str, fiat: str, table: RateTable) -> Decimal:
    """Convert base units to fiat at the given UTC day's rate (unrounded).

    USD: value/10^8 * usd_rate. Other fiat f: USD amount * fx(f)/fx(USD),
    both per-EUR ECB rates (EUR itself is implicitly 1).
    """
    with localcontext() as ctx:
        ctx.prec = 50
        usd = Decimal(value) / BASE_UNITS_PER_COIN * table.usd_rate(date, asset)
        if fiat == "USD":
            return usd
        return usd * table.fx_rate(date, fiat) / table.fx_rate(date, "USD")


def quantize_fiat(amount: Decimal) -> Decimal:
    """Presentation rounding: 2 fractional digits, half-even."""
    return amount.quantize(FIAT_PRECISION, rounding="ROUND_HALF_EVEN")


# ---------------------------------------------------------------------------
# Optional HTTP providers. CI and the test suite never touch the network:
# provider base URLs come from environment variables and default to unset.

def provider_url(provider: str) -> str | None:
    return os.environ.get(ENV_PREFIX + provider.upper())


def fetch_rates(provider: str, start: str, end: str, asset: str = "BTC",
                session: "requests.Session | None" = None) -> RateTable:
    """Fetch a daily fragment from a configured provider. Gaps are allowed;
    a failed or malformed response raises without partial ingest."""
    if provider not in PROVIDERS:
        raise SchemaError("provider", f"unknown provider {provider!r}")
    url = provider_url(provider)
    if not url:
        raise NetworkError(f"provider {provider} not configured "
                           f"(set {ENV_PREFIX}{provider.upper()})")
    http = session or requests
    try:
        response = http.get(url, params={"start": start, "end": end, "asset": asset},
                            timeout=30)
    except requests.RequestException as exc:
        raise NetworkError(f"{provider}: {exc}") from exc
    if response.status_code != 200:
        raise NetworkError(f"{provider}: HTTP {response.status_code}")
    if provider == "coindesk":
        return _parse_coindesk(response, start, end)
    if provider == "coinmarketcap":
        return _parse_coinmarketcap(response, asset, start, end)
    return _parse_ecb(response, start, end)


def _in_range(date: str, start: str, end: str) -> bool:
    return start <= date <= end


def _parse_coindesk(response, start: str, end: str) -> RateTable:
    # Bitcoin Price Index close.json shape: {"bpi": {"YYYY-MM-DD": rate}}.
    try:
        body = response.json()
        bpi = body["bpi"]
        items = list(bpi.items())
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise SchemaError("bpi", f"unexpected coindesk response: {exc}") from exc
    table = RateTable()
    for date, rate in items:
        if not _in_range(date, start, end):
            continue
        table.usd[(_parse_date(date, None).isoformat(), "BTC")] = _parse_rate(str(rate), None)
    return table


def _parse_coinmarketcap(response, asset: str, start: str, end: str) -> RateTable:
    # OHLCV historical shape: {"data": {"quotes": [{"time_open": ..., "quote":
    # {"USD": {"close": ...}}}]}}.
    try:
        quotes = response.json()["data"]["quotes"]
        rows = [(q["time_open"][:10], q["quote"]["USD"]["close"]) for q in quotes]
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise SchemaError("quotes", f"unexpected coinmarketcap response: {exc}") from exc
    table = RateTable()
    for date, close in rows:
        if not _in_range(date, start, end):
            continue
        table.usd[(_parse_date(date, None).isoformat(), asset.upper())] = _parse_rate(str(close), None)
    return table


def _parse_ecb(response, start: str, end: str) -> RateTable:
    # eurofxref-hist CSV shape: header "Date,USD,JPY,...", one row per day.
    try:
        text = response.text
    except AttributeError as exc:
        raise SchemaError("body", "unexpected ecb response") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("header", "empty ecb response") from None
    if not header or header[0].strip() != "Date":
        raise SchemaError("header", "unexpected ecb response header")
    fiats = [h.strip() for h in header[1:]]
    table = RateTable()
    for row in reader:
        if not row or not row[0].strip():
            continue
        date = _parse_date(row[0].strip(), None).isoformat()
        if not _in_range(date, start, end):
            continue
        for fiat, cell in zip(fiats, row[1:]):
            cell = cell.strip()
            if not cell or cell == "N/A":
                continue
            table.fx[(date, fiat.upper())] = _parse_rate(cell, None)
    return table

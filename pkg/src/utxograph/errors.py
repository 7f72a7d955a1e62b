"""Exception hierarchy shared across the pipeline.

Every error raised by utxograph derives from UtxographError, so callers can
catch one type at process boundaries (the CLI maps them to exit codes).
"""

from __future__ import annotations


class UtxographError(Exception):
    """Base class for all utxograph errors."""

    code = "error"


class ParseError(UtxographError):
    """Malformed input that could not be decoded (bad JSON/CSV/number/hex)."""

    code = "parse_error"

    def __init__(self, message: str, *, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)


class ValidationError(UtxographError):
    """Well-formed input that violates a domain invariant."""

    code = "validation_error"

    def __init__(self, rule: str, *, height: int | None = None, detail: str = ""):
        self.rule = rule
        self.height = height
        msg = rule
        if height is not None:
            msg += f" (block {height})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ParamError(UtxographError):
    code = "param_error"


class DuplicateError(UtxographError):
    code = "duplicate_error"


class NetworkError(UtxographError):
    code = "network_error"


class SchemaError(UtxographError):
    """Input does not match the expected document schema (named field)."""

    code = "schema_error"

    def __init__(self, field: str, detail: str = ""):
        self.field = field
        super().__init__(f"{field}: {detail}" if detail else field)


class YamlError(UtxographError):
    code = "yaml_error"


class DuplicateConcept(UtxographError):
    code = "duplicate_concept"


class MissingRate(UtxographError):
    """No exchange rate for the requested day; carries the nearest known day."""

    code = "missing_rate"

    def __init__(self, asset: str, date: str, nearest: str | None):
        self.asset = asset
        self.date = date
        self.nearest = nearest
        hint = f", nearest available: {nearest}" if nearest else ", no dates available"
        super().__init__(f"no rate for {asset} on {date}{hint}")


class PartitionGap(UtxographError):
    code = "partition_gap"


class StoreIoError(UtxographError):
    code = "store_io_error"


class KeyspaceError(UtxographError):
    code = "keyspace_error"


class UnknownId(UtxographError):
    code = "unknown_id"


class UnknownCurrency(UtxographError):
    code = "unknown_currency"


class QueryTooShort(UtxographError):
    code = "query_too_short"


class BindError(UtxographError):
    code = "bind_error"

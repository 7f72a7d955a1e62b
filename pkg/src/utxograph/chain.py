"""Raw-ledger data model: chain file I/O, validation, ID mapping, synthetic chains.

The chain file format is newline-delimited JSON, one block per line (see
README for the exact schema). Values are integers in base units; fiat
conversion happens at presentation time only.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .errors import ParamError, ParseError, UnknownId, ValidationError

ADDRESS_TYPES = ("pubkeyhash", "scripthash", "multisig", "other")

_HEX64 = re.compile(r"^[0-9a-f]{64}$")

# Fixed genesis timestamp for synthetic chains (2020-09-13 12:26:40 UTC).
GENESIS_TIMESTAMP = 1_600_000_000
BLOCK_INTERVAL = 600
COINBASE_SUBSIDY = 50 * 10**8


@dataclass(frozen=True, slots=True)
class TxSlot:
    """One input or output of a transaction: an address and a value in base units."""

    address: str
    value: int
    address_type: str = "pubkeyhash"


@dataclass(frozen=True, slots=True)
class RawTransaction:
    hash: str
    inputs: tuple[TxSlot, ...]
    outputs: tuple[TxSlot, ...]
    coinbase: bool = False

    @property
    def total_input(self) -> int:
        return sum(s.value for s in self.inputs)

    @property
    def total_output(self) -> int:
        return sum(s.value for s in self.outputs)

    @property
    def fee(self) -> int:
        """Input minus output total; 0 for coinbase (coinbase mints value)."""
        if self.coinbase:
            return 0
        return self.total_input - self.total_output


@dataclass(frozen=True, slots=True)
class RawBlock:
    height: int
    hash: str
    timestamp: int
    transactions: tuple[RawTransaction, ...]


@dataclass(frozen=True, slots=True)
class RawChain:
    blocks: tuple[RawBlock, ...]

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def n_transactions(self) -> int:
        return sum(len(b.transactions) for b in self.blocks)

    def transactions(self) -> Iterator[tuple[RawBlock, RawTransaction]]:
        for block in self.blocks:
            for tx in block.transactions:
                yield block, tx


class IdMap:
    """Bijection between address/tx hashes and dense integer IDs.

    IDs are assigned in first-appearance order: block order, then tx order,
    then outputs before inputs within a tx. Built once, then read-only.
    """

    def __init__(self) -> None:
        self.address_ids: dict[str, int] = {}
        self.addresses: list[str] = []
        self.tx_ids: dict[str, int] = {}
        self.tx_hashes: list[str] = []

    @property
    def n_addresses(self) -> int:
        return len(self.addresses)

    @property
    def n_transactions(self) -> int:
        return len(self.tx_hashes)

    def address_id(self, address: str) -> int:
        try:
            return self.address_ids[address]
        except KeyError:
            raise UnknownId(f"unknown address: {address}") from None

    def tx_id(self, tx_hash: str) -> int:
        try:
            return self.tx_ids[tx_hash]
        except KeyError:
            raise UnknownId(f"unknown transaction: {tx_hash}") from None

    def _add_address(self, address: str) -> int:
        existing = self.address_ids.get(address)
        if existing is not None:
            return existing
        new_id = len(self.addresses)
        self.address_ids[address] = new_id
        self.addresses.append(address)
        return new_id

    def _add_tx(self, tx_hash: str) -> int:
        existing = self.tx_ids.get(tx_hash)
        if existing is not None:
            return existing
        new_id = len(self.tx_hashes)
        self.tx_ids[tx_hash] = new_id
        self.tx_hashes.append(tx_hash)
        return new_id


def assign_ids(chain: RawChain) -> IdMap:
    """Map every distinct address and tx hash to a dense integer ID."""
    idmap = IdMap()
    for _, tx in chain.transactions():
        idmap._add_tx(tx.hash)
        for slot in tx.outputs:
            idmap._add_address(slot.address)
        for slot in tx.inputs:
            idmap._add_address(slot.address)
    return idmap


# ---------------------------------------------------------------------------
# Chain file parsing

_BLOCK_FIELDS = {"height", "hash", "timestamp", "txs"}
_TX_FIELDS = {"hash", "coinbase", "inputs", "outputs"}
_SLOT_FIELDS = {"address", "value", "address_type"}


def _parse_slot(obj: object, line: int) -> TxSlot:
    if not isinstance(obj, dict):
        raise ParseError("slot is not an object", line=line)
    unknown = set(obj) - _SLOT_FIELDS
    if unknown:
        raise ParseError(f"unknown slot field {sorted(unknown)[0]!r}", line=line)
    address = obj.get("address")
    value = obj.get("value")
    address_type = obj.get("address_type", "pubkeyhash")
    if not isinstance(address, str):
        raise ParseError("slot address must be a string", line=line)
    if not isinstance(value, int) or isinstance(value, bool):
        raise ParseError("slot value must be an integer", line=line)
    if address_type not in ADDRESS_TYPES:
        raise ParseError(f"unknown address_type {address_type!r}", line=line)
    return TxSlot(address=address, value=value, address_type=address_type)


def _parse_tx(obj: object, line: int) -> RawTransaction:
    if not isinstance(obj, dict):
        raise ParseError("tx is not an object", line=line)
    unknown = set(obj) - _TX_FIELDS
    if unknown:
        raise ParseError(f"unknown tx field {sorted(unknown)[0]!r}", line=line)
    tx_hash = obj.get("hash")
    coinbase = obj.get("coinbase", False)
    if not isinstance(tx_hash, str) or not _HEX64.match(tx_hash):
        raise ParseError("tx hash must be 64 lowercase hex chars", line=line)
    if not isinstance(coinbase, bool):
        raise ParseError("tx coinbase must be a boolean", line=line)
    for key in ("inputs", "outputs"):
        if not isinstance(obj.get(key), list):
            raise ParseError(f"tx {key} must be a list", line=line)
    inputs = tuple(_parse_slot(s, line) for s in obj["inputs"])
    outputs = tuple(_parse_slot(s, line) for s in obj["outputs"])
    return RawTransaction(hash=tx_hash, inputs=inputs, outputs=outputs, coinbase=coinbase)


def _parse_block(text: str, line: int) -> RawBlock:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=line) from exc
    if not isinstance(obj, dict):
        raise ParseError("block is not an object", line=line)
    unknown = set(obj) - _BLOCK_FIELDS
    if unknown:
        raise ParseError(f"unknown block field {sorted(unknown)[0]!r}", line=line)
    for key in _BLOCK_FIELDS:
        if key not in obj:
            raise ParseError(f"missing block field {key!r}", line=line)
    height, block_hash, timestamp = obj["height"], obj["hash"], obj["timestamp"]
    if not isinstance(height, int) or isinstance(height, bool):
        raise ParseError("block height must be an integer", line=line)
    if not isinstance(block_hash, str) or not _HEX64.match(block_hash):
        raise ParseError("block hash must be 64 lowercase hex chars", line=line)
    if not isinstance(timestamp, int) or isinstance(timestamp, bool):
        raise ParseError("block timestamp must be an integer", line=line)
    if not isinstance(obj["txs"], list):
        raise ParseError("block txs must be a list", line=line)
    txs = tuple(_parse_tx(t, line) for t in obj["txs"])
    return RawBlock(height=height, hash=block_hash, timestamp=timestamp, transactions=txs)


def validate_chain(chain: RawChain) -> None:
    """Check every chain invariant; raises ValidationError naming the rule."""
    seen_block_hashes: set[str] = set()
    seen_tx_hashes: set[str] = set()
    prev_timestamp = None
    for index, block in enumerate(chain.blocks):
        h = block.height
        if h != index:
            raise ValidationError("height not consecutive", height=h,
                                  detail=f"expected {index}")
        if h < 0:
            raise ValidationError("height negative", height=h)
        if block.timestamp < 0:
            raise ValidationError("timestamp negative", height=h)
        if prev_timestamp is not None and block.timestamp < prev_timestamp:
            raise ValidationError("timestamp decreasing", height=h)
        prev_timestamp = block.timestamp
        if block.hash in seen_block_hashes:
            raise ValidationError("duplicate block hash", height=h, detail=block.hash)
        seen_block_hashes.add(block.hash)
        for tx in block.transactions:
            if tx.hash in seen_tx_hashes:
                raise ValidationError("duplicate tx hash", height=h, detail=tx.hash)
            seen_tx_hashes.add(tx.hash)
            if tx.coinbase != (len(tx.inputs) == 0):
                raise ValidationError("coinbase inputs", height=h,
                                      detail=f"tx {tx.hash}")
            for slot in tx.inputs + tx.outputs:
                if slot.value < 0:
                    raise ValidationError("value negative", height=h,
                                          detail=f"tx {tx.hash}")
                if not slot.address:
                    raise ValidationError("address empty", height=h,
                                          detail=f"tx {tx.hash}")
            if not tx.coinbase and tx.fee < 0:
                raise ValidationError("fee negative", height=h, detail=f"tx {tx.hash}")


def load_chain(path: str | Path) -> RawChain:
    """Read and validate a newline-delimited JSON chain file."""
    blocks = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            blocks.append(_parse_block(text, lineno))
    chain = RawChain(blocks=tuple(blocks))
    validate_chain(chain)
    return chain


def _slot_dict(slot: TxSlot) -> dict:
    return {"address": slot.address, "value": slot.value, "address_type": slot.address_type}


def _block_dict(block: RawBlock) -> dict:
    return {
        "height": block.height,
        "hash": block.hash,
        "timestamp": block.timestamp,
        "txs": [
            {
                "hash": tx.hash,
                "coinbase": tx.coinbase,
                "inputs": [_slot_dict(s) for s in tx.inputs],
                "outputs": [_slot_dict(s) for s in tx.outputs],
            }
            for tx in block.transactions
        ],
    }


def write_chain(chain: RawChain, path: str | Path) -> None:
    """Write a chain as canonical NDJSON; load_chain(write_chain(c)) == c."""
    with open(path, "w", encoding="utf-8") as fh:
        for block in chain.blocks:
            fh.write(json.dumps(_block_dict(block), sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def chain_to_lines(chain: RawChain) -> list[str]:
    return [json.dumps(_block_dict(b), sort_keys=True, separators=(",", ":"))
            for b in chain.blocks]


# ---------------------------------------------------------------------------
# Synthetic chain generation

@dataclass(slots=True)
class _Utxo:
    address: str
    value: int
    address_type: str


@dataclass(slots=True)
class _Generator:
    rng: random.Random
    seed: int
    address_pool: int
    reuse_rate: float
    utxos: list[_Utxo] = field(default_factory=list)
    addresses: list[str] = field(default_factory=list)

    def new_address(self) -> str:
        name = f"addr{len(self.addresses):06d}"
        self.addresses.append(name)
        return name

    def pick_address(self) -> str:
        if self.addresses and (
            len(self.addresses) >= self.address_pool or self.rng.random() < self.reuse_rate
        ):
            return self.rng.choice(self.addresses)
        return self.new_address()

    def pick_type(self) -> str:
        r = self.rng.random()
        if r < 0.93:
            return "pubkeyhash"
        if r < 0.97:
            return "scripthash"
        if r < 0.99:
            return "multisig"
        return "other"

    def tx_hash(self, height: int, index: int) -> str:
        return hashlib.sha256(f"tx:{self.seed}:{height}:{index}".encode()).hexdigest()

    def block_hash(self, height: int) -> str:
        return hashlib.sha256(f"block:{self.seed}:{height}".encode()).hexdigest()

    def take_inputs(self, count: int) -> list[_Utxo]:
        picked = []
        for _ in range(count):
            picked.append(self.utxos.pop(self.rng.randrange(len(self.utxos))))
        return picked

    def emit_outputs(self, values: list[int], types: list[str] | None = None) -> tuple[TxSlot, ...]:
        slots = []
        for i, value in enumerate(values):
            address = self.pick_address()
            address_type = types[i] if types else self.pick_type()
            slots.append(TxSlot(address=address, value=value, address_type=address_type))
            self.utxos.append(_Utxo(address, value, address_type))
        return tuple(slots)


def _distinct_split(rng: random.Random, total: int, parts: int) -> list[int]:
    """Split at most `total` into `parts` strictly distinct non-negative values.

    The unallocated remainder becomes fee, so the sum may be below `total`.
    Distinct values keep plain transactions out of the CoinJoin detector's
    equal-output pattern.
    """
    if total <= 0 or parts <= 0:
        return [0]
    values = sorted((rng.randint(1, total) for _ in range(parts)), reverse=True)
    # Scale down so the sum fits, then enforce strict descent.
    over = sum(values)
    if over > total:
        values = [max(0, v * total // over) for v in values]
    result: list[int] = []
    for v in values:
        if result:
            v = min(v, result[-1] - 1)
        if v < 0:
            break
        result.append(v)
    if not result:
        result = [0]
    return result


def generate_chain(
    seed: int,
    *,
    blocks: int,
    txs_per_block: int,
    address_pool: int,
    reuse_rate: float,
    coinjoin_rate: float,
    min_inputs: int = 1,
    max_inputs: int = 3,
) -> RawChain:
    """Generate a deterministic synthetic chain satisfying all invariants.

    min_inputs/max_inputs bound the input count of plain spends; CoinJoin-shaped
    transactions are emitted at coinjoin_rate and always match the detector,
    plain transactions never do (their output values are pairwise distinct).
    """
    if blocks <= 0 or txs_per_block <= 0 or address_pool <= 0:
        raise ParamError("blocks, txs_per_block and address_pool must be positive")
    if not (0.0 <= reuse_rate <= 1.0):
        raise ParamError(f"reuse_rate must be in [0,1], got {reuse_rate}")
    if not (0.0 <= coinjoin_rate <= 1.0):
        raise ParamError(f"coinjoin_rate must be in [0,1], got {coinjoin_rate}")
    if min_inputs <= 0 or max_inputs < min_inputs:
        raise ParamError("need 0 < min_inputs <= max_inputs")

    gen = _Generator(rng=random.Random(seed), seed=seed,
                     address_pool=address_pool, reuse_rate=reuse_rate)
    out_blocks = []
    for height in range(blocks):
        txs: list[RawTransaction] = []
        subsidy_split = _distinct_split(gen.rng, COINBASE_SUBSIDY, gen.rng.randint(1, 2))
        txs.append(RawTransaction(
            hash=gen.tx_hash(height, 0),
            inputs=(),
            outputs=gen.emit_outputs(subsidy_split),
            coinbase=True,
        ))
        for index in range(1, txs_per_block + 1):
            if not gen.utxos:
                break
            tx = _make_spend(gen, height, index, coinjoin_rate, min_inputs, max_inputs)
            txs.append(tx)
        out_blocks.append(RawBlock(
            height=height,
            hash=gen.block_hash(height),
            timestamp=GENESIS_TIMESTAMP + height * BLOCK_INTERVAL,
            transactions=tuple(txs),
        ))
    chain = RawChain(blocks=tuple(out_blocks))
    validate_chain(chain)
    return chain


def _make_spend(gen: _Generator, height: int, index: int, coinjoin_rate: float,
                min_inputs: int, max_inputs: int) -> RawTransaction:
    rng = gen.rng
    want_coinjoin = rng.random() < coinjoin_rate
    if want_coinjoin:
        equal_n = rng.randint(2, 3)
        if len(gen.utxos) >= equal_n:
            k_in = rng.randint(equal_n, min(len(gen.utxos), equal_n + 2))
            inputs = gen.take_inputs(k_in)
            total = sum(u.value for u in inputs)
            fee = min(1000, total // 100)
            avail = total - fee
            n_out = rng.randint(equal_n, 2 * equal_n)
            equal_value = avail // (2 * equal_n)
            if equal_value >= 1:
                values = [equal_value] * equal_n
                # Remaining outputs take distinct change values != equal_value.
                extra = n_out - equal_n
                budget = avail - equal_n * equal_value
                for j in range(extra):
                    v = budget // (extra - j) if extra - j else 0
                    if v == equal_value:
                        v -= 1
                    if v <= 0 or v in values:
                        break
                    values.append(v)
                    budget -= v
                in_slots = tuple(TxSlot(u.address, u.value, u.address_type) for u in inputs)
                return RawTransaction(
                    hash=gen.tx_hash(height, index),
                    inputs=in_slots,
                    outputs=gen.emit_outputs(values),
                    coinbase=False,
                )
            # Not enough value for the pattern: fall through to a plain spend.
            gen.utxos.extend(inputs)
    k_in = rng.randint(min_inputs, max_inputs)
    k_in = max(1, min(k_in, len(gen.utxos)))
    inputs = gen.take_inputs(k_in)
    total = sum(u.value for u in inputs)
    fee = min(1000, total // 100)
    avail = total - fee
    n_out = rng.randint(1, 3)
    values = _distinct_split(rng, avail, n_out)
    in_slots = tuple(TxSlot(u.address, u.value, u.address_type) for u in inputs)
    return RawTransaction(
        hash=gen.tx_hash(height, index),
        inputs=in_slots,
        outputs=gen.emit_outputs(values),
        coinbase=False,
    )

from __future__ import annotations

import json

import pytest

from utxograph import chain as chainmod
from utxograph.chain import (
    IdMap,
    RawBlock,
    RawChain,
    RawTransaction,
    TxSlot,
    assign_ids,
    generate_chain,
    load_chain,
    validate_chain,
    write_chain,
)
from utxograph.errors import ParamError, ParseError, ValidationError

H = "00" * 32


def _hex(n: int) -> str:
    return f"{n:064x}"


def _coinbase(txh: str, address: str, value: int) -> RawTransaction:
    return RawTransaction(hash=txh, inputs=(),
                          outputs=(TxSlot(address, value),), coinbase=True)


def _block(height: int, txs, timestamp: int | None = None) -> RawBlock:
    return RawBlock(height=height, hash=_hex(1000 + height),
                    timestamp=timestamp if timestamp is not None else 1_600_000_000 + height,
                    transactions=tuple(txs))


def test_load_empty_file(tmp_path):
    path = tmp_path / "chain.ndjson"
    path.write_text("")
    chain = load_chain(path)
    assert chain.n_blocks == 0
    assert chain.n_transactions == 0


def test_load_minimal_chain(tmp_path):
    block = {
        "height": 0,
        "hash": _hex(1),
        "timestamp": 1_600_000_000,
        "txs": [{
            "hash": _hex(2),
            "coinbase": True,
            "inputs": [],
            "outputs": [{"address": "A", "value": 50 * 10**8, "address_type": "pubkeyhash"}],
        }],
    }
    path = tmp_path / "chain.ndjson"
    path.write_text(json.dumps(block) + "\n")
    chain = load_chain(path)
    assert chain.n_blocks == 1
    assert chain.n_transactions == 1
    assert chain.blocks[0].transactions[0].outputs[0].value == 50 * 10**8
    idmap = assign_ids(chain)
    assert idmap.n_addresses == 1


def test_negative_fee_rejected(tmp_path):
    txs = [
        {"hash": _hex(2), "coinbase": True, "inputs": [],
         "outputs": [{"address": "A", "value": 9}]},
        {"hash": _hex(3), "coinbase": False,
         "inputs": [{"address": "A", "value": 9}],
         "outputs": [{"address": "B", "value": 10}]},
    ]
    block = {"height": 0, "hash": _hex(1), "timestamp": 1, "txs": txs}
    path = tmp_path / "chain.ndjson"
    path.write_text(json.dumps(block) + "\n")
    with pytest.raises(ValidationError) as err:
        load_chain(path)
    assert err.value.rule == "fee negative"
    assert err.value.height == 0


@pytest.mark.parametrize("mutate, message", [
    (lambda b: b.update(extra=1), "unknown block field"),
    (lambda b: b.update(hash="xyz"), "64 lowercase hex"),
    (lambda b: b.pop("timestamp"), "missing block field"),
    (lambda b: b["txs"][0].update(weird=True), "unknown tx field"),
    (lambda b: b["txs"][0]["outputs"][0].update(value="10"), "must be an integer"),
    (lambda b: b["txs"][0]["outputs"][0].update(address_type="p2pk"), "address_type"),
])
def test_malformed_input_raises_parse_error(tmp_path, mutate, message):
    block = {
        "height": 0, "hash": _hex(1), "timestamp": 1,
        "txs": [{"hash": _hex(2), "coinbase": True, "inputs": [],
                 "outputs": [{"address": "A", "value": 10}]}],
    }
    mutate(block)
    path = tmp_path / "chain.ndjson"
    path.write_text(json.dumps(block) + "\n")
    with pytest.raises(ParseError) as err:
        load_chain(path)
    assert message in str(err.value)
    assert err.value.line == 1


def test_parse_error_carries_line_number(tmp_path):
    good = json.dumps({"height": 0, "hash": _hex(1), "timestamp": 1, "txs": []})
    path = tmp_path / "chain.ndjson"
    path.write_text(good + "\n{nonsense\n")
    with pytest.raises(ParseError) as err:
        load_chain(path)
    assert err.value.line == 2


@pytest.mark.parametrize("blocks_fn, rule", [
    (lambda: [_block(0, [_coinbase(_hex(2), "A", 5)]), _block(2, [_coinbase(_hex(3), "B", 5)])],
     "height not consecutive"),
    (lambda: [_block(0, [_coinbase(_hex(2), "A", 5)], timestamp=100),
              _block(1, [_coinbase(_hex(3), "B", 5)], timestamp=99)],
     "timestamp decreasing"),
    (lambda: [RawBlock(0, _hex(9), 1, (_coinbase(_hex(2), "A", 5),)),
              RawBlock(1, _hex(9), 2, (_coinbase(_hex(3), "B", 5),))],
     "duplicate block hash"),
    (lambda: [_block(0, [RawTransaction(_hex(2), (), (TxSlot("A", 5),), coinbase=False)])],
     "coinbase inputs"),
    (lambda: [_block(0, [_coinbase(_hex(2), "A", 5),
                         _coinbase(_hex(2), "B", 5)])],
     "duplicate tx hash"),
    (lambda: [_block(0, [_coinbase(_hex(2), "", 5)])],
     "address empty"),
])
def test_invariant_violations(blocks_fn, rule):
    with pytest.raises(ValidationError) as err:
        validate_chain(RawChain(blocks=tuple(blocks_fn())))
    assert err.value.rule == rule


def test_assign_ids_first_appearance_order():
    # Addresses appear in output order X, Y, X, Z.
    txs = [
        RawTransaction(_hex(2), (), (TxSlot("X", 4), TxSlot("Y", 3)), coinbase=True),
        RawTransaction(_hex(3), (TxSlot("X", 4),), (TxSlot("Z", 4),), coinbase=False),
    ]
    chain = RawChain(blocks=(_block(0, txs),))
    idmap = assign_ids(chain)
    assert idmap.address_ids == {"X": 0, "Y": 1, "Z": 2}
    assert idmap.addresses == ["X", "Y", "Z"]
    assert idmap.tx_ids == {_hex(2): 0, _hex(3): 1}


def test_assign_ids_outputs_before_inputs_within_tx():
    # B first appears as an output of the same tx that spends A; the fresh
    # output address must get the lower ID.
    txs = [
        RawTransaction(_hex(2), (), (TxSlot("A", 10),), coinbase=True),
        RawTransaction(_hex(3), (TxSlot("A", 10),), (TxSlot("B", 5), TxSlot("C", 4)),
                       coinbase=False),
    ]
    chain = RawChain(blocks=(_block(0, txs),))
    idmap = assign_ids(chain)
    assert idmap.address_ids == {"A": 0, "B": 1, "C": 2}


def test_assign_ids_empty_chain():
    idmap = assign_ids(RawChain(blocks=()))
    assert idmap.n_addresses == 0
    assert idmap.n_transactions == 0


def test_assign_ids_round_trip_on_generated_chain():
    chain = generate_chain(7, blocks=40, txs_per_block=20, address_pool=1500,
                           reuse_rate=0.2, coinjoin_rate=0.0)
    idmap = assign_ids(chain)
    assert idmap.n_addresses >= 1000
    for i in range(idmap.n_addresses):
        assert idmap.address_ids[idmap.addresses[i]] == i
    for i in range(idmap.n_transactions):
        assert idmap.tx_ids[idmap.tx_hashes[i]] == i
    # Stable under re-runs on identical input.
    again = assign_ids(chain)
    assert again.address_ids == idmap.address_ids
    assert again.tx_hashes == idmap.tx_hashes


def test_write_load_round_trip(tmp_path):
    chain = generate_chain(3, blocks=8, txs_per_block=5, address_pool=60,
                           reuse_rate=0.4, coinjoin_rate=0.2)
    path = tmp_path / "chain.ndjson"
    write_chain(chain, path)
    assert load_chain(path) == chain


def test_generate_chain_deterministic(tmp_path):
    params = dict(blocks=10, txs_per_block=6, address_pool=100,
                  reuse_rate=0.3, coinjoin_rate=0.1)
    a, b = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
    write_chain(generate_chain(1, **params), a)
    write_chain(generate_chain(1, **params), b)
    assert a.read_bytes() == b.read_bytes()
    write_chain(generate_chain(2, **params), b)
    assert a.read_bytes() != b.read_bytes()


def test_generate_chain_invariants_hold():
    chain = generate_chain(11, blocks=20, txs_per_block=10, address_pool=80,
                           reuse_rate=0.5, coinjoin_rate=0.15)
    validate_chain(chain)
    for _, tx in chain.transactions():
        if not tx.coinbase:
            assert tx.fee >= 0


def test_generate_chain_param_errors():
    with pytest.raises(ParamError):
        generate_chain(1, blocks=0, txs_per_block=1, address_pool=1,
                       reuse_rate=0.0, coinjoin_rate=0.0)
    with pytest.raises(ParamError):
        generate_chain(1, blocks=1, txs_per_block=1, address_pool=1,
                       reuse_rate=1.5, coinjoin_rate=0.0)
    with pytest.raises(ParamError):
        generate_chain(1, blocks=1, txs_per_block=1, address_pool=1,
                       reuse_rate=0.0, coinjoin_rate=-0.1)
    with pytest.raises(ParamError):
        generate_chain(1, blocks=1, txs_per_block=1, address_pool=1,
                       reuse_rate=0.0, coinjoin_rate=0.0, min_inputs=3, max_inputs=2)


def test_unknown_id_lookup():
    idmap = IdMap()
    from utxograph.errors import UnknownId
    with pytest.raises(UnknownId):
        idmap.address_id("nope")

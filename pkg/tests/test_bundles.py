# tests/test_bundles.py
import json
from fractions import Fraction

import pytest

from core.bundles.bundle_audit import (
    GWEI, bundle_effective_priority_fee, bundle_stats, classification_rows, classify_bundle, classify_bundle2,
    classify_bundle3, load_bundles, public_fee_gap, to_gwei,
)
from core.bundles.models import NO_PATTERN, PUBLIC_CAPTURE_2, SANDWICH_3, BundleRecord, BundleTx, normalize_category
from core.errors import DatasetFormatError

ETH = 10**18


def _bundle(*txs, block_number=1, index=0, category="flashbots"):
    """txs are (issuer, priority fee in gwei, coinbase transfer in wei[, gas])."""
    members = []
    for pos, entry in enumerate(txs, start=1):
        issuer, fee_gwei, transfer = entry[:3]
        gas = entry[3] if len(entry) > 3 else 100_000
        members.append(BundleTx(f"0x{block_number}{index}{pos}", issuer, gas, fee_gwei * GWEI, transfer, pos))
    return BundleRecord(block_number, index, tuple(members), category)


def _corpus():
    return [
        _bundle(("A", 5, 0), ("B", 0, 10**15), index=0),           # public capture
        _bundle(("A", 5, 0), ("A", 0, 10**15), index=1),           # same issuer
        _bundle(("A", 5, 1), ("B", 0, 10**15), index=2),           # tx1 pays the miner
        _bundle(("A", 0, 0), ("B", 3, 0), ("A", 0, 10**15), index=3),  # sandwich
        _bundle(("A", 0, 0), ("B", 3, 0), ("C", 0, 10**15), index=4),
        _bundle(("A", 0, 0), ("B", 0, 0), ("A", 0, 10**15), index=5),
        _bundle(("A", 2, 0), block_number=2),
        _bundle(("A", 4, 0), ("C", 0, 5 * 10**14), block_number=2, index=1, category="rogue"),
        _bundle(("X", 0, 0), ("V", 9, 0), ("X", 0, 1), block_number=2, index=2),
        _bundle(("X", 1, 0), ("V", 9, 0), ("X", 0, 1), block_number=3),
        _bundle(("A", 1, 0), ("B", 1, 0), ("C", 1, 0), ("D", 1, 0), block_number=3, index=1, category="miner-payout"),
        _bundle(("A", 0, 10**16), block_number=3, index=2, category="unknown"),
    ]


def _capture_oracle(b):
    if b.size != 2:
        return False
    t1, t2 = b.txs
    return (t1.issuer != t2.issuer and t1.max_priority_fee_per_gas > 0 and t1.coinbase_transfer == 0
            and t2.max_priority_fee_per_gas == 0 and t2.coinbase_transfer > 0)


def _sandwich_oracle(b):
    if b.size != 3:
        return False
    t1, t2, t3 = b.txs
    return (t1.issuer == t3.issuer and t1.issuer != t2.issuer and t1.max_priority_fee_per_gas == 0
            and t3.max_priority_fee_per_gas == 0 and t2.max_priority_fee_per_gas > 0 and t3.coinbase_transfer > 0)


def test_effective_fee_single_tx():
    assert bundle_effective_priority_fee(_bundle(("A", 2, 0))) == 2 * GWEI


def test_effective_fee_counts_coinbase_transfers():
    b = _bundle(("A", 2, 0), ("B", 0, 4 * 10**14))
    assert bundle_effective_priority_fee(b) == 3 * GWEI
    assert to_gwei(bundle_effective_priority_fee(b)) == 3


def test_effective_fee_all_zero():
    assert bundle_effective_priority_fee(_bundle(("A", 0, 0), ("B", 0, 0))) == 0


def test_effective_fee_weights_by_gas():
    b = _bundle(("A", 1, 0, 21_000), ("B", 0, 0, 63_000))
    assert bundle_effective_priority_fee(b) == Fraction(21_000 * GWEI, 84_000)


def test_public_capture_pattern():
    assert classify_bundle2(_bundle(("A", 5, 0), ("B", 0, 10**15))).pattern == PUBLIC_CAPTURE_2
    assert classify_bundle2(_bundle(("A", 5, 0), ("B", 0, 10**15))).public_tx_positions == (1,)
    assert classify_bundle2(_bundle(("A", 5, 0), ("A", 0, 10**15))).pattern == NO_PATTERN
    assert classify_bundle2(_bundle(("A", 5, 7), ("B", 0, 10**15))).pattern == NO_PATTERN
    assert classify_bundle2(_bundle(("A", 5, 0))).pattern == NO_PATTERN


def test_sandwich_pattern():
    assert classify_bundle3(_bundle(("A", 0, 0), ("B", 3, 0), ("A", 0, 10**15))).pattern == SANDWICH_3
    assert classify_bundle3(_bundle(("A", 0, 0), ("B", 3, 0), ("A", 0, 10**15))).public_tx_positions == (2,)
    assert classify_bundle3(_bundle(("A", 0, 0), ("B", 3, 0), ("C", 0, 10**15))).pattern == NO_PATTERN
    assert classify_bundle3(_bundle(("A", 0, 0), ("B", 0, 0), ("A", 0, 10**15))).pattern == NO_PATTERN
    assert classify_bundle3(_bundle(("A", 5, 0), ("B", 0, 10**15))).pattern == NO_PATTERN


def test_classification_matches_truth_table():
    for b in _corpus():
        pattern = classify_bundle(b).pattern
        assert (pattern == PUBLIC_CAPTURE_2) == _capture_oracle(b)
        assert (pattern == SANDWICH_3) == _sandwich_oracle(b)


def test_public_fee_gap():
    capture = _bundle(("A", 5, 0), ("B", 0, 10**15))
    # (5e5 gwei + 1e6 gwei) over 200000 gas = 7.5 gwei/gas, victim tipped 5
    assert to_gwei(public_fee_gap(capture)) == Fraction(5, 2)
    assert public_fee_gap(_bundle(("A", 2, 0))) is None


def test_stats_of_empty_corpus():
    stats = bundle_stats([])
    assert stats["bundles"] == 0 and stats["blocks"] == 0
    assert stats["size_mean"] == 0 and stats["size_max"] == 0
    assert stats[f"fraction_{PUBLIC_CAPTURE_2}"] == 0


def test_stats_of_sizes_one_to_three():
    bundles = [
        _bundle(("A", 1, 0)),
        _bundle(("A", 1, 0), ("B", 1, 0), index=1),
        _bundle(("A", 1, 0), ("B", 1, 0), ("C", 1, 0), block_number=2),
    ]
    stats = bundle_stats(bundles)
    assert stats["size_mean"] == 2 and stats["size_max"] == 3 and stats["size_median"] == 2.0
    assert stats["blocks"] == 2 and stats["per_block_mean"] == Fraction(3, 2) and stats["per_block_max"] == 2


def test_stats_fractions_match_per_bundle_classification():
    corpus = _corpus()
    stats = bundle_stats(corpus)
    captures = sum(1 for b in corpus if _capture_oracle(b))
    sandwiches = sum(1 for b in corpus if _sandwich_oracle(b))
    assert (captures, sandwiches) == (2, 2)
    assert stats[f"matched_{PUBLIC_CAPTURE_2}"] == captures
    assert stats[f"fraction_{PUBLIC_CAPTURE_2}"] == Fraction(captures, 12)
    assert stats[f"fraction_{SANDWICH_3}"] == Fraction(sandwiches, 12)
    assert stats["category_flashbots"] == 9 and stats["category_rogue"] == 1
    assert stats["transactions"] == sum(b.size for b in corpus)


def test_stats_are_order_insensitive():
    corpus = _corpus()
    assert bundle_stats(corpus) == bundle_stats(list(reversed(corpus)))


def test_classification_rows_are_sorted():
    rows = classification_rows(list(reversed(_corpus())))
    assert [(r["block_number"], r["bundle_index"]) for r in rows][:3] == [(1, 0), (1, 1), (1, 2)]
    assert rows[0]["pattern"] == PUBLIC_CAPTURE_2


def test_bundle_record_checks():
    with pytest.raises(ValueError):
        BundleRecord(1, 0, ())
    with pytest.raises(ValueError):
        BundleRecord(1, 0, (BundleTx("0x", "A", 1, 0, 0, 2),))
    with pytest.raises(ValueError):
        BundleTx("0x", "A", 0, 0, 0, 1)
    assert normalize_category("Miner_Payout") == "miner-payout"
    with pytest.raises(ValueError):
        normalize_category("dark")


def _line(**fields):
    base = {
        "block_number": 10, "bundle_index": 0, "position_in_bundle": 1, "tx_hash": "0xa", "issuer": "A",
        "gas_used": 100_000, "max_priority_fee_per_gas_wei": 0, "coinbase_transfer_wei": 0, "category": "Flashbots",
    }
    base.update(fields)
    return json.dumps(base)


def test_load_bundles_groups_and_orders(tmp_path):
    path = tmp_path / "bundles.jsonl"
    path.write_text("\n".join([
        _line(position_in_bundle=2, tx_hash="0xb", issuer="B", coinbase_transfer_wei=str(10**15)),
        _line(max_priority_fee_per_gas_wei=5 * GWEI),
        _line(block_number=11, category="rogue"),
    ]) + "\n")
    bundles = load_bundles(path)
    assert [(b.block_number, b.size, b.category) for b in bundles] == [(10, 2, "flashbots"), (11, 1, "rogue")]
    assert bundles[0].txs[1].coinbase_transfer == 10**15
    assert classify_bundle(bundles[0]).pattern == PUBLIC_CAPTURE_2


def test_load_bundles_rejects_unknown_category(tmp_path):
    path = tmp_path / "bundles.jsonl"
    path.write_text(_line() + "\n" + _line(bundle_index=1, category="dark") + "\n")
    with pytest.raises(DatasetFormatError) as err:
        load_bundles(path)
    assert err.value.line == 2


def test_load_bundles_rejects_position_gaps(tmp_path):
    path = tmp_path / "bundles.jsonl"
    path.write_text(_line(position_in_bundle=2) + "\n")
    with pytest.raises(DatasetFormatError):
        load_bundles(path)

# core/bundles/bundle_audit.py
"""Private-relay bundle audit: miner reward per gas and public-transaction capture heuristics."""
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from web3 import Web3

from core.bundles.models import (
    CATEGORIES, NO_PATTERN, PUBLIC_CAPTURE_2, SANDWICH_3, BundleClassification, BundleRecord, BundleTx,
    normalize_category,
)
from core.database.dataset_io import RecordError, int_field, read_records, str_field
from core.errors import DatasetFormatError
from utils.logger import get_logger

logger = get_logger(__name__)

GWEI = Web3.to_wei(1, "gwei")


def bundle_effective_priority_fee(b: BundleRecord) -> Fraction:
    """Total miner reward (priority fees + coinbase transfers) per unit of gas, wei/gas."""
    reward = sum(t.gas_used * t.max_priority_fee_per_gas + t.coinbase_transfer for t in b.txs)
    return Fraction(reward, b.total_gas)


def classify_bundle2(b: BundleRecord) -> BundleClassification:
    """tx1 looks public (tip, no transfer), tx2 pays the miner directly, issuers differ."""
    if b.size != 2:
        logger.debug(f"bundle {b.block_number}/{b.bundle_index}: size {b.size} is not 2")
        return BundleClassification(NO_PATTERN)
    tx1, tx2 = b.txs
    if (
        tx1.issuer != tx2.issuer
        and tx1.max_priority_fee_per_gas > 0 and tx1.coinbase_transfer == 0
        and tx2.max_priority_fee_per_gas == 0 and tx2.coinbase_transfer > 0
    ):
        return BundleClassification(PUBLIC_CAPTURE_2, (1,))
    return BundleClassification(NO_PATTERN)


def classify_bundle3(b: BundleRecord) -> BundleClassification:
    """Sandwich: same issuer around a tipping victim, the back-run pays the miner."""
    if b.size != 3:
        logger.debug(f"bundle {b.block_number}/{b.bundle_index}: size {b.size} is not 3")
        return BundleClassification(NO_PATTERN)
    tx1, tx2, tx3 = b.txs
    if (
        tx1.issuer == tx3.issuer != tx2.issuer
        and tx1.max_priority_fee_per_gas == 0 and tx3.max_priority_fee_per_gas == 0
        and tx2.max_priority_fee_per_gas > 0
        and tx3.coinbase_transfer > 0
    ):
        return BundleClassification(SANDWICH_3, (2,))
    return BundleClassification(NO_PATTERN)


def classify_bundle(b: BundleRecord) -> BundleClassification:
    if b.size == 2:
        return classify_bundle2(b)
    if b.size == 3:
        return classify_bundle3(b)
    return BundleClassification(NO_PATTERN)


def public_fee_gap(b: BundleRecord) -> Optional[Fraction]:
    """Effective bundle fee minus the captured public transaction's own tip (wei/gas)."""
    cls = classify_bundle(b)
    if cls.pattern == NO_PATTERN:
        return None
    public = b.txs[cls.public_tx_positions[0] - 1]
    return bundle_effective_priority_fee(b) - public.max_priority_fee_per_gas


def to_gwei(wei_per_gas: Fraction) -> Fraction:
    return Fraction(wei_per_gas) / GWEI


def classification_rows(bundles: Sequence[BundleRecord]) -> List[dict]:
    rows = []
    for b in sorted(bundles, key=lambda b: (b.block_number, b.bundle_index)):
        rows.append({
            "block_number": b.block_number,
            "bundle_index": b.bundle_index,
            "size": b.size,
            "pattern": classify_bundle(b).pattern,
            "effective_priority_fee_gwei": to_gwei(bundle_effective_priority_fee(b)),
        })
    return rows


def bundle_stats(bundles: Sequence[BundleRecord]) -> dict:
    """Corpus summary; fractions are exact and an empty corpus gives all zeros."""
    n = len(bundles)
    summary = {"bundles": n, "transactions": sum(b.size for b in bundles)}
    for category in CATEGORIES:
        summary[f"category_{category}"] = sum(1 for b in bundles if b.category == category)

    sizes = np.array([b.size for b in bundles], dtype=np.int64)
    summary["size_mean"] = Fraction(int(sizes.sum()), n) if n else Fraction(0)
    summary["size_median"] = float(np.median(sizes)) if n else 0.0
    summary["size_std"] = float(sizes.std(ddof=0)) if n else 0.0
    summary["size_max"] = int(sizes.max()) if n else 0

    patterns = [classify_bundle(b).pattern for b in bundles]
    for pattern in (PUBLIC_CAPTURE_2, SANDWICH_3):
        hits = patterns.count(pattern)
        summary[f"matched_{pattern}"] = hits
        summary[f"fraction_{pattern}"] = Fraction(hits, n) if n else Fraction(0)

    per_block: Dict[int, int] = {}
    for b in bundles:
        per_block[b.block_number] = per_block.get(b.block_number, 0) + 1
    counts = np.array(list(per_block.values()), dtype=np.int64)
    summary["blocks"] = len(per_block)
    summary["per_block_mean"] = Fraction(n, len(per_block)) if per_block else Fraction(0)
    summary["per_block_median"] = float(np.median(counts)) if per_block else 0.0
    summary["per_block_max"] = int(counts.max()) if per_block else 0
    return summary


def _wei(rec: dict, key: str) -> int:
    """Wei amounts may arrive as JSON integers or decimal strings."""
    value = rec.get(key, 0)
    if isinstance(value, str) and value.isdigit():
        return int(value)
    if isinstance(value, bool) or not isinstance(value, int):
        raise RecordError(f"field '{key}' must be an integer amount of wei, got {value!r}")
    return value


def parse_bundle_tx(rec: dict) -> Tuple[int, int, str, BundleTx]:
    tx = BundleTx(
        tx_hash=str_field(rec, "tx_hash"),
        issuer=str_field(rec, "issuer"),
        gas_used=int_field(rec, "gas_used"),
        max_priority_fee_per_gas=_wei(rec, "max_priority_fee_per_gas_wei"),
        coinbase_transfer=_wei(rec, "coinbase_transfer_wei"),
        position_in_bundle=int_field(rec, "position_in_bundle"),
    )
    category = normalize_category(str(rec.get("category") or "unknown"))
    return int_field(rec, "block_number"), int_field(rec, "bundle_index"), category, tx


def load_bundles(path: Union[str, Path]) -> List[BundleRecord]:
    """One line per bundle transaction; lines are grouped by (block_number, bundle_index)."""
    path = Path(path)
    if not path.exists():
        raise DatasetFormatError("bundle file not found", file=str(path))
    rows, issues = read_records(path, parse_bundle_tx)
    for issue in issues:
        logger.error(f"❌ {issue.identifier}: {issue.detail}")
    if issues:
        file, _, line = issues[0].identifier.rpartition(":")
        raise DatasetFormatError(issues[0].detail, file=file, line=int(line))

    grouped: Dict[Tuple[int, int], List[Tuple[str, BundleTx]]] = {}
    for block_number, bundle_index, category, tx in rows:
        grouped.setdefault((block_number, bundle_index), []).append((category, tx))

    bundles = []
    for (block_number, bundle_index), members in sorted(grouped.items()):
        categories = {c for c, _ in members}
        if len(categories) > 1:
            raise DatasetFormatError(f"bundle {block_number}/{bundle_index} has mixed categories {sorted(categories)}", file=str(path))
        txs = tuple(sorted((t for _, t in members), key=lambda t: t.position_in_bundle))
        try:
            bundles.append(BundleRecord(block_number, bundle_index, txs, members[0][0]))
        except ValueError as e:
            raise DatasetFormatError(str(e), file=str(path)) from e
    logger.info(f"Loaded {len(bundles)} bundle(s) from {path}")
    return bundles

# core/metrics/congestion.py
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from config.settings import Config
from core.database.models import Block, Dataset, Transaction
from core.errors import PendingTransactionError
from utils.helpers import block_subsidy, describe, fee_rate
from utils.logger import get_logger

logger = get_logger(__name__)

BIN_LABELS = ("none", "low", "medium", "high")
FEERATE_CLASSES = ("low", "high", "exorbitant")


@dataclass(frozen=True)
class CongestionBin:
    label: str
    lower_vb: Optional[int]  # exclusive; None = 0 inclusive
    upper_vb: Optional[int]  # inclusive; None = unbounded


def mempool_size_series(ds: Dataset) -> List[Tuple[int, int, int]]:
    """(timestamp, total vbytes, tx count) per snapshot, time-ordered."""
    series = []
    for snap in sorted(ds.snapshots, key=lambda s: s.timestamp):
        sizes = [ds.tx_index[t].vsize for t in snap.txids if t in ds.tx_index]
        series.append((snap.timestamp, sum(sizes), len(sizes)))
    return series


def congestion_bin(total_vbytes: int, bounds: Tuple[int, ...] = None) -> CongestionBin:
    """Right-closed bins: (0, 1MB], (1, 2], (2, 4], above 4 MB."""
    bounds = Config.CHAIN.congestion_bounds_vb if bounds is None else bounds
    if total_vbytes < 0:
        raise ValueError(f"mempool size must be >= 0, got {total_vbytes}")
    lower = None
    for label, upper in zip(BIN_LABELS, bounds):
        if total_vbytes <= upper:
            return CongestionBin(label, lower, upper)
        lower = upper
    return CongestionBin(BIN_LABELS[len(bounds)], lower, None)


def congested_fraction(ds: Dataset, capacity_vb: int = None) -> Fraction:
    """Share of snapshots holding more than one block's worth of vbytes."""
    capacity_vb = Config.CHAIN.block_max_vsize if capacity_vb is None else capacity_vb
    series = mempool_size_series(ds)
    if not series:
        return Fraction(0)
    return Fraction(sum(1 for _, vb, _ in series if vb > capacity_vb), len(series))


def _raw_delay(tx: Transaction, ds: Dataset) -> int:
    """Blocks with timestamp >= arrival up to and including the committing block."""
    first = bisect_left(ds.block_times, tx.arrival_time)
    height = ds.commit_height.get(tx.txid)
    if height is None:
        raise PendingTransactionError(tx.txid, len(ds.blocks) - first)
    return ds.chain_position[height] - first + 1


def commit_delay(tx: Transaction, ds: Dataset) -> int:
    """Commit delay in blocks; next-block inclusion is 1 and the minimum is clamped to 1."""
    if tx.arrival_time is None:
        raise ValueError(f"{tx.txid} has no arrival time")
    return max(1, _raw_delay(tx, ds))


def commit_delays(ds: Dataset) -> Tuple[List[dict], int, int]:
    """Delay rows for every committed transaction with an arrival time.

    Returns (rows, clamped, pending): ``clamped`` counts transactions whose arrival
    follows their block's timestamp, ``pending`` those never committed.
    """
    rows, clamped, pending = [], 0, 0
    for tx in ds.transactions:
        if tx.arrival_time is None:
            continue
        try:
            raw = _raw_delay(tx, ds)
        except PendingTransactionError:
            pending += 1
            continue
        if raw < 1:
            clamped += 1
        rows.append({"txid": tx.txid, "feerate_sat_vb": fee_rate(tx), "delay_blocks": max(1, raw)})
    if clamped:
        logger.info(f"{clamped} transaction(s) arrived after their block's timestamp; delay clamped to 1")
    return rows, clamped, pending


def feerate_class(rate: Fraction, bounds: Tuple[int, ...] = None) -> str:
    low, high = Config.CHAIN.feerate_class_bounds if bounds is None else bounds
    if rate < low:
        return "low"
    if rate <= high:
        return "high"
    return "exorbitant"


def delays_by_feerate_class(ds: Dataset) -> Dict[str, dict]:
    """Delay distribution per fee-rate class, plus next-block / 3+ / 10+ block shares."""
    rows, _, _ = commit_delays(ds)
    grouped: Dict[str, List[int]] = {c: [] for c in FEERATE_CLASSES}
    for row in rows:
        grouped[feerate_class(row["feerate_sat_vb"])].append(row["delay_blocks"])
    summary = {}
    for label, delays in grouped.items():
        stats = describe(delays)
        n = len(delays)
        stats["next_block"] = Fraction(sum(1 for d in delays if d == 1), n) if n else Fraction(0)
        stats["wait_3_plus"] = Fraction(sum(1 for d in delays if d >= 3), n) if n else Fraction(0)
        stats["wait_10_plus"] = Fraction(sum(1 for d in delays if d >= 10), n) if n else Fraction(0)
        summary[label] = stats
    return summary


def fee_revenue_share(block: Block, ds: Dataset) -> Fraction:
    """Percentage of the miner's revenue (fees + subsidy) that came from fees."""
    fees = sum(ds.tx_index[t].fee for t in block.tx_order if t in ds.tx_index)
    total = fees + block_subsidy(block.height)
    if total == 0:
        return Fraction(0)
    return Fraction(100 * fees, total)


def feerate_by_congestion(ds: Dataset) -> Tuple[Dict[str, dict], int]:
    """Fee-rate summaries per congestion bin of the latest snapshot at or before arrival.

    Returns (summaries keyed by populated bin label, count of transactions without a
    covering snapshot).
    """
    series = mempool_size_series(ds)
    times = [ts for ts, _, _ in series]
    labels = [congestion_bin(vb).label for _, vb, _ in series]
    grouped: Dict[str, List[Fraction]] = {}
    excluded = 0
    for tx in ds.transactions:
        if tx.arrival_time is None:
            excluded += 1
            continue
        idx = bisect_right(times, tx.arrival_time) - 1
        if idx < 0:
            excluded += 1
            continue
        grouped.setdefault(labels[idx], []).append(fee_rate(tx))
    summaries = {label: describe(grouped[label]) for label in BIN_LABELS if label in grouped}
    if excluded:
        logger.debug(f"{excluded} transaction(s) without a covering snapshot")
    return summaries, excluded

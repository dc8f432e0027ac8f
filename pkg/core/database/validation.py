# core/database/validation.py
from collections import Counter
from typing import List

from core.database.models import Dataset, Violation


def validate_dataset(ds: Dataset) -> List[Violation]:
    """Check type invariants and referential integrity.

    Returns an empty list iff the dataset is clean. Load-time issues carried on the
    dataset are included. The report is sorted by (kind, identifier, detail).
    """
    report = list(ds.issues)

    counts = Counter(tx.txid for tx in ds.transactions)
    for txid, n in counts.items():
        if n > 1:
            report.append(Violation("duplicate-txid", txid, f"{n} records"))

    known = ds.tx_index
    committed_at = {}
    prev = None
    for block in ds.blocks:
        ident = str(block.height)
        if prev is not None:
            if block.height <= prev.height:
                report.append(Violation("non-increasing-height", ident, f"follows height {prev.height}"))
            if block.timestamp < prev.timestamp:
                report.append(Violation("decreasing-timestamp", ident, f"{block.timestamp} < {prev.timestamp}"))
        prev = block

        seen = set()
        total_vsize = 0
        for txid in block.tx_order:
            if txid in seen:
                report.append(Violation("duplicate-block-member", f"{block.height}:{txid}"))
                continue
            seen.add(txid)
            tx = known.get(txid)
            if tx is None:
                report.append(Violation("dangling-txid", txid, f"block {block.height}"))
                continue
            total_vsize += tx.vsize
            if txid in committed_at:
                report.append(Violation(
                    "multiply-committed", txid, f"blocks {committed_at[txid]} and {block.height}"))
            else:
                committed_at[txid] = block.height
        if total_vsize > block.max_vsize:
            report.append(Violation("block-overweight", ident, f"{total_vsize} > {block.max_vsize} vB"))

    prev_ts = None
    for snap in ds.snapshots:
        if prev_ts is not None and snap.timestamp < prev_ts:
            report.append(Violation("decreasing-snapshot-timestamp", str(snap.timestamp)))
        prev_ts = snap.timestamp
        for txid in sorted(snap.txids):
            if txid not in known:
                report.append(Violation("dangling-txid", txid, f"snapshot {snap.timestamp}"))

    return sorted(report, key=lambda v: (v.kind, v.identifier, v.detail))

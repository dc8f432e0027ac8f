# core/cohorts/builder.py
"""Cohorts of committed transactions (c-transactions) and their c-block counts.

A c-block is any block containing at least one cohort member. Against a miner M,
x counts the c-blocks M mined, y all c-blocks, and theta0 is M's share of blocks.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple, Union

import numpy as np

from core.database.dataset_io import read_records, str_field, write_jsonl
from core.database.models import Dataset
from core.errors import DatasetFormatError, EmptyCohortError, EmptyWindowError
from utils.logger import get_logger

logger = get_logger(__name__)

HeightWindow = Tuple[int, int]  # inclusive


@dataclass(frozen=True)
class Cohort:
    name: str
    txids: FrozenSet[str]
    description: str = ""
    unresolved_inputs: int = field(default=0, compare=False)


@dataclass(frozen=True)
class CohortCounts:
    miner: str
    x: int
    y: int
    theta0: Fraction
    window: Optional[HeightWindow] = None

    def __post_init__(self):
        if not 0 <= self.x <= self.y:
            raise ValueError(f"counts must satisfy 0 <= x <= y, got x={self.x}, y={self.y}")
        if not 0 <= self.theta0 <= 1:
            raise ValueError(f"theta0 must be within [0, 1], got {self.theta0}")


def extract_miner_wallets(ds: Dataset) -> Dict[str, Set[str]]:
    wallets: Dict[str, Set[str]] = {}
    for block in ds.blocks:
        wallets.setdefault(block.miner_id, set()).update(block.coinbase_addresses)
    shared = shared_addresses(wallets)
    for address, miners in shared.items():
        logger.warning(f"⚠️  reward address {address} used by several miners: {', '.join(miners)}")
    return wallets


def shared_addresses(wallets: Dict[str, Set[str]]) -> Dict[str, List[str]]:
    """address -> sorted miners, for addresses used by more than one miner label."""
    users: Dict[str, Set[str]] = {}
    for miner, addresses in wallets.items():
        for address in addresses:
            users.setdefault(address, set()).add(miner)
    return {a: sorted(m) for a, m in sorted(users.items()) if len(m) > 1}


def self_interest_txs(ds: Dataset, miner: str, wallets: Optional[Dict[str, Set[str]]] = None) -> Cohort:
    """Transactions paying into or spending from the miner's reward wallets.

    Input ownership is resolved only through outputs present in the dataset;
    inputs pointing outside it are counted as unknown provenance. Transactions
    without inputs are coinbase and never qualify.
    """
    wallets = extract_miner_wallets(ds) if wallets is None else wallets
    owned = wallets.get(miner, set())
    members, unresolved = set(), 0
    for tx in ds.transactions:
        if not tx.inputs:
            continue
        hit = any(o.address in owned for o in tx.outputs)
        for inp in tx.inputs:
            source = ds.outpoints.get((inp.txid, inp.vout))
            if source is None:
                unresolved += 1
            elif source.address in owned:
                hit = True
        if hit:
            members.add(tx.txid)
    logger.info(f"Self-interest cohort for {miner}: {len(members)} txs ({unresolved} inputs of unknown provenance)")
    return Cohort(
        name=f"self-interest:{miner}",
        txids=frozenset(members),
        description=f"transactions touching {len(owned)} reward address(es) of {miner}",
        unresolved_inputs=unresolved,
    )


def _in_window(height: int, window: Optional[HeightWindow]) -> bool:
    return window is None or window[0] <= height <= window[1]


def hash_rate(ds: Dataset, miner: str, window: Optional[HeightWindow] = None) -> Fraction:
    """Fraction of blocks mined by ``miner`` (within the inclusive height window)."""
    blocks = [b for b in ds.blocks if _in_window(b.height, window)]
    if not blocks:
        raise EmptyWindowError(f"no blocks in window {window}" if window else "dataset has no blocks")
    return Fraction(sum(1 for b in blocks if b.miner_id == miner), len(blocks))


def c_blocks(cohort: Cohort, ds: Dataset, window: Optional[HeightWindow] = None) -> List[int]:
    """Heights of blocks containing at least one cohort member."""
    return [
        b.height for b in ds.blocks
        if _in_window(b.height, window) and not cohort.txids.isdisjoint(b.tx_order)
    ]


def cohort_counts(cohort: Cohort, ds: Dataset, miner: str, window: Optional[HeightWindow] = None) -> CohortCounts:
    heights = c_blocks(cohort, ds, window)
    if not heights:
        raise EmptyCohortError(f"cohort {cohort.name!r} has no committed members")
    x = sum(1 for h in heights if ds.block_index[h].miner_id == miner)
    return CohortCounts(miner, x, len(heights), hash_rate(ds, miner, window), window)


def height_windows(ds: Dataset, n_windows: int) -> List[HeightWindow]:
    """Split the chain into ``n_windows`` contiguous runs of (nearly) equal block count."""
    if n_windows < 1:
        raise ValueError(f"n_windows must be >= 1, got {n_windows}")
    heights = np.array([b.height for b in ds.blocks], dtype=np.int64)
    return [(int(chunk[0]), int(chunk[-1])) for chunk in np.array_split(heights, n_windows) if chunk.size]


def block_windows(ds: Dataset, size: int) -> List[HeightWindow]:
    """Consecutive runs of exactly ``size`` blocks; the last run may be shorter."""
    if size < 1:
        raise ValueError(f"window size must be >= 1 block, got {size}")
    heights = [b.height for b in ds.blocks]
    return [(heights[i], heights[min(i + size, len(heights)) - 1]) for i in range(0, len(heights), size)]


def windowed_counts(
    cohort: Cohort, ds: Dataset, miner: str, n_windows: Optional[int] = None, window_size: Optional[int] = None,
) -> List[CohortCounts]:
    """Per-window counts over ``n_windows`` equal windows or windows of ``window_size`` blocks.

    Windows without c-blocks come back with y = 0.
    """
    if (n_windows is None) == (window_size is None):
        raise ValueError("give exactly one of n_windows and window_size")
    windows = height_windows(ds, n_windows) if window_size is None else block_windows(ds, window_size)
    counts = []
    for window in windows:
        heights = c_blocks(cohort, ds, window)
        x = sum(1 for h in heights if ds.block_index[h].miner_id == miner)
        counts.append(CohortCounts(miner, x, len(heights), hash_rate(ds, miner, window), window))
    return counts


def cohort_from_txids(name: str, txids: Iterable[str], description: str = "") -> Cohort:
    return Cohort(name=name, txids=frozenset(txids), description=description)


def _parse_member(rec: dict) -> Tuple[str, str]:
    return str_field(rec, "cohort"), str_field(rec, "txid")


def load_cohorts(path: Union[str, Path]) -> Dict[str, Cohort]:
    """Read a ``{cohort, txid}`` JSON Lines file; any unreadable line is fatal."""
    path = Path(path)
    if not path.exists():
        raise DatasetFormatError("cohort file not found", file=str(path))
    members, issues = read_records(path, _parse_member)
    if issues:
        first = issues[0]
        file, _, line = first.identifier.rpartition(":")
        raise DatasetFormatError(first.detail, file=file, line=int(line))
    grouped: Dict[str, Set[str]] = {}
    for name, txid in members:
        grouped.setdefault(name, set()).add(txid)
    logger.info(f"Loaded {len(grouped)} cohort(s) from {path}")
    return {name: cohort_from_txids(name, txids, f"from {path.name}") for name, txids in sorted(grouped.items())}


def write_cohort(cohort: Cohort, path: Union[str, Path]) -> None:
    write_jsonl(path, ({"cohort": cohort.name, "txid": t} for t in sorted(cohort.txids)))


def unresolved_members(cohort: Cohort, ds: Dataset) -> FrozenSet[str]:
    return frozenset(t for t in cohort.txids if t not in ds.tx_index)


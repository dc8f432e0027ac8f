# core/norms/oracle.py
"""Prioritization norms: fee-rate selection (I), fee-rate ordering (II), minimum fee-rate filtering (III)."""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import Config
from core.database.models import Block, Dataset, MempoolSnapshot, Transaction
from utils.helpers import fee_rate
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class PredictedOrdering:
    block_height: int
    ranked_txids: Tuple[str, ...]  # fee rate descending, ties by observed position
    excluded_cpfp: FrozenSet[str]


@dataclass(frozen=True)
class ViolationPair:
    earlier_txid: str
    later_txid: str
    earlier_feerate: Fraction
    later_feerate: Fraction
    earlier_block: int
    later_block: int


@dataclass
class ViolationScan:
    snapshot_ts: int
    epsilon_s: float
    pairs: List[ViolationPair] = field(default_factory=list)
    pairs_total: int = 0
    uncommitted: int = 0
    missing_arrival: int = 0

    @property
    def pairs_violating(self) -> int:
        return len(self.pairs)

    @property
    def violating_fraction(self) -> Fraction:
        if self.pairs_total == 0:
            return Fraction(0)
        return Fraction(len(self.pairs), self.pairs_total)


def detect_cpfp(block: Block, ds: Dataset) -> FrozenSet[str]:
    """Members spending an output of another member of the same block."""
    members = set(block.tx_order)
    flagged = set()
    for txid in block.tx_order:
        tx = ds.tx_index.get(txid)
        if tx is None:
            continue
        if any(inp.txid in members for inp in tx.inputs):
            flagged.add(txid)
    return frozenset(flagged)


def eligible_members(block: Block, ds: Dataset, cpfp: Optional[FrozenSet[str]] = None) -> List[str]:
    """Observed order of the non-CPFP members that resolve in the dataset."""
    cpfp = detect_cpfp(block, ds) if cpfp is None else cpfp
    return [t for t in block.tx_order if t not in cpfp and t in ds.tx_index]


def predicted_order(block: Block, ds: Dataset) -> PredictedOrdering:
    cpfp = detect_cpfp(block, ds)
    observed = eligible_members(block, ds, cpfp)
    position = {txid: i for i, txid in enumerate(observed)}
    ranked = sorted(observed, key=lambda t: (-fee_rate(ds.tx_index[t]), position[t]))
    return PredictedOrdering(block.height, tuple(ranked), cpfp)


def min_feerate_filter(
    txs: Iterable[Transaction], threshold: Optional[Fraction] = None
) -> Tuple[FrozenSet[Transaction], FrozenSet[Transaction]]:
    """Split into (accepted, rejected); the boundary fee rate is accepted."""
    threshold = Config.NORMS.min_feerate_sat_vb if threshold is None else Fraction(threshold)
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    accepted, rejected = set(), set()
    for tx in txs:
        (accepted if fee_rate(tx) >= threshold else rejected).add(tx)
    return frozenset(accepted), frozenset(rejected)


def low_fee_inclusions(ds: Dataset, threshold: Optional[Fraction] = None) -> Dict[str, int]:
    """Per miner, committed transactions offering less than the minimum fee rate."""
    threshold = Config.NORMS.min_feerate_sat_vb if threshold is None else Fraction(threshold)
    counts: Dict[str, int] = {}
    for block in ds.blocks:
        members = [ds.tx_index[t] for t in block.tx_order if t in ds.tx_index]
        _, rejected = min_feerate_filter(members, threshold)
        if rejected:
            counts[block.miner_id] = counts.get(block.miner_id, 0) + len(rejected)
    return dict(sorted(counts.items()))


def find_violation_pairs(
    snapshot: MempoolSnapshot,
    ds: Dataset,
    epsilon: float = 0,
    exclude_cpfp: bool = True,
) -> ViolationScan:
    """All pairs (i, j) with t_i + eps < t_j, f_i > f_j and b_i > b_j among committed members.

    ``pairs_total`` counts the ordered pairs meeting the time and fee precondition, so
    ``violating_fraction`` is the violation rate conditional on that precondition.
    """
    scan = ViolationScan(snapshot_ts=snapshot.timestamp, epsilon_s=epsilon)
    cpfp_by_height: Dict[int, FrozenSet[str]] = {}

    members = []
    for txid in sorted(snapshot.txids):
        tx = ds.tx_index.get(txid)
        if tx is None:
            continue
        height = ds.commit_height.get(txid)
        if height is None:
            scan.uncommitted += 1
            continue
        if tx.arrival_time is None:
            scan.missing_arrival += 1
            continue
        if exclude_cpfp:
            if height not in cpfp_by_height:
                cpfp_by_height[height] = detect_cpfp(ds.block_index[height], ds)
            if txid in cpfp_by_height[height]:
                continue
        members.append((tx.arrival_time, txid, fee_rate(tx), height))

    if scan.uncommitted:
        logger.debug(f"snapshot {snapshot.timestamp}: {scan.uncommitted} uncommitted txs ignored")
    if len(members) < 2 or math.isinf(epsilon):
        return scan

    members.sort(key=lambda m: (m[0], m[1]))
    times = np.array([m[0] for m in members], dtype=np.float64)
    # dense integer ranks keep the fee comparison exact
    distinct = sorted({m[2] for m in members})
    rank_of = {f: r for r, f in enumerate(distinct)}
    fee_ranks = np.array([rank_of[m[2]] for m in members], dtype=np.int64)
    heights = np.array([m[3] for m in members], dtype=np.int64)

    for j in range(len(members)):
        k = int(np.searchsorted(times, times[j] - epsilon, side="left"))
        if k == 0:
            continue
        higher_fee = fee_ranks[:k] > fee_ranks[j]
        scan.pairs_total += int(higher_fee.sum())
        for i in np.nonzero(higher_fee & (heights[:k] > heights[j]))[0]:
            earlier, later = members[int(i)], members[j]
            scan.pairs.append(ViolationPair(earlier[1], later[1], earlier[2], later[2], earlier[3], later[3]))
    return scan


def violation_report(
    ds: Dataset,
    epsilons: Sequence[float] = None,
    exclude_cpfp: bool = True,
    sample: Optional[int] = None,
    seed: int = 0,
) -> List[dict]:
    """Per-snapshot violation rows; ``sample`` draws that many snapshots uniformly without replacement."""
    epsilons = Config.NORMS.epsilon_ladder if epsilons is None else epsilons
    snapshots = list(ds.snapshots)
    if sample is not None and sample < len(snapshots):
        rng = np.random.default_rng(seed)
        picked = sorted(rng.choice(len(snapshots), size=sample, replace=False).tolist())
        snapshots = [snapshots[i] for i in picked]
    rows = []
    for snap in snapshots:
        for eps in epsilons:
            scan = find_violation_pairs(snap, ds, eps, exclude_cpfp)
            rows.append({
                "snapshot_ts": snap.timestamp,
                "epsilon_s": eps,
                "pairs_total": scan.pairs_total,
                "pairs_violating": scan.pairs_violating,
                "fraction": scan.violating_fraction,
            })
    logger.info(f"Scanned {len(snapshots)} snapshot(s) for violation pairs at eps={list(epsilons)}")
    return rows

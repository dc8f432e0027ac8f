# core/metrics/positions.py
"""Percentile-rank positions and the deviation metrics built on them.

Ranks live in [0, 100]: position i of n maps to 100*(i-1)/(n-1), a lone
transaction ranks 0. The rank universe of a block is its non-CPFP members.
PPE(B) is the mean absolute predicted-minus-observed rank over that universe;
SPPE is the mean signed difference over a cohort, positive meaning the
transaction sat higher in the block than its fee rate earned it.
"""
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Set

import numpy as np
import pandas as pd
from scipy.stats import kendalltau

from config.settings import Config
from core.database.models import Block, Dataset
from core.errors import EmptyBlockError, EmptyCohortError, IndexOutOfRangeError
from core.norms.oracle import eligible_members, predicted_order
from utils.helpers import fraction_mean
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class PositionReport:
    txid: str
    block_height: int
    predicted_rank: Fraction
    observed_rank: Fraction

    @property
    def signed_error(self) -> Fraction:
        return self.predicted_rank - self.observed_rank


def percentile_rank(index: int, n: int) -> Fraction:
    if n < 1 or not 1 <= index <= n:
        raise IndexOutOfRangeError(f"position {index} outside 1..{n}")
    if n == 1:
        return Fraction(0)
    return Fraction(100 * (index - 1), n - 1)


def block_positions(block: Block, ds: Dataset) -> List[PositionReport]:
    """One report per eligible member, in observed order."""
    prediction = predicted_order(block, ds)
    observed = eligible_members(block, ds, prediction.excluded_cpfp)
    n = len(observed)
    predicted_index = {txid: i for i, txid in enumerate(prediction.ranked_txids, start=1)}
    return [
        PositionReport(txid, block.height, percentile_rank(predicted_index[txid], n), percentile_rank(i, n))
        for i, txid in enumerate(observed, start=1)
    ]


def ppe(block: Block, ds: Dataset) -> Fraction:
    reports = block_positions(block, ds)
    if not reports:
        raise EmptyBlockError(f"block {block.height} has no eligible transactions")
    return fraction_mean(abs(r.signed_error) for r in reports)


def block_kendall_tau(block: Block, ds: Dataset) -> float:
    """Kendall rank correlation between predicted and observed order (1.0 = norm followed)."""
    reports = block_positions(block, ds)
    if len(reports) < 2:
        return math.nan
    tau, _ = kendalltau([float(r.observed_rank) for r in reports], [float(r.predicted_rank) for r in reports])
    return float(tau)


def ppe_by_block(ds: Dataset) -> List[dict]:
    rows = []
    skipped = 0
    for block in ds.blocks:
        reports = block_positions(block, ds)
        if not reports:
            skipped += 1
            continue
        rows.append({
            "height": block.height,
            "miner": block.miner_id,
            "n_eligible": len(reports),
            "ppe_pct": fraction_mean(abs(r.signed_error) for r in reports),
        })
    if skipped:
        logger.warning(f"⚠️  {skipped} block(s) without eligible transactions left out of PPE")
    return rows


def ppe_summary(ds: Dataset) -> List[dict]:
    """Per-miner PPE distribution: blocks, mean, std and 80th percentile."""
    rows = ppe_by_block(ds)
    if not rows:
        return []
    df = pd.DataFrame({"miner": [r["miner"] for r in rows], "ppe": [float(r["ppe_pct"]) for r in rows]})
    summary = []
    for miner, group in df.groupby("miner", sort=True):
        values = group["ppe"].to_numpy()
        summary.append({
            "miner": miner,
            "blocks": int(values.size),
            "mean_ppe_pct": float(values.mean()),
            "std_ppe_pct": float(values.std(ddof=0)),
            "p80_ppe_pct": float(np.quantile(values, 0.8, method="inverted_cdf")),
        })
    return summary


def sppe(c_txids: Iterable[str], miner: str, ds: Dataset) -> Fraction:
    """Mean signed error of the cohort members committed in blocks mined by ``miner``."""
    errors = cohort_errors(c_txids, miner, ds)
    if not errors:
        raise EmptyCohortError(f"no cohort transactions for miner {miner}")
    return fraction_mean(errors.values())


def cohort_errors(c_txids: Iterable[str], miner: str, ds: Dataset) -> Dict[str, Fraction]:
    cohort = set(c_txids)
    heights = sorted({ds.commit_height[t] for t in cohort if t in ds.commit_height})
    errors: Dict[str, Fraction] = {}
    for height in heights:
        block = ds.block_index[height]
        if block.miner_id != miner:
            continue
        for report in block_positions(block, ds):
            if report.txid in cohort:
                errors[report.txid] = report.signed_error
    return errors


def signed_errors(ds: Dataset) -> Dict[str, Fraction]:
    """Signed error of every eligible committed transaction, in chain order."""
    errors: Dict[str, Fraction] = {}
    for block in ds.blocks:
        for report in block_positions(block, ds):
            errors[report.txid] = report.signed_error
    return errors


def flag_accelerated(ds: Dataset, sppe_threshold=None, errors: Optional[Dict[str, Fraction]] = None) -> Dict[str, Fraction]:
    """Transactions whose own signed error reaches the threshold (default 99)."""
    threshold = Config.DETECTION.sppe_threshold if sppe_threshold is None else Fraction(sppe_threshold)
    if not 0 <= threshold <= 100:
        raise ValueError(f"SPPE threshold must be within [0, 100], got {threshold}")
    errors = signed_errors(ds) if errors is None else errors
    return {txid: e for txid, e in errors.items() if e >= threshold}


def threshold_table(ds: Dataset, thresholds: Sequence = None, accelerated: Optional[Set[str]] = None) -> List[dict]:
    """Flag counts per threshold; with ground truth, how many flagged are truly accelerated."""
    thresholds = Config.DETECTION.threshold_ladder if thresholds is None else thresholds
    errors = signed_errors(ds)
    rows = []
    for threshold in thresholds:
        flagged = flag_accelerated(ds, threshold, errors)
        row = {"sppe_threshold": threshold, "n_txs": len(flagged)}
        if accelerated is not None:
            hits = len(accelerated.intersection(flagged))
            row["n_accelerated"] = hits
            row["pct_accelerated"] = Fraction(100 * hits, len(flagged)) if flagged else Fraction(0)
        rows.append(row)
    return rows


def accelerated_block_share(ds: Dataset, sppe_threshold=None) -> List[dict]:
    """Per miner, the share of its blocks holding at least one flagged transaction."""
    flagged = flag_accelerated(ds, sppe_threshold)
    blocks: Dict[str, int] = {}
    hit: Dict[str, int] = {}
    for block in ds.blocks:
        blocks[block.miner_id] = blocks.get(block.miner_id, 0) + 1
        if any(t in flagged for t in block.tx_order):
            hit[block.miner_id] = hit.get(block.miner_id, 0) + 1
    return [
        {"miner": m, "blocks": blocks[m], "blocks_flagged": hit.get(m, 0),
         "pct_blocks_flagged": Fraction(100 * hit.get(m, 0), blocks[m])}
        for m in sorted(blocks)
    ]


def flagged_value(ds: Dataset, sppe_threshold=None) -> dict:
    """Output value moved by flagged transactions against all committed value."""
    flagged = flag_accelerated(ds, sppe_threshold)
    total = sum(ds.tx_index[t].total_output_value for t in ds.commit_height if t in ds.tx_index)
    moved = sum(ds.tx_index[t].total_output_value for t in flagged)
    return {
        "flagged_txs": len(flagged),
        "flagged_value_sat": moved,
        "committed_value_sat": total,
        "pct_value": Fraction(100 * moved, total) if total else Fraction(0),
    }

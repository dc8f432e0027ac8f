# core/synth/generator.py
"""Seeded synthetic chains with known ground truth.

Randomness comes from numpy's PCG64 bit generator (``np.random.default_rng``);
every draw happens in a fixed order so a (config, seed) pair always yields the
same dataset. Miners follow the fee-rate norms: each block takes the pending
transactions at or above the minimum fee rate, highest fee rate first (ties by
arrival), skipping any that no longer fit.
"""
import hashlib
import heapq
from bisect import bisect_right
from dataclasses import replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Set, Tuple, Union

import numpy as np

from config.settings import Config
from core.cohorts.builder import Cohort
from core.database.dataset_io import read_records, str_field, write_jsonl
from core.database.models import Block, Dataset, MempoolSnapshot, Transaction, TxInput, TxOutput
from core.errors import DatasetFormatError
from core.synth.models import GroundTruth, SynthConfig, reward_address
from utils.helpers import fee_rate, vsize_from_weight
from utils.logger import get_logger

logger = get_logger(__name__)

GROUND_TRUTH_FILE = "ground_truth.jsonl"


def _digest(*parts) -> str:
    return hashlib.sha256(":".join(str(p) for p in parts).encode()).hexdigest()


def build_snapshots(transactions: Iterable[Transaction], blocks: Iterable[Block]) -> Tuple[MempoolSnapshot, ...]:
    """One snapshot per block, one second before it: arrived and not yet committed."""
    arrivals = sorted((tx.arrival_time, tx.txid) for tx in transactions if tx.arrival_time is not None)
    pending: Set[str] = set()
    snapshots, ptr = [], 0
    for block in blocks:
        while ptr < len(arrivals) and arrivals[ptr][0] < block.timestamp:
            pending.add(arrivals[ptr][1])
            ptr += 1
        snapshots.append(MempoolSnapshot(block.timestamp - 1, frozenset(pending)))
        pending.difference_update(block.tx_order)
    return tuple(snapshots)


def _block_times(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    gaps = np.maximum(1, np.rint(rng.exponential(cfg.block_interval_s, size=cfg.n_blocks))).astype(np.int64)
    return cfg.genesis_time + np.cumsum(gaps)


def _transactions(cfg: SynthConfig, rng: np.random.Generator, end_time: int) -> List[Transaction]:
    n = int(rng.poisson(cfg.tx_arrival_rate * cfg.n_blocks))
    arrivals = np.sort(rng.integers(cfg.genesis_time, end_time, size=n))
    weights = rng.integers(cfg.weight_range[0], cfg.weight_range[1], size=n, endpoint=True)
    rates = rng.lognormal(cfg.feerate_mu, cfg.feerate_sigma, size=n)
    values = rng.integers(10_000, 10**8, size=n)
    payees = rng.integers(0, max(1, n), size=n)
    payout = rng.random(size=n) < cfg.payout_prob
    payout_miner = rng.integers(0, len(cfg.miners), size=n)

    miner_ids = cfg.miner_ids
    txs = []
    for i in range(n):
        vsize = vsize_from_weight(int(weights[i]))
        address = reward_address(miner_ids[payout_miner[i]]) if payout[i] else f"addr-{int(payees[i])}"
        txs.append(Transaction(
            txid=_digest(cfg.seed, i),
            vsize=vsize,
            fee=int(round(float(rates[i]) * vsize)),
            arrival_time=int(arrivals[i]),
            inputs=(TxInput(_digest(cfg.seed, "src", i), 0),),
            outputs=(TxOutput(address, int(values[i])),),
        ))
    return txs


def _fill_blocks(cfg: SynthConfig, txs: List[Transaction], times: np.ndarray, miners: List[str]) -> List[Block]:
    min_rate = Config.NORMS.min_feerate_sat_vb
    min_vsize = vsize_from_weight(cfg.weight_range[0])
    heap: List[Tuple[float, int]] = []
    blocks, ptr, dropped = [], 0, 0
    for k, ts in enumerate(times.tolist()):
        while ptr < len(txs) and txs[ptr].arrival_time < ts:
            if fee_rate(txs[ptr]) >= min_rate:
                # float keys order exactly for these fee and size magnitudes
                heapq.heappush(heap, (-txs[ptr].fee / txs[ptr].vsize, ptr))
            else:
                dropped += 1
            ptr += 1
        members, used, skipped = [], 0, []
        while heap and cfg.block_capacity - used >= min_vsize:
            item = heapq.heappop(heap)
            size = txs[item[1]].vsize
            if used + size > cfg.block_capacity:
                skipped.append(item)
                continue
            members.append(txs[item[1]].txid)
            used += size
        for item in skipped:
            heapq.heappush(heap, item)
        height = cfg.start_height + k
        blocks.append(Block(
            height=height,
            block_hash=_digest(cfg.seed, "block", height),
            miner_id=miners[k],
            timestamp=int(ts),
            tx_order=tuple(members),
            coinbase_addresses=(reward_address(miners[k]),),
            max_vsize=cfg.block_capacity,
        ))
    logger.debug(f"{dropped} tx(s) below the minimum fee rate never enter a block")
    return blocks


def generate(cfg: SynthConfig) -> Tuple[Dataset, GroundTruth]:
    rng = np.random.default_rng(cfg.seed)
    shares = np.array([float(s) for _, s in cfg.miners])
    picks = rng.choice(len(cfg.miners), size=cfg.n_blocks, p=shares / shares.sum())
    miners = [cfg.miner_ids[i] for i in picks]
    times = _block_times(cfg, rng)
    txs = _transactions(cfg, rng, int(times[-1]))
    blocks = _fill_blocks(cfg, txs, times, miners)
    ds = Dataset(tuple(txs), tuple(blocks), build_snapshots(txs, blocks))
    committed = sum(len(b.tx_order) for b in blocks)
    logger.info(f"Generated {len(blocks)} blocks, {len(txs)} txs ({committed} committed), seed={cfg.seed}")
    return ds, GroundTruth()


def inject_acceleration(
    ds: Dataset,
    truth: GroundTruth,
    miners: Iterable[str],
    n_txs: int,
    seed: int,
    low_fee_quantile: float = None,
) -> Tuple[Dataset, GroundTruth]:
    """Move ``n_txs`` bottom-decile transactions to the top of the next block of a colluding miner.

    A candidate qualifies when that block is at or before its own committing block,
    neither block already carries an injected transaction, and after any tail
    eviction it still ranks in the bottom tenth of the target block by fee rate.
    Evicted transactions stay pending.
    """
    miners = frozenset(miners)
    unknown = miners - set(ds.miners())
    if not miners or unknown:
        raise ValueError(f"accelerating miners must be non-empty and mined in the dataset, unknown: {sorted(unknown)}")
    if n_txs < 0:
        raise ValueError(f"n_txs must be >= 0, got {n_txs}")
    quantile = Config.SYNTH.low_fee_quantile if low_fee_quantile is None else low_fee_quantile
    min_rate = Config.NORMS.min_feerate_sat_vb
    rng = np.random.default_rng(seed)

    orders: Dict[int, List[str]] = {b.height: list(b.tx_order) for b in ds.blocks}
    commit: Dict[str, int] = dict(ds.commit_height)
    rates = {tx.txid: fee_rate(tx) for tx in ds.transactions}
    pool = [
        tx for tx in ds.transactions
        if tx.arrival_time is not None and rates[tx.txid] >= min_rate and tx.txid not in truth.accelerated_txids
    ]
    if not pool:
        logger.warning("⚠️  no transactions eligible for acceleration")
        return ds, replace(truth, shortfall=n_txs)
    cutoff = float(np.quantile([float(rates[t.txid]) for t in pool], quantile, method="inverted_cdf"))
    candidates = [tx for tx in pool if float(rates[tx.txid]) <= cutoff]

    colluding = [b for b in ds.blocks if b.miner_id in miners]
    colluding_times = [b.timestamp for b in colluding]
    injected_blocks = {commit[t] for t in truth.accelerated_txids if t in commit}
    accepted: Dict[str, str] = {}
    evicted: Set[str] = set()

    for idx in rng.permutation(len(candidates)).tolist():
        if len(accepted) == n_txs:
            break
        tx = candidates[idx]
        k = bisect_right(colluding_times, tx.arrival_time)
        if k == len(colluding):
            continue
        target = colluding[k]
        origin = commit.get(tx.txid)
        if target.height in injected_blocks or (origin is not None and (origin < target.height or origin in injected_blocks)):
            continue

        order = [tx.txid] + [t for t in orders[target.height] if t != tx.txid]
        used = sum(ds.tx_index[t].vsize for t in order)
        tail = []
        while used > target.max_vsize and len(order) > 1:
            dropped = order.pop()
            used -= ds.tx_index[dropped].vsize
            tail.append(dropped)
        n = len(order)
        higher = sum(1 for t in order[1:] if rates[t] > rates[tx.txid])
        if n < 2 or 100 * higher < 90 * (n - 1):
            continue

        if origin is not None and origin != target.height:
            orders[origin].remove(tx.txid)
        orders[target.height] = order
        commit[tx.txid] = target.height
        for t in tail:
            commit.pop(t, None)
            evicted.add(t)
        injected_blocks.add(target.height)
        accepted[tx.txid] = target.miner_id

    blocks = tuple(replace(b, tx_order=tuple(orders[b.height])) for b in ds.blocks)
    out = Dataset(ds.transactions, blocks, build_snapshots(ds.transactions, blocks))
    shortfall = n_txs - len(accepted)
    if shortfall:
        logger.warning(f"⚠️  injected {len(accepted)} of {n_txs} transactions, shortfall {shortfall}")
    logger.info(f"Accelerated {len(accepted)} txs via {sorted(miners)}, evicted {len(evicted)}")
    new_truth = GroundTruth(
        accelerated_txids=truth.accelerated_txids | frozenset(accepted),
        accelerating_miners=truth.accelerating_miners | miners,
        accelerated_by={**truth.accelerated_by, **accepted},
        shortfall=shortfall,
        evicted=truth.evicted | frozenset(evicted),
    )
    return out, new_truth


def sample_block_cohort(ds: Dataset, n_blocks: int, rng: np.random.Generator, name: str = "random") -> Cohort:
    """One random committed transaction from each of ``n_blocks`` distinct random blocks."""
    filled = [b for b in ds.blocks if b.tx_order]
    if n_blocks > len(filled):
        raise ValueError(f"only {len(filled)} non-empty blocks, asked for {n_blocks}")
    picks = rng.choice(len(filled), size=n_blocks, replace=False)
    txids = {filled[i].tx_order[int(rng.integers(len(filled[i].tx_order)))] for i in picks.tolist()}
    return Cohort(name=name, txids=frozenset(txids), description=f"{n_blocks} random blocks")


def write_ground_truth(truth: GroundTruth, directory: Union[str, Path]) -> Path:
    path = Path(directory) / GROUND_TRUTH_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(path, (
        {"txid": t, "accelerating_miner": truth.accelerated_by.get(t, "")}
        for t in sorted(truth.accelerated_txids)
    ))
    return path


def load_ground_truth(directory: Union[str, Path]) -> Optional[GroundTruth]:
    path = Path(directory) / GROUND_TRUTH_FILE
    if not path.exists():
        return None
    rows, issues = read_records(path, lambda rec: (str_field(rec, "txid"), str_field(rec, "accelerating_miner")))
    if issues:
        file, _, line = issues[0].identifier.rpartition(":")
        raise DatasetFormatError(issues[0].detail, file=file, line=int(line))
    by = dict(rows)
    return GroundTruth(frozenset(by), frozenset(m for m in by.values() if m), by)

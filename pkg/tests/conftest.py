# tests/conftest.py
import pytest

from core.cohorts.builder import cohort_from_txids
from core.database.models import Block, Dataset, MempoolSnapshot, Transaction, TxInput, TxOutput


def tx(txid, fee, vsize=100, arrival=None, spends=(), pays=()):
    """Transaction with inputs spending (txid, vout) pairs and outputs paying (address, value) pairs."""
    return Transaction(
        txid=txid,
        vsize=vsize,
        fee=fee,
        arrival_time=arrival,
        inputs=tuple(TxInput(t, v) for t, v in spends),
        outputs=tuple(TxOutput(a, v) for a, v in pays),
    )

def block(height, txids, miner="M1", timestamp=None, coinbase=(), max_vsize=1_000_000):
    return Block(
        height=height,
        block_hash=f"h{height}",
        miner_id=miner,
        timestamp=timestamp if timestamp is not None else 1_000 + 600 * height,
        tx_order=tuple(txids),
        coinbase_addresses=tuple(coinbase),
        max_vsize=max_vsize,
    )

def dataset(txs=(), blocks=(), snapshots=()):
    return Dataset(tuple(txs), tuple(blocks), tuple(snapshots))

def ordered_block_dataset(feerates, height=100, miner="M1", vsize=100):
    """One block whose observed order follows ``feerates``; txids t0, t1, ... in that order."""
    txs = [tx(f"t{i}", f * vsize, vsize) for i, f in enumerate(feerates)]
    return dataset(txs, [block(height, [t.txid for t in txs], miner)])

def scam_dataset():
    """1250 blocks, 191 mined by Poolin (theta0 = 0.1528), one cohort tx in 53 blocks, 10 of them Poolin's."""
    blocks, txs = [], []
    cohort_heights = set(range(0, 10)) | set(range(191, 234))
    for h in range(1250):
        miner = "Poolin" if h < 191 else "Other"
        members = []
        if h in cohort_heights:
            txs.append(tx(f"scam{h}", 1000, 100, arrival=1_000 + 600 * h - 60))
            members.append(f"scam{h}")
        blocks.append(block(h, members, miner))
    return dataset(txs, blocks), cohort_from_txids("scam", [t.txid for t in txs])

@pytest.fixture
def two_block_dataset():
    txs = [
        tx("a", 1000, 100, arrival=900, pays=[("alice", 5000)]),
        tx("b", 500, 100, arrival=950, spends=[("a", 0)], pays=[("bob", 4000)]),
        tx("c", 300, 100, arrival=1000),
        tx("d", 200, 100, arrival=1100),
    ]
    blocks = [
        block(1, ["a", "b", "c"], "M1", timestamp=1_600, coinbase=["m1-pay"]),
        block(2, ["d"], "M2", timestamp=2_200, coinbase=["m2-pay"]),
    ]
    snapshots = [
        MempoolSnapshot(1_500, frozenset({"a", "b", "c", "d"})),
        MempoolSnapshot(2_100, frozenset({"d"})),
    ]
    return dataset(txs, blocks, snapshots)

@pytest.fixture
def scam():
    return scam_dataset()

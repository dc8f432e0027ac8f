# core/database/models.py
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Tuple

UNKNOWN_MINER = "Unknown"
DEFAULT_MAX_VSIZE = 1_000_000


@dataclass(frozen=True)
class TxInput:
    txid: str
    vout: int

    def __post_init__(self):
        if self.vout < 0:
            raise ValueError(f"input {self.txid}:{self.vout} has a negative output index")


@dataclass(frozen=True)
class TxOutput:
    address: str
    value: int  # satoshi

    def __post_init__(self):
        if self.value < 0:
            raise ValueError(f"output to {self.address} has a negative value")


@dataclass(frozen=True)
class Transaction:
    txid: str
    vsize: int  # vbytes
    fee: int  # satoshi
    arrival_time: Optional[int] = None
    inputs: Tuple[TxInput, ...] = ()
    outputs: Tuple[TxOutput, ...] = ()

    def __post_init__(self):
        if self.vsize < 1:
            raise ValueError(f"{self.txid}: vsize must be >= 1, got {self.vsize}")
        if self.fee < 0:
            raise ValueError(f"{self.txid}: fee must be >= 0, got {self.fee}")

    @property
    def total_output_value(self) -> int:
        return sum(o.value for o in self.outputs)


@dataclass(frozen=True)
class Block:
    height: int
    block_hash: str
    miner_id: str
    timestamp: int
    tx_order: Tuple[str, ...]  # coinbase excluded
    coinbase_addresses: Tuple[str, ...] = ()
    max_vsize: int = DEFAULT_MAX_VSIZE

    def __post_init__(self):
        if self.height < 0:
            raise ValueError(f"block height must be >= 0, got {self.height}")
        if self.max_vsize < 1:
            raise ValueError(f"block {self.height}: max_vsize must be >= 1")


@dataclass(frozen=True)
class MempoolSnapshot:
    timestamp: int
    txids: frozenset


@dataclass(frozen=True)
class Violation:
    kind: str
    identifier: str
    detail: str = ""


@dataclass(frozen=True)
class Dataset:
    transactions: Tuple[Transaction, ...] = ()
    blocks: Tuple[Block, ...] = ()
    snapshots: Tuple[MempoolSnapshot, ...] = ()
    # problems found while reading files; reported by validate_dataset
    issues: Tuple[Violation, ...] = field(default=(), compare=False)

    @cached_property
    def tx_index(self) -> Dict[str, Transaction]:
        index = {}
        for tx in self.transactions:
            index.setdefault(tx.txid, tx)
        return index

    @cached_property
    def block_index(self) -> Dict[int, Block]:
        return {b.height: b for b in self.blocks}

    @cached_property
    def commit_height(self) -> Dict[str, int]:
        """txid -> height of the first block committing it."""
        heights = {}
        for b in self.blocks:
            for txid in b.tx_order:
                heights.setdefault(txid, b.height)
        return heights

    @cached_property
    def outpoints(self) -> Dict[Tuple[str, int], TxOutput]:
        index = {}
        for tx in self.transactions:
            for i, out in enumerate(tx.outputs):
                index.setdefault((tx.txid, i), out)
        return index

    @cached_property
    def block_times(self) -> Tuple[int, ...]:
        """Block timestamps in chain order (non-decreasing in a valid dataset)."""
        return tuple(b.timestamp for b in self.blocks)

    @cached_property
    def chain_position(self) -> Dict[int, int]:
        return {b.height: i for i, b in enumerate(self.blocks)}

    def committing_block(self, txid: str) -> Optional[Block]:
        height = self.commit_height.get(txid)
        return None if height is None else self.block_index[height]

    def miners(self) -> List[str]:
        return sorted({b.miner_id for b in self.blocks})


@dataclass
class AuditRun:
    command: str
    inputs: str
    parameters: dict
    output: str
    exit_code: int
    run_id: Optional[int] = None
    created_at: Optional[str] = None

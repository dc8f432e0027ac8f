# core/synth/models.py
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Tuple

from config.settings import Config

DEFAULT_MINERS: Tuple[Tuple[str, float], ...] = (
    ("M1", 0.15),
    ("M2", 0.25),
    ("M3", 0.25),
    ("M4", 0.20),
    ("M5", 0.15),
)


@dataclass(frozen=True)
class SynthConfig:
    miners: Tuple[Tuple[str, float], ...] = DEFAULT_MINERS
    n_blocks: int = Config.SYNTH.n_blocks
    block_capacity: int = Config.CHAIN.block_max_vsize
    tx_arrival_rate: float = Config.SYNTH.tx_arrival_rate  # per block interval
    feerate_mu: float = Config.SYNTH.feerate_mu  # ln sat/vB
    feerate_sigma: float = Config.SYNTH.feerate_sigma
    seed: int = 0
    block_interval_s: int = Config.SYNTH.block_interval_s
    weight_range: Tuple[int, int] = Config.SYNTH.weight_range
    start_height: int = Config.SYNTH.start_height
    genesis_time: int = Config.SYNTH.genesis_time
    payout_prob: float = 0.005  # share of txs paying some miner's reward address

    def __post_init__(self):
        if not self.miners:
            raise ValueError("at least one miner is required")
        names = [m for m, _ in self.miners]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate miner ids in {names}")
        shares = [float(s) for _, s in self.miners]
        if any(s <= 0 for s in shares) or not math.isclose(sum(shares), 1.0, abs_tol=1e-9):
            raise ValueError(f"hash shares must be positive and sum to 1, got {shares}")
        if self.n_blocks < 1 or self.block_capacity < 1 or self.block_interval_s < 1:
            raise ValueError("n_blocks, block_capacity and block_interval_s must be positive")
        if self.tx_arrival_rate <= 0 or self.feerate_sigma <= 0:
            raise ValueError("tx_arrival_rate and feerate_sigma must be positive")
        lo, hi = self.weight_range
        if not 1 <= lo < hi:
            raise ValueError(f"weight_range must satisfy 1 <= lo < hi, got {self.weight_range}")
        if not 0 <= self.payout_prob <= 1:
            raise ValueError("payout_prob must be within [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def miner_ids(self) -> Tuple[str, ...]:
        return tuple(m for m, _ in self.miners)


@dataclass(frozen=True)
class GroundTruth:
    accelerated_txids: FrozenSet[str] = frozenset()
    accelerating_miners: FrozenSet[str] = frozenset()
    # txid -> miner whose block carries it
    accelerated_by: Dict[str, str] = field(default_factory=dict, compare=False)
    shortfall: int = field(default=0, compare=False)
    evicted: FrozenSet[str] = field(default=frozenset(), compare=False)


def reward_address(miner_id: str) -> str:
    return f"{miner_id}-reward"

# core/bundles/models.py
from dataclasses import dataclass
from typing import Tuple

CATEGORIES = ("flashbots", "rogue", "miner-payout", "unknown")

PUBLIC_CAPTURE_2 = "public-capture-2"
SANDWICH_3 = "sandwich-3"
NO_PATTERN = "none"


def normalize_category(raw: str) -> str:
    """Case-insensitive on ingest; 'Miner Payout' and 'miner_payout' both map to 'miner-payout'."""
    category = raw.strip().lower().replace("_", "-").replace(" ", "-")
    if category not in CATEGORIES:
        raise ValueError(f"unknown bundle category {raw!r}, expected one of {', '.join(CATEGORIES)}")
    return category


@dataclass(frozen=True)
class BundleTx:
    tx_hash: str
    issuer: str
    gas_used: int
    max_priority_fee_per_gas: int  # wei per gas
    coinbase_transfer: int  # wei
    position_in_bundle: int  # 1-based

    def __post_init__(self):
        if self.gas_used < 1:
            raise ValueError(f"{self.tx_hash}: gas_used must be >= 1")
        if self.max_priority_fee_per_gas < 0 or self.coinbase_transfer < 0:
            raise ValueError(f"{self.tx_hash}: fees and transfers must be non-negative")
        if self.position_in_bundle < 1:
            raise ValueError(f"{self.tx_hash}: position_in_bundle starts at 1")


@dataclass(frozen=True)
class BundleRecord:
    block_number: int
    bundle_index: int
    txs: Tuple[BundleTx, ...]
    category: str = "flashbots"

    def __post_init__(self):
        if not self.txs:
            raise ValueError(f"bundle {self.block_number}/{self.bundle_index} is empty")
        positions = [t.position_in_bundle for t in self.txs]
        if positions != list(range(1, len(self.txs) + 1)):
            raise ValueError(f"bundle {self.block_number}/{self.bundle_index}: positions {positions} not contiguous from 1")
        object.__setattr__(self, "category", normalize_category(self.category))

    @property
    def size(self) -> int:
        return len(self.txs)

    @property
    def total_gas(self) -> int:
        return sum(t.gas_used for t in self.txs)


@dataclass(frozen=True)
class BundleClassification:
    pattern: str
    public_tx_positions: Tuple[int, ...] = ()

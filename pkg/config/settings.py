# config/settings.py
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Tuple

from dotenv import load_dotenv


@dataclass
class NormConfig:
    min_feerate_sat_vb: Fraction = Fraction(1)  # 10^-5 BTC/kB
    epsilon_s: int = 0
    exclude_cpfp: bool = True
    epsilon_ladder: Tuple[int, ...] = (0, 10, 600)


@dataclass
class DetectionConfig:
    sppe_threshold: Fraction = Fraction(99)
    threshold_ladder: Tuple[int, ...] = (100, 99, 90, 50, 1)


@dataclass
class StatsConfig:
    alpha: float = 0.01
    normal_min_expected: float = 10.0  # y*theta0 and y*(1-theta0)


@dataclass
class ChainConfig:
    block_max_vsize: int = 1_000_000
    initial_subsidy_sat: int = 50 * 10**8
    halving_interval: int = 210_000
    # right-closed congestion bins, vbytes
    congestion_bounds_vb: Tuple[int, ...] = (1_000_000, 2_000_000, 4_000_000)
    # fee-rate classes for delay analysis, sat/vB (10^-4 and 10^-3 BTC/kB)
    feerate_class_bounds: Tuple[int, ...] = (10, 100)


@dataclass
class SynthDefaults:
    n_blocks: int = 2000
    block_interval_s: int = 600
    tx_arrival_rate: float = 200.0
    feerate_mu: float = 2.995732273553991  # ln(20 sat/vB)
    feerate_sigma: float = 1.2
    weight_range: Tuple[int, int] = (400, 2400)
    start_height: int = 650_000
    genesis_time: int = 1_600_000_000
    low_fee_quantile: float = 0.1


@dataclass
class DataConfig:
    data_dir: str = "data"
    runs_db: Optional[str] = None


@dataclass
class LoggingConfig:
    level: str = "INFO"
    file: Optional[str] = None


class Config:
    NORMS = NormConfig()
    DETECTION = DetectionConfig()
    STATS = StatsConfig()
    CHAIN = ChainConfig()
    SYNTH = SynthDefaults()
    DATA = DataConfig()
    LOGGING = LoggingConfig()

    @classmethod
    def from_env(cls):
        load_dotenv()
        if os.getenv("FEENORM_DATA_DIR"):
            cls.DATA.data_dir = os.environ["FEENORM_DATA_DIR"]
        if os.getenv("FEENORM_RUNS_DB"):
            cls.DATA.runs_db = os.environ["FEENORM_RUNS_DB"]
        if os.getenv("FEENORM_LOG_LEVEL"):
            cls.LOGGING.level = os.environ["FEENORM_LOG_LEVEL"].upper()
        if os.getenv("DEBUG") == "1":
            cls.LOGGING.level = "DEBUG"
        return cls()

# utils/helpers.py
import math
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from config.settings import Config

SAT_PER_BTC = 10**8
WEIGHT_UNITS_PER_VBYTE = 4


def fee_rate(tx) -> Fraction:
    """Fee rate in sat/vB as an exact rational (1 sat/vB == 10^-5 BTC/kB)."""
    return Fraction(tx.fee, tx.vsize)


def vsize_from_weight(weight: int) -> int:
    """BIP-141 virtual size: ceil(weight / 4)."""
    if weight < 1:
        raise ValueError(f"weight must be >= 1, got {weight}")
    return -(-weight // WEIGHT_UNITS_PER_VBYTE)


def btc_per_kb(rate_sat_vb: Fraction) -> Fraction:
    return Fraction(rate_sat_vb) * 1000 / SAT_PER_BTC


def sat_per_vb(rate_btc_kb) -> Fraction:
    return Fraction(rate_btc_kb) * SAT_PER_BTC / 1000


def block_subsidy(height: int, initial_sat: int = None, halving_interval: int = None) -> int:
    """Coinbase subsidy in satoshi; the shift is floor(height / interval)."""
    initial_sat = Config.CHAIN.initial_subsidy_sat if initial_sat is None else initial_sat
    halving_interval = Config.CHAIN.halving_interval if halving_interval is None else halving_interval
    halvings = height // halving_interval
    if halvings >= 64:
        return 0
    return initial_sat >> halvings


def fraction_mean(values: Iterable[Fraction]) -> Fraction:
    values = list(values)
    if not values:
        raise ValueError("mean of empty sequence")
    return sum(values, Fraction(0)) / len(values)


def nearest_rank_quantiles(values: Sequence, qs: Sequence[float]) -> list:
    """Nearest-rank quantiles: the smallest value whose empirical CDF reaches q."""
    arr = np.asarray([float(v) for v in values], dtype=float)
    if arr.size == 0:
        return [math.nan for _ in qs]
    return [float(v) for v in np.quantile(arr, qs, method="inverted_cdf")]


def describe(values: Sequence) -> dict:
    """count / mean / quartiles summary used by the distribution reports."""
    if not values:
        return {"count": 0, "mean": math.nan, "q1": math.nan, "median": math.nan, "q3": math.nan}
    q1, median, q3 = nearest_rank_quantiles(values, [0.25, 0.5, 0.75])
    return {
        "count": len(values),
        "mean": float(fraction_mean(Fraction(v) for v in values)),
        "q1": q1,
        "median": median,
        "q3": q3,
    }

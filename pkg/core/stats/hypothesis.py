# core/stats/hypothesis.py
"""Binomial tests for differential prioritization and Fisher's p-value combination.

Under the null a miner with hash share theta0 mines each of the y c-blocks
independently with probability theta0, so its count x ~ Binomial(y, theta0).
Acceleration tests the upper tail Pr(B >= x), deceleration the lower Pr(B <= x).
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import binom, norm

from config.settings import Config
from core.cohorts.builder import cohort_counts
from core.errors import DegenerateParameterError, EmptyWindowError
from utils.logger import get_logger

logger = get_logger(__name__)

ACCELERATION = "acceleration"
DECELERATION = "deceleration"
EXACT = "exact"
NORMAL = "normal-approx"

KIND_ALIASES = {"accel": ACCELERATION, ACCELERATION: ACCELERATION, "decel": DECELERATION, DECELERATION: DECELERATION}
METHOD_ALIASES = {EXACT: EXACT, "normal": NORMAL, NORMAL: NORMAL}


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    kind: str
    method: str
    x: int
    y: int
    theta0: Fraction
    p_value: float
    alpha: float
    rejected: bool
    approx_warning: bool = False  # normal approximation outside y*theta0, y*(1-theta0) >= 10


@dataclass(frozen=True)
class FisherResult:
    p_value: float
    statistic: float
    k: int
    exact_zero: bool = False


@dataclass
class WindowedTestResult:
    kind: str
    method: str = EXACT
    windows: List[TestResult] = field(default_factory=list)
    window_bounds: List[Optional[Tuple[int, int]]] = field(default_factory=list)
    skipped: int = 0
    combined: Optional[FisherResult] = None
    alpha: float = 0.01

    @property
    def rejected(self) -> bool:
        return self.combined is not None and self.combined.p_value < self.alpha


def _check(x: int, y: int, theta0) -> Fraction:
    theta = Fraction(theta0)
    if not 0 < theta < 1:
        raise DegenerateParameterError(f"theta0 must lie strictly between 0 and 1, got {theta0}")
    if not 0 <= x <= y:
        raise ValueError(f"counts must satisfy 0 <= x <= y, got x={x}, y={y}")
    return theta


def _result(kind, method, x, y, theta, p, alpha, warning=False) -> TestResult:
    alpha = Config.STATS.alpha if alpha is None else alpha
    p = min(1.0, max(0.0, float(p)))
    return TestResult(kind, method, x, y, theta, p, alpha, p < alpha, warning)


def accel_test_exact(x: int, y: int, theta0, alpha: float = None) -> TestResult:
    """p = Pr(B >= x) from the regularized incomplete beta (binomial survival)."""
    theta = _check(x, y, theta0)
    p = 1.0 if x == 0 else binom.sf(x - 1, y, float(theta))
    return _result(ACCELERATION, EXACT, x, y, theta, p, alpha)


def decel_test_exact(x: int, y: int, theta0, alpha: float = None) -> TestResult:
    """p = Pr(B <= x)."""
    theta = _check(x, y, theta0)
    p = 1.0 if x == y else binom.cdf(x, y, float(theta))
    return _result(DECELERATION, EXACT, x, y, theta, p, alpha)


def _normal_terms(x: int, y: int, theta: Fraction, shift: Fraction):
    mean = y * theta
    sd = math.sqrt(float(mean * (1 - theta)))
    z = float(x + shift - mean) / sd
    min_expected = Config.STATS.normal_min_expected
    warning = float(mean) < min_expected or float(y * (1 - theta)) < min_expected
    return z, warning


def accel_test_normal(x: int, y: int, theta0, alpha: float = None) -> TestResult:
    """Continuity-corrected upper tail: 1 - Phi((x - 0.5 - y*theta0) / sd)."""
    theta = _check(x, y, theta0)
    if y == 0:
        return _result(ACCELERATION, NORMAL, x, y, theta, 1.0, alpha, True)
    z, warning = _normal_terms(x, y, theta, Fraction(-1, 2))
    return _result(ACCELERATION, NORMAL, x, y, theta, norm.sf(z), alpha, warning)


def decel_test_normal(x: int, y: int, theta0, alpha: float = None) -> TestResult:
    """Continuity-corrected lower tail: Phi((x + 0.5 - y*theta0) / sd)."""
    theta = _check(x, y, theta0)
    if y == 0:
        return _result(DECELERATION, NORMAL, x, y, theta, 1.0, alpha, True)
    z, warning = _normal_terms(x, y, theta, Fraction(1, 2))
    return _result(DECELERATION, NORMAL, x, y, theta, norm.cdf(z), alpha, warning)


_TESTS = {
    (ACCELERATION, EXACT): accel_test_exact,
    (DECELERATION, EXACT): decel_test_exact,
    (ACCELERATION, NORMAL): accel_test_normal,
    (DECELERATION, NORMAL): decel_test_normal,
}


def run_test(x: int, y: int, theta0, kind: str = ACCELERATION, method: str = EXACT, alpha: float = None) -> TestResult:
    try:
        test = _TESTS[(KIND_ALIASES[kind], METHOD_ALIASES[method])]
    except KeyError:
        raise ValueError(f"unknown test kind/method: {kind}/{method}") from None
    return test(x, y, theta0, alpha)


def fisher_combine(ps: Sequence[float]) -> FisherResult:
    """Fisher's method; chi-square(2k) survival via exp(-X/2) * sum_{j<k} (X/2)^j / j!, summed in log space."""
    ps = list(ps)
    if not ps:
        raise ValueError("fisher_combine needs at least one p-value")
    for p in ps:
        if not 0 <= p <= 1:
            raise DegenerateParameterError(f"p-value outside [0, 1]: {p}")
    k = len(ps)
    if any(p == 0 for p in ps):
        return FisherResult(0.0, math.inf, k, exact_zero=True)
    statistic = -2.0 * math.fsum(math.log(p) for p in ps)
    half = statistic / 2.0
    if half == 0:
        return FisherResult(1.0, statistic, k)
    # terms overflow and exp(-X/2) underflows for large k
    j = np.arange(k)
    log_p = logsumexp(j * math.log(half) - gammaln(j + 1) - half)
    p_value = min(1.0, math.exp(log_p))
    return FisherResult(p_value, statistic, k)


def windowed_test(
    counts_per_window: Iterable, kind: str = ACCELERATION, alpha: float = None, method: str = EXACT,
) -> WindowedTestResult:
    """One test per window (exact by default), combined with Fisher's method.

    Windows without c-blocks or with a degenerate theta0 (miner absent or alone)
    are skipped and counted.
    """
    alpha = Config.STATS.alpha if alpha is None else alpha
    if method not in METHOD_ALIASES:
        raise ValueError(f"unknown test method: {method}")
    result = WindowedTestResult(kind=KIND_ALIASES[kind], method=METHOD_ALIASES[method], alpha=alpha)
    for counts in counts_per_window:
        if counts.y == 0 or not 0 < counts.theta0 < 1:
            result.skipped += 1
            continue
        result.windows.append(run_test(counts.x, counts.y, counts.theta0, kind, method, alpha))
        result.window_bounds.append(counts.window)
    if not result.windows:
        raise EmptyWindowError("no window has both c-blocks and a non-degenerate hash share")
    if result.skipped:
        logger.warning(f"⚠️  {result.skipped} window(s) skipped in the combined test")
    result.combined = fisher_combine([w.p_value for w in result.windows])
    return result


def miner_test_table(cohort, ds, miners: Sequence[str], kind: str = ACCELERATION,
                     method: str = EXACT, alpha: float = None) -> List[dict]:
    """One test row per miner; miners with theta0 of 0 or 1 are left out."""
    rows = []
    for miner in miners:
        counts = cohort_counts(cohort, ds, miner)
        if not 0 < counts.theta0 < 1:
            logger.warning(f"⚠️  {miner}: hash share {counts.theta0} is degenerate, no test")
            continue
        res = run_test(counts.x, counts.y, counts.theta0, kind, method, alpha)
        rows.append({
            "miner": miner,
            "cohort": cohort.name,
            "kind": res.kind,
            "method": res.method,
            "x": res.x,
            "y": res.y,
            "theta0": res.theta0,
            "p_value": res.p_value,
            "rejected": res.rejected,
        })
    return rows

# core/reports/tables.py
"""Report tables as pandas DataFrames, written as CSV or JSON with fixed formatting.

Column order is always explicit, rows keep the order they were built in, floats
carry six significant digits and exact fractions are converted only here.
"""
import io
import json
import math
from fractions import Fraction
from pathlib import Path
from typing import IO, Iterable, List, Optional, Sequence, Union

import pandas as pd

from utils.logger import get_logger

logger = get_logger(__name__)

FORMATS = ("csv", "json")
FLOAT_FORMAT = "%.6g"


def _plain(value):
    if isinstance(value, Fraction):
        return float(value)
    if isinstance(value, (set, frozenset, tuple, list)):
        return " ".join(str(v) for v in sorted(value))
    return value


def to_frame(rows: Iterable[dict], columns: Sequence[str]) -> pd.DataFrame:
    records = [{c: _plain(row.get(c)) for c in columns} for row in rows]
    return pd.DataFrame.from_records(records, columns=list(columns))


def _json_value(value):
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            return None
        return float(FLOAT_FORMAT % value)
    if hasattr(value, "item"):  # numpy scalars
        return _json_value(value.item())
    return value


def render(df: pd.DataFrame, fmt: str) -> str:
    if fmt == "csv":
        return df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    if fmt == "json":
        records = [{k: _json_value(v) for k, v in rec.items()} for rec in df.to_dict(orient="records")]
        return json.dumps(records, ensure_ascii=False, indent=2) + "\n"
    raise ValueError(f"unknown report format {fmt!r}, expected one of {FORMATS}")


def emit(
    rows: Iterable[dict],
    columns: Sequence[str],
    fmt: str = "csv",
    stream: Optional[IO[str]] = None,
    path: Optional[Union[str, Path]] = None,
) -> str:
    """Render rows and write them to ``path`` (if given) or ``stream``; returns the text."""
    text = render(to_frame(rows, columns), fmt)
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        logger.info(f"Report written: {path}")
    elif stream is not None:
        stream.write(text)
    return text


def summary_rows(summary: dict, key: str = "metric") -> List[dict]:
    """Flatten a {name: value} or {group: {stat: value}} summary into long rows."""
    rows = []
    for name, value in summary.items():
        if isinstance(value, dict):
            for stat, v in value.items():
                rows.append({key: name, "stat": stat, "value": v})
        else:
            rows.append({key: name, "stat": "", "value": value})
    return rows


def read_report(text: str, fmt: str = "csv") -> pd.DataFrame:
    """Parse emitted text back into a DataFrame (used by tests and the runs listing)."""
    if fmt == "csv":
        return pd.read_csv(io.StringIO(text))
    return pd.DataFrame(json.loads(text))

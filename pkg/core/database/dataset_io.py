# core/database/dataset_io.py
"""JSON Lines reading and canonical writing of transactions, blocks and snapshots.

Canonical form: one compact JSON object per line, keys in the order written by
``_tx_record`` / ``_block_record`` / ``_snapshot_record``, snapshot txids sorted,
UTF-8, ``\\n`` line endings. Files already in canonical form round-trip byte for byte.
"""
import json
from pathlib import Path
from typing import Any, Callable, Iterator, List, Optional, Tuple, Union

from core.database.models import (
    DEFAULT_MAX_VSIZE, UNKNOWN_MINER, Block, Dataset, MempoolSnapshot, Transaction, TxInput, TxOutput, Violation,
)
from utils.logger import get_logger

logger = get_logger(__name__)

TRANSACTIONS_FILE = "transactions.jsonl"
BLOCKS_FILE = "blocks.jsonl"
SNAPSHOTS_FILE = "snapshots.jsonl"

PathLike = Union[str, Path]


class RecordError(ValueError):
    pass


def int_field(rec: dict, key: str, optional: bool = False) -> Optional[int]:
    if key not in rec or rec[key] is None:
        if optional:
            return None
        raise RecordError(f"missing required field '{key}'")
    value = rec[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise RecordError(f"field '{key}' must be an integer, got {value!r}")
    return value


def str_field(rec: dict, key: str) -> str:
    if key not in rec or rec[key] is None:
        raise RecordError(f"missing required field '{key}'")
    value = rec[key]
    if not isinstance(value, str):
        raise RecordError(f"field '{key}' must be a string, got {value!r}")
    return value


def list_field(rec: dict, key: str, optional: bool = True) -> list:
    value = rec.get(key)
    if value is None:
        if optional:
            return []
        raise RecordError(f"missing required field '{key}'")
    if not isinstance(value, list):
        raise RecordError(f"field '{key}' must be a list")
    return value


def parse_transaction(rec: dict) -> Transaction:
    inputs = []
    for item in list_field(rec, "inputs"):
        if not isinstance(item, dict):
            raise RecordError("inputs must be objects with txid and vout")
        inputs.append(TxInput(txid=str_field(item, "txid"), vout=int_field(item, "vout")))
    outputs = []
    for item in list_field(rec, "outputs"):
        if not isinstance(item, dict):
            raise RecordError("outputs must be objects with address and value")
        outputs.append(TxOutput(address=str_field(item, "address"), value=int_field(item, "value")))
    return Transaction(
        txid=str_field(rec, "txid"),
        vsize=int_field(rec, "vsize"),
        fee=int_field(rec, "fee"),
        arrival_time=int_field(rec, "arrival_time", optional=True),
        inputs=tuple(inputs),
        outputs=tuple(outputs),
    )


def parse_block(rec: dict) -> Block:
    max_vsize = int_field(rec, "max_vsize", optional=True)
    miner = rec.get("miner_id")
    return Block(
        height=int_field(rec, "height"),
        block_hash=str_field(rec, "block_hash"),
        miner_id=miner if isinstance(miner, str) and miner else UNKNOWN_MINER,
        timestamp=int_field(rec, "timestamp"),
        tx_order=tuple(str(t) for t in list_field(rec, "tx_order", optional=False)),
        coinbase_addresses=tuple(str(a) for a in list_field(rec, "coinbase_addresses")),
        max_vsize=DEFAULT_MAX_VSIZE if max_vsize is None else max_vsize,
    )


def parse_snapshot(rec: dict) -> MempoolSnapshot:
    return MempoolSnapshot(
        timestamp=int_field(rec, "timestamp"),
        txids=frozenset(str(t) for t in list_field(rec, "txids", optional=False)),
    )


def iter_jsonl(path: PathLike) -> Iterator[Tuple[int, Any]]:
    """Yield (line_number, decoded object or the decode error) for each non-blank line.

    Lines are decoded one at a time so a bad byte sequence only spoils its own line.
    """
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                yield lineno, e
                continue
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as e:
                yield lineno, e


def read_records(path: PathLike, parse: Callable[[dict], Any]) -> Tuple[List[Any], List[Violation]]:
    """Parse every line of ``path``; bad lines become violations instead of exceptions."""
    path = Path(path)
    records, issues = [], []
    for lineno, obj in iter_jsonl(path):
        where = f"{path.name}:{lineno}"
        if isinstance(obj, UnicodeDecodeError):
            issues.append(Violation("malformed-record", where, f"invalid UTF-8 at byte {obj.start}"))
            continue
        if isinstance(obj, json.JSONDecodeError):
            issues.append(Violation("malformed-record", where, f"invalid JSON: {obj.msg}"))
            continue
        if not isinstance(obj, dict):
            issues.append(Violation("malformed-record", where, "line is not a JSON object"))
            continue
        try:
            records.append(parse(obj))
        except RecordError as e:
            issues.append(Violation("malformed-record", where, str(e)))
        except ValueError as e:
            issues.append(Violation("invalid-record", where, str(e)))
    if issues:
        logger.warning(f"⚠️  {len(issues)} unreadable record(s) in {path.name}")
    return records, issues


def load_dataset(directory: PathLike) -> Dataset:
    directory = Path(directory)
    issues: List[Violation] = []

    def _load(name: str, parse, required: bool):
        path = directory / name
        if not path.exists():
            if required:
                issues.append(Violation("missing-file", str(path), "required dataset file not found"))
            return []
        records, bad = read_records(path, parse)
        issues.extend(bad)
        return records

    txs = _load(TRANSACTIONS_FILE, parse_transaction, required=True)
    blocks = _load(BLOCKS_FILE, parse_block, required=True)
    snapshots = _load(SNAPSHOTS_FILE, parse_snapshot, required=False)
    logger.info(f"Loaded {len(txs)} txs, {len(blocks)} blocks, {len(snapshots)} snapshots from {directory}")
    return Dataset(tuple(txs), tuple(blocks), tuple(snapshots), issues=tuple(issues))


def _tx_record(tx: Transaction) -> dict:
    return {
        "txid": tx.txid,
        "vsize": tx.vsize,
        "fee": tx.fee,
        "arrival_time": tx.arrival_time,
        "inputs": [{"txid": i.txid, "vout": i.vout} for i in tx.inputs],
        "outputs": [{"address": o.address, "value": o.value} for o in tx.outputs],
    }


def _block_record(block: Block) -> dict:
    return {
        "height": block.height,
        "block_hash": block.block_hash,
        "miner_id": block.miner_id,
        "timestamp": block.timestamp,
        "tx_order": list(block.tx_order),
        "coinbase_addresses": list(block.coinbase_addresses),
        "max_vsize": block.max_vsize,
    }


def _snapshot_record(snap: MempoolSnapshot) -> dict:
    return {"timestamp": snap.timestamp, "txids": sorted(snap.txids)}


def dumps_line(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), ensure_ascii=False) + "\n"


def write_jsonl(path: PathLike, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps_line(rec))


def serialize_dataset(ds: Dataset, directory: PathLike) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_jsonl(directory / TRANSACTIONS_FILE, (_tx_record(t) for t in ds.transactions))
    write_jsonl(directory / BLOCKS_FILE, (_block_record(b) for b in ds.blocks))
    write_jsonl(directory / SNAPSHOTS_FILE, (_snapshot_record(s) for s in ds.snapshots))
    logger.debug(f"Wrote dataset to {directory}")

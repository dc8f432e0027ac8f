# tests/test_validation.py
from core.database.models import MempoolSnapshot
from core.database.validation import validate_dataset
from tests.conftest import block, dataset, tx


def _kinds(report):
    return [(v.kind, v.identifier) for v in report]


def test_clean_dataset_has_no_violations(two_block_dataset):
    assert validate_dataset(two_block_dataset) == []


def test_duplicate_txid():
    ds = dataset([tx("a", 1), tx("a", 2)], [block(1, ["a"])])
    assert _kinds(validate_dataset(ds)) == [("duplicate-txid", "a")]


def test_block_order_checks():
    ds = dataset([tx("a", 1)], [block(2, ["a"], timestamp=500), block(2, [], timestamp=400)])
    assert _kinds(validate_dataset(ds)) == [("decreasing-timestamp", "2"), ("non-increasing-height", "2")]


def test_equal_timestamps_are_allowed():
    ds = dataset([], [block(1, [], timestamp=500), block(2, [], timestamp=500)])
    assert validate_dataset(ds) == []


def test_dangling_references():
    ds = dataset([tx("a", 1)], [block(1, ["a", "ghost"])], [MempoolSnapshot(10, frozenset({"a", "phantom"}))])
    report = validate_dataset(ds)
    assert _kinds(report) == [("dangling-txid", "ghost"), ("dangling-txid", "phantom")]
    assert report[0].detail == "block 1" and report[1].detail == "snapshot 10"


def test_duplicate_member_and_multiple_commitment():
    ds = dataset([tx("a", 1)], [block(1, ["a", "a"]), block(2, ["a"])])
    assert _kinds(validate_dataset(ds)) == [("duplicate-block-member", "1:a"), ("multiply-committed", "a")]


def test_overweight_block():
    ds = dataset([tx("a", 1, 600), tx("b", 1, 500)], [block(1, ["a", "b"], max_vsize=1000)])
    report = validate_dataset(ds)
    assert _kinds(report) == [("block-overweight", "1")]
    assert report[0].detail == "1100 > 1000 vB"


def test_exactly_full_block_is_fine():
    ds = dataset([tx("a", 1, 500), tx("b", 1, 500)], [block(1, ["a", "b"], max_vsize=1000)])
    assert validate_dataset(ds) == []


def test_snapshot_timestamps_must_not_decrease():
    ds = dataset([], [], [MempoolSnapshot(20, frozenset()), MempoolSnapshot(10, frozenset())])
    assert _kinds(validate_dataset(ds)) == [("decreasing-snapshot-timestamp", "10")]


def test_report_is_sorted():
    ds = dataset([tx("a", 1), tx("a", 1)], [block(3, ["z", "y"]), block(1, [])])
    report = validate_dataset(ds)
    assert report == sorted(report, key=lambda v: (v.kind, v.identifier, v.detail))
    assert [v.kind for v in report] == [
        "dangling-txid", "dangling-txid", "decreasing-timestamp", "duplicate-txid", "non-increasing-height",
    ]


def test_validation_is_idempotent(two_block_dataset):
    messy = dataset(
        [tx("a", 1), tx("a", 1), tx("b", 5, spends=[("nowhere", 0)])],
        [block(3, ["z", "b", "b"]), block(1, [])],
        [MempoolSnapshot(20, frozenset({"q"})), MempoolSnapshot(10, frozenset())],
    )
    for ds in (two_block_dataset, messy):
        first = validate_dataset(ds)
        assert validate_dataset(ds) == first
    assert first

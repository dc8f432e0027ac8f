# tests/test_cli.py
import io
import json
from fractions import Fraction

import pytest

from audit_main import run
from core.cohorts.builder import write_cohort
from core.database.dataset_io import serialize_dataset
from core.reports.tables import read_report
from core.stats.hypothesis import accel_test_normal
from tests.conftest import block, dataset, scam_dataset, tx


def _run(*argv):
    out = io.StringIO()
    code = run(list(argv), stdout=out)
    return code, out.getvalue()


@pytest.fixture
def data_dir(tmp_path, two_block_dataset):
    directory = tmp_path / "data"
    serialize_dataset(two_block_dataset, directory)
    return directory


@pytest.fixture
def scam_dir(tmp_path):
    ds, cohort = scam_dataset()
    directory = tmp_path / "scam"
    serialize_dataset(ds, directory)
    write_cohort(cohort, directory / "cohorts.jsonl")
    return directory


def test_validate_clean_dataset(data_dir):
    code, out = _run("validate", "--data-dir", str(data_dir))
    assert code == 0
    assert out == "kind,identifier,detail\n"


def test_validate_reports_violations(tmp_path):
    serialize_dataset(dataset([tx("a", 1)], [block(1, ["a", "ghost"])]), tmp_path)
    code, out = _run("validate", "--data-dir", str(tmp_path))
    assert code == 1
    assert out.splitlines()[1] == "dangling-txid,ghost,block 1"


def test_raw_count_test_reproduces_poolin_row():
    code, out = _run("test", "--kind", "accel", "--method", "exact", "--x", "10", "--y", "53", "--theta0", "0.1528")
    assert code == 0
    row = read_report(out).iloc[0]
    assert row["p_value"] == pytest.approx(0.2856, abs=5e-4)
    assert not row["rejected"]


def test_cohort_test_on_scam_fixture(scam_dir):
    code, out = _run(
        "test", "--kind", "accel", "--method", "exact", "--miner", "Poolin",
        "--cohort", str(scam_dir / "cohorts.jsonl"), "--data-dir", str(scam_dir),
    )
    assert code == 0
    df = read_report(out)
    assert df[["miner", "x", "y"]].values.tolist() == [["Poolin", 10, 53]]
    assert df["theta0"].iloc[0] == pytest.approx(0.1528)
    assert df["p_value"].iloc[0] == pytest.approx(0.2856, abs=5e-4)


def test_windowed_cohort_test(scam_dir):
    code, out = _run(
        "test", "--miner", "Poolin", "--fisher-window", "250",
        "--cohort", str(scam_dir / "cohorts.jsonl"), "--data-dir", str(scam_dir),
    )
    assert code == 0
    df = read_report(out)
    assert df["window"].tolist() == ["0-249", "fisher"]
    assert df["p_value"].iloc[0] == pytest.approx(df["p_value"].iloc[1], abs=1e-5)


def test_windowed_cohort_test_uses_requested_method(scam_dir):
    common = ("--miner", "Poolin", "--fisher-window", "250", "--cohort", str(scam_dir / "cohorts.jsonl"),
              "--data-dir", str(scam_dir))
    code, out = _run("test", "--method", "normal", *common)
    assert code == 0
    df = read_report(out)
    assert df["method"].tolist() == ["normal-approx", "normal-approx"]
    expected = accel_test_normal(10, 53, Fraction(191, 250)).p_value
    assert df["p_value"].iloc[0] == pytest.approx(expected, rel=1e-5)
    code, out = _run("test", *common)
    assert read_report(out)["method"].tolist() == ["exact", "exact"]


@pytest.mark.parametrize("window", ["0", "-3", "2.5"])
def test_fisher_window_must_be_positive(scam_dir, window):
    code, out = _run(
        "test", "--fisher-window", window, "--cohort", str(scam_dir / "cohorts.jsonl"), "--data-dir", str(scam_dir),
    )
    assert code == 2 and out == ""


@pytest.mark.parametrize("epsilon", ["-1", "1.5", "abc"])
def test_epsilon_must_be_whole_non_negative_seconds(data_dir, epsilon):
    code, out = _run("violations", "--epsilon", epsilon, "--data-dir", str(data_dir))
    assert code == 2 and out == ""


def test_infinite_epsilon_finds_no_pairs(data_dir):
    code, out = _run("violations", "--epsilon", "inf", "--data-dir", str(data_dir))
    assert code == 0
    df = read_report(out)
    assert len(df) == 2
    assert df["pairs_violating"].tolist() == [0, 0]


def test_fisher_command():
    code, out = _run("fisher", "0.05", "0.05", "--format", "json")
    assert code == 0
    (row,) = json.loads(out)
    assert row["k"] == 2
    assert row["p_value"] == pytest.approx(0.017479, abs=1e-6)


def test_unknown_flag_is_a_usage_error(data_dir):
    assert _run("ppe", "--data-dir", str(data_dir), "--bogus")[0] == 2
    assert _run("no-such-command")[0] == 2


def test_degenerate_theta_fails():
    assert _run("test", "--x", "1", "--y", "2", "--theta0", "0")[0] == 1


def test_malformed_input_exits_one_with_line_number(tmp_path, caplog):
    (tmp_path / "transactions.jsonl").write_text('{"txid":"a","vsize":100,"fee":5}\n{oops\n')
    (tmp_path / "blocks.jsonl").write_text("")
    code, out = _run("ppe", "--data-dir", str(tmp_path))
    assert code == 1
    assert out == ""
    assert "transactions.jsonl:2" in caplog.text


def test_invalid_utf8_exits_one_with_line_number(tmp_path, caplog):
    (tmp_path / "transactions.jsonl").write_bytes(b'{"txid":"a","vsize":100,"fee":5}\n{"txid":"\xff"}\n')
    (tmp_path / "blocks.jsonl").write_text("")
    code, out = _run("validate", "--data-dir", str(tmp_path))
    assert code == 1
    assert "malformed-record,transactions.jsonl:2" in out
    assert "transactions.jsonl:2" in caplog.text


def test_reports_are_deterministic(data_dir):
    for command in (["ppe", "--tau"], ["cpfp"], ["violations", "--epsilon", "0"], ["delays"], ["fee-share"]):
        first = _run(*command, "--data-dir", str(data_dir))
        second = _run(*command, "--data-dir", str(data_dir))
        assert first == second
        assert first[0] == 0


def test_cpfp_report(data_dir):
    code, out = _run("cpfp", "--data-dir", str(data_dir))
    assert out.splitlines() == ["height,miner,txid", "1,M1,b"]


def test_cohort_members_missing_from_dataset_are_reported(data_dir, caplog):
    cohort_file = data_dir / "cohorts.jsonl"
    cohort_file.write_text('{"cohort":"x","txid":"a"}\n{"cohort":"x","txid":"ghost"}\n')
    code, out = _run("sppe", "--cohort", str(cohort_file), "--miner", "M1", "--data-dir", str(data_dir))
    assert code == 0
    assert out.splitlines()[1].startswith("M1,x,1,")
    assert "cohort x: 1 txid(s) not in the dataset" in caplog.text


def test_low_fee_report(data_dir):
    code, out = _run("low-fee", "--data-dir", str(data_dir))
    assert code == 0 and out == "miner,low_fee_txs\n"
    code, out = _run("low-fee", "--data-dir", str(data_dir), "--min-feerate", "4")
    assert out.splitlines() == ["miner,low_fee_txs", "M1,1", "M2,1"]


def test_out_dir_writes_named_report(data_dir, tmp_path):
    code, out = _run("ppe", "--data-dir", str(data_dir), "--out", str(tmp_path / "reports"), "--format", "json")
    assert code == 0 and out == ""
    records = json.loads((tmp_path / "reports" / "ppe.json").read_text())
    assert [r["height"] for r in records] == [1, 2]


def test_synth_generate_twice_gives_identical_files(tmp_path):
    for dest in ("a", "b"):
        code, _ = _run("synth", "generate", "--seed", "7", "--blocks", "40", "--rate", "20", "--dest", str(tmp_path / dest))
        assert code == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["blocks.jsonl", "ground_truth.jsonl", "snapshots.jsonl", "transactions.jsonl"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_inject_then_detect(tmp_path):
    base, injected = tmp_path / "base", tmp_path / "injected"
    _run("synth", "generate", "--seed", "3", "--blocks", "200", "--rate", "40", "--dest", str(base))
    code, out = _run(
        "synth", "inject", "--seed", "3", "--miners", "M1", "--n-txs", "10",
        "--data-dir", str(base), "--dest", str(injected),
    )
    assert code == 0
    accelerated = int(read_report(out)["accelerated"].iloc[0])
    assert accelerated > 0
    code, out = _run("detect-accelerated", "--threshold", "90", "--data-dir", str(injected))
    assert code == 0
    assert len(read_report(out)) == accelerated
    code, out = _run("thresholds", "--data-dir", str(injected))
    table = read_report(out)
    assert "n_accelerated" in table.columns


def test_runs_are_recorded(data_dir, tmp_path):
    db = str(tmp_path / "runs.db")
    _run("validate", "--data-dir", str(data_dir), "--runs-db", db)
    _run("fisher", "0.5", "--runs-db", db)
    code, out = _run("runs", "--runs-db", db)
    assert code == 0
    assert read_report(out)["command"].tolist() == ["fisher", "validate"]


def test_bundles_classify(tmp_path):
    lines = [
        {"block_number": 1, "bundle_index": 0, "position_in_bundle": 1, "tx_hash": "0x1", "issuer": "A",
         "gas_used": 100000, "max_priority_fee_per_gas_wei": 2 * 10**9, "coinbase_transfer_wei": 0,
         "category": "flashbots"},
        {"block_number": 1, "bundle_index": 0, "position_in_bundle": 2, "tx_hash": "0x2", "issuer": "B",
         "gas_used": 100000, "max_priority_fee_per_gas_wei": 0, "coinbase_transfer_wei": "400000000000000",
         "category": "flashbots"},
    ]
    path = tmp_path / "bundles.jsonl"
    path.write_text("".join(json.dumps(line) + "\n" for line in lines))
    code, out = _run("bundles", "classify", str(path))
    assert code == 0
    assert out.splitlines() == [
        "block_number,bundle_index,size,pattern,effective_priority_fee_gwei",
        "1,0,2,public-capture-2,3",
    ]

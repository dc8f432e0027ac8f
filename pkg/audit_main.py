#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
feenorm: transaction-ordering audit, command-line entry point

Reports are machine-readable (CSV or JSON) on stdout, or one file per report
under --out DIR; logs and human summaries go to stderr.
Exit codes: 0 success, 1 validation or input failure, 2 usage error.
"""

import argparse
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import IO, List, Optional, Sequence

# project root on sys.path so the flat packages import from anywhere
ROOT_DIR = Path(__file__).resolve().parent
sys.path.insert(0, str(ROOT_DIR))

from config.settings import Config  # noqa: E402
from core.bundles.bundle_audit import (  # noqa: E402
    bundle_stats, classification_rows, load_bundles, public_fee_gap, to_gwei,
)
from core.cohorts.builder import (  # noqa: E402
    extract_miner_wallets, load_cohorts, self_interest_txs, shared_addresses, unresolved_members, windowed_counts,
    write_cohort,
)
from core.database.dataset_io import load_dataset, serialize_dataset  # noqa: E402
from core.database.db_manager import DBManager  # noqa: E402
from core.database.models import AuditRun, Dataset  # noqa: E402
from core.database.validation import validate_dataset  # noqa: E402
from core.errors import AuditError, DatasetFormatError, EmptyCohortError  # noqa: E402
from core.metrics.congestion import (  # noqa: E402
    commit_delays, congested_fraction, congestion_bin, delays_by_feerate_class, fee_revenue_share,
    feerate_by_congestion, mempool_size_series,
)
from core.metrics.positions import (  # noqa: E402
    accelerated_block_share, block_kendall_tau, cohort_errors, flag_accelerated, flagged_value, ppe_by_block,
    ppe_summary, threshold_table,
)
from core.norms.oracle import detect_cpfp, low_fee_inclusions, violation_report  # noqa: E402
from core.reports.tables import FORMATS, emit, summary_rows  # noqa: E402
from core.stats.hypothesis import fisher_combine, miner_test_table, run_test, windowed_test  # noqa: E402
from core.synth.generator import generate, inject_acceleration, load_ground_truth, write_ground_truth  # noqa: E402
from core.synth.models import DEFAULT_MINERS, GroundTruth, SynthConfig  # noqa: E402
from utils.helpers import btc_per_kb, fraction_mean  # noqa: E402
from utils.logger import get_logger, set_level  # noqa: E402

logger = get_logger("FEENORM.MAIN")

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2


@dataclass
class Report:
    name: str
    columns: Sequence[str]
    rows: List[dict] = field(default_factory=list)
    exit_code: int = EXIT_OK


def _dataset(args) -> Dataset:
    """Load the dataset; unreadable records or missing files stop the command."""
    ds = load_dataset(args.data_dir)
    if ds.issues:
        for issue in ds.issues:
            logger.error(f"❌ {issue.identifier}: {issue.kind}: {issue.detail}")
        raise DatasetFormatError(f"{len(ds.issues)} unreadable record(s) or missing file(s)", file=str(args.data_dir))
    return ds


def _selected_cohorts(args, ds: Dataset):
    cohorts = load_cohorts(args.cohort)
    if args.cohort_name:
        if args.cohort_name not in cohorts:
            raise EmptyCohortError(f"cohort {args.cohort_name!r} not found in {args.cohort}")
        cohorts = {args.cohort_name: cohorts[args.cohort_name]}
    for cohort in cohorts.values():
        missing = unresolved_members(cohort, ds)
        if missing:
            logger.warning(f"⚠️  cohort {cohort.name}: {len(missing)} txid(s) not in the dataset")
    return list(cohorts.values())


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def seconds(text: str) -> float:
    """Non-negative whole seconds, or 'inf'."""
    if text.strip().lower() in ("inf", "infinity"):
        return math.inf
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0 seconds, got {value}")
    return value


# ---- dataset checks ----

def cmd_validate(args) -> Report:
    ds = load_dataset(args.data_dir)
    violations = validate_dataset(ds)
    for v in violations:
        logger.error(f"❌ {v.identifier}: {v.kind} {v.detail}")
    if not violations:
        logger.info("✅ dataset is well-formed")
    rows = [{"kind": v.kind, "identifier": v.identifier, "detail": v.detail} for v in violations]
    return Report("validate", ("kind", "identifier", "detail"), rows, EXIT_INVALID if rows else EXIT_OK)


def cmd_cpfp(args) -> Report:
    ds = _dataset(args)
    rows = []
    for block in ds.blocks:
        cpfp = detect_cpfp(block, ds)
        rows.extend({"height": block.height, "miner": block.miner_id, "txid": t} for t in block.tx_order if t in cpfp)
    return Report("cpfp", ("height", "miner", "txid"), rows)


def cmd_low_fee(args) -> Report:
    ds = _dataset(args)
    threshold = Config.NORMS.min_feerate_sat_vb if args.min_feerate is None else Fraction(args.min_feerate)
    logger.info(f"Minimum fee rate {float(threshold)} sat/vB ({float(btc_per_kb(threshold)):.0e} BTC/kB)")
    counts = low_fee_inclusions(ds, threshold)
    rows = [{"miner": m, "low_fee_txs": n} for m, n in counts.items()]
    return Report("low-fee", ("miner", "low_fee_txs"), rows)


def cmd_violations(args) -> Report:
    ds = _dataset(args)
    rows = violation_report(ds, args.epsilon or None, not args.include_cpfp, args.sample, args.seed)
    return Report("violations", ("snapshot_ts", "epsilon_s", "pairs_total", "pairs_violating", "fraction"), rows)


# ---- position metrics ----

def cmd_ppe(args) -> Report:
    ds = _dataset(args)
    rows = ppe_by_block(ds)
    columns = ["height", "miner", "n_eligible", "ppe_pct"]
    if args.tau:
        for row in rows:
            row["kendall_tau"] = block_kendall_tau(ds.block_index[row["height"]], ds)
        columns.append("kendall_tau")
    return Report("ppe", columns, rows)


def cmd_summary(args) -> Report:
    ds = _dataset(args)
    return Report("summary", ("miner", "blocks", "mean_ppe_pct", "std_ppe_pct", "p80_ppe_pct"), ppe_summary(ds))


def cmd_sppe(args) -> Report:
    ds = _dataset(args)
    miners = [args.miner] if args.miner else ds.miners()
    rows = []
    for cohort in _selected_cohorts(args, ds):
        for miner in miners:
            errors = cohort_errors(cohort.txids, miner, ds)
            if not errors:
                logger.warning(f"⚠️  no {cohort.name} transactions in blocks of {miner}")
                continue
            rows.append({"miner": miner, "cohort": cohort.name, "n": len(errors), "sppe_pct": fraction_mean(errors.values())})
    if not rows:
        raise EmptyCohortError("no cohort transactions for the selected miner(s)")
    return Report("sppe", ("miner", "cohort", "n", "sppe_pct"), rows)


def cmd_detect(args) -> Report:
    ds = _dataset(args)
    if args.by_miner:
        rows = accelerated_block_share(ds, args.threshold)
        return Report("detect-accelerated-miners", ("miner", "blocks", "blocks_flagged", "pct_blocks_flagged"), rows)
    if args.value:
        row = flagged_value(ds, args.threshold)
        return Report("detect-accelerated-value", tuple(row), [row])
    flagged = flag_accelerated(ds, args.threshold)
    rows = []
    for txid, error in flagged.items():
        block = ds.committing_block(txid)
        rows.append({"txid": txid, "block_height": block.height, "miner": block.miner_id, "signed_error_pct": error})
    logger.info(f"{len(rows)} transaction(s) at or above signed error {args.threshold}")
    return Report("detect-accelerated", ("txid", "block_height", "miner", "signed_error_pct"), rows)


def cmd_thresholds(args) -> Report:
    ds = _dataset(args)
    truth = load_ground_truth(args.data_dir)
    rows = threshold_table(ds, args.thresholds or None, set(truth.accelerated_txids) if truth else None)
    columns = ["sppe_threshold", "n_txs"] + (["n_accelerated", "pct_accelerated"] if truth else [])
    return Report("thresholds", columns, rows)


# ---- cohorts and tests ----

def cmd_wallets(args) -> Report:
    ds = _dataset(args)
    wallets = extract_miner_wallets(ds)
    shared = shared_addresses(wallets)
    rows = []
    for miner in sorted(wallets):
        for address in sorted(wallets[miner]):
            others = [m for m in shared.get(address, []) if m != miner]
            rows.append({"miner": miner, "address": address, "shared_with": " ".join(others)})
    return Report("wallets", ("miner", "address", "shared_with"), rows)


def cmd_self_interest(args) -> Report:
    ds = _dataset(args)
    cohort = self_interest_txs(ds, args.miner)
    if args.write:
        write_cohort(cohort, args.write)
        logger.info(f"Cohort written: {args.write}")
    rows = [{"cohort": cohort.name, "txid": t} for t in sorted(cohort.txids)]
    return Report("cohort-self-interest", ("cohort", "txid"), rows)


def _window_rows(args, ds, cohort, miner) -> List[dict]:
    counts = windowed_counts(cohort, ds, miner, window_size=args.fisher_window)
    result = windowed_test(counts, args.kind, args.alpha, args.method)
    if any(w.approx_warning for w in result.windows):
        logger.warning(f"⚠️  {miner}: normal approximation used in a window with an expected count below 10")
    rows = [{
        "miner": miner, "cohort": cohort.name, "kind": w.kind, "method": w.method, "window": f"{lo}-{hi}",
        "x": w.x, "y": w.y, "theta0": w.theta0, "p_value": w.p_value, "rejected": w.rejected,
    } for w, (lo, hi) in zip(result.windows, result.window_bounds)]
    rows.append({
        "miner": miner, "cohort": cohort.name, "kind": result.kind, "method": result.method, "window": "fisher",
        "x": sum(w.x for w in result.windows), "y": sum(w.y for w in result.windows), "theta0": None,
        "p_value": result.combined.p_value, "rejected": result.rejected,
    })
    return rows


def cmd_test(args) -> Report:
    if args.x is not None:
        if args.y is None or args.theta0 is None:
            raise ValueError("--x needs --y and --theta0")
        res = run_test(args.x, args.y, args.theta0, args.kind, args.method, args.alpha)
        if res.approx_warning:
            logger.warning("⚠️  normal approximation used with an expected count below 10")
        row = {"miner": args.miner or "", "cohort": "", "kind": res.kind, "method": res.method, "x": res.x,
               "y": res.y, "theta0": res.theta0, "p_value": res.p_value, "rejected": res.rejected}
        return Report("test", ("miner", "cohort", "kind", "method", "x", "y", "theta0", "p_value", "rejected"), [row])

    if not args.cohort:
        raise ValueError("test needs --cohort FILE or --x/--y/--theta0")
    ds = _dataset(args)
    miners = [args.miner] if args.miner else ds.miners()
    rows = []
    if args.fisher_window:
        for cohort in _selected_cohorts(args, ds):
            for miner in miners:
                rows.extend(_window_rows(args, ds, cohort, miner))
        return Report("test-windows", ("miner", "cohort", "kind", "method", "window", "x", "y", "theta0", "p_value", "rejected"), rows)
    for cohort in _selected_cohorts(args, ds):
        rows.extend(miner_test_table(cohort, ds, miners, args.kind, args.method, args.alpha))
    return Report("test", ("miner", "cohort", "kind", "method", "x", "y", "theta0", "p_value", "rejected"), rows)


def cmd_fisher(args) -> Report:
    res = fisher_combine(args.p)
    row = {"k": res.k, "statistic": res.statistic, "p_value": res.p_value, "exact_zero": res.exact_zero}
    return Report("fisher", ("k", "statistic", "p_value", "exact_zero"), [row])


# ---- bundles ----

def _bundle_file(args) -> Path:
    return Path(args.bundles) if args.bundles else Path(args.data_dir) / "bundles.jsonl"


def cmd_bundles_classify(args) -> Report:
    bundles = load_bundles(_bundle_file(args))
    rows = classification_rows(bundles)
    columns = ["block_number", "bundle_index", "size", "pattern", "effective_priority_fee_gwei"]
    if args.gap:
        gaps = {(b.block_number, b.bundle_index): public_fee_gap(b) for b in bundles}
        for row in rows:
            gap = gaps[(row["block_number"], row["bundle_index"])]
            row["public_fee_gap_gwei"] = None if gap is None else to_gwei(gap)
        columns.append("public_fee_gap_gwei")
    return Report("bundles-classify", columns, rows)


def cmd_bundles_stats(args) -> Report:
    summary = bundle_stats(load_bundles(_bundle_file(args)))
    return Report("bundles-stats", ("metric", "value"), summary_rows(summary))


# ---- congestion ----

def cmd_congestion(args) -> Report:
    ds = _dataset(args)
    if args.feerates:
        summaries, excluded = feerate_by_congestion(ds)
        logger.info(f"{excluded} transaction(s) without a covering snapshot excluded")
        rows = [{"bin": label, **stats} for label, stats in summaries.items()]
        return Report("congestion-feerates", ("bin", "count", "mean", "q1", "median", "q3"), rows)
    rows = [
        {"timestamp": ts, "vbytes": vb, "tx_count": n, "bin": congestion_bin(vb).label}
        for ts, vb, n in mempool_size_series(ds)
    ]
    logger.info(f"Congested snapshots: {float(congested_fraction(ds)):.2%}")
    return Report("congestion", ("timestamp", "vbytes", "tx_count", "bin"), rows)


def cmd_delays(args) -> Report:
    ds = _dataset(args)
    if args.by_class:
        summary = delays_by_feerate_class(ds)
        rows = [{"feerate_class": label, **stats} for label, stats in summary.items()]
        columns = ("feerate_class", "count", "mean", "q1", "median", "q3", "next_block", "wait_3_plus", "wait_10_plus")
        return Report("delays-by-class", columns, rows)
    rows, clamped, pending = commit_delays(ds)
    logger.info(f"{len(rows)} committed, {pending} pending, {clamped} clamped to one block")
    return Report("delays", ("txid", "feerate_sat_vb", "delay_blocks"), rows)


def cmd_fee_share(args) -> Report:
    ds = _dataset(args)
    rows = [{"height": b.height, "miner": b.miner_id, "fee_share_pct": fee_revenue_share(b, ds)} for b in ds.blocks]
    return Report("fee-share", ("height", "miner", "fee_share_pct"), rows)


# ---- synthetic chains ----

def _parse_miners(text: Optional[str]):
    if not text:
        return DEFAULT_MINERS
    miners = []
    for item in text.split(","):
        name, _, share = item.partition(":")
        if not name or not share:
            raise ValueError(f"miner share {item!r} must look like NAME:SHARE")
        miners.append((name, float(share)))
    return tuple(miners)


def _write_synth(ds: Dataset, truth: GroundTruth, dest: Path) -> List[dict]:
    serialize_dataset(ds, dest)
    write_ground_truth(truth, dest)
    return [
        {"file": "transactions.jsonl", "records": len(ds.transactions)},
        {"file": "blocks.jsonl", "records": len(ds.blocks)},
        {"file": "snapshots.jsonl", "records": len(ds.snapshots)},
        {"file": "ground_truth.jsonl", "records": len(truth.accelerated_txids)},
    ]


def cmd_synth_generate(args) -> Report:
    cfg = SynthConfig(
        miners=_parse_miners(args.miners),
        n_blocks=args.blocks,
        tx_arrival_rate=args.rate,
        seed=args.seed,
        **({"block_capacity": args.capacity} if args.capacity else {}),
    )
    ds, truth = generate(cfg)
    return Report("synth-generate", ("file", "records"), _write_synth(ds, truth, Path(args.dest)))


def cmd_synth_inject(args) -> Report:
    ds = _dataset(args)
    truth = load_ground_truth(args.data_dir) or GroundTruth()
    out, truth = inject_acceleration(ds, truth, args.miners.split(","), args.n_txs, args.seed)
    _write_synth(out, truth, Path(args.dest))
    row = {"requested": args.n_txs, "accelerated": len(truth.accelerated_txids), "shortfall": truth.shortfall,
           "evicted": len(truth.evicted)}
    return Report("synth-inject", ("requested", "accelerated", "shortfall", "evicted"), [row])


# ---- run history ----

def cmd_runs(args) -> Report:
    db = DBManager(args.runs_db)
    rows = db.get_recent_runs(args.limit)
    return Report("runs", ("id", "command", "inputs", "parameters_json", "output", "exit_code", "created_at"), rows)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=FORMATS, default="csv", help="report format")
    common.add_argument("--out", metavar="DIR", help="write one file per report into DIR instead of stdout")
    common.add_argument("--data-dir", default=Config.DATA.data_dir, help="dataset directory (env FEENORM_DATA_DIR)")
    common.add_argument("--runs-db", default=Config.DATA.runs_db, help="sqlite file recording every run")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], default=None)

    parser = argparse.ArgumentParser(prog="feenorm", description="Transaction-ordering audit toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, target=sub):
        p = target.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        return p

    def add_cohort_args(p, required=True):
        p.add_argument("--cohort", required=required, metavar="FILE", help="cohort JSON Lines {cohort, txid}")
        p.add_argument("--cohort-name", help="only this cohort from the file")
        p.add_argument("--miner", help="only this miner (default: every miner)")

    add("validate", cmd_validate, "check dataset integrity")
    add("cpfp", cmd_cpfp, "list child-pays-for-parent transactions")
    p = add("low-fee", cmd_low_fee, "per-miner count of committed sub-minimum fee-rate transactions")
    p.add_argument("--min-feerate", type=float, default=None, help="sat/vB (default 1)")
    p = add("violations", cmd_violations, "fee-rate selection violation pairs per snapshot")
    p.add_argument("--epsilon", type=seconds, action="append", help="arrival gap in whole seconds or inf, repeatable")
    p.add_argument("--include-cpfp", action="store_true")
    p.add_argument("--sample", type=int, help="uniformly sample this many snapshots")
    p.add_argument("--seed", type=int, default=0)

    p = add("ppe", cmd_ppe, "per-block position prediction error")
    p.add_argument("--tau", action="store_true", help="add Kendall rank correlation per block")
    add("summary", cmd_summary, "per-miner PPE distribution")
    p = add("sppe", cmd_sppe, "per-miner signed PPE of a cohort")
    add_cohort_args(p)
    p = add("detect-accelerated", cmd_detect, "transactions with signed error at or above a threshold")
    p.add_argument("--threshold", type=float, default=float(Config.DETECTION.sppe_threshold))
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--by-miner", action="store_true", help="share of each miner's blocks holding a flagged tx")
    mode.add_argument("--value", action="store_true", help="output value moved by flagged txs")
    p = add("thresholds", cmd_thresholds, "flag counts over a ladder of thresholds")
    p.add_argument("--thresholds", type=float, nargs="+")

    add("wallets", cmd_wallets, "miner reward wallets and shared addresses")
    cohort = sub.add_parser("cohort", help="build cohorts")
    cohort_sub = cohort.add_subparsers(dest="cohort_command", required=True)
    p = add("self-interest", cmd_self_interest, "transactions touching a miner's own wallets", cohort_sub)
    p.add_argument("--miner", required=True)
    p.add_argument("--write", metavar="FILE", help="also write the cohort as JSON Lines")

    p = add("test", cmd_test, "binomial acceleration/deceleration test")
    add_cohort_args(p, required=False)
    p.add_argument("--kind", choices=["accel", "decel"], default="accel")
    p.add_argument("--method", choices=["exact", "normal"], default="exact")
    p.add_argument("--alpha", type=float, default=Config.STATS.alpha)
    p.add_argument("--fisher-window", type=positive_int, metavar="H", help="blocks per window, combined with Fisher's method")
    p.add_argument("--x", type=int, help="test raw counts instead of a cohort")
    p.add_argument("--y", type=int)
    p.add_argument("--theta0", type=float)
    p = add("fisher", cmd_fisher, "combine p-values with Fisher's method")
    p.add_argument("p", type=float, nargs="+")

    bundles = sub.add_parser("bundles", help="private-relay bundle audit")
    bundles_sub = bundles.add_subparsers(dest="bundles_command", required=True)
    for name, func in (("classify", cmd_bundles_classify), ("stats", cmd_bundles_stats)):
        p = add(name, func, f"bundle {name}", bundles_sub)
        p.add_argument("bundles", nargs="?", help="bundle JSON Lines (default DATA_DIR/bundles.jsonl)")
        if name == "classify":
            p.add_argument("--gap", action="store_true", help="add the public fee gap column")

    p = add("congestion", cmd_congestion, "mempool size series and congestion bins")
    p.add_argument("--feerates", action="store_true", help="fee-rate summaries per congestion bin")
    p = add("delays", cmd_delays, "commit delay per transaction")
    p.add_argument("--by-class", action="store_true", help="summaries per fee-rate class")
    add("fee-share", cmd_fee_share, "fee share of miner revenue per block")

    synth = sub.add_parser("synth", help="synthetic chains with ground truth")
    synth_sub = synth.add_subparsers(dest="synth_command", required=True)
    p = add("generate", cmd_synth_generate, "generate a norm-following chain", synth_sub)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dest", required=True, metavar="DIR")
    p.add_argument("--blocks", type=int, default=Config.SYNTH.n_blocks)
    p.add_argument("--rate", type=float, default=Config.SYNTH.tx_arrival_rate, help="transactions per block interval")
    p.add_argument("--capacity", type=int, help="block capacity in vbytes")
    p.add_argument("--miners", help="NAME:SHARE,... (shares sum to 1)")
    p = add("inject", cmd_synth_inject, "accelerate low-fee transactions via colluding miners", synth_sub)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dest", required=True, metavar="DIR")
    p.add_argument("--miners", required=True, help="comma-separated accelerating miners")
    p.add_argument("--n-txs", type=int, default=200)

    p = add("runs", cmd_runs, "recent audit runs")
    p.add_argument("--limit", type=int, default=10)
    return parser


def _record(args, report: Optional[Report], exit_code: int, output: str):
    if not args.runs_db or args.func is cmd_runs:
        return
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "runs_db")}
    run = AuditRun(
        command=report.name if report else args.command,
        inputs=str(getattr(args, "bundles", None) or getattr(args, "cohort", None) or args.data_dir),
        parameters=params,
        output=output,
        exit_code=exit_code,
    )
    try:
        DBManager(args.runs_db).save_run(run)
    except Exception as e:
        logger.warning(f"⚠️  run not recorded: {e}")


def run(argv: Optional[Sequence[str]] = None, stdout: Optional[IO[str]] = None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    Config.from_env()
    set_level(Config.LOGGING.level)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    if args.log_level:
        set_level(args.log_level)

    report, output = None, ""
    try:
        report = args.func(args)
        exit_code = report.exit_code
        if args.out:
            path = Path(args.out) / f"{report.name}.{args.format}"
            emit(report.rows, report.columns, args.format, path=path)
            output = str(path)
        else:
            emit(report.rows, report.columns, args.format, stream=stdout)
            output = "stdout"
    except AuditError as e:
        logger.error(f"❌ {e}")
        exit_code = EXIT_INVALID
    except ValueError as e:
        logger.error(f"❌ {e}")
        exit_code = EXIT_USAGE
    _record(args, report, exit_code, output)
    return exit_code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

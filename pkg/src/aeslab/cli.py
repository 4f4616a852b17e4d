"""Command-line front end.

Subcommands:
  run      generate, inject, encrypt, detect with both detectors, export CSVs
  bench    latency/throughput sweep over block and worker counts
  kat      known-answer self-test of the cipher
  train    fit a forest on a per-block CSV or a fresh run and save it
  predict  load a saved forest and classify a per-block CSV

Every flag can also be set through an environment variable named
AESLAB_<FLAG> (dashes become underscores, e.g. AESLAB_INJECT_PCT);
command-line values win over the environment.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

from .bench import sweep
from .cipher import (
    DEFAULT_KEY_HEX,
    Key128,
    PipelineError,
    run_known_answer_suite,
    run_pipeline,
)
from .detect_forest import (
    ByteSource,
    ForestHyperparams,
    build_dataset,
    fit_forest,
    load_model,
    predict_all,
    save_model,
    split_train_test,
)
from .metrics_report import (
    DetectionReport,
    compare,
    export_csv,
    read_blocks_csv,
    rows_to_vectors,
    run_id,
    score,
)
from .detect_threshold import classify_threshold, fit_threshold
from .workload import InputDistribution, Mode, RunConfig

ENV_PREFIX = "AESLAB_"


def _env_default(name: str, fallback):
    """Environment override for one flag; CLI values still take precedence."""
    return os.environ.get(ENV_PREFIX + name, fallback)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("value must be at least 1")
    return value


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError("value must not be negative")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError("value must be positive")
    return value


def _percentage(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not 0.0 <= value <= 100.0:
        raise argparse.ArgumentTypeError("percentage must be within [0, 100]")
    return value


def _fraction(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError("fraction must lie strictly between 0 and 1")
    return value


def _depth(text: str) -> Optional[int]:
    if text.lower() == "none":
        return None
    return _nonneg_int(text)


def _count_list(text: str) -> List[int]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        values = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("counts must be positive integers")
    return values


def _key(text: str) -> Key128:
    try:
        return Key128.from_hex(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _parse_enum(enum_cls, raw, parser: argparse.ArgumentParser, flag: str):
    # values arriving via environment variables bypass argparse choices
    try:
        return enum_cls(raw)
    except ValueError:
        parser.error(f"{flag}: invalid choice {raw!r}")


def _add_workload_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--blocks", type=_positive_int, default=_env_default("BLOCKS", 1024),
                   help="blocks per run (default 1024)")
    p.add_argument("--inject-pct", type=_percentage, default=_env_default("INJECT_PCT", 20.0),
                   help="percentage of blocks tagged anomalous (default 20)")
    p.add_argument("--workers", type=_positive_int, default=_env_default("WORKERS", 1),
                   help="worker processes (default 1)")
    p.add_argument("--seed", type=_nonneg_int, default=_env_default("SEED", 1),
                   help="run seed (default 1)")
    p.add_argument("--mode", choices=["real", "simulated"], default=_env_default("MODE", "real"),
                   help="timing source: measured wall clock or seeded model (default real)")
    p.add_argument("--delay-min-us", type=_positive_float,
                   default=_env_default("DELAY_MIN_US", 5000.0),
                   help="minimum injected delay in microseconds (default 5000)")
    p.add_argument("--delay-max-us", type=_positive_float,
                   default=_env_default("DELAY_MAX_US", 20000.0),
                   help="maximum injected delay in microseconds (default 20000)")
    p.add_argument("--input-dist", choices=["uniform", "ascii"],
                   default=_env_default("INPUT_DIST", "ascii"),
                   help="plaintext byte distribution (default ascii)")
    p.add_argument("--work-amp", type=_positive_int, default=_env_default("WORK_AMP", 1),
                   help="encryption passes per block in real mode (default 1)")
    p.add_argument("--key-hex", type=_key, default=_env_default("KEY_HEX", DEFAULT_KEY_HEX),
                   help="AES-128 key as 32 hex digits")


def _add_forest_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trees", type=_positive_int, default=_env_default("TREES", 101),
                   help="trees in the forest (default 101)")
    p.add_argument("--max-depth", type=_depth, default=_env_default("MAX_DEPTH", 16),
                   help="tree depth limit, or 'none' (default 16)")
    p.add_argument("--train-fraction", type=_fraction,
                   default=_env_default("TRAIN_FRACTION", 0.7),
                   help="stratified train share (default 0.7)")
    p.add_argument("--byte-source", choices=["plaintext", "ciphertext"],
                   default=_env_default("BYTE_SOURCE", "plaintext"),
                   help="which bytes feed the 16 byte features (default plaintext)")


def _add_out_dir_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", default=_env_default("OUT_DIR", "results"),
                   help="directory for CSV artifacts (default results)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aeslab",
        description="AES-128-ECB anomaly-injection lab with threshold and forest detectors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="full pipeline: inject, encrypt, detect, export")
    _add_workload_flags(p_run)
    _add_forest_flags(p_run)
    p_run.add_argument("--threshold-fit", choices=["all", "train"],
                       default=_env_default("THRESHOLD_FIT", "all"),
                       help="fit the timing cut-off on the whole run or the train subset")
    _add_out_dir_flag(p_run)
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="latency/throughput sweep (real mode)")
    p_bench.add_argument("--block-counts", type=_count_list,
                         default=_env_default("BLOCK_COUNTS", [1024, 4096, 8192, 16384]),
                         help="comma-separated block counts (default 1024,4096,8192,16384)")
    p_bench.add_argument("--worker-counts", type=_count_list,
                         default=_env_default("WORKER_COUNTS", [1, 2, 4]),
                         help="comma-separated worker counts (default 1,2,4)")
    p_bench.add_argument("--inject-pct", type=_percentage,
                         default=_env_default("INJECT_PCT", 0.0),
                         help="injection percentage during benchmarks (default 0)")
    p_bench.add_argument("--seed", type=_nonneg_int, default=_env_default("SEED", 1),
                         help="run seed (default 1)")
    p_bench.add_argument("--input-dist", choices=["uniform", "ascii"],
                         default=_env_default("INPUT_DIST", "ascii"),
                         help="plaintext byte distribution (default ascii)")
    p_bench.add_argument("--work-amp", type=_positive_int,
                         default=_env_default("WORK_AMP", 1),
                         help="encryption passes per block (default 1)")
    p_bench.add_argument("--key-hex", type=_key,
                         default=_env_default("KEY_HEX", DEFAULT_KEY_HEX),
                         help="AES-128 key as 32 hex digits")
    _add_out_dir_flag(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_kat = sub.add_parser("kat", help="cipher known-answer self-test")
    p_kat.set_defaults(func=cmd_kat)

    p_train = sub.add_parser("train", help="fit a forest and save it")
    p_train.add_argument("--from-csv", default=None,
                         help="per-block CSV with truth labels; omit to train on a fresh run")
    p_train.add_argument("--model-out", required=True, help="where to write the model file")
    _add_workload_flags(p_train)
    _add_forest_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_predict = sub.add_parser("predict", help="classify a per-block CSV with a saved forest")
    p_predict.add_argument("--model", required=True, help="model file written by train")
    p_predict.add_argument("--csv", required=True, help="per-block CSV to classify")
    p_predict.set_defaults(func=cmd_predict)

    for p in sub.choices.values():
        p.set_defaults(command_parser=p)
    return parser


def _build_run_config(args, cp: argparse.ArgumentParser) -> RunConfig:
    if args.delay_min_us > args.delay_max_us:
        cp.error("--delay-min-us must not exceed --delay-max-us")
    return RunConfig(
        n_blocks=args.blocks,
        inject_pct=args.inject_pct,
        workers=args.workers,
        seed=args.seed,
        mode=_parse_enum(Mode, args.mode, cp, "--mode"),
        delay_min_us=args.delay_min_us,
        delay_max_us=args.delay_max_us,
        input_dist=_parse_enum(InputDistribution, args.input_dist, cp, "--input-dist"),
        work_amplification=args.work_amp,
    )


def _print_report(report: DetectionReport) -> None:
    c = report.counts
    print(
        f"{report.detector}: tp={c.tp} fp={c.fp} fn={c.fn} tn={c.tn} "
        f"accuracy={report.accuracy:.6f} precision={report.precision:.6f} "
        f"recall={report.recall:.6f} f1={report.f1:.6f}"
    )


def cmd_run(args) -> int:
    cp = args.command_parser
    cfg = _build_run_config(args, cp)
    byte_source = _parse_enum(ByteSource, args.byte_source, cp, "--byte-source")
    hyper = ForestHyperparams(
        n_trees=args.trees,
        max_depth=args.max_depth,
        seed=args.seed,
        train_fraction=args.train_fraction,
    )
    hyper.validate()

    records = run_pipeline(cfg, args.key_hex)
    vectors = build_dataset(records, byte_source)
    split = split_train_test(vectors, hyper.train_fraction, cfg.seed)

    if args.threshold_fit == "train":
        fit_times = [records[i].time_us for i in split.train_indices]
    else:
        fit_times = [r.time_us for r in records]
    threshold_model = fit_threshold(fit_times)
    threshold_preds = classify_threshold(records, threshold_model)

    forest_model = fit_forest(split.train, hyper)
    forest_preds = predict_all(forest_model, vectors)

    truths = [vectors[i].label for i in split.test_indices]
    report_t = score([threshold_preds[i] for i in split.test_indices], truths, "threshold")
    report_f = score([forest_preds[i] for i in split.test_indices], truths, "forest")
    comparison = compare(report_t, report_f)

    blocks_path, summary_path = export_csv(
        records, [report_t, report_f], comparison, args.out_dir,
        predictions={"threshold": threshold_preds, "forest": forest_preds},
        cfg=cfg, byte_source=byte_source,
        threshold_fit=args.threshold_fit, threshold_us=threshold_model.threshold_us,
    )

    anomalous = sum(r.truth_label for r in records)
    print(f"run {run_id(cfg.seed, cfg.n_blocks, cfg.inject_pct)}: "
          f"{cfg.n_blocks} blocks ({anomalous} anomalous), mode={cfg.mode.value}, "
          f"workers={cfg.workers}, test size={len(truths)}")
    print(f"threshold_us={threshold_model.threshold_us:.3f} (fit={args.threshold_fit})")
    _print_report(report_t)
    _print_report(report_f)
    print(f"accuracy_gain={comparison.accuracy_gain:+.6f}")
    print(f"wrote {blocks_path}")
    print(f"wrote {summary_path}")
    return 0


def cmd_bench(args) -> int:
    cp = args.command_parser
    base = RunConfig(
        inject_pct=args.inject_pct,
        seed=args.seed,
        mode=Mode.REAL,
        input_dist=_parse_enum(InputDistribution, args.input_dist, cp, "--input-dist"),
        work_amplification=args.work_amp,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"bench_{time.strftime('%Y%m%d-%H%M%S')}.csv"
    results = sweep(args.block_counts, args.worker_counts, base, args.key_hex, csv_path)
    print(f"{'blocks':>8} {'workers':>7} {'mean_us':>12} {'blocks_per_s':>14} {'peak_mb':>9} {'wall_s':>9}")
    for r in results:
        if r.error is not None:
            print(f"{r.block_count:>8} {r.workers:>7} error: {r.error}")
            continue
        mem = "n/a" if r.peak_memory_mb is None else f"{r.peak_memory_mb:.1f}"
        print(f"{r.block_count:>8} {r.workers:>7} {r.mean_latency_us:>12.3f} "
              f"{r.throughput_bps:>14.3f} {mem:>9} {r.wall_time_s:>9.3f}")
    print(f"wrote {csv_path}")
    return 1 if any(r.error is not None for r in results) else 0


def cmd_kat(args) -> int:
    results = run_known_answer_suite()
    print(f"known-answer suite: {len(results)} vectors")
    all_ok = True
    for r in results:
        status = "ok" if r.ok else f"FAIL expected {r.expected} got {r.actual}"
        print(f"  {r.name}: {status}")
        all_ok = all_ok and r.ok
    print("result: pass" if all_ok else "result: FAIL")
    return 0 if all_ok else 1


def cmd_train(args) -> int:
    cp = args.command_parser
    hyper = ForestHyperparams(
        n_trees=args.trees,
        max_depth=args.max_depth,
        seed=args.seed,
        train_fraction=args.train_fraction,
    )
    hyper.validate()
    if args.from_csv is not None:
        rows = read_blocks_csv(args.from_csv)
        vectors, has_labels = rows_to_vectors(rows)
        if not has_labels:
            print("error: training input needs a truth_label column", file=sys.stderr)
            return 1
    else:
        cfg = _build_run_config(args, cp)
        byte_source = _parse_enum(ByteSource, args.byte_source, cp, "--byte-source")
        records = run_pipeline(cfg, args.key_hex)
        vectors = build_dataset(records, byte_source)
    model = fit_forest(vectors, hyper)
    save_model(model, args.model_out)
    report = score(predict_all(model, vectors), [v.label for v in vectors], "forest")
    print(f"trained {hyper.n_trees} trees on {len(vectors)} samples")
    _print_report(report)
    print(f"wrote {args.model_out}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    rows = read_blocks_csv(args.csv)
    vectors, has_labels = rows_to_vectors(rows)
    preds = predict_all(model, vectors)
    print("index,predicted")
    for row, pred in zip(rows, preds):
        print(f"{row.index},{'true' if pred else 'false'}")
    if has_labels:
        report = score(preds, [v.label for v in vectors], "forest")
        _print_report(report)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, PipelineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

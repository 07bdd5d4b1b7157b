"""Command-line pipeline: synth | ingest | sanitize | train | detect | eval.

Every stage is batch and re-runnable: identical inputs and seed produce
identical outputs. Reports are written as JSON plus rendered figures; the
eval stage adds a per-capture CSV and a plain-text table. Exit codes:
0 ok, 1 detection ran and alerts are present, 2 configuration error,
3 runtime error.
"""
from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from typing import Dict, List, Optional

from . import ingest, report, synthgen
from .config import ConfigError, RunConfig, load_config
from .detector import (
    ConnectionResult,
    DetectorError,
    Whitelist,
    WhitelistError,
    apply_whitelist,
    detect_connections,
    evaluate,
)
from .ioutil import write_json, write_jsonl
from .models import load_bundle, save_bundle
from .models.bundle import BundleError
from .sanitizer import SanitizeError, sanitize
from .training import TrainingError, train_bundle

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ALERTS = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tunneldetect",
        description="protocol-tunneling detection pipeline",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; defaults reproduce the reference setup")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads for parallel stages")
    common.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=argparse.ArgumentParser)

    def add(name, help_text):
        return sub.add_parser(name, help=help_text, parents=[common])

    p = add("synth", "generate a synthetic labeled corpus")
    p.add_argument("--out-dir", help="corpus directory (default from config paths.corpus)")
    p.add_argument("--mode", choices=("train", "eval", "both"), default="both")
    p.add_argument("--pollution", type=float, default=0.0, help="fraction of mislabeled filler packets")
    p.add_argument("--benign-scale", type=float, default=1.0)
    p.add_argument("--tunnel-flows", type=int, help="tunnel flows per inner kind")
    p.add_argument("--tunnel-pairs", type=int, help="query/response pairs per tunnel flow")
    p.add_argument("--tunnel-kinds", help="comma list among ssh,sftp,telnet")

    p = add("ingest", "extract dataset rows from capture files")
    p.add_argument("pcaps", nargs="+", help="capture files; <name>.labels.jsonl sidecars are picked up")
    p.add_argument("--out", help="dataset JSONL path (default from config paths.dataset)")

    p = add("sanitize", "clean and balance a dataset for training")
    p.add_argument("--data", required=True, help="ingested dataset JSONL")
    p.add_argument("--out-dir", help="output directory (default from config paths.out_dir)")
    p.add_argument("--no-balance", action="store_true", help="skip class balancing")

    p = add("train", "train the model bundle from a sanitized dataset")
    p.add_argument("--data", required=True, help="sanitized dataset JSONL")
    p.add_argument("--out-dir", help="output directory")

    p = add("detect", "judge connections in a dataset against a bundle")
    p.add_argument("--data", required=True, help="ingested dataset JSONL")
    p.add_argument("--bundle", required=True, help="trained model bundle")
    p.add_argument("--out-dir", help="output directory")
    p.add_argument("--whitelist", help="CIDR whitelist file (default from config)")

    p = add("eval", "run detection over a synthetic corpus and score it")
    p.add_argument("--corpus", required=True, help="directory produced by synth")
    p.add_argument("--bundle", required=True, help="trained model bundle")
    p.add_argument("--out-dir", help="output directory")
    p.add_argument("--whitelist", help="CIDR whitelist file (default from config)")
    return parser


def _error_json(exc: Exception) -> str:
    return json.dumps({"error": str(exc), "kind": type(exc).__name__})


def _out_dir(args, cfg: RunConfig, default: str) -> str:
    path = args.out_dir or cfg.paths.get("out_dir") or default
    os.makedirs(path, exist_ok=True)
    return path


def _load_whitelist(args, cfg: RunConfig) -> Optional[Whitelist]:
    path = getattr(args, "whitelist", None) or cfg.whitelist_path
    return Whitelist.load(path) if path else None


def cmd_synth(args, cfg: RunConfig) -> int:
    spec = synthgen.ScenarioSpec(
        seed=cfg.seed,
        out_dir=args.out_dir or cfg.paths.get("corpus") or "corpus",
        pollution=args.pollution,
        benign_scale=args.benign_scale,
        n_bytes=cfg.n_bytes,
    )
    if args.tunnel_flows is not None:
        spec.tunnel_flows_per_kind = args.tunnel_flows
    if args.tunnel_pairs is not None:
        spec.tunnel_pairs_per_flow = args.tunnel_pairs
    if args.tunnel_kinds:
        spec.tunnel_kinds = tuple(k.strip() for k in args.tunnel_kinds.split(",") if k.strip())
    manifest = synthgen.generate(spec, mode=args.mode)
    for name, stats in manifest["captures"].items():
        print(f"{name}: {stats['packets']} packets, {stats['connections']} connections")
    print(f"corpus written to {spec.out_dir}")
    return EXIT_OK


def _ingest_paths(paths: List[str], cfg: RunConfig):
    rows = []
    stats = {}
    for pcap in paths:
        sidecar = f"{os.path.splitext(pcap)[0]}.labels.jsonl"
        captured, cap_stats = ingest.ingest_capture(
            pcap,
            n_bytes=cfg.n_bytes,
            strip=cfg.strip,
            min_payload=cfg.min_payload,
            sidecar_path=sidecar if os.path.exists(sidecar) else None,
            split=cfg.split,
        )
        rows.extend(captured)
        stats[os.path.basename(pcap)] = {**cap_stats.as_dict(), "rows": len(captured)}
    return rows, stats


def cmd_ingest(args, cfg: RunConfig) -> int:
    out = args.out or cfg.paths.get("dataset") or "dataset.jsonl"
    rows, stats = _ingest_paths(args.pcaps, cfg)
    count = ingest.write_dataset(out, rows)
    write_json(f"{os.path.splitext(out)[0]}_report.json", {"captures": stats, "rows": count})
    print(f"{count} rows from {len(args.pcaps)} capture(s) -> {out}")
    return EXIT_OK


def cmd_sanitize(args, cfg: RunConfig) -> int:
    out_dir = _out_dir(args, cfg, "sanitized")
    rows = ingest.read_dataset(args.data)
    clean, san_report = sanitize(
        rows, cfg, seed=cfg.seed, threads=args.threads, balance=not args.no_balance
    )
    out = os.path.join(out_dir, "sanitized.jsonl")
    ingest.write_dataset(out, clean)
    write_json(os.path.join(out_dir, "sanitize_report.json"), san_report.to_json())
    figures = report.sanitize_figures(san_report, out_dir)
    print(
        f"{san_report.raw_rows} rows in, {san_report.final_rows} out "
        f"({san_report.unlabeled_discarded} unlabeled, "
        f"{sum(san_report.outliers_removed.values())} outliers, "
        f"{sum(san_report.purge_removed.values())} purged, "
        f"{san_report.synthetic_rows} synthetic)"
    )
    print(f"dataset -> {out}; figures: {', '.join(figures)}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    out_dir = _out_dir(args, cfg, "models")
    rows = ingest.read_dataset(args.data)
    bundle = train_bundle(rows, cfg, seed=cfg.seed, threads=args.threads)
    bundle_path = os.path.join(out_dir, "bundle.json")
    save_bundle(bundle, bundle_path)
    history = bundle.ann.history
    write_json(
        os.path.join(out_dir, "train_report.json"),
        {
            "rows": len(rows),
            "ann": {k: v for k, v in history.items() if k != "validation_curve"},
            "one_class": {
                name: {"nu": model.nu, "train_outlier_fraction": model.train_outlier_fraction}
                for name, model in sorted(bundle.one_class.items())
            },
        },
    )
    figures = report.train_figures(bundle, out_dir)
    print(
        f"bundle -> {bundle_path} "
        f"(val acc {history.get('validation_accuracy', 0.0):.4f}, "
        f"{int(history.get('epochs_run', 0))} epochs)"
    )
    print(f"figures: {', '.join(figures)}")
    return EXIT_OK


def _write_detection(
    results: List[ConnectionResult], out_dir: str, suppressed: int, prefix: str = "detect"
) -> Dict[str, int]:
    alerts = [r.alert for r in results if r.alert is not None]
    handoffs = [r.handoff for r in results if r.handoff is not None]
    write_jsonl(os.path.join(out_dir, "alerts.jsonl"), (a.to_json() for a in alerts))
    write_jsonl(os.path.join(out_dir, "handoffs.jsonl"), (h.to_json() for h in handoffs))
    summary = {
        "connections": len(results),
        "alerts": len(alerts),
        "suppressed": suppressed,
        "handoffs": len(handoffs),
        "benign": sum(1 for r in results if r.verdict == "benign"),
    }
    write_json(os.path.join(out_dir, f"{prefix}_report.json"), summary)
    report.detect_figures(results, out_dir, prefix=prefix)
    return summary


def cmd_detect(args, cfg: RunConfig) -> int:
    out_dir = _out_dir(args, cfg, "detection")
    bundle = load_bundle(args.bundle, expected_n_bytes=cfg.n_bytes)
    whitelist = _load_whitelist(args, cfg)
    rows = ingest.read_dataset(args.data)
    results = detect_connections(rows, bundle, cfg)
    suppressed = apply_whitelist(results, whitelist) if whitelist else 0
    summary = _write_detection(results, out_dir, suppressed)
    print(
        f"{summary['connections']} connections: {summary['alerts']} alerts "
        f"({suppressed} suppressed), {summary['handoffs']} handoffs, "
        f"{summary['benign']} benign"
    )
    return EXIT_ALERTS if summary["alerts"] - suppressed > 0 else EXIT_OK


def _corpus_truth(corpus: str, captures: List[str]) -> Dict[str, str]:
    truth: Dict[str, str] = {}
    for pcap in captures:
        base = os.path.splitext(pcap)[0]
        conns = f"{base}.conns.jsonl"
        if not os.path.exists(conns):
            raise DetectorError(f"missing connection ground truth: {conns}")
        with open(conns, "r", encoding="utf-8") as fh:
            for line in fh:
                doc = json.loads(line)
                cid = f"{os.path.basename(pcap)}|{doc['key']}"
                truth[cid] = "tunnel" if doc.get("tunnel") else "benign"
    return truth


def _eval_table(rep, truth_by_capture: Dict[str, str]) -> str:
    lines = []
    lines.append(f"{'capture':28s} {'connections':>11s} {'detected':>9s} {'rate':>8s}")
    tunnel_caps = [c for c in sorted(rep.per_capture) if truth_by_capture.get(c) == "tunnel"]
    benign_caps = [c for c in sorted(rep.per_capture) if c not in tunnel_caps]
    for cap in tunnel_caps:
        row = rep.per_capture[cap]
        total = row["tp"] + row["fn"]
        rate = row["tp"] / total if total else 0.0
        lines.append(f"{cap:28s} {total:11d} {row['tp']:9d} {100 * rate:7.1f}%")
    lines.append("")
    lines.append(f"{'capture':28s} {'connections':>11s} {'alarms':>9s} {'rate':>8s}")
    for cap in benign_caps:
        row = rep.per_capture[cap]
        total = row["fp"] + row["tn"]
        rate = row["fp"] / total if total else 0.0
        lines.append(f"{cap:28s} {total:11d} {row['fp']:9d} {100 * rate:7.1f}%")
    lines.append("")
    lines.append(
        f"TPR {100 * rep.tpr:.1f}%  FPR {100 * rep.fpr:.1f}%  "
        f"accuracy {100 * rep.accuracy:.1f}%  F1 {100 * rep.f1:.1f}%"
    )
    return "\n".join(lines)


def cmd_eval(args, cfg: RunConfig) -> int:
    out_dir = _out_dir(args, cfg, "evaluation")
    bundle = load_bundle(args.bundle, expected_n_bytes=cfg.n_bytes)
    whitelist = _load_whitelist(args, cfg)
    # Every capture in the corpus except the training one is scored.
    captures = sorted(
        p for p in glob.glob(os.path.join(args.corpus, "*.pcap"))
        if not os.path.basename(p).startswith("benign_train")
    )
    if not captures:
        raise DetectorError(f"no evaluation captures under {args.corpus}")
    truth = _corpus_truth(args.corpus, captures)
    rows, _ = _ingest_paths(captures, cfg)
    results = detect_connections(rows, bundle, cfg)
    suppressed = apply_whitelist(results, whitelist) if whitelist else 0
    summary = _write_detection(results, out_dir, suppressed, prefix="eval_detect")
    rep = evaluate(results, truth)
    write_json(os.path.join(out_dir, "eval_report.json"), rep.to_json())
    report.eval_csv(rep, os.path.join(out_dir, "eval_per_capture.csv"))
    report.eval_figures(rep, out_dir)

    truth_by_capture: Dict[str, str] = {}
    for r in results:
        if truth[r.connection_id()] == "tunnel":
            truth_by_capture[r.capture] = "tunnel"
        else:
            truth_by_capture.setdefault(r.capture, "benign")
    table = _eval_table(rep, truth_by_capture)
    table_path = os.path.join(out_dir, "eval_table.txt")
    with open(f"{table_path}.tmp", "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    os.replace(f"{table_path}.tmp", table_path)
    print(table)
    return EXIT_ALERTS if summary["alerts"] - suppressed > 0 else EXIT_OK


_COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "sanitize": cmd_sanitize,
    "train": cmd_train,
    "detect": cmd_detect,
    "eval": cmd_eval,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
    except ConfigError as exc:
        print(_error_json(exc), file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args, cfg)
    except (ConfigError, BundleError, WhitelistError) as exc:
        print(_error_json(exc), file=sys.stderr)
        return EXIT_CONFIG
    except (SanitizeError, TrainingError, DetectorError, OSError, ValueError) as exc:
        print(_error_json(exc), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

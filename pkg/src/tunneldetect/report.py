"""Figure and CSV rendering for the pipeline stages.

Each stage writes its figures next to its JSON output: sanitization gets
class-count and removal charts, training gets the validation curve and the
one-class rejection fractions, detection gets per-capture verdict bars, and
evaluation gets the rate chart plus a per-capture CSV.
"""
from __future__ import annotations

import csv
import os
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .detector import ConnectionResult, EvalReport  # noqa: E402
from .models import ModelBundle  # noqa: E402
from .sanitizer import SanitizationReport  # noqa: E402


def _finish(fig, path) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.tight_layout()
    tmp = f"{path}.tmp.png"
    fig.savefig(tmp, dpi=120)
    plt.close(fig)
    os.replace(tmp, path)
    return str(path)


def sanitize_figures(report: SanitizationReport, out_dir, prefix: str = "sanitize") -> List[str]:
    paths = []
    protos = sorted(set(report.before_balance) | set(report.after_balance))
    if protos:
        fig, ax = plt.subplots(figsize=(8, 4))
        xs = range(len(protos))
        before = [report.before_balance.get(p, 0) for p in protos]
        after = [report.after_balance.get(p, 0) for p in protos]
        ax.bar([x - 0.2 for x in xs], before, width=0.4, label="before balancing")
        ax.bar([x + 0.2 for x in xs], after, width=0.4, label="after balancing")
        ax.set_xticks(list(xs))
        ax.set_xticklabels(protos, rotation=45, ha="right")
        ax.set_ylabel("rows")
        ax.set_title("Class counts before and after balancing")
        ax.legend()
        paths.append(_finish(fig, os.path.join(out_dir, f"{prefix}_class_counts.png")))

    removed = sorted(set(report.outliers_removed) | set(report.purge_removed))
    if removed:
        fig, ax = plt.subplots(figsize=(8, 4))
        xs = range(len(removed))
        outliers = [report.outliers_removed.get(p, 0) for p in removed]
        purged = [report.purge_removed.get(p, 0) for p in removed]
        ax.bar(list(xs), outliers, width=0.6, label="entropy outliers")
        ax.bar(list(xs), purged, width=0.6, bottom=outliers, label="compressed/encrypted purge")
        ax.set_xticks(list(xs))
        ax.set_xticklabels(removed, rotation=45, ha="right")
        ax.set_ylabel("rows removed")
        ax.set_title("Removals per protocol")
        ax.legend()
        paths.append(_finish(fig, os.path.join(out_dir, f"{prefix}_removals.png")))
    return paths


def train_figures(bundle: ModelBundle, out_dir, prefix: str = "train") -> List[str]:
    paths = []
    history = bundle.ann.history if bundle.ann is not None else {}
    curve = history.get("validation_curve") or []
    if curve:
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(range(1, len(curve) + 1), curve, marker=".")
        ax.set_xlabel("epoch")
        ax.set_ylabel("validation accuracy")
        ax.set_ylim(min(curve) - 0.01, 1.001)
        ax.set_title("Classifier validation accuracy")
        paths.append(_finish(fig, os.path.join(out_dir, f"{prefix}_validation.png")))

    if bundle.one_class:
        protos = sorted(bundle.one_class)
        fig, ax = plt.subplots(figsize=(8, 4))
        fractions = [bundle.one_class[p].train_outlier_fraction for p in protos]
        targets = [bundle.one_class[p].nu for p in protos]
        xs = range(len(protos))
        ax.bar(list(xs), fractions, width=0.5, label="training outlier fraction")
        ax.plot(list(xs), targets, "k_", markersize=18, label="nu target")
        ax.set_xticks(list(xs))
        ax.set_xticklabels(protos, rotation=45, ha="right")
        ax.set_title("One-class rejection per protocol")
        ax.legend()
        paths.append(_finish(fig, os.path.join(out_dir, f"{prefix}_one_class.png")))
    return paths


def detect_figures(results: Sequence[ConnectionResult], out_dir, prefix: str = "detect") -> List[str]:
    if not results:
        return []
    captures = sorted({r.capture for r in results})
    verdicts = ("benign", "alert", "handoff")
    counts = {v: [0] * len(captures) for v in verdicts}
    pos = {c: i for i, c in enumerate(captures)}
    for r in results:
        counts[r.verdict][pos[r.capture]] += 1
    fig, ax = plt.subplots(figsize=(max(7, len(captures) * 0.9), 4))
    bottom = [0] * len(captures)
    for v in verdicts:
        ax.bar(range(len(captures)), counts[v], width=0.6, bottom=bottom, label=v)
        bottom = [b + c for b, c in zip(bottom, counts[v])]
    ax.set_xticks(range(len(captures)))
    ax.set_xticklabels(captures, rotation=45, ha="right")
    ax.set_ylabel("connections")
    ax.set_title("Verdicts per capture")
    ax.legend()
    return [_finish(fig, os.path.join(out_dir, f"{prefix}_verdicts.png"))]


def eval_figures(report: EvalReport, out_dir, prefix: str = "eval") -> List[str]:
    paths = []
    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ("TPR", "FPR", "accuracy", "F1")
    values = (report.tpr, report.fpr, report.accuracy, report.f1)
    ax.bar(bars, values, width=0.5)
    for i, v in enumerate(values):
        ax.text(i, v + 0.01, f"{v:.3f}", ha="center")
    ax.set_ylim(0, 1.1)
    ax.set_title("Detection rates")
    paths.append(_finish(fig, os.path.join(out_dir, f"{prefix}_rates.png")))

    if report.per_capture:
        captures = sorted(report.per_capture)
        fig, ax = plt.subplots(figsize=(max(7, len(captures) * 0.9), 4))
        xs = range(len(captures))
        slots = ("tp", "fp", "tn", "fn")
        bottom = [0] * len(captures)
        for slot in slots:
            vals = [report.per_capture[c].get(slot, 0) for c in captures]
            ax.bar(list(xs), vals, width=0.6, bottom=bottom, label=slot.upper())
            bottom = [b + v for b, v in zip(bottom, vals)]
        ax.set_xticks(list(xs))
        ax.set_xticklabels(captures, rotation=45, ha="right")
        ax.set_ylabel("connections")
        ax.set_title("Outcomes per capture")
        ax.legend()
        paths.append(_finish(fig, os.path.join(out_dir, f"{prefix}_per_capture.png")))
    return paths


def eval_csv(report: EvalReport, path) -> str:
    """Per-capture metric table; one row per capture plus a totals row."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["capture", "connections", "tp", "fp", "tn", "fn", "tpr", "fpr"])
        for capture in sorted(report.per_capture):
            row = report.per_capture[capture]
            tp, fp, tn, fn = row["tp"], row["fp"], row["tn"], row["fn"]
            tpr = tp / (tp + fn) if tp + fn else ""
            fpr = fp / (fp + tn) if fp + tn else ""
            writer.writerow(
                [capture, row["connections"], tp, fp, tn, fn,
                 f"{tpr:.4f}" if tpr != "" else "", f"{fpr:.4f}" if fpr != "" else ""]
            )
        writer.writerow(
            ["TOTAL", report.tp + report.fp + report.tn + report.fn,
             report.tp, report.fp, report.tn, report.fn,
             f"{report.tpr:.4f}", f"{report.fpr:.4f}"]
        )
    os.replace(tmp, path)
    return str(path)

"""Input sanitization: fix light labels, drop entropy outliers, purge
compressed/encrypted payloads out of cleartext classes, balance the rest.

The stages run in a fixed order, once: label resolution, per-protocol
one-class outlier filtering gated by the entropy threshold t, training of
the compression/encryption detector, the cleartext purge, then SMOTE
balancing of the classifier classes. Counts are conserved at every stage
and reported.
"""
from __future__ import annotations

import copy
import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import synthgen
from .config import KIND_CLEARTEXT, KIND_COMPRESSED, KIND_ENCRYPTED, RunConfig
from .features import SequentialFeatures, featurize_batch
from .ingest import DatasetRow, rows_to_bit_matrix, rows_to_feature_matrix
from .models import MarginClassifier, OneClassModel, smote_bits, train_margin, train_one_class
from .types import (
    ANN_CLASSES,
    CLEARTEXT_PROTOCOLS,
    ENCRYPTED_PROTOCOLS,
    ProtocolLabel,
    parse_label,
)

log = logging.getLogger(__name__)

SHANNON_INDEX = SequentialFeatures.FIELDS.index("shannon")


class SanitizeError(ValueError):
    pass


def distinct_monitored(raw_labels: Sequence[str]) -> set:
    """Monitored protocols named by the raw labels, aliases collapsed."""
    out = set()
    for name in raw_labels:
        label = parse_label(name)
        if label is not None and label is not ProtocolLabel.UNLABELED:
            out.add(label)
    return out


def resolve_labels(raw_labels: Sequence[str]) -> ProtocolLabel:
    """One monitored protocol wins; none or a conflict resolves to Unlabeled."""
    resolved = distinct_monitored(raw_labels)
    if len(resolved) == 1:
        return next(iter(resolved))
    return ProtocolLabel.UNLABELED


def filter_outliers(
    rows: Sequence[DatasetRow], model: OneClassModel, t: float
) -> Tuple[List[DatasetRow], List[DatasetRow]]:
    """Drop rows the model flags as outliers AND whose entropy exceeds t."""
    if not rows:
        return [], []
    features = rows_to_feature_matrix(rows)
    drop = model.is_outlier(features) & (features[:, SHANNON_INDEX] > t)
    kept = [row for row, d in zip(rows, drop) if not d]
    removed = [row for row, d in zip(rows, drop) if d]
    return kept, removed


def purge_cleartext(
    rows: Sequence[DatasetRow], detector: MarginClassifier
) -> Tuple[List[DatasetRow], List[DatasetRow]]:
    """Remove cleartext-labeled rows the detector calls compressed/encrypted.

    Rows of encrypted protocols pass through untouched; they are supposed
    to look encrypted.
    """
    cleartext_names = {p.value for p in CLEARTEXT_PROTOCOLS}
    judged = [row for row in rows if row.labels and row.labels[0] in cleartext_names]
    passthrough = [row for row in rows if not (row.labels and row.labels[0] in cleartext_names)]
    if not judged:
        return list(rows), []
    verdicts = detector.predict(rows_to_feature_matrix(judged))
    kept = [row for row, v in zip(judged, verdicts) if v == KIND_CLEARTEXT]
    removed = [row for row, v in zip(judged, verdicts) if v != KIND_CLEARTEXT]
    return passthrough + kept, removed


def comp_enc_training_set(
    rows: Sequence[DatasetRow], cfg: RunConfig, seed: int
) -> Tuple[np.ndarray, List[str]]:
    """Feature matrix and kind labels for the compression/encryption detector.

    Cleartext rows are sampled from the dataset, encrypted rows from the
    encrypted-protocol traffic, and the compressed class comes entirely from
    deflate-stream exemplars (real captures carry no compressed ground truth).
    Extra pseudorandom windows pad the encrypted class so it does not hinge
    on protocol quirks.
    """
    counts = cfg.comp_enc_sourcing
    rng = np.random.default_rng(seed)
    cleartext_names = {p.value for p in CLEARTEXT_PROTOCOLS}
    encrypted_names = {p.value for p in ENCRYPTED_PROTOCOLS}
    clear = [r for r in rows if r.labels and r.labels[0] in cleartext_names]
    encrypted = [r for r in rows if r.labels and r.labels[0] in encrypted_names]
    if not clear:
        raise SanitizeError("no cleartext rows available to train the comp/enc detector")

    def sample(pool: List[DatasetRow], n: int) -> List[DatasetRow]:
        if len(pool) <= n:
            return list(pool)
        idx = rng.choice(len(pool), size=n, replace=False)
        return [pool[i] for i in sorted(idx)]

    parts: List[np.ndarray] = []
    labels: List[str] = []
    picked_clear = sample(clear, counts["cleartext_rows"])
    parts.append(rows_to_feature_matrix(picked_clear))
    labels.extend([KIND_CLEARTEXT] * len(picked_clear))
    if encrypted:
        picked_enc = sample(encrypted, counts["encrypted_rows"])
        parts.append(rows_to_feature_matrix(picked_enc))
        labels.extend([KIND_ENCRYPTED] * len(picked_enc))
    windows, kinds = synthgen.compenc_exemplars(
        n_bytes=cfg.n_bytes,
        n_compressed=counts["compressed_exemplars"],
        n_encrypted=counts["encrypted_exemplars"],
        seed=seed,
    )
    parts.append(featurize_batch(windows))
    labels.extend(kinds)
    return np.vstack(parts), labels


def train_comp_enc(rows: Sequence[DatasetRow], cfg: RunConfig, seed: int) -> MarginClassifier:
    x, y = comp_enc_training_set(rows, cfg, seed)
    return train_margin(x, y, gamma=float(cfg.comp_enc["gamma"]), c=float(cfg.comp_enc["c"]))


@dataclass
class SanitizationReport:
    """Row accounting for one sanitization pass; every row ends up in
    exactly one of: discarded, removed by a stage, or the final set."""

    raw_rows: int = 0
    unlabeled_discarded: int = 0
    multi_label_conflicts: int = 0
    labeled_rows: int = 0
    skipped_protocols: List[str] = field(default_factory=list)
    outliers_removed: Dict[str, int] = field(default_factory=dict)
    purge_removed: Dict[str, int] = field(default_factory=dict)
    before_balance: Dict[str, int] = field(default_factory=dict)
    after_balance: Dict[str, int] = field(default_factory=dict)
    synthetic_rows: int = 0
    final_rows: int = 0

    def rows_before_balance(self) -> int:
        return (
            self.labeled_rows
            - sum(self.outliers_removed.values())
            - sum(self.purge_removed.values())
        )

    def conserved(self) -> bool:
        if self.raw_rows != self.labeled_rows + self.unlabeled_discarded:
            return False
        return self.final_rows == self.rows_before_balance() + self.synthetic_rows

    def to_json(self) -> dict:
        return {
            "raw_rows": self.raw_rows,
            "unlabeled_discarded": self.unlabeled_discarded,
            "multi_label_conflicts": self.multi_label_conflicts,
            "labeled_rows": self.labeled_rows,
            "skipped_protocols": list(self.skipped_protocols),
            "outliers_removed": dict(self.outliers_removed),
            "purge_removed": dict(self.purge_removed),
            "before_balance": dict(self.before_balance),
            "after_balance": dict(self.after_balance),
            "synthetic_rows": self.synthetic_rows,
            "final_rows": self.final_rows,
            "conserved": self.conserved(),
        }


def _one_class_pass(
    proto: str, members: List[DatasetRow], params: Dict[str, float]
) -> Tuple[str, List[DatasetRow], List[DatasetRow]]:
    features = rows_to_feature_matrix(members)
    model = train_one_class(features, gamma=float(params["gamma"]), nu=float(params["nu"]))
    kept, removed = filter_outliers(members, model, float(params["t"]))
    return proto, kept, removed


def _balance(
    rows: List[DatasetRow], cfg: RunConfig, seed: int, report: SanitizationReport
) -> List[DatasetRow]:
    """SMOTE the classifier classes up to the majority count; other rows pass."""
    ann_names = [p.value for p in ANN_CLASSES]
    ann_rows = [r for r in rows if r.labels[0] in ann_names]
    rest = [r for r in rows if r.labels[0] not in ann_names]
    for row in rows:
        report.before_balance[row.labels[0]] = report.before_balance.get(row.labels[0], 0) + 1
    if not ann_rows:
        report.after_balance = dict(report.before_balance)
        return rows
    bits = rows_to_bit_matrix(ann_rows)
    labels = [r.labels[0] for r in ann_rows]
    bits_aug, labels_aug, synth_mask = smote_bits(bits, labels, seed=seed)
    synth_bits = bits_aug[synth_mask]
    synth_labels = labels_aug[synth_mask]
    out = list(ann_rows)
    if synth_bits.shape[0]:
        packed = np.packbits(synth_bits, axis=1)
        features = featurize_batch(packed)
        next_index = max((r.index for r in rows), default=0) + 1
        for i in range(packed.shape[0]):
            out.append(
                DatasetRow(
                    index=next_index + i,
                    capture="synthetic",
                    key="udp|0.0.0.0|0|0.0.0.0|0",
                    chunk=0,
                    timestamp=0.0,
                    data=packed[i].tobytes(),
                    labels=[str(synth_labels[i])],
                    features=features[i],
                )
            )
    report.synthetic_rows = int(synth_mask.sum())
    for row in out + rest:
        report.after_balance[row.labels[0]] = report.after_balance.get(row.labels[0], 0) + 1
    return out + rest


def sanitize(
    rows: Sequence[DatasetRow],
    cfg: Optional[RunConfig] = None,
    *,
    seed: Optional[int] = None,
    threads: int = 1,
    balance: bool = True,
) -> Tuple[List[DatasetRow], SanitizationReport]:
    """Full sanitization pass; returns the training-ready rows and the report."""
    cfg = cfg or RunConfig()
    seed = cfg.seed if seed is None else seed
    report = SanitizationReport(raw_rows=len(rows))

    labeled: List[DatasetRow] = []
    for row in rows:
        monitored = distinct_monitored(row.labels)
        if len(monitored) > 1:
            report.multi_label_conflicts += 1
        label = resolve_labels(row.labels)
        if label is ProtocolLabel.UNLABELED:
            report.unlabeled_discarded += 1
            continue
        if row.features is None:
            raise SanitizeError(f"row {row.index} has no features; re-run ingest")
        labeled.append(dataclasses.replace(row, labels=[label.value]))
    report.labeled_rows = len(labeled)
    if report.multi_label_conflicts:
        log.warning("%d rows carried conflicting protocol labels", report.multi_label_conflicts)

    by_proto: Dict[str, List[DatasetRow]] = {}
    for row in labeled:
        by_proto.setdefault(row.labels[0], []).append(row)
    missing = sorted(p for p in by_proto if p not in cfg.one_class)
    if missing:
        raise SanitizeError(
            "protocols present in the data but missing one-class hyperparameters: "
            + ", ".join(missing)
        )
    report.skipped_protocols = sorted(p for p in cfg.one_class if p not in by_proto)

    jobs = sorted(by_proto.items())
    survivors: List[DatasetRow] = []
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(lambda kv: _one_class_pass(kv[0], kv[1], cfg.one_class[kv[0]]), jobs)
            )
    else:
        results = [_one_class_pass(proto, members, cfg.one_class[proto]) for proto, members in jobs]
    for proto, kept, removed in results:
        report.outliers_removed[proto] = len(removed)
        survivors.extend(kept)

    detector = train_comp_enc(survivors, cfg, seed)
    purged_kept, purged_removed = purge_cleartext(survivors, detector)
    for row in purged_removed:
        report.purge_removed[row.labels[0]] = report.purge_removed.get(row.labels[0], 0) + 1

    if balance:
        final = _balance(purged_kept, cfg, seed, report)
    else:
        final = purged_kept
        for row in final:
            report.before_balance[row.labels[0]] = report.before_balance.get(row.labels[0], 0) + 1
        report.after_balance = dict(report.before_balance)
    report.final_rows = len(final)
    assert report.conserved(), "sanitization lost track of rows"
    return final, report

"""Model training orchestration: sanitized dataset in, serializable bundle out.

Trains the per-protocol one-class models, the compression/encryption
detector (same sourcing rule as sanitization), and the neural classifier
over the bit windows of the six classifier protocols.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence

from .config import RunConfig
from .ingest import DatasetRow, rows_to_bit_matrix, rows_to_feature_matrix
from .models import ModelBundle, train_ann, train_one_class
from .sanitizer import train_comp_enc


class TrainingError(ValueError):
    pass


def train_bundle(
    rows: Sequence[DatasetRow],
    cfg: Optional[RunConfig] = None,
    *,
    seed: Optional[int] = None,
    threads: int = 1,
) -> ModelBundle:
    cfg = cfg or RunConfig()
    seed = cfg.seed if seed is None else seed
    if not rows:
        raise TrainingError("empty training dataset")
    missing_features = [r.index for r in rows if r.features is None]
    if missing_features:
        raise TrainingError(
            f"rows without features (first few indices: {missing_features[:5]})"
        )

    by_proto: Dict[str, List[DatasetRow]] = {}
    for row in rows:
        if not row.labels:
            raise TrainingError(f"row {row.index} has no label; sanitize the dataset first")
        by_proto.setdefault(row.labels[0], []).append(row)
    missing = sorted(p for p in by_proto if p not in cfg.one_class)
    if missing:
        raise TrainingError(
            "protocols present in the data but missing one-class hyperparameters: "
            + ", ".join(missing)
        )

    bundle = ModelBundle(config=cfg.snapshot())

    def fit_one(proto: str):
        params = cfg.one_class[proto]
        features = rows_to_feature_matrix(by_proto[proto])
        return proto, train_one_class(
            features, gamma=float(params["gamma"]), nu=float(params["nu"])
        )

    protos = sorted(by_proto)
    if threads > 1 and len(protos) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fitted = list(pool.map(fit_one, protos))
    else:
        fitted = [fit_one(p) for p in protos]
    bundle.one_class = dict(fitted)

    bundle.comp_enc = train_comp_enc(rows, cfg, seed)

    ann_rows = [r for r in rows if r.labels[0] in cfg.ann_classes]
    present = sorted({r.labels[0] for r in ann_rows})
    if len(present) < 2:
        raise TrainingError(
            f"need at least two classifier protocols in the data, got {present}"
        )
    bits = rows_to_bit_matrix(ann_rows).astype(float)
    labels = [r.labels[0] for r in ann_rows]
    params = cfg.ann
    bundle.ann = train_ann(
        bits,
        labels,
        classes=[c for c in cfg.ann_classes if c in present],
        hidden=tuple(int(w) for w in params["hidden"]),
        epochs=int(params["epochs"]),
        batch_size=int(params["batch_size"]),
        learning_rate=float(params["learning_rate"]),
        momentum=float(params["momentum"]),
        patience=int(params["patience"]),
        validation_fraction=float(params["validation_fraction"]),
        weight_decay=float(params["weight_decay"]),
        seed=seed,
    )
    return bundle

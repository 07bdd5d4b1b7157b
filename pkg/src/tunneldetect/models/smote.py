"""Synthetic minority oversampling on real-valued vectors.

Each synthetic sample is x + lambda * (neighbor - x) for a same-class
neighbor among the k nearest and lambda uniform in [0, 1], so it lies on
the segment between two existing samples of that class. `smote_bits`
wraps the same construction for 0/1 bit vectors, re-binarizing at 0.5.
"""
from __future__ import annotations

import warnings
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np


def _class_targets(labels: np.ndarray, target) -> Dict[str, int]:
    values, counts = np.unique(labels, return_counts=True)
    current = dict(zip(values.tolist(), counts.tolist()))
    if target is None:
        goal = max(current.values())
        return {c: goal for c in current}
    if isinstance(target, int):
        return {c: target for c in current}
    return {c: int(target.get(c, current[c])) for c in current}


def smote(
    x: np.ndarray,
    labels: Sequence[str],
    k: int = 5,
    target: Union[None, int, Dict[str, int]] = None,
    seed: int = 0,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Oversample every class up to the target count.

    Returns (x_augmented, labels_augmented, synthetic_mask); original rows
    come first in their input order, synthetic rows follow grouped by class.
    Classes already at or above target are left untouched (never dropped).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    labels = np.asarray([str(l) for l in labels])
    if x.shape[0] != labels.size:
        raise ValueError("sample/label count mismatch")
    if k < 1:
        raise ValueError("k must be >= 1")
    targets = _class_targets(labels, target)

    rng = np.random.default_rng(seed)
    synth_rows = []
    synth_labels = []
    for cls in sorted(targets):
        members = np.nonzero(labels == cls)[0]
        deficit = targets[cls] - members.size
        if deficit <= 0:
            continue
        if members.size == 1:
            warnings.warn(
                f"class {cls!r} has a single sample; duplicating it {deficit} times"
            )
            synth_rows.extend([x[members[0]].copy() for _ in range(deficit)])
            synth_labels.extend([cls] * deficit)
            continue
        pts = x[members]
        d2 = (
            np.sum(pts * pts, axis=1)[:, None]
            + np.sum(pts * pts, axis=1)[None, :]
            - 2.0 * (pts @ pts.T)
        )
        np.fill_diagonal(d2, np.inf)
        k_eff = min(k, members.size - 1)
        neighbor_ids = np.argsort(d2, axis=1, kind="stable")[:, :k_eff]
        for s in range(deficit):
            base = s % members.size
            nb = neighbor_ids[base, rng.integers(k_eff)]
            lam = rng.random()
            synth_rows.append(pts[base] + lam * (pts[nb] - pts[base]))
            synth_labels.append(cls)

    if not synth_rows:
        return x.copy(), labels.copy(), np.zeros(x.shape[0], dtype=bool)
    x_aug = np.vstack([x, np.asarray(synth_rows)])
    labels_aug = np.concatenate([labels, np.asarray(synth_labels)])
    mask = np.zeros(x_aug.shape[0], dtype=bool)
    mask[x.shape[0] :] = True
    return x_aug, labels_aug, mask


def smote_bits(
    bits: np.ndarray,
    labels: Sequence[str],
    k: int = 5,
    target: Union[None, int, Dict[str, int]] = None,
    seed: int = 0,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SMOTE over bit vectors: interpolate in real space, re-binarize at 0.5."""
    bits = np.atleast_2d(np.asarray(bits))
    if not np.isin(bits, (0, 1)).all():
        raise ValueError("bit matrix must contain only 0 and 1")
    x_aug, labels_aug, mask = smote(bits.astype(np.float64), labels, k, target, seed)
    out = (x_aug >= 0.5).astype(np.uint8)
    return out, labels_aug, mask

"""Single-document JSON persistence for the trained model set.

Numeric arrays are embedded as base64 of their raw little-endian bytes, so
a save/load round trip reproduces decision values exactly. The document
carries a format version and the configuration snapshot it was trained
under; loading refuses unsupported versions, and attaching to a pipeline
with a different payload width is refused up front.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..ioutil import atomic_write_text
from .ann import NeuralClassifier
from .svm import MarginClassifier, OneClassModel, _BinaryMachine

FORMAT_VERSION = 1


class BundleError(ValueError):
    pass


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    return {
        "dtype": a.dtype.str,
        "shape": list(a.shape),
        "b64": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["b64"])
    return np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).copy()


@dataclass
class ModelBundle:
    config: dict
    one_class: Dict[str, OneClassModel] = field(default_factory=dict)
    comp_enc: Optional[MarginClassifier] = None
    ann: Optional[NeuralClassifier] = None
    format_version: int = FORMAT_VERSION

    @property
    def n_bytes(self) -> int:
        return int(self.config["n_bytes"])


def _bundle_to_doc(bundle: ModelBundle) -> dict:
    doc = {
        "format_version": bundle.format_version,
        "config": bundle.config,
        "one_class": {},
        "comp_enc": None,
        "ann": None,
    }
    for name, model in sorted(bundle.one_class.items()):
        doc["one_class"][name] = {
            "gamma": model.gamma,
            "nu": model.nu,
            "rho": model.rho,
            "support_vectors": _encode_array(model.support_vectors),
            "coefficients": _encode_array(model.coefficients),
            "train_outlier_fraction": model.train_outlier_fraction,
        }
    if bundle.comp_enc is not None:
        doc["comp_enc"] = {
            "gamma": bundle.comp_enc.gamma,
            "c": bundle.comp_enc.c,
            "classes": list(bundle.comp_enc.classes),
            "machines": [
                {
                    "support_vectors": _encode_array(m.support_vectors),
                    "dual_coef": _encode_array(m.dual_coef),
                    "intercept": m.intercept,
                }
                for m in bundle.comp_enc.machines
            ],
        }
    if bundle.ann is not None:
        doc["ann"] = {
            "classes": list(bundle.ann.classes),
            "weights": [_encode_array(w) for w in bundle.ann.weights],
            "biases": [_encode_array(b) for b in bundle.ann.biases],
            "history": {
                k: [float(e) for e in v] if isinstance(v, (list, tuple)) else float(v)
                for k, v in sorted(bundle.ann.history.items())
            },
        }
    return doc


def save_bundle(bundle: ModelBundle, path) -> None:
    doc = _bundle_to_doc(bundle)
    atomic_write_text(path, json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def load_bundle(path, expected_n_bytes: Optional[int] = None) -> ModelBundle:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise BundleError(
            f"unsupported bundle format_version {version!r}; this build reads {FORMAT_VERSION}"
        )
    config = doc.get("config", {})
    if expected_n_bytes is not None and int(config.get("n_bytes", -1)) != int(expected_n_bytes):
        raise BundleError(
            f"bundle was trained with n_bytes={config.get('n_bytes')}, "
            f"pipeline is configured for n_bytes={expected_n_bytes}"
        )
    bundle = ModelBundle(config=config, format_version=version)
    for name, m in doc.get("one_class", {}).items():
        bundle.one_class[name] = OneClassModel(
            gamma=float(m["gamma"]),
            nu=float(m["nu"]),
            rho=float(m["rho"]),
            support_vectors=_decode_array(m["support_vectors"]),
            coefficients=_decode_array(m["coefficients"]),
            train_outlier_fraction=float(m.get("train_outlier_fraction", 0.0)),
        )
    if doc.get("comp_enc"):
        ce = doc["comp_enc"]
        clf = MarginClassifier(gamma=float(ce["gamma"]), c=float(ce["c"]), classes=list(ce["classes"]))
        for m in ce["machines"]:
            clf.machines.append(
                _BinaryMachine(
                    support_vectors=_decode_array(m["support_vectors"]),
                    dual_coef=_decode_array(m["dual_coef"]),
                    intercept=float(m["intercept"]),
                )
            )
        bundle.comp_enc = clf
    if doc.get("ann"):
        ann = doc["ann"]
        bundle.ann = NeuralClassifier(
            classes=list(ann["classes"]),
            weights=[_decode_array(w) for w in ann["weights"]],
            biases=[_decode_array(b) for b in ann["biases"]],
            history={
                k: [float(e) for e in v] if isinstance(v, list) else float(v)
                for k, v in ann.get("history", {}).items()
            },
        )
    return bundle

"""Saved model bundles must round-trip decisions exactly."""
import json

import numpy as np
import pytest

from tunneldetect.models.ann import train_ann
from tunneldetect.models.bundle import BundleError, ModelBundle, load_bundle, save_bundle
from tunneldetect.models.svm import train_margin, train_one_class


def _tiny_bundle(n_bytes=8):
    rng = np.random.default_rng(0)
    width = n_bytes * 8
    bits = rng.integers(0, 2, size=(90, width)).astype(np.float64)
    labels = np.array(["a"] * 30 + ["b"] * 30 + ["c"] * 30)
    bits[labels == "a", :4] = 1.0
    bits[labels == "b", :4] = 0.0
    bits[labels == "c", 4:8] = 1.0

    one_class = {
        "a": train_one_class(bits[labels == "a"], gamma=0.1, nu=0.2),
        "b": train_one_class(bits[labels == "b"], gamma=0.2, nu=0.1),
    }
    comp_enc = train_margin(rng.normal(size=(60, 9)), np.array(["x", "y"] * 30), gamma=0.5, c=10.0)
    ann = train_ann(bits, labels, classes=("a", "b", "c"), hidden=(16, 8), epochs=15, seed=1)
    config = {"n_bytes": n_bytes, "gamma": 0.1}
    return ModelBundle(config=config, one_class=one_class, comp_enc=comp_enc, ann=ann)


class TestRoundTrip:
    def test_decisions_identical_after_reload(self, tmp_path):
        bundle = _tiny_bundle()
        path = tmp_path / "model.json"
        save_bundle(bundle, path)
        loaded = load_bundle(path)

        rng = np.random.default_rng(5)
        probe_bits = rng.integers(0, 2, size=(40, 64)).astype(np.float64)
        probe_feat = rng.normal(size=(40, 9))

        for name, model in bundle.one_class.items():
            np.testing.assert_array_equal(
                model.decision(probe_bits), loaded.one_class[name].decision(probe_bits)
            )
        np.testing.assert_array_equal(
            bundle.comp_enc.decision_matrix(probe_feat),
            loaded.comp_enc.decision_matrix(probe_feat),
        )
        np.testing.assert_array_equal(
            bundle.ann.forward(probe_bits), loaded.ann.forward(probe_bits)
        )
        assert loaded.config == bundle.config
        assert loaded.ann.classes == bundle.ann.classes

    def test_save_is_deterministic(self, tmp_path):
        bundle = _tiny_bundle()
        p1, p2 = tmp_path / "m1.json", tmp_path / "m2.json"
        save_bundle(bundle, p1)
        save_bundle(bundle, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestGuards:
    def test_rejects_unknown_format_version(self, tmp_path):
        bundle = _tiny_bundle()
        path = tmp_path / "model.json"
        save_bundle(bundle, path)
        doc = json.loads(path.read_text())
        doc["format_version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(BundleError, match="format_version"):
            load_bundle(path)

    def test_rejects_wrong_payload_width(self, tmp_path):
        bundle = _tiny_bundle(n_bytes=8)
        path = tmp_path / "model.json"
        save_bundle(bundle, path)
        with pytest.raises(BundleError, match="n_bytes"):
            load_bundle(path, expected_n_bytes=52)

    def test_n_bytes_property(self):
        assert _tiny_bundle(n_bytes=8).n_bytes == 8

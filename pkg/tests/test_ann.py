"""Neural classifier: softmax normalization, gradients, determinism."""
import numpy as np
import pytest

from tunneldetect.models.ann import NeuralClassifier, softmax, train_ann


def small_net(seed: int = 0, widths=(12, 10, 7, 4)) -> NeuralClassifier:
    rng = np.random.default_rng(seed)
    weights = [
        rng.normal(0, 0.5, size=(widths[i], widths[i + 1])) for i in range(len(widths) - 1)
    ]
    biases = [rng.normal(0, 0.1, size=widths[i + 1]) for i in range(len(widths) - 1)]
    classes = [f"c{i}" for i in range(widths[-1])]
    return NeuralClassifier(classes=classes, weights=weights, biases=biases)


def bit_patterns(seed: int, n_per_class: int = 120, width: int = 64):
    """Three synthetic 'protocols': distinct fixed prefixes plus noise bits."""
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    prefixes = {
        "p0": [1, 1, 1, 1, 0, 0, 0, 0] * 2,
        "p1": [0, 0, 0, 0, 1, 1, 1, 1] * 2,
        "p2": [1, 0, 1, 0, 1, 0, 1, 0] * 2,
    }
    for name, prefix in prefixes.items():
        for _ in range(n_per_class):
            noise = rng.integers(0, 2, width - len(prefix))
            rows.append(np.concatenate([prefix, noise]))
            labels.append(name)
    return np.array(rows, dtype=np.float64), np.array(labels)


class TestForward:
    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        z = rng.normal(0, 100, size=(200, 6))
        z[0] = [1e4, -1e4, 0, 0, 0, 0]  # extreme logits must not overflow
        p = softmax(z)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)
        assert (p >= 0).all()

    def test_forward_rows_sum_to_one(self):
        net = small_net()
        x = np.random.default_rng(2).integers(0, 2, size=(50, 12)).astype(float)
        np.testing.assert_allclose(net.forward(x).sum(axis=1), 1.0, atol=1e-6)

    def test_tie_breaks_to_lowest_class_index(self):
        net = small_net()
        for w in net.weights:
            w[:] = 0.0
        for b in net.biases:
            b[:] = 0.0
        label, conf = net.classify(np.ones(12))
        assert label == net.classes[0]
        assert conf == pytest.approx(1.0 / len(net.classes))

    def test_width_mismatch_is_error(self):
        net = small_net()
        with pytest.raises(ValueError):
            net.forward(np.ones((3, 13)))


class TestGradients:
    def test_analytic_matches_finite_differences(self):
        net = small_net(seed=3)
        rng = np.random.default_rng(4)
        x = rng.integers(0, 2, size=(16, 12)).astype(float)
        y = np.eye(4)[rng.integers(0, 4, size=16)]
        _, grads_w, grads_b = net.loss_and_gradients(x, y)

        h = 1e-6
        worst = 0.0
        for params, grads in ((net.weights, grads_w), (net.biases, grads_b)):
            for layer, (p, g) in enumerate(zip(params, grads)):
                flat = p.reshape(-1)
                gflat = g.reshape(-1)
                probe = rng.permutation(flat.size)[: min(120, flat.size)]
                for idx in probe:
                    original = flat[idx]
                    flat[idx] = original + h
                    lp, _, _ = net.loss_and_gradients(x, y)
                    flat[idx] = original - h
                    lm, _, _ = net.loss_and_gradients(x, y)
                    flat[idx] = original
                    numeric = (lp - lm) / (2 * h)
                    denom = max(abs(numeric) + abs(gflat[idx]), 1e-8)
                    worst = max(worst, abs(numeric - gflat[idx]) / denom)
        assert worst < 1e-4


class TestTraining:
    def test_learns_separable_patterns(self):
        x, labels = bit_patterns(seed=5)
        net = train_ann(
            x, labels, classes=["p0", "p1", "p2"], hidden=(32, 16), epochs=40, seed=1
        )
        assert net.history["validation_accuracy"] >= 0.95

    def test_identical_seed_identical_weights(self):
        x, labels = bit_patterns(seed=6, n_per_class=60)
        a = train_ann(x, labels, classes=["p0", "p1", "p2"], hidden=(16,), epochs=8, seed=9)
        b = train_ann(x, labels, classes=["p0", "p1", "p2"], hidden=(16,), epochs=8, seed=9)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)
        for ba, bb in zip(a.biases, b.biases):
            np.testing.assert_array_equal(ba, bb)

    def test_unknown_label_is_error(self):
        x, labels = bit_patterns(seed=7, n_per_class=10)
        labels[0] = "mystery"
        with pytest.raises(ValueError):
            train_ann(x, labels, classes=["p0", "p1", "p2"], hidden=(8,), epochs=1)

    def test_confidence_is_max_probability(self):
        x, labels = bit_patterns(seed=8, n_per_class=40)
        net = train_ann(x, labels, classes=["p0", "p1", "p2"], hidden=(16,), epochs=10, seed=2)
        probs = net.forward(x[:20])
        _, conf = net.predict(x[:20])
        np.testing.assert_allclose(conf, probs.max(axis=1))

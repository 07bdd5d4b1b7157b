"""SMO solver checks: nu-property, sklearn cross-check, determinism."""
import numpy as np
import pytest
from sklearn.svm import SVC, OneClassSVM

from tunneldetect.models.svm import train_margin, train_one_class

# (gamma, nu) pairs used by the per-protocol filters plus extremes.
PAIRS = [
    (0.7, 0.03),
    (0.03, 0.1),
    (0.08, 0.07),
    (0.06, 0.08),
    (0.04, 0.05),
    (0.7, 0.05),
    (0.0001, 0.0028),
]


def protocol_like_features(seed: int, n: int = 400) -> np.ndarray:
    rng = np.random.default_rng(seed)
    center = rng.uniform(0.2, 0.8, size=9)
    return np.clip(rng.normal(center, 0.12, size=(n, 9)), 0.0, 1.0)


class TestOneClass:
    @pytest.mark.parametrize("gamma,nu", PAIRS)
    def test_nu_bounds_training_outliers(self, gamma, nu):
        x = protocol_like_features(seed=int(gamma * 10000) + int(nu * 10000))
        model = train_one_class(x, gamma=gamma, nu=nu)
        assert model.train_outlier_fraction <= nu + 0.05

    @pytest.mark.parametrize("gamma,nu", PAIRS[:5])
    def test_decisions_match_reference_solver(self, gamma, nu):
        x = protocol_like_features(seed=7)
        model = train_one_class(x, gamma=gamma, nu=nu)
        reference = OneClassSVM(nu=nu, gamma=gamma, tol=1e-7).fit(x)
        np.testing.assert_allclose(
            model.decision(x), reference.decision_function(x), atol=2e-3
        )

    def test_outlier_rule_is_decision_sign(self):
        x = protocol_like_features(seed=9)
        model = train_one_class(x, gamma=0.5, nu=0.1)
        probe = protocol_like_features(seed=10, n=50)
        np.testing.assert_array_equal(model.is_outlier(probe), model.decision(probe) < 0)

    def test_repeated_single_point_is_inlier(self):
        x = np.tile(np.linspace(0.1, 0.9, 9), (30, 1))
        model = train_one_class(x, gamma=0.7, nu=0.1)
        assert not model.is_outlier(x[:1])[0]
        far = np.ones((1, 9)) * 50.0
        assert model.is_outlier(far)[0]

    def test_far_point_is_outlier(self):
        x = protocol_like_features(seed=3)
        model = train_one_class(x, gamma=0.7, nu=0.05)
        assert model.is_outlier(np.full((1, 9), 25.0))[0]

    def test_training_order_does_not_change_predictions(self):
        x = protocol_like_features(seed=5)
        probe = protocol_like_features(seed=6, n=100)
        a = train_one_class(x, gamma=0.3, nu=0.08)
        b = train_one_class(x[::-1].copy(), gamma=0.3, nu=0.08)
        np.testing.assert_allclose(a.decision(probe), b.decision(probe), atol=1e-3)

    def test_deterministic(self):
        x = protocol_like_features(seed=5)
        a = train_one_class(x, gamma=0.3, nu=0.08)
        b = train_one_class(x, gamma=0.3, nu=0.08)
        np.testing.assert_array_equal(a.coefficients, b.coefficients)
        assert a.rho == b.rho

    def test_invalid_parameters(self):
        x = protocol_like_features(seed=1, n=20)
        with pytest.raises(ValueError):
            train_one_class(x, gamma=0.5, nu=0.0)
        with pytest.raises(ValueError):
            train_one_class(x, gamma=-1.0, nu=0.1)


def blobs(seed: int = 0, n: int = 120):
    rng = np.random.default_rng(seed)
    a = np.clip(rng.normal(0.2, 0.05, size=(n, 9)), 0, 1)
    b = np.clip(rng.normal(0.8, 0.05, size=(n, 9)), 0, 1)
    c = np.clip(rng.normal(0.5, 0.05, size=(n, 9)), 0, 1)
    c[:, 0] = np.clip(rng.normal(0.95, 0.03, n), 0, 1)
    x = np.vstack([a, b, c])
    y = np.array(["alpha"] * n + ["beta"] * n + ["gamma"] * n)
    return x, y


class TestMargin:
    def test_separates_blobs(self):
        x, y = blobs()
        clf = train_margin(x, y, gamma=0.5, c=100.0)
        assert (clf.predict(x) == y).mean() >= 0.99

    def test_matches_reference_binary_decisions(self):
        x, y = blobs(seed=2)
        clf = train_margin(x, y, gamma=0.01, c=100.0)
        scores = clf.decision_matrix(x)
        for ci, cname in enumerate(clf.classes):
            yb = np.where(y == cname, 1, -1)
            ref = SVC(kernel="rbf", gamma=0.01, C=100.0, tol=1e-7).fit(x, yb)
            np.testing.assert_allclose(scores[:, ci], ref.decision_function(x), atol=2e-3)

    def test_single_class_is_an_error(self):
        x = protocol_like_features(seed=4, n=40)
        with pytest.raises(ValueError):
            train_margin(x, ["only"] * 40, gamma=0.1, c=10.0)

    def test_deterministic(self):
        x, y = blobs(seed=3)
        a = train_margin(x, y, gamma=0.2, c=50.0)
        b = train_margin(x, y, gamma=0.2, c=50.0)
        probe = protocol_like_features(seed=11, n=60)
        np.testing.assert_array_equal(a.decision_matrix(probe), b.decision_matrix(probe))

    def test_classes_sorted_and_argmax_tie_lowest(self):
        x, y = blobs(seed=6)
        clf = train_margin(x, y, gamma=0.2, c=10.0)
        assert clf.classes == sorted(clf.classes)

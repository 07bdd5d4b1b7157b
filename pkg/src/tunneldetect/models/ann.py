"""Feed-forward softmax classifier trained with mini-batch momentum SGD.

Input is the raw bit expansion of a payload extract (values 0/1), output a
probability over the six trained protocol classes. Internally bits are mapped
to -1/+1 before the first layer: that puts every input on the same hypercube
shell, so a window with many set bits cannot reach larger logits than a
sparse one just by activating more input weights. Deterministic given the
seed: weight init, batch shuffling, and early stopping all derive from one
generator, so identical data and seed reproduce identical weights.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

log = logging.getLogger(__name__)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def center_bits(x: np.ndarray) -> np.ndarray:
    """Map 0/1 bit vectors to the -1/+1 hypercube (constant input norm)."""
    return 2.0 * np.asarray(x, dtype=np.float64) - 1.0


@dataclass
class NeuralClassifier:
    classes: List[str]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    history: Dict[str, float] = field(default_factory=dict)

    @property
    def input_width(self) -> int:
        return self.weights[0].shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Probability matrix (rows sum to 1)."""
        h = np.asarray(x, dtype=np.float64)
        if h.ndim == 1:
            h = h[None, :]
        if h.shape[1] != self.input_width:
            raise ValueError(
                f"input width {h.shape[1]} does not match model width {self.input_width}"
            )
        h = center_bits(h)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = relu(h @ w + b)
        return softmax(h @ self.weights[-1] + self.biases[-1])

    def predict(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(class labels, confidence = max probability); ties pick lowest index."""
        probs = self.forward(x)
        idx = np.argmax(probs, axis=1)
        labels = np.array([self.classes[i] for i in idx])
        return labels, probs[np.arange(len(idx)), idx]

    def classify(self, bits: np.ndarray) -> Tuple[str, float]:
        labels, conf = self.predict(np.asarray(bits)[None, :])
        return str(labels[0]), float(conf[0])

    def loss_and_gradients(self, x: np.ndarray, y_onehot: np.ndarray):
        """Mean cross-entropy and analytic gradients for every parameter."""
        x = center_bits(x)
        y = np.asarray(y_onehot, dtype=np.float64)
        activations = [x]
        pre = []
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = h @ w + b
            pre.append(z)
            h = relu(z)
            activations.append(h)
        logits = h @ self.weights[-1] + self.biases[-1]
        probs = softmax(logits)
        n = x.shape[0]
        loss = float(-np.sum(y * np.log(np.maximum(probs, 1e-300))) / n)

        grads_w: List[np.ndarray] = [None] * len(self.weights)
        grads_b: List[np.ndarray] = [None] * len(self.biases)
        delta = (probs - y) / n
        for layer in range(len(self.weights) - 1, -1, -1):
            grads_w[layer] = activations[layer].T @ delta
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (pre[layer - 1] > 0)
        return loss, grads_w, grads_b

    def accuracy(self, x: np.ndarray, labels: Sequence[str]) -> float:
        predicted, _ = self.predict(x)
        return float(np.mean(predicted == np.asarray([str(l) for l in labels])))


def _init_network(widths: List[int], classes: List[str], rng: np.random.Generator) -> NeuralClassifier:
    weights = []
    biases = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NeuralClassifier(classes=list(classes), weights=weights, biases=biases)


def train_ann(
    x: np.ndarray,
    labels: Sequence[str],
    classes: Sequence[str],
    hidden: Sequence[int] = (256, 128, 64),
    epochs: int = 120,
    batch_size: int = 128,
    learning_rate: float = 0.05,
    momentum: float = 0.9,
    patience: int = 10,
    validation_fraction: float = 0.15,
    weight_decay: float = 0.0,
    seed: int = 0,
) -> NeuralClassifier:
    """Train on bit vectors; early-stops on persistent validation regression.

    The checkpoint kept is the latest epoch at peak validation accuracy, not
    the first: accuracy saturates long before the output probabilities do,
    and downstream confidence thresholding needs large logit margins, so
    training continues while accuracy holds and stops only after `patience`
    consecutive epochs below the peak. Weight decay defaults to off for the
    same reason: even a small penalty caps the margins just below where the
    confidence threshold sits.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray([str(l) for l in labels])
    classes = [str(c) for c in classes]
    unknown = sorted(set(labels.tolist()) - set(classes))
    if unknown:
        raise ValueError(f"labels outside the class list: {unknown}")
    if x.ndim != 2 or x.shape[0] != labels.size:
        raise ValueError("x must be (n_samples, n_bits) matching labels")

    class_index = {c: i for i, c in enumerate(classes)}
    y_idx = np.array([class_index[l] for l in labels])
    onehot = np.eye(len(classes))[y_idx]

    rng = np.random.default_rng(seed)
    net = _init_network([x.shape[1], *hidden, len(classes)], classes, rng)

    # stratified validation split
    val_mask = np.zeros(x.shape[0], dtype=bool)
    if validation_fraction > 0.0:
        for c in range(len(classes)):
            members = np.nonzero(y_idx == c)[0]
            if members.size == 0:
                continue
            take = int(round(members.size * validation_fraction))
            take = min(max(take, 1 if members.size > 1 else 0), members.size - 1)
            if take > 0:
                val_mask[rng.permutation(members)[:take]] = True
    train_idx = np.nonzero(~val_mask)[0]
    val_idx = np.nonzero(val_mask)[0]

    vel_w = [np.zeros_like(w) for w in net.weights]
    vel_b = [np.zeros_like(b) for b in net.biases]
    best_acc = -1.0
    best_params = None
    stale = 0
    val_curve: List[float] = []
    for epoch in range(epochs):
        order = rng.permutation(train_idx)
        for start in range(0, order.size, batch_size):
            batch = order[start : start + batch_size]
            _, grads_w, grads_b = net.loss_and_gradients(x[batch], onehot[batch])
            for layer in range(len(net.weights)):
                grad_w = grads_w[layer] + weight_decay * net.weights[layer]
                vel_w[layer] = momentum * vel_w[layer] - learning_rate * grad_w
                vel_b[layer] = momentum * vel_b[layer] - learning_rate * grads_b[layer]
                net.weights[layer] += vel_w[layer]
                net.biases[layer] += vel_b[layer]
        if val_idx.size:
            val_acc = net.accuracy(x[val_idx], labels[val_idx])
            val_curve.append(val_acc)
            if val_acc >= best_acc:
                best_acc = val_acc
                best_params = (
                    [w.copy() for w in net.weights],
                    [b.copy() for b in net.biases],
                )
                stale = 0
            else:
                stale += 1
                if stale >= patience:
                    log.info("early stop at epoch %d (best val acc %.4f)", epoch + 1, best_acc)
                    break

    if best_params is not None:
        net.weights, net.biases = best_params
    net.history = {
        "train_accuracy": net.accuracy(x[train_idx], labels[train_idx]) if train_idx.size else 0.0,
        "validation_accuracy": net.accuracy(x[val_idx], labels[val_idx]) if val_idx.size else 0.0,
        "epochs_run": float(epoch + 1 if epochs > 0 else 0),
        "validation_curve": val_curve,
    }
    return net

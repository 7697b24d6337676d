"""Binary classifier head trained on frozen encoder features.

Mirrors the published fine-tuning recipe: the encoder stays frozen and only
this final layer moves, trained with minibatch SGD (batch 10) for 100
epochs, L2 weight decay 1e-3, the learning rate a per-request field, and
the best checkpoint selected by recall on the training set after every
optimizer step. The untrained starting point is not a checkpoint candidate;
the first evaluated step wins recall ties, making training fully
deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Hyperparams:
    epochs: int = 100
    weight_decay: float = 1e-3
    train_batch: int = 10
    learning_rate: float = 2e-2
    best_metric: str = "recall"
    seed: int = 42


@dataclass
class TrainedHead:
    weights: np.ndarray
    bias: float

    def probabilities(self, features: np.ndarray) -> np.ndarray:
        logits = features @ self.weights + self.bias
        return 1.0 / (1.0 + np.exp(-np.clip(logits, -60.0, 60.0)))

    def predict(self, features: np.ndarray) -> list[int]:
        return [1 if p >= 0.5 else 0 for p in self.probabilities(features)]


def _recall(head: TrainedHead, features: np.ndarray, labels: np.ndarray) -> float:
    positives = labels == 1
    if not positives.any():
        return 1.0
    predicted = np.asarray(head.predict(features))
    return float((predicted[positives] == 1).mean())


def train_head(
    features: np.ndarray, labels: np.ndarray, hp: Hyperparams
) -> TrainedHead:
    """Fit a fresh head; returns the recall-best checkpoint."""
    if hp.best_metric != "recall":
        raise ValueError(f"unsupported best metric {hp.best_metric!r}")
    n, dim = features.shape
    rng = np.random.default_rng(hp.seed)
    weights = np.zeros(dim)
    bias = 0.0
    best: tuple[float, TrainedHead] | None = None

    for _ in range(hp.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hp.train_batch):
            batch = order[start : start + hp.train_batch]
            x, y = features[batch], labels[batch]
            logits = x @ weights + bias
            probs = 1.0 / (1.0 + np.exp(-np.clip(logits, -60.0, 60.0)))
            error = probs - y
            grad_w = x.T @ error / len(batch) + hp.weight_decay * weights
            grad_b = float(error.mean())
            weights = weights - hp.learning_rate * grad_w
            bias = bias - hp.learning_rate * grad_b

            checkpoint = TrainedHead(weights=weights.copy(), bias=bias)
            recall = _recall(checkpoint, features, labels)
            if best is None or recall > best[0]:
                best = (recall, checkpoint)

    assert best is not None  # epochs >= 1 and n >= 1 guarantee a step
    return best[1]

"""Forecast and identification metrics."""

from __future__ import annotations

import numpy as np

__all__ = ["NmseAccumulator", "confusion_metrics"]


class NmseAccumulator:
    """Running per-component normalized squared forecast error.

    Each component keeps cumulative squared error and cumulative squared
    signal over its observed steps; the score is the mean error/signal ratio
    across components that have received any signal energy.
    """

    def __init__(self, n_components: int):
        self.num = np.zeros(n_components)
        self.den = np.zeros(n_components)

    def update(self, y_obs: np.ndarray, y_pred: np.ndarray, indices: np.ndarray) -> None:
        np.add.at(self.num, indices, (y_obs - y_pred) ** 2)
        np.add.at(self.den, indices, y_obs ** 2)

    def value(self) -> float:
        live = self.den > 0
        if not live.any():
            return float("nan")
        return float(np.mean(self.num[live] / self.den[live]))

    def per_component(self) -> np.ndarray:
        out = np.full(self.den.shape, np.nan)
        live = self.den > 0
        out[live] = self.num[live] / self.den[live]
        return out


def confusion_metrics(predicted: np.ndarray, truth: np.ndarray) -> dict:
    """Binary classification scores of an activation vector against truth."""
    predicted = np.asarray(predicted).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if predicted.shape != truth.shape:
        raise ValueError("activation vectors must have equal length")
    tp = int(np.sum(predicted & truth))
    fp = int(np.sum(predicted & ~truth))
    tn = int(np.sum(~predicted & ~truth))
    fn = int(np.sum(~predicted & truth))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    total = tp + fp + tn + fn
    return {
        "tp": tp, "fp": fp, "tn": tn, "fn": fn,
        "accuracy": (tp + tn) / total if total else 0.0,
        "precision": precision,
        "recall": recall,
        "f1": f1,
    }

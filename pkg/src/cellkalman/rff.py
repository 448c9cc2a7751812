"""Random Fourier feature approximation of the pointwise observation nonlinearity.

A Gaussian kernel with bandwidth ``sigma_k`` is approximated by ``M``
frequencies drawn from its spectral density N(0, 1/sigma_k^2); the feature
map is the usual stacked sin/cos vector of length 2M scaled by 1/sqrt(M).
One frequency set is shared across all state components, and the learned
coefficient matrix applies row ``n`` to state component ``n`` only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch

__all__ = ["RffMap", "feature_map", "f_hat", "f_hat_derivative"]


@dataclass(frozen=True)
class RffMap:
    """Frozen frequency sample defining the feature geometry."""

    frequencies: np.ndarray
    kernel_bandwidth: float
    seed: int

    @property
    def m(self) -> int:
        return self.frequencies.shape[0]

    @classmethod
    def draw(cls, m: int, kernel_bandwidth: float, seed: int) -> "RffMap":
        """Sample ``m`` frequencies from the Gaussian spectral density."""
        if kernel_bandwidth <= 0:
            raise ValueError("kernel bandwidth must be positive")
        rng = np.random.default_rng(seed)
        freqs = rng.normal(0.0, 1.0 / kernel_bandwidth, size=m)
        return cls(frequencies=freqs, kernel_bandwidth=float(kernel_bandwidth), seed=int(seed))


def feature_map(rff: RffMap, x_scalar: float) -> np.ndarray:
    """Length-2M feature vector [sin(v x)..., cos(v x)...] / sqrt(M)."""
    vx = rff.frequencies * float(x_scalar)
    return np.concatenate([np.sin(vx), np.cos(vx)]) / np.sqrt(rff.m)


def feature_matrix(rff: RffMap, x: np.ndarray) -> np.ndarray:
    """Stacked feature vectors for each entry of ``x``; shape (len(x), 2M)."""
    vx = np.outer(np.asarray(x, dtype=float), rff.frequencies)
    return np.hstack([np.sin(vx), np.cos(vx)]) / np.sqrt(rff.m)


def feature_derivative_matrix(rff: RffMap, x: np.ndarray) -> np.ndarray:
    """Entrywise derivative of :func:`feature_matrix` with respect to x."""
    vx = np.outer(np.asarray(x, dtype=float), rff.frequencies)
    v = rff.frequencies[np.newaxis, :]
    return np.hstack([v * np.cos(vx), -v * np.sin(vx)]) / np.sqrt(rff.m)


def _check_gamma(rff: RffMap, gamma: np.ndarray, x: np.ndarray) -> None:
    if gamma.ndim != 2 or gamma.shape != (x.shape[0], 2 * rff.m):
        raise ShapeMismatch(
            f"gamma has shape {gamma.shape}, expected {(x.shape[0], 2 * rff.m)}"
        )


def f_hat(rff: RffMap, gamma: np.ndarray, x) -> np.ndarray:
    """Pointwise nonlinearity estimate: component n is gamma[n] . z(x[n])."""
    x = np.asarray(x, dtype=float).reshape(-1)
    _check_gamma(rff, gamma, x)
    return np.einsum("nm,nm->n", gamma, feature_matrix(rff, x))


def f_hat_derivative(rff: RffMap, gamma: np.ndarray, x) -> np.ndarray:
    """Diagonal of the Jacobian of :func:`f_hat` (pointwise derivatives)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    _check_gamma(rff, gamma, x)
    return np.einsum("nm,nm->n", gamma, feature_derivative_matrix(rff, x))

"""Derived operators and spectral tools.

Builds the Hodge Laplacians, block Laplacian and Dirac operator from a
complex, constructs the per-order Fourier bases with the gradient / curl /
harmonic partition of the edge spectrum, and provides the Hodge
decomposition, the topological Fourier transform and the spectral form of
the process covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .topology import CellComplex, masked_b2

__all__ = [
    "TopoOperators",
    "SpectralBasis",
    "build_operators",
    "spectral_basis",
    "hodge_decompose",
    "tft",
    "inverse_tft",
    "spectral_process_cov",
    "diagnostics",
]


@dataclass
class TopoOperators:
    """Integer-valued operator algebra of a masked complex.

    All identities (``dirac @ dirac == l_block``, ``b1 @ b2 == 0``,
    ``l1_lower @ l1_upper == 0``) hold exactly in int64 arithmetic.
    """

    b1: np.ndarray
    b2: np.ndarray        # masked: B2* diag(e)
    l0: np.ndarray
    l1_lower: np.ndarray
    l1_upper: np.ndarray
    l2: np.ndarray
    l_block: np.ndarray
    dirac: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n0(self) -> int:
        return self.l0.shape[0]

    @property
    def n1(self) -> int:
        return self.l1_lower.shape[0]

    @property
    def n2(self) -> int:
        return self.l2.shape[0]

    @property
    def n_total(self) -> int:
        return self.n0 + self.n1 + self.n2

    @property
    def l1(self) -> np.ndarray:
        return self.l1_lower + self.l1_upper

    @property
    def block_slices(self) -> tuple:
        """(node, edge, face) index ranges within the stacked state vector."""
        n0, n1, n2 = self.n0, self.n1, self.n2
        return (slice(0, n0), slice(n0, n0 + n1), slice(n0 + n1, n0 + n1 + n2))


def build_operators(cc: CellComplex) -> TopoOperators:
    """Laplacians, block Laplacian and Dirac operator from the masked B2."""
    b1 = cc.b1
    b2 = masked_b2(cc)
    l0 = b1 @ b1.T
    l1_lower = b1.T @ b1
    l1_upper = b2 @ b2.T
    l2 = b2.T @ b2

    n0, n1, n2 = cc.n_nodes, cc.n_edges, cc.n_faces_pool
    n = n0 + n1 + n2
    l_block = np.zeros((n, n), dtype=np.int64)
    l_block[:n0, :n0] = l0
    l_block[n0:n0 + n1, n0:n0 + n1] = l1_lower + l1_upper
    l_block[n0 + n1:, n0 + n1:] = l2

    dirac = np.zeros((n, n), dtype=np.int64)
    dirac[:n0, n0:n0 + n1] = b1
    dirac[n0:n0 + n1, :n0] = b1.T
    dirac[n0:n0 + n1, n0 + n1:] = b2
    dirac[n0 + n1:, n0:n0 + n1] = b2.T

    return TopoOperators(
        b1=b1, b2=b2, l0=l0, l1_lower=l1_lower, l1_upper=l1_upper, l2=l2,
        l_block=l_block, dirac=dirac,
    )


@dataclass
class SpectralBasis:
    """Per-order eigenbases with the edge-space band partition.

    ``u1`` diagonalizes L1 and its columns are exactly banded: gradient
    vectors lie in im(B1^T), curl vectors in im(B2), harmonic vectors in
    ker(L1).  Eigenvalues are sorted ascending per order.
    """

    u0: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    lam0: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray
    q_g: np.ndarray   # edge-block indices of the gradient band
    q_c: np.ndarray   # curl band
    q_h: np.ndarray   # harmonic band
    r_g: int
    r_c: int

    @property
    def lam_full(self) -> np.ndarray:
        return np.concatenate([self.lam0, self.lam1, self.lam2])

    def u_full(self) -> np.ndarray:
        """Block-diagonal Fourier basis over the stacked state space."""
        n0, n1, n2 = self.u0.shape[0], self.u1.shape[0], self.u2.shape[0]
        n = n0 + n1 + n2
        u = np.zeros((n, n))
        u[:n0, :n0] = self.u0
        u[n0:n0 + n1, n0:n0 + n1] = self.u1
        u[n0 + n1:, n0 + n1:] = self.u2
        return u


def _zero_tol(lam: np.ndarray, factor: float) -> float:
    top = float(lam[-1]) if lam.size else 0.0
    return factor * max(top, 1.0)


def spectral_basis(ops: TopoOperators, *, zero_tol_factor: float = 1e-8) -> SpectralBasis:
    """Eigendecompose each order and band-partition the edge spectrum.

    Gradient and curl bands come from the partial Laplacians: nonzero-mode
    eigenvectors of ``l1_lower`` span im(B1^T) and those of ``l1_upper``
    span im(B2); because the two partial Laplacians annihilate each other,
    both families are eigenvectors of the full L1.  The harmonic band is the
    kernel of L1, re-orthogonalized against the other two bands so the
    combined basis is orthonormal to machine precision.
    """
    lam0, u0 = np.linalg.eigh(ops.l0.astype(float))
    lam2, u2 = np.linalg.eigh(ops.l2.astype(float))

    low, upp = ops.l1_lower.astype(float), ops.l1_upper.astype(float)
    lam_low, vec_low = np.linalg.eigh(low)
    lam_upp, vec_upp = np.linalg.eigh(upp)
    lam_full, vec_full = np.linalg.eigh(low + upp)

    tol_l = _zero_tol(lam_low, zero_tol_factor)
    tol_u = _zero_tol(lam_upp, zero_tol_factor)
    tol_f = _zero_tol(lam_full, zero_tol_factor)

    grad_vecs = vec_low[:, lam_low > tol_l]
    grad_lams = lam_low[lam_low > tol_l]
    curl_vecs = vec_upp[:, lam_upp > tol_u]
    curl_lams = lam_upp[lam_upp > tol_u]
    harm_vecs = vec_full[:, lam_full <= tol_f]

    n1 = ops.n1
    r_g, r_c = grad_vecs.shape[1], curl_vecs.shape[1]
    if r_g + r_c + harm_vecs.shape[1] != n1:
        raise np.linalg.LinAlgError("inconsistent edge-space band dimensions")

    if harm_vecs.shape[1]:
        # two Gram-Schmidt passes against the nonzero bands, then renormalize
        span = np.hstack([grad_vecs, curl_vecs])
        for _ in range(2):
            harm_vecs = harm_vecs - span @ (span.T @ harm_vecs)
        harm_vecs, _ = np.linalg.qr(harm_vecs)

    vecs = np.hstack([grad_vecs, curl_vecs, harm_vecs])
    lams = np.concatenate([grad_lams, curl_lams, np.zeros(harm_vecs.shape[1])])
    band = np.concatenate([
        np.zeros(r_g, dtype=int),
        np.ones(r_c, dtype=int),
        np.full(harm_vecs.shape[1], 2, dtype=int),
    ])
    order = np.lexsort((band, lams))
    u1 = vecs[:, order]
    lam1 = lams[order]
    band = band[order]

    return SpectralBasis(
        u0=u0, u1=u1, u2=u2, lam0=lam0, lam1=lam1, lam2=lam2,
        q_g=np.flatnonzero(band == 0),
        q_c=np.flatnonzero(band == 1),
        q_h=np.flatnonzero(band == 2),
        r_g=r_g, r_c=r_c,
    )


def hodge_decompose(ops: TopoOperators, s1) -> tuple:
    """Split an edge signal into (gradient, curl, harmonic) components.

    The gradient part is the least-squares projection onto im(B1^T), the
    curl part onto im(B2); the harmonic remainder lies in ker(L1).  The
    three parts are mutually orthogonal and sum to the input.
    """
    s1 = np.asarray(s1, dtype=float).reshape(-1)
    if s1.shape[0] != ops.n1:
        raise ValueError(f"edge signal has length {s1.shape[0]}, expected {ops.n1}")
    b1t = ops.b1.T.astype(float)
    grad = b1t @ np.linalg.lstsq(b1t, s1, rcond=None)[0]
    if ops.n2:
        b2 = ops.b2.astype(float)
        curl = b2 @ np.linalg.lstsq(b2, s1, rcond=None)[0]
    else:
        curl = np.zeros_like(s1)
    return grad, curl, s1 - grad - curl


def tft(basis: SpectralBasis, x) -> np.ndarray:
    """Topological Fourier transform: per-order projection x_hat = U^T x."""
    x = np.asarray(x, dtype=float).reshape(-1)
    n0, n1 = basis.u0.shape[0], basis.u1.shape[0]
    return np.concatenate([
        basis.u0.T @ x[:n0],
        basis.u1.T @ x[n0:n0 + n1],
        basis.u2.T @ x[n0 + n1:],
    ])


def inverse_tft(basis: SpectralBasis, x_hat) -> np.ndarray:
    """Inverse transform x = U x_hat."""
    x_hat = np.asarray(x_hat, dtype=float).reshape(-1)
    n0, n1 = basis.u0.shape[0], basis.u1.shape[0]
    return np.concatenate([
        basis.u0 @ x_hat[:n0],
        basis.u1 @ x_hat[n0:n0 + n1],
        basis.u2 @ x_hat[n0 + n1:],
    ])


def spectral_process_cov(ops: TopoOperators, basis: SpectralBasis, alpha, delta_t: float) -> np.ndarray:
    """Process covariance in the Fourier basis: U^T (dt D diag^2(a) D^T) U."""
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if alpha.shape[0] != ops.n_total:
        raise ValueError(f"alpha has length {alpha.shape[0]}, expected {ops.n_total}")
    d = ops.dirac.astype(float)
    q = delta_t * (d * alpha**2) @ d.T
    u = basis.u_full()
    q_hat = u.T @ q @ u
    return 0.5 * (q_hat + q_hat.T)


def diagnostics(ops: TopoOperators, basis: SpectralBasis) -> dict:
    """JSON-ready spectral summary: eigenvalues, band sizes and ranks."""
    return {
        "eigenvalues": {
            "order_0": basis.lam0.tolist(),
            "order_1": basis.lam1.tolist(),
            "order_2": basis.lam2.tolist(),
        },
        "bands": {
            "gradient": int(basis.q_g.size),
            "curl": int(basis.q_c.size),
            "harmonic": int(basis.q_h.size),
        },
        "ranks": {"r_g": int(basis.r_g), "r_c": int(basis.r_c)},
    }

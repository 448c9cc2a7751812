"""State-space operators over a 2nd-order complex.

The transition is the first-order diffusion step I - c*dt*L, the process
covariance propagates per-cell uncertainty through the Dirac operator, and
the observation operator is block-structured: each order carries a
polynomial filter in its own Laplacian (split into lower/upper taps where
both parts exist) while adjacent orders couple through the incidence
matrices.  For K=2 that yields seven tap banks:

    (0,0) poly in L0          (0,1) B1   poly in L1
    (1,0) B1^T poly in L0     (1,1) poly in L1
    (1,2) B2   poly in L2     (2,1) B2^T poly in L1
    (2,2) poly in L2

Banks over L1 have independent lower and upper taps; L0 and L2 are single
Laplacians, so those banks carry one tap vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch
from .rff import RffMap, f_hat, f_hat_derivative
from .spectral import TopoOperators

__all__ = [
    "BLOCK_KEYS",
    "BlockTaps",
    "FilterBank",
    "ModelParams",
    "ObservationMask",
    "transition",
    "process_cov",
    "observation_operator",
    "operator_pieces",
    "predict_obs",
    "jacobian",
]

BLOCK_KEYS = ((0, 0), (0, 1), (1, 0), (1, 1), (1, 2), (2, 1), (2, 2))

# which Laplacian the block polynomial runs over, and whether it splits
_POLY_ORDER = {(0, 0): 0, (0, 1): 1, (1, 0): 0, (1, 1): 1, (1, 2): 2, (2, 1): 1, (2, 2): 2}
_SPLIT = frozenset(key for key, order in _POLY_ORDER.items() if order == 1)


@dataclass
class BlockTaps:
    """Tap vectors of one block filter; ``upper`` only for L1 polynomials."""

    lower: np.ndarray
    upper: np.ndarray | None = None

    def copy(self) -> "BlockTaps":
        return BlockTaps(
            lower=self.lower.copy(),
            upper=None if self.upper is None else self.upper.copy(),
        )


@dataclass
class FilterBank:
    """Independent tap vectors for the seven observation blocks."""

    blocks: dict

    @classmethod
    def identity(cls, order_lower: int = 3, order_upper: int = 3) -> "FilterBank":
        """Bank whose operator is the identity: diagonal zero-hop taps = 1."""
        blocks = {}
        for key in BLOCK_KEYS:
            lower = np.zeros(order_lower)
            upper = np.zeros(order_upper) if key in _SPLIT else None
            if key[0] == key[1]:
                lower[0] = 1.0
            blocks[key] = BlockTaps(lower=lower, upper=upper)
        return cls(blocks=blocks)

    def copy(self) -> "FilterBank":
        return FilterBank(blocks={k: v.copy() for k, v in self.blocks.items()})

    @property
    def orders(self) -> tuple:
        lower = len(self.blocks[(0, 0)].lower)
        upper_taps = self.blocks[(1, 1)].upper
        return lower, 0 if upper_taps is None else len(upper_taps)

    def tap_count(self) -> int:
        return sum(
            len(t.lower) + (0 if t.upper is None else len(t.upper))
            for t in self.blocks.values()
        )

    def to_vector(self) -> np.ndarray:
        """Flatten taps in deterministic block order (lower first, then upper)."""
        parts = []
        for key in BLOCK_KEYS:
            taps = self.blocks[key]
            parts.append(taps.lower)
            if taps.upper is not None:
                parts.append(taps.upper)
        return np.concatenate(parts)

    def add_vector(self, delta: np.ndarray) -> None:
        """In-place tap update from a flat vector in :meth:`to_vector` order."""
        pos = 0
        for key in BLOCK_KEYS:
            taps = self.blocks[key]
            n = len(taps.lower)
            taps.lower += delta[pos:pos + n]
            pos += n
            if taps.upper is not None:
                n = len(taps.upper)
                taps.upper += delta[pos:pos + n]
                pos += n
        if pos != delta.shape[0]:
            raise ShapeMismatch(f"tap vector has length {delta.shape[0]}, expected {pos}")


@dataclass
class ModelParams:
    """Learnable parameters plus fixed hyperparameters of the state-space model."""

    c: float
    delta_t: float
    gamma_reg: float
    sigma_obs: float
    alpha: np.ndarray
    bank: FilterBank
    rff: RffMap
    gamma_coeffs: np.ndarray   # (N, 2M)

    def __post_init__(self):
        if self.c <= 0 or self.delta_t <= 0 or self.sigma_obs <= 0:
            raise ValueError("c, delta_t and sigma_obs must be positive")
        if self.gamma_reg < 0:
            raise ValueError("gamma_reg must be nonnegative")
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        self.gamma_coeffs = np.asarray(self.gamma_coeffs, dtype=float)

    @classmethod
    def default(cls, n_total: int, *, c: float = 0.5, delta_t: float = 0.1,
                gamma_reg: float = 1e-4, sigma_obs: float = 1.0,
                n_features: int = 2, kernel_bandwidth: float = 5.0,
                rff_seed: int = 0, order_lower: int = 3, order_upper: int = 3,
                alpha0: float = 1.0) -> "ModelParams":
        rff = RffMap.draw(n_features, kernel_bandwidth, rff_seed)
        return cls(
            c=c, delta_t=delta_t, gamma_reg=gamma_reg, sigma_obs=sigma_obs,
            alpha=np.full(n_total, alpha0),
            bank=FilterBank.identity(order_lower, order_upper),
            rff=rff,
            gamma_coeffs=np.zeros((n_total, 2 * n_features)),
        )

    def copy(self) -> "ModelParams":
        return ModelParams(
            c=self.c, delta_t=self.delta_t, gamma_reg=self.gamma_reg,
            sigma_obs=self.sigma_obs, alpha=self.alpha.copy(),
            bank=self.bank.copy(), rff=self.rff,
            gamma_coeffs=self.gamma_coeffs.copy(),
        )


@dataclass
class ObservationMask:
    """Row-selection sampling operator stored as observed component indices."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp).reshape(-1)
        if idx.size and (idx.min() < 0 or np.unique(idx).size != idx.size):
            raise ValueError("mask indices must be unique and nonnegative")
        self.indices = idx

    @property
    def n_obs(self) -> int:
        return self.indices.shape[0]

    @classmethod
    def full(cls, n: int) -> "ObservationMask":
        return cls(indices=np.arange(n))

    @classmethod
    def from_row(cls, y_row: np.ndarray) -> "ObservationMask":
        """Observed indices of one stream row (NaN marks missing)."""
        return cls(indices=np.flatnonzero(~np.isnan(y_row)))


def transition(ops: TopoOperators, c: float, delta_t: float) -> np.ndarray:
    """Diffusion step I - c*dt*L over the stacked state."""
    n = ops.n_total
    return np.eye(n) - c * delta_t * ops.l_block.astype(float)


def process_cov(ops: TopoOperators, alpha, delta_t: float, gamma_reg: float) -> np.ndarray:
    """Q = dt * D diag^2(alpha) D^T + gamma*I; symmetric, PD when gamma > 0."""
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if alpha.shape[0] != ops.n_total:
        raise ShapeMismatch(f"alpha has length {alpha.shape[0]}, expected {ops.n_total}")
    d = ops.dirac.astype(float)
    q = delta_t * (d * alpha**2) @ d.T + gamma_reg * np.eye(ops.n_total)
    return 0.5 * (q + q.T)


def _monomials(ops: TopoOperators, source: str, count: int) -> list:
    """[I, A, A^2, ...] for the named Laplacian, cached on the operator set."""
    key = ("mono", source, count)
    if key not in ops._cache:
        mat = {
            "l0": ops.l0, "l1_lower": ops.l1_lower,
            "l1_upper": ops.l1_upper, "l2": ops.l2,
        }[source].astype(float)
        powers = [np.eye(mat.shape[0])]
        for _ in range(count - 1):
            powers.append(powers[-1] @ mat)
        ops._cache[key] = powers
    return ops._cache[key]


def operator_pieces(ops: TopoOperators, bank: FilterBank) -> list:
    """One (key, part, row_block, col_block, matrix) entry per tap.

    ``matrix`` already includes the incidence prefix of off-diagonal blocks,
    so the observation operator is the tap-weighted sum of these pieces and
    each piece is the exact derivative of the operator with respect to its
    tap.  Order matches :meth:`FilterBank.to_vector`.  Cached per topology.
    """
    lengths = tuple(
        (key, len(t.lower), 0 if t.upper is None else len(t.upper))
        for key, t in sorted(bank.blocks.items())
    )
    cache_key = ("pieces", lengths)
    if cache_key in ops._cache:
        return ops._cache[cache_key]

    prefix = {
        (0, 1): ops.b1.astype(float),
        (1, 0): ops.b1.T.astype(float),
        (1, 2): ops.b2.astype(float),
        (2, 1): ops.b2.T.astype(float),
    }
    sources = {0: ("l0",), 1: ("l1_lower", "l1_upper"), 2: ("l2",)}

    pieces = []
    for key in BLOCK_KEYS:
        taps = bank.blocks[key]
        order = _POLY_ORDER[key]
        parts = sources[order] if taps.upper is not None else sources[order][:1]
        for part_name, tap_vec in zip(("lower", "upper"), (taps.lower, taps.upper)):
            if part_name == "upper" and taps.upper is None:
                continue
            source = parts[0] if part_name == "lower" else parts[1]
            mono = _monomials(ops, source, len(tap_vec))
            for n in range(len(tap_vec)):
                mat = mono[n]
                if key in prefix:
                    mat = prefix[key] @ mat
                pieces.append((key, part_name, key[0], key[1], mat))

    ops._cache[cache_key] = pieces
    return pieces


def observation_operator(ops: TopoOperators, bank: FilterBank) -> np.ndarray:
    """Assemble the dense block observation operator from the tap banks."""
    slices = ops.block_slices
    m = np.zeros((ops.n_total, ops.n_total))
    taps = bank.to_vector()
    for h, (_, _, rb, cb, mat) in zip(taps, operator_pieces(ops, bank)):
        if h != 0.0:
            m[slices[rb], slices[cb]] += h * mat
    return m


def predict_obs(model: ModelParams, mask: ObservationMask, m_op: np.ndarray, x) -> np.ndarray:
    """Predicted observation Phi M (x + f_hat(x))."""
    x = np.asarray(x, dtype=float).reshape(-1)
    v = x + f_hat(model.rff, model.gamma_coeffs, x)
    return (m_op @ v)[mask.indices]


def jacobian(model: ModelParams, mask: ObservationMask, m_op: np.ndarray, x) -> np.ndarray:
    """Observation Jacobian Phi M (I + diag(f_hat'(x)))."""
    x = np.asarray(x, dtype=float).reshape(-1)
    g = f_hat_derivative(model.rff, model.gamma_coeffs, x)
    return m_op[mask.indices, :] * (1.0 + g)[np.newaxis, :]

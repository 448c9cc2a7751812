"""Extended Kalman filtering with online parameter learning.

Each streaming step runs predict -> correct -> gradient update.  The E-step
is a standard EKF over the diffusion dynamics; the M-step lowers the
instantaneous negative log-likelihood

    l = 1/2 log|S| + 1/2 (y - mu)^T S^-1 (y - mu)

by plain SGD on the uncertainty vector, the filter taps and the RFF
coefficients.  Gradients are one-step truncated: the prior mean and
covariance are held fixed, so for any parameter t

    dl = 1/2 tr(S^-1 dS) - r^T S^-1 dmu - 1/2 r^T S^-1 dS S^-1 r.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import SingularInnovation
from .metrics import NmseAccumulator
from .model import (
    ModelParams,
    ObservationMask,
    observation_operator,
    operator_pieces,
    process_cov,
    transition,
)
from .rff import f_hat, f_hat_derivative, feature_derivative_matrix, feature_matrix
from .spectral import build_operators
from .topology import CellComplex

__all__ = [
    "FilterState",
    "StepRecord",
    "RunReport",
    "TkfEngine",
    "predict",
    "correct",
    "step_loss",
    "m_step",
    "run_tkf",
]

logger = logging.getLogger(__name__)

COND_LIMIT = 1e12
_JITTER = 1e-9


@dataclass
class FilterState:
    """Posterior mean and covariance after ``step`` corrections."""

    x_post: np.ndarray
    p_post: np.ndarray
    step: int = 0

    @classmethod
    def initial(cls, n: int, *, p0_scale: float = 1.0) -> "FilterState":
        return cls(x_post=np.zeros(n), p_post=p0_scale * np.eye(n), step=0)

    def copy(self) -> "FilterState":
        return FilterState(self.x_post.copy(), self.p_post.copy(), self.step)


@dataclass
class StepRecord:
    """Per-step innovation quantities kept for reporting and the M-step."""

    step: int
    observed: np.ndarray
    innovation: np.ndarray
    s_mat: np.ndarray
    gain_norm: float
    loss: float
    mu: np.ndarray


@dataclass
class _StepContext:
    """Prior-step quantities the gradient update needs (internal)."""

    x_prior: np.ndarray
    p_prior: np.ndarray
    mask: ObservationMask
    m_op: np.ndarray
    v: np.ndarray            # x_prior + f_hat(x_prior)
    c_mat: np.ndarray        # Phi M
    j: np.ndarray
    chol: tuple
    resid: np.ndarray
    a: np.ndarray            # S^-1 resid
    pjt: np.ndarray          # P_prior J^T
    z_feat: np.ndarray
    zdot_feat: np.ndarray


def predict(state: FilterState, l_tilde: np.ndarray, q: np.ndarray) -> tuple:
    """Prior mean and covariance under the diffusion transition."""
    x_prior = l_tilde @ state.x_post
    p_prior = l_tilde @ state.p_post @ l_tilde.T + q
    return x_prior, 0.5 * (p_prior + p_prior.T)


def _factor_innovation(s: np.ndarray, sigma_obs: float) -> tuple:
    """Cholesky of S with one jitter retry; raises on ill-conditioning."""
    cond_bound = float(np.linalg.norm(s, "fro")) / sigma_obs**2
    if cond_bound > COND_LIMIT:
        eig = np.linalg.eigvalsh(s)
        if eig[0] <= 0 or eig[-1] / eig[0] > COND_LIMIT:
            raise SingularInnovation(
                f"innovation covariance condition number exceeds {COND_LIMIT:.0e}"
            )
    try:
        return cho_factor(s, lower=True)
    except np.linalg.LinAlgError:
        pass
    try:
        return cho_factor(s + _JITTER * np.eye(s.shape[0]), lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation("innovation covariance is not positive definite") from exc


def _correct(x_prior, p_prior, y_obs, model: ModelParams, mask: ObservationMask,
             m_op: np.ndarray, *, joseph: bool = False, step: int = 0,
             v: np.ndarray | None = None) -> tuple:
    if v is None:
        v = x_prior + f_hat(model.rff, model.gamma_coeffs, x_prior)
    g = f_hat_derivative(model.rff, model.gamma_coeffs, x_prior)
    c_mat = m_op[mask.indices, :]
    j = c_mat * (1.0 + g)[np.newaxis, :]
    mu = c_mat @ v

    s = j @ p_prior @ j.T + model.sigma_obs**2 * np.eye(mask.n_obs)
    chol = _factor_innovation(s, model.sigma_obs)

    resid = y_obs - mu
    a = cho_solve(chol, resid)
    pjt = p_prior @ j.T
    gain = cho_solve(chol, pjt.T).T

    x_post = x_prior + gain @ resid
    if joseph:
        ikj = np.eye(x_prior.shape[0]) - gain @ j
        p_post = ikj @ p_prior @ ikj.T + model.sigma_obs**2 * (gain @ gain.T)
    else:
        p_post = p_prior - gain @ (j @ p_prior)
    p_post = 0.5 * (p_post + p_post.T)

    logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
    loss = 0.5 * logdet + 0.5 * float(resid @ a)

    state = FilterState(x_post=x_post, p_post=p_post, step=step)
    record = StepRecord(
        step=step, observed=mask.indices.copy(), innovation=resid, s_mat=s,
        gain_norm=float(np.linalg.norm(gain)), loss=loss, mu=mu,
    )
    ctx = _StepContext(
        x_prior=x_prior, p_prior=p_prior, mask=mask, m_op=m_op, v=v,
        c_mat=c_mat, j=j, chol=chol, resid=resid, a=a, pjt=pjt,
        z_feat=feature_matrix(model.rff, x_prior),
        zdot_feat=feature_derivative_matrix(model.rff, x_prior),
    )
    return state, record, ctx


def correct(x_prior, p_prior, y_obs, model: ModelParams, mask: ObservationMask,
            m_op: np.ndarray, *, joseph: bool = False, step: int = 0) -> tuple:
    """EKF correction; returns the posterior state and the step record."""
    state, record, _ = _correct(
        x_prior, p_prior, y_obs, model, mask, m_op, joseph=joseph, step=step
    )
    return state, record


def step_loss(record: StepRecord) -> float:
    """Instantaneous negative log-likelihood recomputed from a step record."""
    if record.observed.size == 0:
        return 0.0
    sign, logdet = np.linalg.slogdet(record.s_mat)
    if sign <= 0:
        raise SingularInnovation("innovation covariance lost positive definiteness")
    quad = record.innovation @ np.linalg.solve(record.s_mat, record.innovation)
    return 0.5 * float(logdet) + 0.5 * float(quad)


def _grad_alpha(model: ModelParams, ops, ctx: _StepContext, a_inv: np.ndarray) -> np.ndarray:
    # dS/da_j = 2 dt a_j w_j w_j^T with w_j = J D[:, j]
    w = ctx.j @ ops.dirac.astype(float)
    quad = np.einsum("on,on->n", w, a_inv @ w)
    proj = w.T @ ctx.a
    return model.delta_t * model.alpha * (quad - proj**2)


def _grad_taps(model: ModelParams, ops, ctx: _StepContext, a_inv: np.ndarray) -> np.ndarray:
    slices = ops.block_slices
    idx = ctx.mask.indices
    sel, rows = {}, {}
    for b, sl in enumerate(slices):
        inside = (idx >= sl.start) & (idx < sl.stop)
        sel[b] = np.flatnonzero(inside)
        rows[b] = idx[inside] - sl.start

    one_g = 1.0 + np.einsum("nm,nm->n", model.gamma_coeffs, ctx.zdot_feat)
    grads = []
    for _, _, rb, cb, mat in operator_pieces(ops, model.bank):
        obs_rows = sel[rb]
        if obs_rows.size == 0:
            grads.append(0.0)
            continue
        sub = mat[rows[rb], :]
        cs = slices[cb]
        dj = sub * one_g[cs][np.newaxis, :]
        z_sub = dj @ ctx.pjt[cs, :]                       # rows of dJ P J^T
        tr_az = float(np.sum(a_inv[obs_rows, :] * z_sub))
        a_za = float(ctx.a[obs_rows] @ (z_sub @ ctx.a))
        a_dmu = float(ctx.a[obs_rows] @ (sub @ ctx.v[cs]))
        grads.append(tr_az - a_dmu - a_za)
    return np.asarray(grads)


def _grad_gamma(model: ModelParams, ctx: _StepContext, a_inv: np.ndarray) -> np.ndarray:
    ac = a_inv @ ctx.c_mat
    t1 = np.einsum("no,on->n", ctx.pjt, ac)
    ca = ctx.c_mat.T @ ctx.a
    pjta = ctx.pjt @ ctx.a
    beta = t1 - ca * pjta
    return beta[:, np.newaxis] * ctx.zdot_feat - ca[:, np.newaxis] * ctx.z_feat


def m_step(model: ModelParams, ops, ctx: _StepContext, rates: tuple) -> bool:
    """One SGD update of (alpha, taps, gamma) at the current prior.

    Returns False (and leaves every parameter untouched) when any gradient
    is non-finite; the event is logged and the filter simply moves on.
    """
    a1, a2, a3 = rates
    a_inv = cho_solve(ctx.chol, np.eye(ctx.mask.n_obs))
    # non-finite intermediates are caught below, not propagated
    with np.errstate(invalid="ignore", over="ignore"):
        grad_a = _grad_alpha(model, ops, ctx, a_inv)
        grad_h = _grad_taps(model, ops, ctx, a_inv)
        grad_g = _grad_gamma(model, ctx, a_inv)
    if not (np.isfinite(grad_a).all() and np.isfinite(grad_h).all()
            and np.isfinite(grad_g).all()):
        logger.warning("non-finite gradient at filter step; skipping parameter update")
        return False
    model.alpha -= a1 * grad_a
    model.bank.add_vector(-a2 * grad_h)
    model.gamma_coeffs -= a3 * grad_g
    return True


@dataclass
class RunReport:
    """Per-step traces of one filtering run, serializable to JSON/CSV."""

    losses: np.ndarray
    nmse: np.ndarray
    innovation_norms: np.ndarray
    gain_norms: np.ndarray
    forecasts: np.ndarray          # (T, N) one-step-ahead predicted observations
    x_estimates: np.ndarray | None
    stab_start: int
    mstep_skips: int = 0
    identification: dict | None = None

    @property
    def n_steps(self) -> int:
        return self.losses.shape[0]

    @property
    def final_nmse(self) -> float:
        return float(self.nmse[-1]) if self.n_steps else float("nan")

    def summary(self) -> dict:
        out = {
            "steps": self.n_steps,
            "final_nmse": self.final_nmse,
            "final_loss": float(self.losses[-1]) if self.n_steps else None,
            "mean_loss": float(np.mean(self.losses)) if self.n_steps else None,
            "stab_start": self.stab_start,
            "mstep_skips": self.mstep_skips,
        }
        if self.identification is not None:
            out["identification"] = self.identification
        return out

    def write_json(self, path) -> None:
        import json

        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    def write_steps_csv(self, path) -> None:
        table = np.column_stack([
            np.arange(1, self.n_steps + 1),
            self.losses, self.nmse, self.innovation_norms, self.gain_norms,
        ])
        np.savetxt(
            path, table, delimiter=",", comments="",
            header="step,loss,nmse,innovation_norm,gain_norm",
            fmt=("%d", "%.17g", "%.17g", "%.17g", "%.17g"),
        )


class TkfEngine:
    """Streaming filter over one complex: owns the state and the parameters.

    Strictly sequential; one engine per independent run.  The activation
    vector may change between steps (cell identification), which triggers an
    operator rebuild without resizing any filter variable.
    """

    def __init__(self, cc: CellComplex, model: ModelParams, *,
                 state: FilterState | None = None,
                 rates: tuple = (1e-4, 1e-5, 2e-2),
                 rate_warmup: int = 0,
                 learn: bool = True, joseph: bool = False):
        self.cc = cc
        self.model = model
        self.rates = rates
        self.rate_warmup = rate_warmup
        self.learn = learn
        self.joseph = joseph
        self.state = state if state is not None else FilterState.initial(cc.n_total)
        self.mstep_skips = 0
        self.last_forecast: np.ndarray | None = None
        self._rebuild()

    def _effective_rates(self, step_no: int) -> tuple:
        """Linear ramp over the first ``rate_warmup`` steps tames the transient."""
        if self.rate_warmup <= 0 or step_no >= self.rate_warmup:
            return self.rates
        scale = step_no / self.rate_warmup
        return tuple(r * scale for r in self.rates)

    def _rebuild(self) -> None:
        self.ops = build_operators(self.cc)
        self.l_tilde = transition(self.ops, self.model.c, self.model.delta_t)

    def set_activation(self, activation) -> None:
        self.cc.activation = np.asarray(activation, dtype=np.int64).copy()
        self._rebuild()

    def step(self, y_row: np.ndarray) -> StepRecord:
        """Advance one observation: predict, correct, learn."""
        y_row = np.asarray(y_row, dtype=float).reshape(-1)
        mask = ObservationMask.from_row(y_row)
        step_no = self.state.step + 1

        q = process_cov(self.ops, self.model.alpha, self.model.delta_t,
                        self.model.gamma_reg)
        x_prior, p_prior = predict(self.state, self.l_tilde, q)
        m_op = observation_operator(self.ops, self.model.bank)
        v = x_prior + f_hat(self.model.rff, self.model.gamma_coeffs, x_prior)
        self.last_forecast = m_op @ v

        if mask.n_obs == 0:
            self.state = FilterState(x_prior, p_prior, step_no)
            return StepRecord(
                step=step_no, observed=mask.indices, innovation=np.zeros(0),
                s_mat=np.zeros((0, 0)), gain_norm=0.0, loss=0.0, mu=np.zeros(0),
            )

        state, record, ctx = _correct(
            x_prior, p_prior, y_row[mask.indices], self.model, mask, m_op,
            joseph=self.joseph, step=step_no, v=v,
        )
        self.state = state
        if self.learn:
            if not m_step(self.model, self.ops, ctx, self._effective_rates(step_no)):
                self.mstep_skips += 1
        return record

    def run(self, stream: np.ndarray, *, p_stab: float = 0.0,
            collect_states: bool = True) -> RunReport:
        """Filter a (T, N) stream; NMSE accumulates from ceil(p_stab * T)."""
        stream = np.asarray(stream, dtype=float)
        t_steps, n = stream.shape
        stab_start = max(1, math.ceil(p_stab * t_steps))
        acc = NmseAccumulator(n)

        losses = np.zeros(t_steps)
        nmse = np.full(t_steps, np.nan)
        innov = np.zeros(t_steps)
        gains = np.zeros(t_steps)
        forecasts = np.zeros((t_steps, n))
        xs = np.zeros((t_steps, self.cc.n_total)) if collect_states else None
        skips_before = self.mstep_skips

        for i in range(t_steps):
            try:
                rec = self.step(stream[i])
            except SingularInnovation as exc:
                raise SingularInnovation(f"step {i + 1}: {exc}") from exc
            losses[i] = rec.loss
            innov[i] = float(np.linalg.norm(rec.innovation))
            gains[i] = rec.gain_norm
            forecasts[i] = self.last_forecast
            if xs is not None:
                xs[i] = self.state.x_post
            if i + 1 >= stab_start and rec.observed.size:
                acc.update(stream[i, rec.observed], self.last_forecast[rec.observed],
                           rec.observed)
            nmse[i] = acc.value()

        return RunReport(
            losses=losses, nmse=nmse, innovation_norms=innov, gain_norms=gains,
            forecasts=forecasts, x_estimates=xs, stab_start=stab_start,
            mstep_skips=self.mstep_skips - skips_before,
        )


def run_tkf(stream, cc: CellComplex, model: ModelParams, *,
            state: FilterState | None = None,
            rates: tuple = (1e-4, 1e-5, 2e-2), rate_warmup: int | None = None,
            learn: bool = True, p_stab: float = 0.1, joseph: bool = False,
            collect_states: bool = True) -> RunReport:
    """Run the full predict/correct/update loop over a stream.

    ``stream`` is (T, N) with NaN marking unobserved entries; the model and
    state are mutated in place so callers can continue the run.  Learning
    rates ramp up linearly over the stabilization window (``rate_warmup``
    defaults to ceil(p_stab * T)).
    """
    stream = np.asarray(stream, dtype=float)
    if rate_warmup is None:
        rate_warmup = math.ceil(p_stab * stream.shape[0])
    engine = TkfEngine(cc, model, state=state, rates=rates,
                       rate_warmup=rate_warmup, learn=learn, joseph=joseph)
    return engine.run(stream, p_stab=p_stab, collect_states=collect_states)

"""Online 2-cell identification with snapshot and rollback.

Given only the 1-skeleton and a candidate pool of closed cycles, the filter
first runs a warm-up phase with every candidate inactive, then visits the
candidates in descending order of an uncertainty score derived from the
learned edge noise.  Each candidate is trialled over its own window of the
stream: it is kept if the windowed forecasting NMSE does not degrade the
running benchmark beyond the tolerance, otherwise every filter variable and
parameter is rolled back and the window is replayed without the candidate
so state corruption cannot leak into later trials.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .ekf import FilterState, TkfEngine
from .errors import InsufficientStream
from .metrics import NmseAccumulator, confusion_metrics
from .model import FilterBank, ModelParams
from .topology import CellComplex

__all__ = [
    "Snapshot",
    "CandidateOutcome",
    "IdentificationReport",
    "uncertainty_scores",
    "identify_cells",
]


@dataclass
class Snapshot:
    """Deep copy of everything a trial window may corrupt."""

    x_post: np.ndarray
    p_post: np.ndarray
    step: int
    alpha: np.ndarray
    bank: FilterBank
    gamma_coeffs: np.ndarray
    activation: np.ndarray
    nmse_num: np.ndarray | None = None
    nmse_den: np.ndarray | None = None

    @classmethod
    def capture(cls, engine: TkfEngine, acc: NmseAccumulator | None = None) -> "Snapshot":
        return cls(
            x_post=engine.state.x_post.copy(),
            p_post=engine.state.p_post.copy(),
            step=engine.state.step,
            alpha=engine.model.alpha.copy(),
            bank=engine.model.bank.copy(),
            gamma_coeffs=engine.model.gamma_coeffs.copy(),
            activation=engine.cc.activation.copy(),
            nmse_num=None if acc is None else acc.num.copy(),
            nmse_den=None if acc is None else acc.den.copy(),
        )

    def restore(self, engine: TkfEngine, acc: NmseAccumulator | None = None) -> None:
        engine.state = FilterState(self.x_post.copy(), self.p_post.copy(), self.step)
        engine.model.alpha = self.alpha.copy()
        engine.model.bank = self.bank.copy()
        engine.model.gamma_coeffs = self.gamma_coeffs.copy()
        engine.set_activation(self.activation)
        if acc is not None and self.nmse_num is not None:
            acc.num = self.nmse_num.copy()
            acc.den = self.nmse_den.copy()


@dataclass
class CandidateOutcome:
    cell: int
    score: float
    window_start: int   # 0-based step index, inclusive
    window_end: int     # exclusive
    window_nmse: float
    accepted: bool


@dataclass
class IdentificationReport:
    """Decisions of one identification run plus optional truth metrics."""

    outcomes: list
    final_activation: np.ndarray
    warmup_nmse: float
    epsilon: float
    warmup_steps: int
    confusion: dict | None = None

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "warmup_steps": self.warmup_steps,
            "warmup_nmse": self.warmup_nmse,
            "final_activation": self.final_activation.tolist(),
            "accepted_cells": [o.cell for o in self.outcomes if o.accepted],
            "candidates": [
                {
                    "cell": o.cell,
                    "score": o.score,
                    "window": [o.window_start, o.window_end],
                    "window_nmse": o.window_nmse,
                    "accepted": o.accepted,
                }
                for o in self.outcomes
            ],
            "confusion": self.confusion,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def uncertainty_scores(cc: CellComplex, alpha: np.ndarray) -> np.ndarray:
    """Mean squared edge uncertainty over each candidate's boundary edges."""
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    edge_alpha = alpha[cc.n_nodes:cc.n_nodes + cc.n_edges]
    scores = np.zeros(cc.n_faces_pool)
    for k in range(cc.n_faces_pool):
        edges = cc.face_edge_indices(k)
        scores[k] = float(np.mean(edge_alpha[edges] ** 2))
    return scores


def _run_segment(engine: TkfEngine, segment: np.ndarray, acc: NmseAccumulator) -> float:
    """Advance the engine through a segment, extending the running NMSE."""
    for row in segment:
        rec = engine.step(row)
        if rec.observed.size:
            acc.update(row[rec.observed], engine.last_forecast[rec.observed],
                       rec.observed)
    return acc.value()


def identify_cells(stream, cc: CellComplex, model: ModelParams, *,
                   warmup_steps: int | None = None, epsilon: float = 0.0,
                   rates: tuple = (1e-4, 1e-5, 5e-3), joseph: bool = False,
                   true_activation=None) -> tuple:
    """Forward-select active 2-cells from a candidate pool.

    Parameters
    ----------
    stream:
        (T, N) observations, NaN marking missing entries.
    cc:
        Complex whose ``face_cycles`` form the candidate pool; its activation
        is ignored (identification always starts from all-inactive).
    model:
        Initial parameters; a private copy is trained.
    warmup_steps:
        Length of the no-2-cell warm-up phase; defaults to ceil(0.1 T).
    epsilon:
        Acceptance tolerance on the relative NMSE ratio.
    true_activation:
        Optional ground truth enabling confusion metrics in the report.

    Returns
    -------
    (activation, report):
        Final binary activation over the pool and the decision report.
    """
    stream = np.asarray(stream, dtype=float)
    t_steps = stream.shape[0]
    n_pool = cc.n_faces_pool
    if warmup_steps is None:
        warmup_steps = math.ceil(0.1 * t_steps)
    if n_pool == 0:
        raise InsufficientStream("candidate pool is empty")
    if t_steps - warmup_steps < n_pool:
        raise InsufficientStream(
            f"stream leaves {t_steps - warmup_steps} steps for {n_pool} candidates"
        )

    work_cc = cc.with_activation(np.zeros(n_pool, dtype=np.int64))
    engine = TkfEngine(work_cc, model.copy(), rates=rates, rate_warmup=warmup_steps,
                       learn=True, joseph=joseph)

    warm_acc = NmseAccumulator(stream.shape[1])
    warmup_nmse = _run_segment(engine, stream[:warmup_steps], warm_acc)
    nmse_min = warmup_nmse
    scores = uncertainty_scores(work_cc, engine.model.alpha)
    # descending score, ties broken by ascending candidate index
    order = np.lexsort((np.arange(n_pool), -scores))

    # candidate scoring extends one running accumulator across the
    # identification phase, so each trial is judged on the cumulative
    # forecasting NMSE it leaves behind
    acc = NmseAccumulator(stream.shape[1])
    width = (t_steps - warmup_steps) // n_pool
    activation = np.zeros(n_pool, dtype=np.int64)
    outcomes = []
    for p, cand in enumerate(order, start=1):
        start = warmup_steps + (p - 1) * width
        end = warmup_steps + p * width if p < n_pool else t_steps
        segment = stream[start:end]

        snap = Snapshot.capture(engine, acc)
        activation[cand] = 1
        engine.set_activation(activation)
        trial_nmse = _run_segment(engine, segment, acc)

        accepted = trial_nmse / max(nmse_min, np.finfo(float).tiny) - 1.0 < epsilon
        if accepted:
            nmse_min = trial_nmse
        else:
            # restore() reapplies the pre-window activation, i.e. cand inactive
            snap.restore(engine, acc)
            activation[cand] = 0
            _run_segment(engine, segment, acc)
        outcomes.append(CandidateOutcome(
            cell=int(cand), score=float(scores[cand]), window_start=start,
            window_end=end, window_nmse=float(trial_nmse), accepted=bool(accepted),
        ))

    confusion = None
    if true_activation is not None:
        confusion = confusion_metrics(activation, np.asarray(true_activation))

    report = IdentificationReport(
        outcomes=outcomes, final_activation=activation.copy(),
        warmup_nmse=float(warmup_nmse), epsilon=float(epsilon),
        warmup_steps=int(warmup_steps), confusion=confusion,
    )
    return activation, report

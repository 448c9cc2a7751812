"""Checkpoint files: model parameters and filter state at any step.

A checkpoint is a JSON sidecar (scalars, shapes, RFF metadata) plus an NPZ
payload holding every array exactly (row-major).  Loading reproduces the
model and state bit-for-bit.
"""

from __future__ import annotations

import json

import numpy as np

from .ekf import FilterState
from .model import BLOCK_KEYS, BlockTaps, FilterBank, ModelParams
from .rff import RffMap

__all__ = ["save_checkpoint", "load_checkpoint"]


def save_checkpoint(prefix, model: ModelParams, state: FilterState) -> None:
    """Write ``<prefix>.json`` and ``<prefix>.npz``."""
    meta = {
        "c": model.c,
        "delta_t": model.delta_t,
        "gamma_reg": model.gamma_reg,
        "sigma_obs": model.sigma_obs,
        "rff": {
            "m": model.rff.m,
            "kernel_bandwidth": model.rff.kernel_bandwidth,
            "seed": model.rff.seed,
        },
        "gamma_shape": list(model.gamma_coeffs.shape),
        "step": state.step,
        "blocks": {
            f"{k}_{kp}": {
                "lower": len(model.bank.blocks[(k, kp)].lower),
                "upper": (None if model.bank.blocks[(k, kp)].upper is None
                          else len(model.bank.blocks[(k, kp)].upper)),
            }
            for k, kp in BLOCK_KEYS
        },
    }
    arrays = {
        "alpha": model.alpha,
        "gamma_coeffs": np.ascontiguousarray(model.gamma_coeffs),
        "frequencies": model.rff.frequencies,
        "x_post": state.x_post,
        "p_post": state.p_post,
    }
    for k, kp in BLOCK_KEYS:
        taps = model.bank.blocks[(k, kp)]
        arrays[f"h_{k}_{kp}_lower"] = taps.lower
        if taps.upper is not None:
            arrays[f"h_{k}_{kp}_upper"] = taps.upper

    with open(f"{prefix}.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    np.savez(f"{prefix}.npz", **arrays)


def load_checkpoint(prefix) -> tuple:
    """Read a checkpoint pair; returns ``(model, state)``."""
    with open(f"{prefix}.json") as fh:
        meta = json.load(fh)
    payload = np.load(f"{prefix}.npz")

    blocks = {}
    for k, kp in BLOCK_KEYS:
        spec = meta["blocks"][f"{k}_{kp}"]
        lower = payload[f"h_{k}_{kp}_lower"].copy()
        upper = None
        if spec["upper"] is not None:
            upper = payload[f"h_{k}_{kp}_upper"].copy()
        blocks[(k, kp)] = BlockTaps(lower=lower, upper=upper)

    rff = RffMap(
        frequencies=payload["frequencies"].copy(),
        kernel_bandwidth=meta["rff"]["kernel_bandwidth"],
        seed=meta["rff"]["seed"],
    )
    model = ModelParams(
        c=meta["c"], delta_t=meta["delta_t"], gamma_reg=meta["gamma_reg"],
        sigma_obs=meta["sigma_obs"], alpha=payload["alpha"].copy(),
        bank=FilterBank(blocks=blocks), rff=rff,
        gamma_coeffs=payload["gamma_coeffs"].copy(),
    )
    state = FilterState(
        x_post=payload["x_post"].copy(), p_post=payload["p_post"].copy(),
        step=meta["step"],
    )
    return model, state

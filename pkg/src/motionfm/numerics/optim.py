"""AdamW with decoupled weight decay, written as a pure state transition."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from ..errors import NumericError, ShapeError


@dataclass(frozen=True)
class OptimizerState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: Mapping[str, np.ndarray] = field(default_factory=dict)
    v: Mapping[str, np.ndarray] = field(default_factory=dict)


def init_state(params: Mapping[str, np.ndarray], **hyper) -> OptimizerState:
    zeros = {k: np.zeros_like(p) for k, p in params.items()}
    return OptimizerState(m=zeros, v={k: z.copy() for k, z in zeros.items()}, **hyper)


def optimizer_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """One AdamW update. Inputs are left untouched; new arrays are returned.

    Raises :class:`NumericError` on a non-finite gradient before anything is
    computed, so the caller's state stays valid.
    """
    if set(params) != set(grads):
        raise ShapeError(f"params/grads keys differ: {sorted(set(params) ^ set(grads))}")
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ShapeError(f"gradient for {k!r} has shape {g.shape}, expected {params[k].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {k!r}")

    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**step
    c2 = 1.0 - b2**step
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = b1 * state.m.get(k, 0.0) + (1.0 - b1) * g
        v = b2 * state.v.get(k, 0.0) + (1.0 - b2) * g * g
        p = p * (1.0 - state.lr * state.weight_decay)
        new_p[k] = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[k], new_v[k] = m, v
    return new_p, replace(state, step=step, m=new_m, v=new_v)

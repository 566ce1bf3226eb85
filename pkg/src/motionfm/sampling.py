"""Fixed-grid ODE sampling from t=0 (noise) to t=1 (data).

A *field* is any callable ``f(x, t) -> v`` on (B, T, D) arrays. Models are
wrapped with :func:`model_field`, which applies classifier-free guidance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .model import VectorFieldModel, predict_field

Field = Callable[[np.ndarray, float], np.ndarray]
# (step index, t, state) -> state actually fed to the field
Rewrite = Callable[[int, float, np.ndarray], Optional[np.ndarray]]

SOLVERS = ("euler", "midpoint", "rk4")


@dataclass(frozen=True)
class SamplerConfig:
    solver: str = "euler"
    steps: int = 10
    guidance: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.guidance < 0:
            raise ConfigError("guidance strength must be >= 0")


@dataclass
class Trajectory:
    """States x_{k/N} for k = 0..N plus per-step diagnostics.

    ``inputs[k]`` is the state the field was evaluated on at step ``k``; it
    differs from ``states[k]`` only where a rewrite hook changed it.
    """

    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    inputs: list[np.ndarray] = field(default_factory=list)
    x1_estimates: list[np.ndarray] = field(default_factory=list)
    rewritten: list[bool] = field(default_factory=list)

    @property
    def noise(self) -> np.ndarray:
        return self.states[0]


def combine_guidance(v_uncond: np.ndarray, v_cond: np.ndarray, s: float) -> np.ndarray:
    return v_uncond + s * (v_cond - v_uncond)


def guided_field(model: VectorFieldModel, x_t: np.ndarray, t, c, s: float) -> np.ndarray:
    """Classifier-free guided field.

    A null condition skips guidance. ``s == 1`` needs only the conditional
    evaluation, so it is returned directly.
    """
    if c is None:
        return predict_field(model, x_t, t, None)
    v_cond = predict_field(model, x_t, t, c)
    if s == 1.0:
        return v_cond
    v_null = predict_field(model, x_t, t, None)
    return combine_guidance(v_null, v_cond, s)


def model_field(model: VectorFieldModel, c=None, guidance: float = 1.0) -> Field:
    def f(x, t):
        return guided_field(model, x, t, c, guidance)

    f.model = model
    return f


def estimate_x1(x_t: np.ndarray, t: float, v: np.ndarray) -> np.ndarray:
    """One-shot prediction of the endpoint along the current velocity."""
    return x_t + (1.0 - t) * v


def integrate(
    f: Field,
    x0: np.ndarray,
    steps: int,
    solver: str = "euler",
    rewrite: Optional[Rewrite] = None,
) -> tuple[np.ndarray, Trajectory]:
    """Integrate dx/dt = f(x, t) on the uniform grid k/N, k = 0..N."""
    if solver not in SOLVERS:
        raise ConfigError(f"solver must be one of {SOLVERS}")
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    if rewrite is not None and solver != "euler":
        raise ConfigError("trajectory rewriting is defined for the Euler solver only")
    dt = 1.0 / steps
    x = np.array(x0, dtype=np.float64)
    traj = Trajectory(times=[0.0], states=[x.copy()])
    for k in range(steps):
        t = k / steps
        fed = x
        changed = False
        if rewrite is not None:
            out = rewrite(k, t, x)
            if out is not None:
                fed, changed = out, True
        v1 = f(fed, t)
        if solver == "euler":
            x = fed + dt * v1
        elif solver == "midpoint":
            v2 = f(fed + (0.5 * dt) * v1, t + 0.5 * dt)
            x = fed + dt * v2
        else:
            v2 = f(fed + (0.5 * dt) * v1, t + 0.5 * dt)
            v3 = f(fed + (0.5 * dt) * v2, t + 0.5 * dt)
            v4 = f(fed + dt * v3, t + dt)
            x = fed + (dt / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4)
        if not np.all(np.isfinite(x)):
            raise NumericError(f"non-finite sampler state at step {k}")
        traj.inputs.append(fed)
        traj.rewritten.append(changed)
        traj.x1_estimates.append(estimate_x1(fed, t, v1))
        traj.times.append((k + 1) / steps)
        traj.states.append(x.copy())
    return x, traj


def draw_noise(seed: int, shape: tuple[int, ...]) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(shape)


def resolve_field(field_or_model: Union[VectorFieldModel, Field], c, guidance: float,
                  shape: Optional[tuple[int, int]]) -> tuple[Field, tuple[int, int]]:
    if isinstance(field_or_model, VectorFieldModel):
        cfg = field_or_model.config
        model_shape = (cfg.frames, cfg.dim)
        if shape is not None and tuple(shape) != model_shape:
            raise ShapeError(f"requested shape {shape} but the model produces {model_shape}")
        return model_field(field_or_model, c, guidance), model_shape
    if shape is None:
        raise ShapeError("a sample shape is required when sampling from a bare field")
    return field_or_model, tuple(shape)


def sample(
    field_or_model: Union[VectorFieldModel, Field],
    c=None,
    config: SamplerConfig = SamplerConfig(),
    n: int = 1,
    shape: Optional[tuple[int, int]] = None,
) -> tuple[np.ndarray, Trajectory]:
    """Draw ``n`` samples of shape (n, T, D), returned in model space.

    ``c`` is a label, ``None`` for unconditional, or one label per item.
    Noise comes from ``default_rng(config.seed)``.
    """
    config.validate()
    f, shp = resolve_field(field_or_model, c, config.guidance, shape)
    x0 = draw_noise(config.seed, (n,) + tuple(shp))
    return integrate(f, x0, config.steps, config.solver)

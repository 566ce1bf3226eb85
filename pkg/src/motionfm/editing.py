"""Training-free editing by sampling-trajectory rewriting.

While ``k/N < threshold`` the known dimensions of the Euler state are
overwritten with the straight noise-to-reference interpolant
``(1 - k/N) x0 + (k/N) x1_ref`` before the field is evaluated; after that the
sampler runs unmodified. ``x0`` is drawn once and reused for every rewrite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, ShapeError
from .model import VectorFieldModel
from .motion.layout import PoseLayout
from .sampling import Field, Trajectory, draw_noise, integrate, resolve_field

TASKS = ("in_between", "prediction", "interpolation", "upper_body")


@dataclass(frozen=True)
class EditConfig:
    steps: int = 30
    threshold: float = 0.2
    guidance: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must be in [0, 1]")
        if self.guidance < 0:
            raise ConfigError("guidance strength must be >= 0")


def build_mask(
    task: str,
    layout: PoseLayout,
    frames: int,
    prefix: int = 0,
    suffix: int = 0,
    stride: int = 2,
    upper_joints: Iterable[int] = (),
) -> np.ndarray:
    """Boolean (frames, D) mask, True where the reference motion is kept."""
    if frames < 1:
        raise ConfigError("frames must be >= 1")
    mask = np.zeros((frames, layout.dim), dtype=bool)
    if task == "prediction":
        if not 0 < prefix < frames:
            raise ConfigError(f"prefix must be in [1, {frames - 1}]")
        mask[:prefix] = True
    elif task == "in_between":
        if prefix < 0 or suffix < 0 or prefix + suffix == 0 or prefix + suffix >= frames:
            raise ConfigError("in_between needs prefix + suffix in [1, frames - 1]")
        mask[:prefix] = True
        if suffix:
            mask[frames - suffix:] = True
    elif task == "interpolation":
        if stride < 1:
            raise ConfigError("stride must be >= 1")
        mask[::stride] = True
    elif task == "upper_body":
        joints = sorted(set(int(j) for j in upper_joints))
        if not joints:
            raise ConfigError("upper_body needs at least one joint to re-synthesize")
        mask[:] = True
        for j in joints:
            if j == 0:
                raise ConfigError("the root joint is always preserved; it cannot be edited")
            cols = [*layout.position_columns(j), *layout.velocity_columns(j), *layout.rotation_columns(j)]
            mask[:, cols] = False
    else:
        raise ConfigError(f"unknown editing task {task!r}; choose from {TASKS}")
    if not mask.any():
        raise ConfigError("mask has no known entries")
    return mask


def frame_region(mask: np.ndarray) -> np.ndarray:
    """Frames with at least one unknown dimension."""
    return ~mask.all(axis=-1)


def rewrite_sample(
    field_or_model: Union[VectorFieldModel, Field],
    x1_ref: np.ndarray,
    mask: np.ndarray,
    c=None,
    config: EditConfig = EditConfig(),
) -> tuple[np.ndarray, Trajectory]:
    """Edit ``x1_ref`` ((T, D) or (n, T, D), model space) keeping ``mask`` dims.

    Noise is drawn exactly as :func:`motionfm.sampling.sample` draws it for
    the same seed and batch size, so an all-unknown mask or a zero threshold
    reproduces plain sampling bit for bit.
    """
    config.validate()
    x1 = np.asarray(x1_ref, dtype=np.float64)
    batched = x1.ndim == 3
    if not batched:
        x1 = x1[None]
    f, shape = resolve_field(field_or_model, c, config.guidance, x1.shape[1:])
    mask = np.asarray(mask, dtype=bool)
    try:
        mask = np.broadcast_to(mask, x1.shape)
    except ValueError:
        raise ShapeError(f"mask shape {mask.shape} does not match motion shape {x1.shape}") from None

    x0 = draw_noise(config.seed, x1.shape)

    def rewrite(k: int, t: float, x: np.ndarray):
        if not t < config.threshold:
            return None
        interp = (1.0 - t) * x0 + t * x1
        return np.where(mask, interp, x)

    out, traj = integrate(f, x0, config.steps, "euler", rewrite=rewrite)
    if not batched:
        out = out[0]
    return out, traj


def evaluate_edits(
    model: VectorFieldModel,
    refs: np.ndarray,
    labels: Optional[Sequence[int]],
    mask: np.ndarray,
    layout: PoseLayout,
    decode,
    config: EditConfig = EditConfig(),
) -> dict:
    """Edit every reference and score the unknown frames against it.

    ``refs`` are in model space; ``decode`` maps model space back to raw
    features before joint positions are compared.
    """
    from .metrics import ade_fde

    edited, _ = rewrite_sample(model, refs, mask, labels, config)
    region = frame_region(mask if mask.ndim == 2 else mask[0])
    ade, fde = ade_fde(decode(edited), decode(refs), region, layout)
    return {"ade": ade, "fde": fde, "edited": edited}

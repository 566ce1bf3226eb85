"""Toy motion datasets with known structure.

``point``
    One fixed feature array per class; every sample of the class is a copy.
``sine-walker``
    Joints oscillate around a rest pose with a class-specific frequency and
    amplitude plus a per-sample random phase and amplitude jitter. Velocities,
    rotations and contacts are derived from the positions.
``gaussian-shift``
    Frames i.i.d. ``N(base + shift * k, noise**2 I)`` for class ``k``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError
from .layout import MAX_FRAMES, MotionSequence, PoseLayout

FAMILIES = ("point", "sine-walker", "gaussian-shift")


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    family: str = "sine-walker"
    joints: int = 4
    frames: int = 60
    classes: int = 1
    samples_per_class: int = 100
    seed: int = 0
    fps: float = 20.0
    # gaussian-shift only
    shift: float = 3.0
    noise: float = 0.25

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.classes < 1:
            raise ConfigError("need at least one class")
        if self.samples_per_class < 1:
            raise ConfigError("samples_per_class must be positive (zero samples requested)")
        if not 1 <= self.frames <= MAX_FRAMES:
            raise ConfigError(f"frames must be in [1, {MAX_FRAMES}]")
        if self.fps <= 0:
            raise ConfigError("fps must be positive")
        PoseLayout(self.joints)

    def to_dict(self) -> dict:
        return asdict(self)


def gen_synthetic_dataset(spec: SyntheticDatasetSpec) -> list[MotionSequence]:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    layout = PoseLayout(spec.joints)
    make = {"point": _point, "sine-walker": _sine_walker, "gaussian-shift": _gaussian_shift}
    return make[spec.family](spec, layout, rng)


def _point(spec, layout, rng):
    out = []
    for k in range(spec.classes):
        proto = rng.standard_normal((spec.frames, layout.dim))
        out.extend(MotionSequence(proto.copy(), layout, k) for _ in range(spec.samples_per_class))
    return out


def _gaussian_shift(spec, layout, rng):
    base = rng.standard_normal(layout.dim)
    out = []
    for k in range(spec.classes):
        mu = base + spec.shift * k
        for _ in range(spec.samples_per_class):
            x = mu + spec.noise * rng.standard_normal((spec.frames, layout.dim))
            out.append(MotionSequence(x, layout, k))
    return out


def _sine_walker(spec, layout, rng):
    j = layout.joints
    fps = spec.fps
    # skeleton shared by all classes
    rest = rng.normal(0.0, 0.3, size=(j - 1, 3)) + np.array([0.0, 0.5, 0.0])
    direction = rng.normal(size=(j - 1, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    joint_phase = rng.uniform(0, 2 * np.pi, size=j - 1)
    feet = [j - 1, max(j - 2, 1)]

    classes = []
    for _ in range(spec.classes):
        classes.append(dict(
            freq=rng.uniform(0.8, 2.0),
            amp=rng.uniform(0.1, 0.3),
            speed=rng.uniform(0.5, 1.5),
            heading=rng.uniform(0, 2 * np.pi),
            turn=rng.uniform(-0.5, 0.5),
            height=rng.uniform(0.8, 1.0),
        ))

    # frame -1 is generated too so that velocities are first differences everywhere
    frame_idx = np.arange(-1, spec.frames)
    out = []
    for k, cls in enumerate(classes):
        for _ in range(spec.samples_per_class):
            phase = rng.uniform(0, 2 * np.pi)
            scale = rng.uniform(0.8, 1.2)
            arg = (2 * np.pi * cls["freq"] * frame_idx / fps)[:, None] + phase + joint_phase
            wave = np.sin(arg)  # (M+1, j-1)
            pos = rest + (cls["amp"] * scale) * wave[:, :, None] * direction  # (M+1, j-1, 3)
            root_y = cls["height"] + 0.02 * scale * np.sin(2 * arg[:, 0])
            vel = np.diff(pos, axis=0) * fps  # (M, j-1, 3)
            root_vy = np.diff(root_y) * fps
            vx = cls["speed"] * np.cos(cls["heading"])
            vz = cls["speed"] * np.sin(cls["heading"])
            root_vel = np.stack([np.full_like(root_vy, vx), root_vy, np.full_like(root_vy, vz)], axis=1)

            alpha = 0.5 * wave[1:]  # rotation about Y per joint
            zeros, ones = np.zeros_like(alpha), np.ones_like(alpha)
            rot6 = np.stack([np.cos(alpha), zeros, -np.sin(alpha), zeros, ones, zeros], axis=-1)

            peak = cls["amp"] * scale * 2 * np.pi * cls["freq"]
            speed_feet = [np.linalg.norm(vel[:, f - 1], axis=1) for f in feet]
            contacts = np.stack([
                speed_feet[0] < 0.3 * peak, speed_feet[0] < 0.6 * peak,
                speed_feet[1] < 0.3 * peak, speed_feet[1] < 0.6 * peak,
            ], axis=1).astype(np.float64)

            m = spec.frames
            values = np.concatenate([
                np.full((m, 1), cls["turn"]),
                np.full((m, 1), vx),
                np.full((m, 1), vz),
                root_y[1:, None],
                pos[1:].reshape(m, -1),
                np.concatenate([root_vel[:, None, :], vel], axis=1).reshape(m, -1),
                rot6.reshape(m, -1),
                contacts,
            ], axis=1)
            out.append(MotionSequence(values, layout, k))
    return out


def split_dataset(seqs: list[MotionSequence], holdout: float, seed: int):
    """Shuffle and split into (train, held_out)."""
    if not 0.0 <= holdout < 1.0:
        raise ConfigError("holdout fraction must be in [0, 1)")
    order = np.random.default_rng(seed).permutation(len(seqs))
    n_hold = int(round(holdout * len(seqs)))
    held = [seqs[i] for i in order[:n_hold]]
    train = [seqs[i] for i in order[n_hold:]]
    return train, held

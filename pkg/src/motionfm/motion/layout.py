"""Per-frame pose feature layout.

Each frame is the concatenation

    root angular velocity (1) | root XZ velocity (2) | root height (1)
    | local joint positions 3(j-1) | joint velocities 3j
    | joint rotations, 6D, 6(j-1) | foot contacts (4)

Positions and rotations skip the root joint (index 0); velocities include it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConfigError, ShapeError

MAX_FRAMES = 196


def feature_dim(joints: int) -> int:
    if joints < 2:
        raise ConfigError(f"a pose layout needs at least 2 joints, got {joints}")
    return 4 + 3 * (joints - 1) + 3 * joints + 6 * (joints - 1) + 4


@dataclass(frozen=True)
class PoseLayout:
    joints: int

    def __post_init__(self):
        feature_dim(self.joints)

    @property
    def dim(self) -> int:
        return feature_dim(self.joints)

    @property
    def root(self) -> slice:
        return slice(0, 4)

    @property
    def positions(self) -> slice:
        return slice(4, 4 + 3 * (self.joints - 1))

    @property
    def velocities(self) -> slice:
        start = self.positions.stop
        return slice(start, start + 3 * self.joints)

    @property
    def rotations(self) -> slice:
        start = self.velocities.stop
        return slice(start, start + 6 * (self.joints - 1))

    @property
    def contacts(self) -> slice:
        start = self.rotations.stop
        return slice(start, start + 4)

    def _check_joint(self, joint: int, allow_root: bool) -> None:
        lo = 0 if allow_root else 1
        if not lo <= joint < self.joints:
            raise ConfigError(f"joint {joint} outside [{lo}, {self.joints})")

    def position_columns(self, joint: int) -> range:
        self._check_joint(joint, allow_root=False)
        start = self.positions.start + 3 * (joint - 1)
        return range(start, start + 3)

    def velocity_columns(self, joint: int) -> range:
        self._check_joint(joint, allow_root=True)
        start = self.velocities.start + 3 * joint
        return range(start, start + 3)

    def rotation_columns(self, joint: int) -> range:
        self._check_joint(joint, allow_root=False)
        start = self.rotations.start + 6 * (joint - 1)
        return range(start, start + 6)

    def joint_positions(self, values: np.ndarray) -> np.ndarray:
        """(..., D) features -> (..., j-1, 3) local joint positions."""
        pos = values[..., self.positions]
        return pos.reshape(pos.shape[:-1] + (self.joints - 1, 3))


@dataclass
class MotionSequence:
    values: np.ndarray
    layout: PoseLayout
    condition: Optional[int] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError(f"motion values must be 2-D (frames, dim), got {self.values.shape}")
        frames, dim = self.values.shape
        if frames < 1 or frames > MAX_FRAMES:
            raise ShapeError(f"frame count {frames} outside [1, {MAX_FRAMES}]")
        if dim != self.layout.dim:
            raise ShapeError(
                f"feature dim {dim} does not match layout with {self.layout.joints} joints "
                f"(expects {self.layout.dim})"
            )
        if not np.all(np.isfinite(self.values)):
            raise ShapeError("motion contains non-finite values")

    @property
    def frames(self) -> int:
        return self.values.shape[0]

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layout import MotionSequence

MIN_STD = 1e-6


@dataclass(frozen=True)
class Normalizer:
    """Per-channel standardization fitted on a training split.

    Channels with (near) zero spread keep unit scale so constants survive a
    round trip.
    """

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, seqs: list[MotionSequence]) -> "Normalizer":
        stacked = np.concatenate([s.values for s in seqs], axis=0)
        std = stacked.std(axis=0)
        return cls(stacked.mean(axis=0), np.where(std < MIN_STD, 1.0, std))

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(np.zeros(dim), np.ones(dim))

    def encode(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def decode(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))

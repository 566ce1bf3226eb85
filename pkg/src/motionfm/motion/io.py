"""Motion file I/O.

A motion file is one JSON header line followed by one comma-separated row
per frame::

    {"frames": 60, "joints": 22, "dim": 263, "condition": 3}
    0.125,-1.5,...

Floats are written with ``repr`` so reading back is bit-exact.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..errors import FormatError, ShapeError
from .layout import MotionSequence, PoseLayout, feature_dim

SUFFIX = ".motion"


def write_motion(path: str | os.PathLike, seq: MotionSequence) -> None:
    values = np.asarray(seq.values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] == 0:
        raise ShapeError("refusing to write a motion with no frames")
    header = {
        "frames": int(values.shape[0]),
        "joints": seq.layout.joints,
        "dim": int(values.shape[1]),
        "condition": seq.condition,
    }
    lines = [json.dumps(header)]
    lines.extend(",".join(repr(float(v)) for v in row) for row in values)
    Path(path).write_text("\n".join(lines) + "\n")


def read_motion(path: str | os.PathLike) -> MotionSequence:
    with open(path) as fh:
        head = fh.readline()
        try:
            header = json.loads(head)
            frames, joints, dim = int(header["frames"]), int(header["joints"]), int(header["dim"])
            condition = header.get("condition")
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"{path}: malformed header ({exc})") from None
        if feature_dim(joints) != dim:
            raise FormatError(
                f"{path}: dimension mismatch, header dim {dim} but {joints} joints need {feature_dim(joints)}"
            )
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric value") from None
            if len(row) != dim:
                raise FormatError(f"{path}:{lineno}: dimension mismatch, {len(row)} values, expected {dim}")
            rows.append(row)
    if len(rows) != frames:
        raise FormatError(f"{path}: header declares {frames} frames, found {len(rows)}")
    values = np.array(rows, dtype=np.float64).reshape(frames, dim)
    return MotionSequence(values, PoseLayout(joints), None if condition is None else int(condition))


def save_dataset(directory: str | os.PathLike, seqs: list[MotionSequence]) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, seq in enumerate(seqs):
        p = directory / f"{i:05d}{SUFFIX}"
        write_motion(p, seq)
        paths.append(p)
    return paths


def load_dataset(directory: str | os.PathLike) -> list[MotionSequence]:
    paths = sorted(Path(directory).glob(f"*{SUFFIX}"))
    if not paths:
        raise FormatError(f"no {SUFFIX} files in {directory}")
    return [read_motion(p) for p in paths]

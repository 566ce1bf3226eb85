from .io import load_dataset, read_motion, save_dataset, write_motion
from .layout import MAX_FRAMES, MotionSequence, PoseLayout, feature_dim
from .normalize import Normalizer
from .synthetic import FAMILIES, SyntheticDatasetSpec, gen_synthetic_dataset, split_dataset

__all__ = [
    "FAMILIES",
    "MAX_FRAMES",
    "MotionSequence",
    "Normalizer",
    "PoseLayout",
    "SyntheticDatasetSpec",
    "feature_dim",
    "gen_synthetic_dataset",
    "load_dataset",
    "read_motion",
    "save_dataset",
    "split_dataset",
    "write_motion",
]

"""Conditional flow-matching objective and training loop."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, NumericError, ShapeError, TrainingDiverged
from .model import ModelConfig, VectorFieldModel, field_graph, init_model, label_indices, save_model
from .motion.layout import MotionSequence
from .motion.normalize import Normalizer
from .numerics import autodiff as ad
from .numerics.optim import OptimizerState, init_state, optimizer_step

log = logging.getLogger(__name__)

T_MAX = 1.0 - 1e-5
TARGETS = ("normalized", "literal")


@dataclass(frozen=True)
class PathParams:
    sigma_min: float = 0.0
    target: str = "normalized"

    def __post_init__(self):
        if not 0.0 <= self.sigma_min < 1.0:
            raise ConfigError("sigma_min must be in [0, 1)")
        if self.target not in TARGETS:
            raise ConfigError(f"target must be one of {TARGETS}")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    steps: int = 5000
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    p_drop: float = 0.1
    sigma_min: float = 0.0
    target: str = "normalized"
    seed: int = 0
    normalize: bool = True

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if not 0.0 <= self.p_drop < 1.0:
            raise ConfigError("p_drop must be in [0, 1)")
        PathParams(self.sigma_min, self.target)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        data = json.loads(Path(path).read_text())
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**data)


def _check_t(t, upper_open: bool):
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > 1.0) or (upper_open and np.any(t >= 1.0)):
        raise ConfigError("t outside its allowed range")
    return t


def _bcast_t(t: np.ndarray, ndim: int) -> np.ndarray:
    # per-item t (B,) against (B, ...) arrays
    return t.reshape(t.shape + (1,) * (ndim - t.ndim)) if t.ndim else t


def interpolate(x0: np.ndarray, x1: np.ndarray, t, sigma_min: float = 0.0) -> np.ndarray:
    """x_t = t x1 + (1 - (1 - sigma_min) t) x0."""
    x0, x1 = np.asarray(x0, dtype=np.float64), np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ShapeError(f"x0 {x0.shape} and x1 {x1.shape} differ")
    t = _bcast_t(_check_t(t, upper_open=False), x1.ndim)
    return t * x1 + (1.0 - (1.0 - sigma_min) * t) * x0


def target_field(x0: np.ndarray, x1: np.ndarray, t, sigma_min: float = 0.0,
                 literal: bool = False) -> np.ndarray:
    """Regression target along the interpolant through (x0, x1).

    The default is the normalized conditional-OT field
    ``(x1 - (1 - sigma_min) x_t) / (1 - (1 - sigma_min) t)``, which equals
    ``x1 - (1 - sigma_min) x0`` and hence ``x1 - x0`` when ``sigma_min = 0``.
    ``literal=True`` drops the denominator.
    """
    x0, x1 = np.asarray(x0, dtype=np.float64), np.asarray(x1, dtype=np.float64)
    t = _check_t(t, upper_open=False)
    xt = interpolate(x0, x1, t, sigma_min)
    num = x1 - (1.0 - sigma_min) * xt
    if literal:
        return num
    denom = 1.0 - (1.0 - sigma_min) * t
    if np.any(denom < 1e-9):
        raise NumericError("target field denominator below 1e-9 (t too close to 1 with sigma_min=0)")
    if sigma_min == 0.0:
        # the closed form collapses to x1 - x0 exactly
        return x1 - x0
    return num / _bcast_t(denom, x1.ndim)


def cfm_loss(
    model: VectorFieldModel,
    x1: np.ndarray,
    labels,
    path: PathParams = PathParams(),
    p_drop: float = 0.1,
    rng: Optional[np.random.Generator] = None,
    stats: Optional[dict] = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Conditional flow-matching loss on one batch and its parameter gradients.

    Draws, in order: x0 ~ N(0, I), t ~ U[0, T_MAX], per-item dropout of the
    condition. ``stats`` (if given) accumulates ``samples`` and ``null`` and
    keeps the last batch's ``x0``, ``t`` and regression ``target``.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    if x1.ndim != 3 or x1.shape[0] == 0:
        raise ShapeError("cfm_loss needs a non-empty (B, T, D) batch")
    rng = rng if rng is not None else np.random.default_rng()
    B = x1.shape[0]
    x0 = rng.standard_normal(x1.shape)
    t = rng.uniform(0.0, T_MAX, size=B)
    rows = label_indices(model, labels, B)
    rows = np.where(rng.random(B) < p_drop, model.null_index, rows)
    if stats is not None:
        stats["samples"] = stats.get("samples", 0) + B
        stats["null"] = stats.get("null", 0) + int(np.sum(rows == model.null_index))

    xt = interpolate(x0, x1, t, path.sigma_min)
    w = target_field(x0, x1, t, path.sigma_min, literal=path.target == "literal")
    if stats is not None:
        stats.update(x0=x0, t=t, target=w)

    def build(p):
        v = field_graph(model.config, p, p["__xt"], t, rows)
        return ad.mean(ad.sum(ad.square(v - w), axis=(1, 2)))

    inputs = dict(model.params)
    inputs["__xt"] = xt
    return ad.forward_backward(build, inputs, params=model.params.keys())


@dataclass
class TrainResult:
    model: VectorFieldModel
    normalizer: Normalizer
    log: list[tuple[int, float, float]] = field(default_factory=list)
    weights_sha256: Optional[str] = None

    def losses(self) -> np.ndarray:
        return np.array([row[1] for row in self.log])


def _stack(seqs: list[MotionSequence]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([s.values for s in seqs])
    labels = np.array([-1 if s.condition is None else s.condition for s in seqs], dtype=np.int64)
    return x, labels


def train(
    dataset: list[MotionSequence],
    model_config: ModelConfig,
    train_config: TrainConfig = TrainConfig(),
    out_dir: Optional[str | Path] = None,
    init_seed: Optional[int] = None,
) -> TrainResult:
    """Sample -> interpolate -> regress, for ``train_config.steps`` AdamW steps.

    With ``out_dir`` the final (or last finite) weights, the config sidecar and
    ``train_log.csv`` are written there.
    """
    if not dataset:
        raise ConfigError("cannot train on an empty dataset")
    train_config.validate()
    normalizer = Normalizer.fit(dataset) if train_config.normalize else Normalizer.identity(model_config.dim)
    x_all, labels_all = _stack(dataset)
    x_all = normalizer.encode(x_all)

    model = init_model(model_config, train_config.seed if init_seed is None else init_seed)
    path = PathParams(train_config.sigma_min, train_config.target)
    opt = init_state(model.params, lr=train_config.lr, beta1=train_config.beta1,
                     beta2=train_config.beta2, weight_decay=train_config.weight_decay)
    rng = np.random.default_rng(train_config.seed)
    result = TrainResult(model, normalizer)

    for step in range(1, train_config.steps + 1):
        idx = rng.integers(0, len(x_all), size=train_config.batch_size)
        try:
            loss, grads = cfm_loss(model, x_all[idx], labels_all[idx], path, train_config.p_drop, rng)
            if not np.isfinite(loss):
                raise NumericError(f"loss is {loss}")
            params, opt = optimizer_step(model.params, grads, opt)
        except NumericError as exc:
            if out_dir is not None:
                _write_outputs(out_dir, result, model_config, train_config)
            raise TrainingDiverged(f"training diverged at step {step}: {exc}", result, step) from exc
        model.params = params
        result.log.append((step, loss, train_config.lr))
        if step % 500 == 0:
            log.info("step %d loss %.5f", step, loss)

    if out_dir is not None:
        _write_outputs(out_dir, result, model_config, train_config)
    return result


def _write_outputs(out_dir, result: TrainResult, model_config: ModelConfig, train_config: TrainConfig):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.weights_sha256 = save_model(out / "model", result.model, result.normalizer,
                                       extra={"train_config": asdict(train_config)})
    with open(out / "train_log.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "lr"])
        for step, loss, lr in result.log:
            writer.writerow([step, repr(loss), repr(lr)])

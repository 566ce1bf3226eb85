"""Vector-field estimator v(x_t, t, c; theta).

The transformer variant embeds every frame with a linear projection plus a
positional embedding, and prepends one extra token carrying the summed time
and condition embeddings. Frame-position outputs are projected back to the
feature dimension. The ``mlp`` variant flattens the whole sequence and is
meant for tiny toy problems.

Condition rows ``0..K-1`` are class labels; row ``K`` is the learned null
embedding used for classifier-free guidance.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, FormatError, ShapeError
from .motion.normalize import Normalizer
from .numerics import autodiff as ad
from .numerics.checkpoint import load_params, save_params

ARCHITECTURES = ("transformer", "mlp")


@dataclass(frozen=True)
class ModelConfig:
    dim: int
    frames: int
    d_model: int = 64
    layers: int = 2
    heads: int = 4
    d_ff: int = 128
    classes: int = 1
    cond_dim: int = 64
    time_features: int = 32
    architecture: str = "transformer"

    def validate(self) -> None:
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {ARCHITECTURES}")
        for name in ("dim", "frames", "d_model", "layers", "heads", "d_ff", "classes",
                     "cond_dim", "time_features"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.d_model % self.heads:
            raise ConfigError("d_model must be divisible by heads")
        if self.time_features % 2:
            raise ConfigError("time_features must be even")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ConditionEmbedding:
    vector: np.ndarray
    is_null: bool
    label: Optional[int] = None


@dataclass
class VectorFieldModel:
    config: ModelConfig
    params: dict[str, np.ndarray]

    @property
    def null_index(self) -> int:
        return self.config.classes

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))


# ---------------------------------------------------------------- init

def init_model(config: ModelConfig, seed: int = 0) -> VectorFieldModel:
    config.validate()
    rng = np.random.default_rng(seed)
    d, D = config.d_model, config.dim
    p: dict[str, np.ndarray] = {}

    def dense(name, fan_in, fan_out, zero=False):
        p[f"{name}.w"] = (np.zeros((fan_in, fan_out)) if zero
                          else rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out)))
        p[f"{name}.b"] = np.zeros(fan_out)

    dense("time.0", config.time_features, d)
    dense("time.1", d, d)
    p["cond.table"] = rng.normal(0.0, 1.0, size=(config.classes + 1, config.cond_dim))
    dense("cond.proj", config.cond_dim, d)

    if config.architecture == "transformer":
        dense("input", D, d)
        p["pos"] = _sinusoid(np.arange(config.frames, dtype=np.float64), d)
        for i in range(config.layers):
            pre = f"block{i}"
            p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"] = np.ones(d), np.zeros(d)
            dense(f"{pre}.qkv", d, 3 * d)
            dense(f"{pre}.attn_out", d, d)
            p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"] = np.ones(d), np.zeros(d)
            dense(f"{pre}.ff1", d, config.d_ff)
            dense(f"{pre}.ff2", config.d_ff, d)
        p["final_ln.g"], p["final_ln.b"] = np.ones(d), np.zeros(d)
        dense("output", d, D, zero=True)
    else:
        flat = config.frames * D
        dense("input", flat, d)
        for i in range(config.layers):
            dense(f"hidden{i}", d, d)
        dense("output", d, flat, zero=True)
    return VectorFieldModel(config, p)


def _sinusoid(x: np.ndarray, width: int, scale: float = 1.0) -> np.ndarray:
    """Standard sin/cos features, (n,) -> (n, width)."""
    half = width // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    arg = scale * x[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(arg), np.cos(arg)], axis=1)
    if width % 2:
        emb = np.concatenate([emb, np.zeros((len(x), 1))], axis=1)
    return emb


def time_features(t: np.ndarray, width: int) -> np.ndarray:
    return _sinusoid(np.asarray(t, dtype=np.float64), width, scale=1000.0)


# ---------------------------------------------------------------- conditions

def embed_condition(model: VectorFieldModel, label: Optional[int]) -> ConditionEmbedding:
    table = model.params["cond.table"]
    if label is None:
        return ConditionEmbedding(table[model.null_index].copy(), True, None)
    label = int(label)
    if not 0 <= label < model.config.classes:
        raise ConfigError(f"condition label {label} outside [0, {model.config.classes})")
    return ConditionEmbedding(table[label].copy(), False, label)


def label_indices(model: VectorFieldModel, labels, batch: int) -> np.ndarray:
    """Map labels (int, None, or a per-item sequence) to table rows."""
    K = model.config.classes
    if labels is None or isinstance(labels, (int, np.integer)):
        labels = [labels] * batch
    labels = list(labels)
    if len(labels) != batch:
        raise ShapeError(f"{len(labels)} labels for a batch of {batch}")
    idx = np.empty(batch, dtype=np.int64)
    for i, lab in enumerate(labels):
        if lab is None or (isinstance(lab, (int, np.integer)) and lab < 0):
            idx[i] = K
        elif 0 <= int(lab) < K:
            idx[i] = int(lab)
        else:
            raise ConfigError(f"condition label {lab} outside [0, {K})")
    return idx


# ---------------------------------------------------------------- forward graph

def _linear(x: ad.Node, p: dict, name: str) -> ad.Node:
    w, b = p[f"{name}.w"], p[f"{name}.b"]
    if x.ndim == 2:
        return x @ w + b
    lead = x.shape[:-1]
    flat = ad.reshape(x, (-1, x.shape[-1]))
    return ad.reshape(flat @ w + b, lead + (w.shape[1],))


def _attention(h: ad.Node, p: dict, pre: str, heads: int) -> ad.Node:
    B, S, d = h.shape
    dh = d // heads
    qkv = _linear(h, p, f"{pre}.qkv")

    def split(part):
        x = qkv[:, :, part * d:(part + 1) * d]
        return ad.transpose(ad.reshape(x, (B, S, heads, dh)), (0, 2, 1, 3))

    q, k, v = split(0), split(1), split(2)
    scores = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
    out = ad.matmul(ad.softmax(scores, axis=-1), v)
    out = ad.reshape(ad.transpose(out, (0, 2, 1, 3)), (B, S, d))
    return _linear(out, p, f"{pre}.attn_out")


def field_graph(
    config: ModelConfig,
    p: dict[str, ad.Node],
    x: ad.Node,
    t: np.ndarray,
    cond: Union[np.ndarray, ad.Node],
) -> ad.Node:
    """Record v(x, t, c) on ``x``'s tape.

    ``x`` is (B, T, D); ``t`` has shape (B,); ``cond`` is either an int
    array of table rows (differentiable lookup through a one-hot matmul) or a
    (B, cond_dim) node/array of raw condition vectors.
    """
    tape = x.tape
    B = x.shape[0]
    temb = _linear(ad.gelu(_linear(tape.const(time_features(t, config.time_features)), p, "time.0")),
                   p, "time.1")
    if isinstance(cond, np.ndarray) and cond.dtype.kind in "iu":
        onehot = np.zeros((B, config.classes + 1))
        onehot[np.arange(B), cond] = 1.0
        cvec = tape.const(onehot) @ p["cond.table"]
    else:
        cvec = cond if isinstance(cond, ad.Node) else tape.const(cond)
    prefix = temb + _linear(cvec, p, "cond.proj")  # (B, d)

    if config.architecture == "mlp":
        flat = ad.reshape(x, (B, -1))
        h = _linear(flat, p, "input") + prefix
        for i in range(config.layers):
            h = ad.gelu(_linear(h, p, f"hidden{i}"))
        return ad.reshape(_linear(h, p, "output"), x.shape)

    d = config.d_model
    tokens = _linear(x, p, "input") + p["pos"]
    h = ad.concat([ad.reshape(prefix, (B, 1, d)), tokens], axis=1)
    for i in range(config.layers):
        pre = f"block{i}"
        h = h + _attention(ad.layer_norm(h, p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"]), p, pre, config.heads)
        ff = ad.layer_norm(h, p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"])
        h = h + _linear(ad.gelu(_linear(ff, p, f"{pre}.ff1")), p, f"{pre}.ff2")
    h = ad.layer_norm(h[:, 1:, :], p["final_ln.g"], p["final_ln.b"])
    return _linear(h, p, "output")


def _check_inputs(config: ModelConfig, x: np.ndarray, t) -> tuple[np.ndarray, np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (config.frames, config.dim):
        raise ShapeError(f"expected motion of shape (T={config.frames}, D={config.dim}), got {x.shape}")
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],)).copy()
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ConfigError("t must lie in [0, 1]")
    return x, t, single


def predict_field(model: VectorFieldModel, x_t: np.ndarray, t, c=None) -> np.ndarray:
    """Evaluate the field without recording gradients.

    ``x_t`` is (T, D) or (B, T, D). ``c`` may be a :class:`ConditionEmbedding`,
    a label, ``None`` (null condition) or a per-item label sequence.
    """
    x, t, single = _check_inputs(model.config, x_t, t)
    B = x.shape[0]
    if isinstance(c, ConditionEmbedding):
        cond = np.broadcast_to(c.vector, (B, model.config.cond_dim)).astype(np.float64)
    else:
        cond = label_indices(model, c, B)
    tape = ad.Tape()
    try:
        p = {k: tape.const(v) for k, v in model.params.items()}
        out = field_graph(model.config, p, tape.const(x), t, cond).value
    finally:
        tape.clear()
    return out[0] if single else out


# ---------------------------------------------------------------- persistence

def save_model(prefix: str | Path, model: VectorFieldModel,
               normalizer: Optional[Normalizer] = None, extra: Optional[dict] = None) -> str:
    """Write ``<prefix>.mfm`` (weights) and ``<prefix>.json`` (config sidecar).

    Returns the sha256 of the weight file.
    """
    prefix = Path(prefix)
    digest = save_params(prefix.with_suffix(".mfm"), model.params)
    sidecar = {"config": model.config.to_dict(), "weights_sha256": digest}
    if normalizer is not None:
        sidecar["normalizer"] = normalizer.to_dict()
    if extra:
        sidecar.update(extra)
    prefix.with_suffix(".json").write_text(json.dumps(sidecar, indent=1))
    return digest


def load_model(prefix: str | Path) -> tuple[VectorFieldModel, Normalizer]:
    prefix = Path(prefix)
    if prefix.suffix in (".mfm", ".json"):
        prefix = prefix.with_suffix("")
    try:
        sidecar = json.loads(prefix.with_suffix(".json").read_text())
        config = ModelConfig(**sidecar["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad model sidecar for {prefix}: {exc}") from None
    params = load_params(prefix.with_suffix(".mfm"))
    expected = init_model(config, 0).params
    if set(params) != set(expected) or any(params[k].shape != v.shape for k, v in expected.items()):
        raise FormatError(f"checkpoint {prefix} does not match its config")
    norm = sidecar.get("normalizer")
    normalizer = Normalizer.from_dict(norm) if norm else Normalizer.identity(config.dim)
    return VectorFieldModel(config, params), normalizer


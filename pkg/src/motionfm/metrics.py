"""Generation and editing metrics over a deterministic feature extractor.

The extractor pools every sequence into its per-channel temporal mean and
standard deviation and maps that vector to ``out_dim`` features, either by a
seeded random projection or by the encoder of a small autoencoder fitted on
the data. Absolute values are therefore not comparable with numbers computed
by any pretrained motion/text extractor.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, ShapeError
from .motion.layout import MotionSequence, PoseLayout
from .numerics import autodiff as ad
from .numerics.linalg import matrix_sqrt_psd
from .numerics.optim import init_state, optimizer_step

NOTICE = ("Features come from a desk-scale stand-in extractor; values are not comparable "
          "with published FID / R-Precision numbers.")

Motions = Union[np.ndarray, Sequence[MotionSequence]]


# ---------------------------------------------------------------- features

@dataclass
class FeatureSet:
    values: np.ndarray
    tag: str = "pred"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError(f"features must be (n, F), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ShapeError("features contain non-finite values")

    def __len__(self) -> int:
        return self.values.shape[0]


def _arr(f) -> np.ndarray:
    return f.values if isinstance(f, FeatureSet) else np.asarray(f, dtype=np.float64)


def _stack_motions(motions: Motions) -> np.ndarray:
    if isinstance(motions, np.ndarray):
        x = motions if motions.ndim == 3 else motions[None]
    else:
        motions = list(motions)
        if not motions:
            raise ShapeError("no motions to extract features from")
        layouts = {m.layout for m in motions}
        if len(layouts) > 1:
            raise ShapeError("motions do not share a layout")
        x = np.stack([m.values for m in motions])
    if x.shape[0] == 0:
        raise ShapeError("no motions to extract features from")
    return np.asarray(x, dtype=np.float64)


def pool(motions: Motions) -> np.ndarray:
    """(n, T, D) -> (n, 2D): temporal mean then temporal std."""
    x = _stack_motions(motions)
    return np.concatenate([x.mean(axis=1), x.std(axis=1)], axis=1)


@dataclass
class FeatureExtractor:
    kind: str
    input_dim: int
    out_dim: int
    seed: int
    params: dict = field(default_factory=dict, repr=False)

    @classmethod
    def random_projection(cls, dim: int, out_dim: int = 16, seed: int = 0) -> "FeatureExtractor":
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((2 * dim, out_dim)) / math.sqrt(2 * dim)
        return cls("random_projection", dim, out_dim, seed, {"w": w})

    @classmethod
    def trained_encoder(cls, motions: Motions, out_dim: int = 16, seed: int = 0,
                        steps: int = 500, hidden: int = 64, lr: float = 3e-3) -> "FeatureExtractor":
        """Fit a pooled-stats autoencoder and keep its encoder."""
        x = pool(motions)
        mu, sd = x.mean(axis=0), x.std(axis=0)
        sd = np.where(sd < 1e-8, 1.0, sd)
        z = (x - mu) / sd
        rng = np.random.default_rng(seed)
        n_in = z.shape[1]
        params = {
            "enc1.w": rng.normal(0, 1 / math.sqrt(n_in), (n_in, hidden)), "enc1.b": np.zeros(hidden),
            "enc2.w": rng.normal(0, 1 / math.sqrt(hidden), (hidden, out_dim)), "enc2.b": np.zeros(out_dim),
            "dec1.w": rng.normal(0, 1 / math.sqrt(out_dim), (out_dim, hidden)), "dec1.b": np.zeros(hidden),
            "dec2.w": rng.normal(0, 1 / math.sqrt(hidden), (hidden, n_in)), "dec2.b": np.zeros(n_in),
        }
        state = init_state(params, lr=lr)

        def loss(p):
            code = ad.tanh(p["x"] @ p["enc1.w"] + p["enc1.b"]) @ p["enc2.w"] + p["enc2.b"]
            recon = ad.tanh(code @ p["dec1.w"] + p["dec1.b"]) @ p["dec2.w"] + p["dec2.b"]
            return ad.mean(ad.square(recon - p["x"]))

        for _ in range(steps):
            batch = z[rng.integers(0, len(z), size=min(64, len(z)))]
            _, grads = ad.forward_backward(loss, {**params, "x": batch}, params=params.keys())
            params, state = optimizer_step(params, grads, state)
        enc = {k: v for k, v in params.items() if k.startswith("enc")}
        enc.update(mu=mu, sd=sd)
        return cls("trained_encoder", x.shape[1] // 2, out_dim, seed, enc)

    def project(self, pooled: np.ndarray) -> np.ndarray:
        if pooled.shape[-1] != 2 * self.input_dim:
            raise ShapeError(f"extractor expects {2 * self.input_dim} pooled channels, got {pooled.shape[-1]}")
        if self.kind == "random_projection":
            return pooled @ self.params["w"]
        p = self.params
        z = (pooled - p["mu"]) / p["sd"]
        return np.tanh(z @ p["enc1.w"] + p["enc1.b"]) @ p["enc2.w"] + p["enc2.b"]

    def describe(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "out_dim": self.out_dim}


def extract_features(motions: Motions, extractor: FeatureExtractor, tag: str = "pred") -> FeatureSet:
    return FeatureSet(extractor.project(pool(motions)), tag)


def text_features(class_motions: dict[int, Motions], labels: Sequence[int],
                  extractor: FeatureExtractor) -> FeatureSet:
    """Per-label "text" features: the extractor applied to each class centroid."""
    centroids = {k: extractor.project(pool(m).mean(axis=0, keepdims=True))[0]
                 for k, m in class_motions.items()}
    try:
        rows = [centroids[int(k)] for k in labels]
    except KeyError as exc:
        raise ConfigError(f"no reference motions for label {exc}") from None
    return FeatureSet(np.array(rows), "text")


# ---------------------------------------------------------------- distribution metrics

def fid_from_stats(mu_a, cov_a, mu_b, cov_b) -> float:
    """Frechet distance between two Gaussians.

    The cross term uses tr((A^1/2 B A^1/2)^1/2), which equals tr((AB)^1/2)
    for PSD inputs. Clamped at 0.
    """
    mu_a, mu_b = np.asarray(mu_a, float), np.asarray(mu_b, float)
    cov_a, cov_b = np.atleast_2d(cov_a), np.atleast_2d(cov_b)
    if mu_a.shape != mu_b.shape or cov_a.shape != cov_b.shape:
        raise ShapeError("feature dimensions differ")
    root_a = matrix_sqrt_psd(cov_a)
    cross = matrix_sqrt_psd(root_a @ cov_b @ root_a)
    diff = mu_a - mu_b
    value = diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(cross)
    return max(float(value), 0.0)


def gaussian_stats(f) -> tuple[np.ndarray, np.ndarray]:
    x = _arr(f)
    if x.shape[0] < 2:
        raise ShapeError("need at least 2 feature vectors for a covariance")
    return x.mean(axis=0), np.atleast_2d(np.cov(x, rowvar=False, ddof=1))


def fid(f_a, f_b) -> float:
    mu_a, cov_a = gaussian_stats(f_a)
    mu_b, cov_b = gaussian_stats(f_b)
    return fid_from_stats(mu_a, cov_a, mu_b, cov_b)


def diversity_pairs(n: int, s_dis: int, rng: np.random.Generator) -> np.ndarray:
    """Disjoint index pairs, drawn without replacement.

    Falls back to ``n // 2`` pairs when there are fewer than ``2 * s_dis`` items.
    """
    if n < 2:
        raise ShapeError("diversity needs at least 2 feature vectors")
    count = min(s_dis, n // 2)
    perm = rng.permutation(n)[: 2 * count]
    return perm.reshape(count, 2)


def diversity(f, s_dis: int = 300, rng: Optional[np.random.Generator] = None,
              pairs: Optional[np.ndarray] = None) -> float:
    x = _arr(f)
    if pairs is None:
        pairs = diversity_pairs(len(x), s_dis, rng if rng is not None else np.random.default_rng(0))
    pairs = np.asarray(pairs)
    return float(np.linalg.norm(x[pairs[:, 0]] - x[pairs[:, 1]], axis=1).mean())


def mm_dist(f_pred, f_text) -> float:
    a, b = _arr(f_pred), _arr(f_text)
    if a.shape != b.shape:
        raise ShapeError(f"motion/text feature counts differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b, axis=1).mean())


def mmodality(grouped, rng: Optional[np.random.Generator] = None, subset: int = 10) -> float:
    """``grouped`` is (N conditions, G generations, F) with G >= 2 * subset."""
    x = np.asarray(grouped, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError("mmodality expects (conditions, generations, features)")
    if x.shape[1] < 2 * subset:
        raise ConfigError(f"mmodality needs >= {2 * subset} generations per condition, got {x.shape[1]}")
    rng = rng if rng is not None else np.random.default_rng(0)
    total = 0.0
    for group in x:
        idx = rng.choice(len(group), size=2 * subset, replace=False)
        total += np.linalg.norm(group[idx[:subset]] - group[idx[subset:]], axis=1).sum()
    return float(total / (subset * len(x)))


def r_precision_top3(f_pred, f_text, batch: int = 32, rng: Optional[np.random.Generator] = None,
                     top_k: int = 3) -> float:
    """Fraction of motions whose own text ranks in the top ``top_k`` of its batch.

    Pairs are shuffled by ``rng`` (kept in order if ``None``) and cut into
    batches of ``batch``; a trailing partial batch is dropped. Equal distances
    rank the lower batch index first.
    """
    a, b = _arr(f_pred), _arr(f_text)
    if a.shape != b.shape:
        raise ShapeError("motion/text feature counts differ")
    n = len(a)
    if n < batch:
        raise ConfigError(f"R-Precision needs at least {batch} pairs, got {n}")
    order = rng.permutation(n) if rng is not None else np.arange(n)
    hits = trials = 0
    for start in range(0, n - batch + 1, batch):
        idx = order[start:start + batch]
        d = np.linalg.norm(a[idx][:, None, :] - b[idx][None, :, :], axis=-1)
        ranks = np.argsort(d, axis=1, kind="stable")[:, :top_k]
        hits += int(np.sum(ranks == np.arange(batch)[:, None]))
        trials += batch
    return hits / trials


# ---------------------------------------------------------------- editing metrics

def ade_fde(pred, gt, region: np.ndarray, layout: PoseLayout) -> tuple[float, float]:
    """Joint-position errors over the frames selected by ``region``.

    ADE averages per-joint Euclidean error over region frames and joints;
    FDE averages it over joints at the last region frame. Batches average
    over items.
    """
    p = pred.values if isinstance(pred, MotionSequence) else np.asarray(pred, dtype=np.float64)
    g = gt.values if isinstance(gt, MotionSequence) else np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ShapeError(f"prediction {p.shape} and ground truth {g.shape} differ")
    region = np.asarray(region, dtype=bool)
    if region.shape != (p.shape[-2],):
        raise ShapeError("region must be a boolean per frame")
    if not region.any():
        raise ConfigError("empty evaluation region")
    err = np.linalg.norm(layout.joint_positions(p) - layout.joint_positions(g), axis=-1)  # (..., T, J)
    frames = np.flatnonzero(region)
    ade = err[..., frames, :].mean()
    fde = err[..., frames[-1], :].mean()
    return float(ade), float(fde)


# ---------------------------------------------------------------- repetition + report

def repeat_metric(fn: Callable[[np.random.Generator], float], n_reps: int = 20, seed: int = 0) -> dict:
    """Run ``fn`` with ``n_reps`` independent generators; mean and 95% half-width."""
    if n_reps < 1:
        raise ConfigError("n_reps must be >= 1")
    seeds = np.random.SeedSequence(seed).spawn(n_reps)
    return summarize([fn(np.random.default_rng(s)) for s in seeds])


def summarize(values: Sequence[float]) -> dict:
    vals = np.asarray(values, dtype=np.float64)
    n = len(vals)
    ci = 1.96 * vals.std(ddof=1) / math.sqrt(n) if n > 1 else 0.0
    return {"mean": float(vals.mean()), "ci95": float(ci), "n_reps": n}


@dataclass
class MetricsReport:
    extractor: dict
    metrics: dict[str, dict] = field(default_factory=dict)

    def add(self, name: str, result: dict, **extra) -> None:
        self.metrics[name] = {**result, "extractor": self.extractor, **extra}

    def to_dict(self) -> dict:
        return {"notice": NOTICE, **self.metrics}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

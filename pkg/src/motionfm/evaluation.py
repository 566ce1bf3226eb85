"""End-to-end evaluation loops built on the sampler and the metrics."""

from __future__ import annotations

import time
from collections import defaultdict
from typing import Optional, Sequence

import numpy as np

from .metrics import (FeatureExtractor, MetricsReport, diversity, extract_features, fid,
                      mm_dist, mmodality, r_precision_top3, summarize, text_features)
from .model import VectorFieldModel
from .motion.layout import MotionSequence
from .motion.normalize import Normalizer
from .sampling import SamplerConfig, draw_noise, sample


def cycle_labels(model: VectorFieldModel, n: int) -> np.ndarray:
    return np.arange(n) % model.config.classes


def generate(model: VectorFieldModel, normalizer: Normalizer, labels, config: SamplerConfig,
             n: Optional[int] = None) -> np.ndarray:
    """Samples decoded to raw feature space, shape (n, T, D)."""
    if n is None:
        n = len(labels)
    x, _ = sample(model, labels, config, n=n)
    return normalizer.decode(x)


def by_label(seqs: Sequence[MotionSequence]) -> dict[int, list[MotionSequence]]:
    groups: dict[int, list[MotionSequence]] = defaultdict(list)
    for s in seqs:
        groups[-1 if s.condition is None else s.condition].append(s)
    return dict(groups)


def noise_fid(model: VectorFieldModel, normalizer: Normalizer, heldout, extractor: FeatureExtractor,
              n: int, seed: int = 0) -> float:
    """FID of the sampler's starting noise, mapped to data space, against ``heldout``."""
    cfg = model.config
    x0 = normalizer.decode(draw_noise(seed, (n, cfg.frames, cfg.dim)))
    return fid(extract_features(x0, extractor), extract_features(heldout, extractor, "gt"))


def nfe_curve(model: VectorFieldModel, normalizer: Normalizer, heldout, steps: Sequence[int],
              extractor: FeatureExtractor, n: int = 500, seed: int = 0, guidance: float = 1.0,
              solver: str = "euler") -> list[dict]:
    """FID against ``heldout`` for each step count, same noise for every row."""
    ref = extract_features(heldout, extractor, "gt")
    labels = cycle_labels(model, n)
    rows = []
    for N in steps:
        start = time.perf_counter()
        x = generate(model, normalizer, labels, SamplerConfig(solver, int(N), guidance, seed))
        elapsed = time.perf_counter() - start
        rows.append({"nfe": int(N), "fid": fid(extract_features(x, extractor), ref),
                     "avg_infer_seconds": elapsed / n})
    return rows


def guidance_sweep(model: VectorFieldModel, normalizer: Normalizer, heldout, scales: Sequence[float],
                   extractor: FeatureExtractor, n: int = 500, steps: int = 10, seed: int = 0) -> list[dict]:
    ref = extract_features(heldout, extractor, "gt")
    groups = by_label(heldout)
    labels = cycle_labels(model, n)
    text = text_features(groups, labels, extractor) if all(k in groups for k in set(labels)) else None
    rows = []
    for s in scales:
        x = generate(model, normalizer, labels, SamplerConfig("euler", steps, float(s), seed))
        feats = extract_features(x, extractor)
        row = {"guidance": float(s), "fid": fid(feats, ref),
               "diversity": diversity(feats, 300, np.random.default_rng(seed))}
        if text is not None:
            row["mm_dist"] = mm_dist(feats, text)
            row["r_precision_top3"] = r_precision_top3(feats, text, rng=np.random.default_rng(seed))
        rows.append(row)
    return rows


def evaluate_generation(model: VectorFieldModel, normalizer: Normalizer, heldout: Sequence[MotionSequence],
                        extractor: FeatureExtractor, n: int = 256, reps: int = 20, steps: int = 10,
                        guidance: float = 1.0, mm_conditions: int = 4, mm_generations: int = 30,
                        seed: int = 0) -> MetricsReport:
    """FID, Diversity, MM-Dist, R-Precision@3 and MModality, each repeated ``reps`` times."""
    ref = extract_features(heldout, extractor, "gt")
    groups = by_label(heldout)
    labels = cycle_labels(model, n)
    have_text = all(k in groups for k in set(labels))
    text = text_features(groups, labels, extractor) if have_text else None
    conds = list(range(min(mm_conditions, model.config.classes)))
    mm_labels = np.repeat(conds, mm_generations)

    scores: dict[str, list[float]] = defaultdict(list)
    for child in np.random.SeedSequence(seed).spawn(reps):
        rng = np.random.default_rng(child)
        cfg = SamplerConfig("euler", steps, guidance, int(rng.integers(2**31)))
        feats = extract_features(generate(model, normalizer, labels, cfg), extractor)
        scores["fid"].append(fid(feats, ref))
        scores["diversity"].append(diversity(feats, 300, rng))
        if have_text:
            scores["mm_dist"].append(mm_dist(feats, text))
            scores["r_precision_top3"].append(r_precision_top3(feats, text, rng=rng))
        cfg = SamplerConfig("euler", steps, guidance, int(rng.integers(2**31)))
        grouped = extract_features(generate(model, normalizer, mm_labels, cfg), extractor).values
        scores["mmodality"].append(mmodality(grouped.reshape(len(conds), mm_generations, -1), rng))

    report = MetricsReport(extractor.describe())
    for name, vals in scores.items():
        report.add(name, summarize(vals))
    return report

"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The summary lines are collected by ``conftest.pytest_terminal_summary`` and
appear at the end of the pytest output. Training-backed criteria share two
module fixtures (gaussian-shift toy and sine-walker); their training time is
reported with the first criterion that uses them.
"""

import csv
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from motionfm.editing import EditConfig, build_mask, evaluate_edits, rewrite_sample
from motionfm.evaluation import guidance_sweep, nfe_curve, noise_fid
from motionfm.metrics import (FeatureExtractor, ade_fde, diversity, diversity_pairs, extract_features, fid,
                              fid_from_stats, mm_dist, mmodality, r_precision_top3)
from motionfm.model import ModelConfig, VectorFieldModel, init_model, predict_field
from motionfm.motion import PoseLayout, SyntheticDatasetSpec, feature_dim, gen_synthetic_dataset, split_dataset
from motionfm.sampling import SamplerConfig, guided_field, sample
from motionfm.training import PathParams, TrainConfig, cfm_loss, train

pytestmark = pytest.mark.slow

# gaussian-shift toy: K=2, j=2 (D=23), T=8
TOY_SPEC = SyntheticDatasetSpec("gaussian-shift", joints=2, frames=8, classes=2, samples_per_class=2000,
                                seed=0, noise=0.25)
TOY_TRAIN = TrainConfig(batch_size=64, steps=5000, lr=1e-4, seed=0)
TOY_EVAL_N = 1000

# sine-walker editing suite
SW_JOINTS, SW_FRAMES, SW_PREFIX = 4, 24, 8
SW_SPEC = SyntheticDatasetSpec("sine-walker", joints=SW_JOINTS, frames=SW_FRAMES, classes=2,
                               samples_per_class=1000, seed=0)
SW_TRAIN = TrainConfig(batch_size=64, steps=3000, lr=1e-3, seed=0)
SW_EDITS = 500


@contextmanager
def criterion(number: int, title: str):
    """Time the block and record one PASS/FAIL line; re-raise on failure."""
    detail = {}
    start = time.perf_counter()
    try:
        yield detail
    except BaseException as exc:
        secs = time.perf_counter() - start + detail.get("setup_seconds", 0.0)
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        ACCEPTANCE_LINES[number] = f"[{number:02d}] FAIL {title} ({secs:.1f}s): {detail.get('info', '')} {msg}"
        print(ACCEPTANCE_LINES[number])
        raise
    secs = time.perf_counter() - start + detail.get("setup_seconds", 0.0)
    ACCEPTANCE_LINES[number] = f"[{number:02d}] PASS {title} ({secs:.1f}s): {detail.get('info', '')}"
    print(ACCEPTANCE_LINES[number])


# ---------------------------------------------------------------- fixtures

@pytest.fixture(scope="module")
def toy():
    start = time.perf_counter()
    data = gen_synthetic_dataset(TOY_SPEC)
    tr, held = split_dataset(data, 0.25, 0)
    cfg = ModelConfig(dim=feature_dim(TOY_SPEC.joints), frames=TOY_SPEC.frames, classes=TOY_SPEC.classes)
    res = train(tr, cfg, TOY_TRAIN)
    ext = FeatureExtractor.random_projection(cfg.dim, 16, seed=0)
    return {"result": res, "held": held, "ext": ext, "seconds": time.perf_counter() - start}


@pytest.fixture(scope="module")
def walker():
    start = time.perf_counter()
    data = gen_synthetic_dataset(SW_SPEC)
    tr, held = split_dataset(data, 0.25, 0)
    cfg = ModelConfig(dim=feature_dim(SW_JOINTS), frames=SW_FRAMES, classes=SW_SPEC.classes)
    res = train(tr, cfg, SW_TRAIN)
    held = held[:SW_EDITS]
    return {"result": res, "refs": np.stack([s.values for s in held]), "labels": [s.condition for s in held],
            "layout": PoseLayout(SW_JOINTS), "seconds": time.perf_counter() - start, "cache": {}}


def edit_scores(walker, threshold):
    cache = walker["cache"]
    if threshold not in cache:
        res = walker["result"]
        mask = build_mask("prediction", walker["layout"], SW_FRAMES, prefix=SW_PREFIX)
        out = evaluate_edits(res.model, res.normalizer.encode(walker["refs"]), walker["labels"], mask,
                             walker["layout"], res.normalizer.decode, EditConfig(30, threshold, 1.0, 0))
        cache[threshold] = out
    return cache[threshold]


# ---------------------------------------------------------------- 1

def test_01_oracle_straightness():
    with criterion(1, "oracle straightness") as info:
        start = time.perf_counter()
        target = np.random.default_rng(0).normal(size=(1, 8, 23)) * 2.0
        errs = {}
        for n in (1, 2, 10, 100):
            x, _ = sample(lambda x, t: (target - x) / (1.0 - t), None, SamplerConfig("euler", n, seed=n),
                          n=16, shape=(8, 23))
            errs[n] = float(np.max(np.abs(x - target)))
        info["info"] = "max terminal error " + ", ".join(f"N={n}: {e:.1e}" for n, e in errs.items())
        assert max(errs.values()) <= 1e-9
        assert time.perf_counter() - start < 1.0


# ---------------------------------------------------------------- 2

def test_02_gradient_soundness():
    with criterion(2, "gradient soundness") as info:
        start = time.perf_counter()
        cfg = ModelConfig(dim=23, frames=2, d_model=16, layers=2, classes=2, cond_dim=8, time_features=8,
                          architecture="mlp")
        model = init_model(cfg, 0)
        r = np.random.default_rng(1)
        model.params["output.w"] = r.normal(0, 0.3, size=model.params["output.w"].shape)
        x1 = r.normal(size=(6, 2, 23))
        labels = [0, 1, 0, 1, None, 0]

        def loss_at(params):
            return cfm_loss(VectorFieldModel(cfg, params), x1, labels, PathParams(), 0.1,
                            np.random.default_rng(7))[0]

        _, grads = cfm_loss(model, x1, labels, PathParams(), 0.1, np.random.default_rng(7))
        h = 1e-5
        worst = 0.0
        for _ in range(50):
            d = {k: r.normal(size=v.shape) for k, v in model.params.items()}
            plus = {k: v + h * d[k] for k, v in model.params.items()}
            minus = {k: v - h * d[k] for k, v in model.params.items()}
            fd = (loss_at(plus) - loss_at(minus)) / (2 * h)
            an = sum(float(np.sum(grads[k] * d[k])) for k in d)
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-12))
        secs = time.perf_counter() - start
        info["info"] = f"worst relative error {worst:.2e} over 50 directions"
        assert worst < 1e-4
        assert secs < 10.0


# ---------------------------------------------------------------- 3

def test_03_target_equals_difference():
    with criterion(3, "sigma_min=0 target is x1 - x0") as info:
        start = time.perf_counter()
        cfg = ModelConfig(dim=23, frames=2, d_model=8, layers=1, heads=2, d_ff=8, classes=1, cond_dim=4,
                          time_features=4, architecture="mlp")
        x1 = np.random.default_rng(3).normal(size=(1000, 2, 23)) * 3
        stats = {}
        cfm_loss(init_model(cfg, 0), x1, 0, PathParams(sigma_min=0.0), 0.1, np.random.default_rng(4), stats)
        w, x0 = stats["target"], stats["x0"]
        exact = int(sum(np.array_equal(w[i], x1[i] - x0[i]) for i in range(1000)))
        info["info"] = (f"{exact}/1000 training targets exact, t in [{stats['t'].min():.3f}, "
                        f"{stats['t'].max():.3f}]")
        assert exact == 1000
        assert time.perf_counter() - start < 1.0


# ---------------------------------------------------------------- 4

def test_04_training_progress(toy):
    with criterion(4, "training progress") as info:
        info["setup_seconds"] = toy["seconds"]
        res, held, ext = toy["result"], toy["held"], toy["ext"]
        losses = res.losses()
        ma = np.convolve(losses, np.ones(100) / 100, mode="valid")
        loss_ratio = ma[-1] / ma[0]
        labels = np.arange(TOY_EVAL_N) % 2
        x, _ = sample(res.model, labels, SamplerConfig("euler", 10, 1.0, 0), n=TOY_EVAL_N)
        gen = fid(extract_features(res.normalizer.decode(x), ext), extract_features(held, ext, "gt"))
        base = noise_fid(res.model, res.normalizer, held, ext, TOY_EVAL_N)
        info["info"] = (f"MA loss {ma[0]:.1f} -> {ma[-1]:.1f} (ratio {loss_ratio:.3f} < 0.25); "
                        f"FID gen {gen:.3f} vs noise {base:.2f} (ratio {gen / base:.4f} < 0.2)")
        assert loss_ratio < 0.25
        assert gen < 0.2 * base
        assert toy["seconds"] < 15 * 60


# ---------------------------------------------------------------- 5

def test_05_nfe_plateau(toy, tmp_path_factory):
    with criterion(5, "NFE plateau") as info:
        start = time.perf_counter()
        res = toy["result"]
        rows = nfe_curve(res.model, res.normalizer, toy["held"], [1, 2, 5, 10, 50, 100], toy["ext"],
                         n=TOY_EVAL_N)
        f = {r["nfe"]: r["fid"] for r in rows}
        info["info"] = "FID " + ", ".join(f"N={n}: {v:.4f}" for n, v in f.items())
        assert abs(f[10] - f[100]) <= 0.25 * f[100]
        assert f[2] > f[10]
        assert time.perf_counter() - start < 5 * 60


# ---------------------------------------------------------------- 6

def test_06_guidance(toy, tmp_path_factory):
    with criterion(6, "guidance identities and sweep") as info:
        res = toy["result"]
        start = time.perf_counter()
        r = np.random.default_rng(6)
        # 100 random states, each with its own time and label, evaluated as one batch
        x = r.normal(size=(100, 8, 23))
        t = r.uniform(size=100)
        c = r.integers(0, 2, size=100)
        vc = predict_field(res.model, x, t, c)
        vn = predict_field(res.model, x, t, None)
        worst1 = float(np.max(np.abs(guided_field(res.model, x, t, c, 1.0) - vc)))
        worst0 = float(np.max(np.abs(guided_field(res.model, x, t, c, 0.0) - vn)))
        identity_secs = time.perf_counter() - start
        assert worst1 == 0.0 and worst0 == 0.0
        assert identity_secs < 1.0

        scales = [0.0, 1.0, 2.0, 2.5, 3.0, 5.0]
        rows = guidance_sweep(res.model, res.normalizer, toy["held"], scales, toy["ext"], n=500)
        path = tmp_path_factory.mktemp("accept") / "guidance_sweep.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        back = list(csv.DictReader(open(path)))
        assert [float(row["guidance"]) for row in back] == scales
        best = min(rows, key=lambda row: row["fid"])["guidance"]
        info["info"] = (f"identities exact ({identity_secs:.2f}s); sweep CSV {len(back)} rows, "
                        f"lowest FID at s={best}")


# ---------------------------------------------------------------- 7

def test_07_rewriting_contracts(toy):
    with criterion(7, "rewriting contracts") as info:
        start = time.perf_counter()
        model = toy["result"].model
        refs = toy["result"].normalizer.encode(np.stack([s.values for s in toy["held"][:16]]))
        labels = [s.condition for s in toy["held"][:16]]
        lay = PoseLayout(2)

        # (a) all-unknown mask equals plain sampling, bit for bit
        edited, _ = rewrite_sample(model, refs, np.zeros((8, 23), bool), labels, EditConfig(30, 1.0, 1.0, 3))
        plain, _ = sample(model, labels, SamplerConfig("euler", 30, 1.0, 3), n=16)
        assert edited.tobytes() == plain.tobytes()

        # (b) known dims equal the interpolant at every rewrite step
        mask = build_mask("in_between", lay, 8, prefix=2, suffix=2)
        cfg = EditConfig(30, 0.2, 1.0, 4)
        _, traj = rewrite_sample(model, refs, mask, labels, cfg)
        m = np.broadcast_to(mask, refs.shape)
        pinned = 0
        for k, was in enumerate(traj.rewritten):
            if was:
                t = k / cfg.steps
                want = (1 - t) * traj.noise + t * refs
                assert np.array_equal(traj.inputs[k][m], want[m])
                pinned += 1
        assert pinned == 6

        # (c) threshold 0 equals plain sampling
        edited0, _ = rewrite_sample(model, refs, mask, labels, EditConfig(30, 0.0, 1.0, 3))
        assert edited0.tobytes() == plain.tobytes()
        secs = time.perf_counter() - start
        info["info"] = f"(a) bitwise, (b) {pinned} pinned steps exact, (c) bitwise"
        assert secs < 60


# ---------------------------------------------------------------- 8

def test_08_editing_efficacy(walker):
    with criterion(8, "editing efficacy") as info:
        info["setup_seconds"] = walker["seconds"]
        start = time.perf_counter()
        none, early = edit_scores(walker, 0.0), edit_scores(walker, 0.2)
        info["info"] = (f"{SW_EDITS} prediction edits: ADE {early['ade']:.4f} (threshold 0.2) vs "
                        f"{none['ade']:.4f} (0); FDE {early['fde']:.4f} vs {none['fde']:.4f}")
        assert early["ade"] < none["ade"]
        assert early["fde"] < none["fde"]
        assert walker["seconds"] + time.perf_counter() - start < 10 * 60


# ---------------------------------------------------------------- 9

def test_09_threshold_sensitivity(walker):
    with criterion(9, "threshold sensitivity") as info:
        early, full = edit_scores(walker, 0.2), edit_scores(walker, 1.0)
        rel = abs(early["ade"] - full["ade"]) / full["ade"]
        info["info"] = f"ADE {early['ade']:.4f} (0.2) vs {full['ade']:.4f} (1.0), relative gap {rel:.3f} <= 0.10"
        assert rel <= 0.10


def test_editing_seams_are_continuous(walker):
    # known/unknown boundary should not jump more than 3x the data's typical frame step
    res, lay = walker["result"], walker["layout"]
    edited = res.normalizer.decode(edit_scores(walker, 0.2)["edited"])
    pos = lay.joint_positions(edited)
    seam = np.linalg.norm(pos[:, SW_PREFIX] - pos[:, SW_PREFIX - 1], axis=-1).mean()
    ref_pos = lay.joint_positions(walker["refs"])
    typical = np.linalg.norm(np.diff(ref_pos, axis=1), axis=-1).mean()
    assert seam <= 3 * typical


# ---------------------------------------------------------------- 10

def test_10_metric_oracles():
    with criterion(10, "metric oracles") as info:
        start = time.perf_counter()
        r = np.random.default_rng(10)
        a = r.normal(size=(100_000, 2)) + np.array([3.0, 4.0])
        b = r.normal(size=(100_000, 2))
        sampled = fid(a, b)
        exact = fid_from_stats(np.zeros(2), 4 * np.eye(2), np.zeros(2), np.eye(2))
        assert abs(sampled - 25.0) <= 0.02 * 25.0
        assert abs(exact - 2.0) < 1e-12

        f = r.normal(size=(800, 6))
        pairs = diversity_pairs(800, 300, np.random.default_rng(1))
        brute = sum(math.dist(f[i], f[j]) for i, j in pairs) / len(pairs)
        assert abs(diversity(f, 300, np.random.default_rng(1)) - brute) <= 1e-10

        g = r.normal(size=(800, 6))
        assert abs(mm_dist(f, g) - sum(math.dist(p, q) for p, q in zip(f, g)) / 800) <= 1e-10

        grouped = r.normal(size=(5, 30, 6))
        rr = np.random.default_rng(2)
        total = 0.0
        for grp in grouped:
            idx = rr.choice(30, size=20, replace=False)
            total += sum(math.dist(grp[i], grp[j]) for i, j in zip(idx[:10], idx[10:]))
        assert abs(mmodality(grouped, np.random.default_rng(2)) - total / 50) <= 1e-10

        lay = PoseLayout(5)
        pred, gt = r.normal(size=(4, 10, lay.dim)), r.normal(size=(4, 10, lay.dim))
        region = np.zeros(10, bool)
        region[3:8] = True
        errs = [[[math.dist(pred[b, t, lay.positions][3 * j:3 * j + 3], gt[b, t, lay.positions][3 * j:3 * j + 3])
                  for j in range(4)] for t in range(3, 8)] for b in range(4)]
        errs = np.array(errs)
        ade, fde = ade_fde(pred, gt, region, lay)
        assert abs(ade - errs.mean()) <= 1e-10 and abs(fde - errs[:, -1].mean()) <= 1e-10

        texts = r.normal(size=(640, 16))
        perfect = r_precision_top3(texts, texts, rng=np.random.default_rng(0))
        null = r_precision_top3(r.normal(size=(32 * 300, 16)), r.normal(size=(32 * 300, 16)),
                                rng=np.random.default_rng(0))
        assert perfect == 1.0
        assert abs(null - 3 / 32) <= 0.02
        info["info"] = (f"FID sampled {sampled:.3f}, closed form {exact:.12f}; brute-force matches; "
                        f"R-Precision perfect {perfect}, null {null:.4f}")
        assert time.perf_counter() - start < 120


# ---------------------------------------------------------------- 11

def test_11_representation_dimensions():
    with criterion(11, "representation dimensions") as info:
        dims = {21: feature_dim(21), 22: feature_dim(22)}
        info["info"] = f"j=21 -> {dims[21]}, j=22 -> {dims[22]}"
        assert dims == {21: 251, 22: 263}

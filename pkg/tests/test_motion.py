import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motionfm.errors import ConfigError, FormatError, ShapeError
from motionfm.motion import (MotionSequence, Normalizer, PoseLayout, SyntheticDatasetSpec, feature_dim,
                             gen_synthetic_dataset, load_dataset, read_motion, save_dataset, split_dataset,
                             write_motion)


@pytest.mark.parametrize("joints,dim", [(22, 263), (21, 251), (2, 23)])
def test_feature_dim(joints, dim):
    assert feature_dim(joints) == dim
    assert PoseLayout(joints).dim == dim


def test_feature_dim_rejects_single_joint():
    with pytest.raises(ConfigError):
        feature_dim(1)


def test_layout_segments_tile_the_frame():
    lay = PoseLayout(5)
    segs = [lay.root, lay.positions, lay.velocities, lay.rotations, lay.contacts]
    assert segs[0].start == 0
    for a, b in zip(segs, segs[1:]):
        assert a.stop == b.start
    assert segs[-1].stop == lay.dim
    assert [s.stop - s.start for s in segs] == [4, 12, 15, 24, 4]


def test_point_family_bit_identical():
    seqs = gen_synthetic_dataset(SyntheticDatasetSpec("point", joints=2, frames=3, classes=1,
                                                      samples_per_class=10, seed=5))
    assert len(seqs) == 10
    for s in seqs[1:]:
        assert s.values.tobytes() == seqs[0].values.tobytes()


def test_sine_walker_velocity_is_scaled_position_difference():
    spec = SyntheticDatasetSpec("sine-walker", joints=5, frames=40, classes=3, samples_per_class=4, seed=2)
    lay = PoseLayout(5)
    for s in gen_synthetic_dataset(spec):
        pos = s.values[:, lay.positions]
        vel = s.values[:, lay.velocities][:, 3:]  # drop the root joint
        np.testing.assert_array_less(np.abs(vel[1:] - np.diff(pos, axis=0) * spec.fps), 1e-9)
        root_h = s.values[:, 3]
        root_vy = s.values[:, lay.velocity_columns(0)][:, 1]
        assert np.max(np.abs(root_vy[1:] - np.diff(root_h) * spec.fps)) < 1e-9
        assert set(np.unique(s.values[:, lay.contacts])) <= {0.0, 1.0}


def test_gaussian_shift_class_means_differ_by_shift():
    spec = SyntheticDatasetSpec("gaussian-shift", joints=2, frames=1, classes=2,
                                samples_per_class=5000, seed=11, shift=3.0, noise=1.0)
    seqs = gen_synthetic_dataset(spec)
    x = np.stack([s.values[0] for s in seqs])
    labels = np.array([s.condition for s in seqs])
    diff = x[labels == 1].mean(axis=0) - x[labels == 0].mean(axis=0)
    se = spec.noise * np.sqrt(2.0 / 5000)
    assert np.all(np.abs(diff - 3.0) < 5 * se)


def test_zero_samples_rejected():
    with pytest.raises(ConfigError):
        gen_synthetic_dataset(SyntheticDatasetSpec(samples_per_class=0))
    with pytest.raises(ConfigError):
        gen_synthetic_dataset(SyntheticDatasetSpec(family="walk"))


@pytest.mark.parametrize("family", ["point", "sine-walker", "gaussian-shift"])
def test_generation_is_pure_function_of_spec(family):
    spec = SyntheticDatasetSpec(family, joints=3, frames=6, classes=2, samples_per_class=3, seed=9)
    a, b = gen_synthetic_dataset(spec), gen_synthetic_dataset(spec)
    assert all(x.values.tobytes() == y.values.tobytes() and x.condition == y.condition for x, y in zip(a, b))
    other = gen_synthetic_dataset(SyntheticDatasetSpec(family, joints=3, frames=6, classes=2,
                                                       samples_per_class=3, seed=10))
    assert a[0].values.tobytes() != other[0].values.tobytes()


def test_motion_roundtrip(tmp_path, rng):
    seq = MotionSequence(rng.normal(size=(7, 23)) * 1e3, PoseLayout(2), 4)
    write_motion(tmp_path / "m.motion", seq)
    back = read_motion(tmp_path / "m.motion")
    assert back.values.tobytes() == seq.values.tobytes()
    assert back.layout == seq.layout and back.condition == 4
    header = json.loads((tmp_path / "m.motion").read_text().splitlines()[0])
    assert header == {"frames": 7, "joints": 2, "dim": 23, "condition": 4}


def test_roundtrip_hundred_sequences(tmp_path):
    r = np.random.default_rng(0)
    for i in range(100):
        frames = int(r.integers(1, 12))
        vals = r.normal(size=(frames, 35)) * 10.0 ** r.integers(-5, 5)
        cond = None if i % 3 == 0 else int(r.integers(0, 9))
        seq = MotionSequence(vals, PoseLayout(3), cond)
        p = tmp_path / f"{i}.motion"
        write_motion(p, seq)
        back = read_motion(p)
        assert back.values.tobytes() == vals.tobytes() and back.condition == cond


def test_read_rejects_dimension_mismatch(tmp_path):
    p = tmp_path / "bad.motion"
    p.write_text(json.dumps({"frames": 1, "joints": 21, "dim": 250, "condition": 0}) + "\n"
                 + ",".join(["0.0"] * 250) + "\n")
    with pytest.raises(FormatError, match="dimension mismatch"):
        read_motion(p)
    p.write_text(json.dumps({"frames": 1, "joints": 2, "dim": 23, "condition": 0}) + "\n"
                 + ",".join(["0.0"] * 22) + "\n")
    with pytest.raises(FormatError, match="dimension mismatch"):
        read_motion(p)


def test_read_rejects_malformed_header(tmp_path):
    p = tmp_path / "bad.motion"
    p.write_text("not json\n1,2,3\n")
    with pytest.raises(FormatError):
        read_motion(p)


def test_empty_motion_rejected_on_write(tmp_path):
    class Empty:
        values = np.zeros((0, 23))
        layout = PoseLayout(2)
        condition = None

    with pytest.raises(ShapeError):
        write_motion(tmp_path / "e.motion", Empty())
    with pytest.raises(ShapeError):
        MotionSequence(np.zeros((0, 23)), PoseLayout(2))


def test_sequence_rejects_nan_and_wrong_dim():
    with pytest.raises(ShapeError):
        MotionSequence(np.full((2, 23), np.nan), PoseLayout(2))
    with pytest.raises(ShapeError):
        MotionSequence(np.zeros((2, 24)), PoseLayout(2))


def test_dataset_dir_roundtrip(tmp_path):
    seqs = gen_synthetic_dataset(SyntheticDatasetSpec("gaussian-shift", joints=2, frames=4, classes=2,
                                                      samples_per_class=3))
    save_dataset(tmp_path / "d", seqs)
    back = load_dataset(tmp_path / "d")
    assert [s.condition for s in back] == [s.condition for s in seqs]
    train, held = split_dataset(seqs, 0.5, 0)
    assert len(train) + len(held) == len(seqs) and len(held) == 3


def test_normalizer_roundtrip_and_constant_channels():
    seqs = gen_synthetic_dataset(SyntheticDatasetSpec("sine-walker", joints=3, frames=10, samples_per_class=5))
    norm = Normalizer.fit(seqs)
    x = seqs[0].values
    np.testing.assert_allclose(norm.decode(norm.encode(x)), x, atol=1e-12)
    z = norm.encode(np.concatenate([s.values for s in seqs]))
    varying = np.concatenate([s.values for s in seqs]).std(axis=0) > 1e-6
    np.testing.assert_allclose(z[:, varying].std(axis=0), 1.0, rtol=1e-9)
    back = Normalizer.from_dict(json.loads(json.dumps(norm.to_dict())))
    assert back.mean.tobytes() == norm.mean.tobytes()


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30))
def test_layout_formula_property(j):
    lay = PoseLayout(j)
    assert lay.dim == 12 * j - 1
    cols = set()
    for u in range(1, j):
        cols.update(lay.position_columns(u))
        cols.update(lay.rotation_columns(u))
    for u in range(j):
        cols.update(lay.velocity_columns(u))
    assert cols == set(range(lay.positions.start, lay.rotations.stop))

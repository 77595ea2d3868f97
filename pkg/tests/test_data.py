import math

import numpy as np
import pytest

from gvbridge.data import (
    Dataset,
    Domain,
    SyntheticSpec,
    Task,
    batch_indices,
    batch_iter,
    cluster_means,
    gen_clusters,
    gen_moons,
    generate,
    load_csv,
    moons_curve,
    rigid_transform,
    standardize,
    write_csv,
)
from gvbridge.errors import ConfigError, DataError


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.zeros((0, 2)), None, Domain.Source, 2)
    with pytest.raises(DataError):
        Dataset(np.array([[np.nan, 1.0]]), None, Domain.Source, 2)
    with pytest.raises(DataError, match="row 1"):
        Dataset(np.zeros((2, 2)), [0, 2], Domain.Source, 2)


def test_cluster_means_on_circle():
    m = cluster_means(4)
    np.testing.assert_allclose(np.hypot(m[:, 0], m[:, 1]), 3.0, atol=1e-15)
    np.testing.assert_allclose(m[0], [3.0, 0.0], atol=1e-15)


def test_rotation_of_a_mean():
    got = rigid_transform(np.array([[-2.0, 0.0]]), math.radians(30), (0.0, 0.0))[0]
    expected = (-2 * math.cos(math.radians(30)), -2 * math.sin(math.radians(30)))
    assert abs(got[0] - expected[0]) <= 1e-10 and abs(got[1] - expected[1]) <= 1e-10
    assert round(got[0], 3) == -1.732 and round(got[1], 3) == -1.0


def test_rigid_transform_rotates_then_translates():
    got = rigid_transform(np.array([[1.0, 0.0]]), math.pi / 2, (1.0, 0.0))[0]
    np.testing.assert_allclose(got, [1.0, 1.0], atol=1e-15)


def test_null_shift_gives_matching_domains():
    spec = SyntheticSpec(Task.Clusters, num_classes=3, samples_per_domain=900, noise_std=0.5, seed=4)
    s, t = gen_clusters(spec)
    per_class = 900 // 3
    bound = 3 * 0.5 / math.sqrt(per_class)
    means = cluster_means(3)
    for k in range(3):
        ms, mt = s.features[s.labels == k].mean(0), t.features[t.labels == k].mean(0)
        assert np.all(np.abs(ms - means[k]) < bound) and np.all(np.abs(mt - means[k]) < bound)
        assert np.all(np.abs(ms - mt) < math.sqrt(2) * bound)


def test_target_is_rigid_transform_of_source_per_class():
    rot = math.radians(40)
    spec = SyntheticSpec(Task.Clusters, 3, 1200, rotation=rot, translation=(1.0, -0.5), noise_std=0.4, seed=2)
    s, t = gen_clusters(spec)
    n = 1200 // 3
    for k in range(3):
        moved = rigid_transform(s.features[s.labels == k].mean(0, keepdims=True), rot, (1.0, -0.5))[0]
        diff = t.features[t.labels == k].mean(0) - moved
        assert np.all(np.abs(diff) < 3 * 0.4 * math.sqrt(2) / math.sqrt(n))


def test_generators_are_deterministic():
    for task, c in ((Task.Clusters, 3), (Task.Moons, 2)):
        spec = SyntheticSpec(task, c, 100, rotation=0.3, seed=9)
        a, b = generate(spec), generate(spec)
        for x, y in zip(a, b):
            assert np.array_equal(x.features, y.features) and np.array_equal(x.labels, y.labels)


def test_spec_validation():
    with pytest.raises(ConfigError):
        SyntheticSpec(noise_std=0.0)
    with pytest.raises(ConfigError):
        SyntheticSpec(task="rings")
    with pytest.raises(ConfigError):
        gen_clusters(SyntheticSpec(Task.Clusters, num_classes=1))
    with pytest.raises(ConfigError):
        gen_moons(SyntheticSpec(Task.Moons, num_classes=3))


def test_moons_endpoint_and_balance():
    np.testing.assert_array_equal(moons_curve(np.array([0.0]), 0)[0], [1.0, 0.0])
    s, t = gen_moons(SyntheticSpec(Task.Moons, 2, 200, noise_std=0.1))
    assert np.bincount(s.labels).tolist() == [100, 100]


def test_moons_translation_shifts_means():
    n = 2000
    base = SyntheticSpec(Task.Moons, 2, n, noise_std=0.2, seed=5)
    moved = SyntheticSpec(Task.Moons, 2, n, translation=(0.5, 0.0), noise_std=0.2, seed=5)
    _, t0 = gen_moons(base)
    _, t1 = gen_moons(moved)
    s, _ = gen_moons(base)
    # the same target noise is reused, so the shift is exact up to rounding
    np.testing.assert_allclose(t1.features.mean(0) - t0.features.mean(0), [0.5, 0.0], atol=1e-12)
    # against the source (independent noise) the shift holds within sampling error
    diff = t1.features.mean(0) - s.features.mean(0) - np.array([0.5, 0.0])
    assert np.all(np.abs(diff) < 3 * 0.2 / math.sqrt(n))


def test_standardize_uses_source_statistics():
    s, t = generate(SyntheticSpec(Task.Clusters, 3, 300, rotation=0.5, seed=1))
    s2, t2 = standardize(s, t)
    np.testing.assert_allclose(s2.features.mean(0), 0.0, atol=1e-12)
    np.testing.assert_allclose(s2.features.std(0), 1.0, atol=1e-12)
    mean, std = s.features.mean(0), s.features.std(0)
    np.testing.assert_array_equal(t2.features, (t.features - mean) / std)


def test_load_csv_example(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x1,x2,y\n0,1,0\n1,0,1")
    ds = load_csv(p, "y", 2)
    assert ds.features.tolist() == [[0.0, 1.0], [1.0, 0.0]] and ds.labels.tolist() == [0, 1]
    unl = load_csv(p, None, 2)
    assert unl.labels is None and unl.features.shape == (2, 3)


def test_load_csv_errors(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x1,x2,y\n0,1,0\n1,0,2\n")
    with pytest.raises(DataError, match="row 3"):
        load_csv(p, "y", 2)
    p.write_text("x1,x2,y\n0,1\n")
    with pytest.raises(DataError, match="row 2"):
        load_csv(p, "y", 2)
    p.write_text("x1,x2,y\n0,abc,1\n")
    with pytest.raises(DataError, match="row 2"):
        load_csv(p, "y", 2)
    p.write_text("x1,x2,y\n0,1,1\n")
    with pytest.raises(DataError, match="label"):
        load_csv(p, "label", 2)
    p.write_text("")
    with pytest.raises(DataError):
        load_csv(p, "y", 2)


def test_csv_round_trip(tmp_path):
    s, _ = generate(SyntheticSpec(Task.Moons, 2, 50, seed=3))
    write_csv(tmp_path / "s.csv", s)
    back = load_csv(tmp_path / "s.csv", "y", 2)
    assert np.array_equal(back.features, s.features) and np.array_equal(back.labels, s.labels)


def test_batch_counts():
    s = Dataset(np.arange(20.0).reshape(10, 2), np.arange(10) % 2, Domain.Source, 2)
    t = Dataset(np.arange(20.0).reshape(10, 2), None, Domain.Target, 2)
    batches = list(batch_iter(s, t, 4, 0))
    assert len(batches) == 5
    assert all(b.xs.shape == (2, 2) and b.xt.shape == (2, 2) for b in batches)


def test_batches_reproducible():
    a = batch_indices(10, 7, 4, [3, 1])
    b = batch_indices(10, 7, 4, [3, 1])
    assert all(np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1]) for x, y in zip(a, b))


def test_short_domain_cycles():
    batches = batch_indices(10, 3, 4, 0)
    tgt = np.concatenate([t for _, t in batches])
    assert len(batches) == 5 and tgt.size == 10
    assert tgt.min() >= 0 and tgt.max() < 3
    # each full pass over the short domain is a permutation
    for i in range(0, 9, 3):
        assert sorted(tgt[i:i + 3].tolist()) == [0, 1, 2]


def test_source_epoch_is_a_permutation():
    batches = batch_indices(10, 3, 4, 0)
    src = np.concatenate([s for s, _ in batches])
    assert sorted(src.tolist()) == list(range(10))


def test_batches_keep_label_pairing():
    x = np.arange(12.0).reshape(6, 2)
    s = Dataset(x, np.arange(6) % 3, Domain.Source, 3)
    for b in batch_iter(s, s.unlabeled(), 4, 5):
        for row, y in zip(b.xs, b.ys):
            assert int(row[0]) // 2 % 3 == y


def test_odd_batch_rejected():
    with pytest.raises(ConfigError):
        batch_indices(10, 10, 3, 0)

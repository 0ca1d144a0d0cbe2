import numpy as np
import pytest

from infers.errors import SingularCovariance, TooFewRecords
from infers.robust import _mahalanobis2, c_steps, subset_size, trim_outliers
from infers.simulator import simulate, published_config


def planted(seed, n_out, n=500):
    """Simulated features with ``n_out`` rows replaced by gross outliers (10x clean std)."""
    rng = np.random.default_rng(10_000 + seed)
    x = simulate(published_config(n=n, seed=seed)).features()
    sd = x.std(axis=0)
    idx = rng.choice(n, n_out, replace=False)
    x[idx] = rng.normal(size=(n_out, x.shape[1])) * 10 * sd
    return x, idx


def test_partition_and_size():
    x = simulate(published_config(n=500, seed=1)).features()
    r = trim_outliers(x)
    assert r.h == 450 == len(r.kept)
    assert np.array_equal(np.sort(np.concatenate([r.kept, r.flagged])), np.arange(500))
    assert np.all(np.diff(r.det_history) <= 0)


def test_subset_size():
    assert subset_size(500, 0.10) == 450
    assert subset_size(501, 0.10) == 451
    assert subset_size(100, 0.25) == 75


def test_flagged_are_far_on_clean_data():
    x = simulate(published_config(n=500, seed=2)).features()
    r = trim_outliers(x)
    k = x[r.kept]
    d = _mahalanobis2(x, k.mean(axis=0), np.cov(k, rowvar=False))
    assert d[r.flagged].min() >= np.median(d[r.kept])


def test_planted_recall_25():
    recall = []
    for seed in range(100):
        x, idx = planted(seed, 25)
        recall.append(np.isin(idx, trim_outliers(x).flagged).mean())
    assert np.mean(recall) >= 0.9


def test_determinant_not_above_full_set():
    x, _ = planted(3, 25)
    r = trim_outliers(x)
    full = np.linalg.det(np.cov(x, rowvar=False))
    assert np.linalg.det(np.cov(x[r.kept], rowvar=False)) <= full


def test_fixed_point_idempotent():
    x, _ = planted(4, 25)
    r = trim_outliers(x)
    again, hist = c_steps(x, r.kept, r.h)
    np.testing.assert_array_equal(again, r.kept)
    assert len(hist) == 1


def test_deterministic():
    x, _ = planted(5, 40)
    a, b = trim_outliers(x), trim_outliers(x.copy())
    np.testing.assert_array_equal(a.kept, b.kept)
    assert a.start == b.start


def test_coordinatewise_affine_equivariance():
    x, _ = planted(6, 30)
    rng = np.random.default_rng(0)
    scale = rng.uniform(0.2, 5.0, x.shape[1]) * rng.choice([-1, 1], x.shape[1])
    shift = rng.normal(size=x.shape[1])
    perm = rng.permutation(x.shape[1])
    y = (x * scale + shift)[:, perm]
    np.testing.assert_array_equal(trim_outliers(x).kept, trim_outliers(y).kept)


def test_csteps_general_affine_equivariance():
    x, _ = planted(7, 30)
    rng = np.random.default_rng(1)
    a = rng.normal(size=(12, 12)) + 3 * np.eye(12)
    start = np.arange(450)
    s1, h1 = c_steps(x, start)
    s2, h2 = c_steps(x @ a.T + 1.0, start)
    np.testing.assert_array_equal(s1, s2)
    ratio = np.array(h2) / np.array(h1)
    np.testing.assert_allclose(ratio, np.linalg.det(a) ** 2, rtol=1e-6)


def test_errors():
    x = simulate(published_config(n=35)).features()
    with pytest.raises(TooFewRecords):
        trim_outliers(x)
    with pytest.raises(ValueError):
        trim_outliers(simulate(published_config(n=100)).features(), 0.5)
    same = np.ones((100, 12))
    with pytest.raises(SingularCovariance) as info:
        trim_outliers(same)
    assert len(info.value.result.flagged) == 0 and len(info.value.result.kept) == 100


def test_accepts_collocations():
    col = simulate(published_config(n=200, seed=9))
    np.testing.assert_array_equal(trim_outliers(col).kept, trim_outliers(col.features()).kept)

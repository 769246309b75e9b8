import numpy as np
import pytest

from mbclust.data import DataMatrix
from mbclust.gmm import ModelName, e_step
from mbclust.init_strategies import (
    InitStrategy,
    init_emem,
    init_kmeans,
    init_mbhac,
    kmeans_restarts,
    random_start,
    short_run,
    generators,
    wcss,
)
from mbclust.transform import TransformKind


def blobs(rng, n=200, sep=10.0):
    labels = np.repeat([0, 1], n // 2)
    x = rng.normal(size=(n, 2)) + np.array([[0, 0], [sep, 0]])[labels]
    return DataMatrix(x), labels


def test_strategy_parsing():
    assert InitStrategy.parse("mbhac:svd") == InitStrategy("mbhac", TransformKind.SVD)
    assert InitStrategy.parse("MBHAC:raw").label == "Default"
    assert InitStrategy.parse("mbhac:sph").label == "SPH"
    assert InitStrategy.parse("kmeans").label == "k-means"
    assert str(InitStrategy.parse("emem")) == "emem"
    with pytest.raises(ValueError):
        InitStrategy.parse("kmeans:svd")
    with pytest.raises(ValueError):
        InitStrategy.parse("ward")


def test_mbhac_k_equals_n_is_singletons(rng):
    x = DataMatrix(rng.normal(size=(12, 3)))
    for kind in TransformKind:
        assert init_mbhac(x, kind, 12).k == 12


def test_kmeans_single_cluster(rng):
    x = DataMatrix(rng.normal(size=(30, 2)))
    part = init_kmeans(x, 1, n_starts=3)
    assert part.k == 1
    xc = x.values - x.values.mean(axis=0)
    assert wcss(x, part) == pytest.approx(float(np.trace(xc.T @ xc)))


def test_kmeans_recovers_blobs(rng):
    x, labels = blobs(rng)
    part = init_kmeans(x, 2, n_starts=5, seed=3)
    assert part.same_as(type(part).from_labels(labels))


def test_kmeans_is_deterministic_and_best(rng):
    x = DataMatrix(rng.normal(size=(60, 3)))
    a = init_kmeans(x, 4, n_starts=10, seed=42)
    b = init_kmeans(x, 4, n_starts=10, seed=42)
    np.testing.assert_array_equal(a.labels, b.labels)
    runs = kmeans_restarts(x, 4, n_starts=10, seed=42)
    assert wcss(x, a) <= min(w for _, w in runs) + 1e-9


def test_child_streams_are_independent_of_count():
    a = [g.random() for g in generators(9, 3)]
    b = [g.random() for g in generators(9, 5)][:3]
    assert a == b


def test_random_start_draws_data_rows(rng):
    x = DataMatrix(rng.normal(size=(20, 3)))
    g = random_start(x, 5, seed=1)
    rows = {tuple(r) for r in x.values}
    assert all(tuple(m) in rows for m in g.means)
    assert len({tuple(m) for m in g.means}) == 5
    g2 = random_start(x, 5, seed=1)
    np.testing.assert_array_equal(g.means, g2.means)
    full = random_start(x, 20, seed=0)
    assert {tuple(m) for m in full.means} == rows


def test_random_start_spherical_models(rng):
    x = DataMatrix(rng.normal(size=(20, 3)) * [1, 2, 3])
    g = random_start(x, 2, seed=0, model="VII")
    np.testing.assert_allclose(g.covariances[0], np.eye(3) * x.values.var(axis=0).mean())


def test_emem_degenerate_configuration_returns_random_start(rng):
    x = DataMatrix(rng.normal(size=(40, 2)))
    seed = np.random.SeedSequence(17)
    got = init_emem(x, 3, "VVV", n_short=1, short_iters=0, seed=seed)
    want = random_start(x, 3, generators(np.random.SeedSequence(17), 1)[0], "VVV")
    np.testing.assert_array_equal(got.means, want.means)
    np.testing.assert_array_equal(got.covariances, want.covariances)


def test_emem_more_short_runs_never_worse(rng):
    x = DataMatrix(rng.normal(size=(60, 2)) + rng.integers(0, 2, size=(60, 1)) * 5)
    lls = []
    for n_short in (1, 5, 20):
        g = init_emem(x, 2, "EEE", n_short=n_short, short_iters=2, seed=5)
        lls.append(short_run(x, g, ModelName.EEE, 0)[1])
    assert lls[0] <= lls[1] <= lls[2]


def test_emem_is_deterministic(rng):
    x = DataMatrix(rng.normal(size=(50, 2)))
    a = init_emem(x, 3, "VII", n_short=4, short_iters=3, seed=8)
    b = init_emem(x, 3, "VII", n_short=4, short_iters=3, seed=8)
    np.testing.assert_array_equal(a.means, b.means)
    assert e_step(x, a)[1] == e_step(x, b)[1]

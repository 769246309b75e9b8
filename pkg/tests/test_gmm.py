import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from mbclust import gmm
from mbclust.gmm import (
    ComponentCollapse,
    GaussianMixture,
    ModelName,
    classify,
    constrained_covariances,
    e_step,
    em,
    hard_responsibilities,
    log_density,
    m_step,
    vev_inner_objective,
)
from mbclust.mbhac import Partition

MODELS = list(ModelName)


def random_mixture(rng, k, p, model=ModelName.VVV):
    w = rng.dirichlet(np.ones(k) * 2)
    mu = rng.normal(scale=3, size=(k, p))
    a = rng.normal(size=(k, p, p))
    cov = a @ np.swapaxes(a, 1, 2) + 0.5 * np.eye(p)
    return GaussianMixture(w, mu, cov, model)


def expected_loglik(xv, r, g):
    """Complete-data log-likelihood with soft memberships ``r``."""
    total = 0.0
    for k in range(g.k):
        lp = multivariate_normal(g.means[k], g.covariances[k]).logpdf(xv)
        total += float(np.sum(r[:, k] * (lp + math.log(g.weights[k]))))
    return total


def test_standard_normal_at_origin():
    g = GaussianMixture([1.0], [[0.0, 0.0]], [np.eye(2)])
    assert log_density(np.zeros((1, 2)), g)[0] == pytest.approx(-math.log(2 * math.pi), abs=1e-14)
    assert -math.log(2 * math.pi) == pytest.approx(-1.8379, abs=1e-4)


def test_duplicate_components_collapse(rng):
    cov = np.array([[2.0, 0.3], [0.3, 1.0]])
    x = rng.normal(size=(10, 2))
    two = GaussianMixture([0.3, 0.7], [[1.0, 0.0], [1.0, 0.0]], [cov, cov])
    one = GaussianMixture([1.0], [[1.0, 0.0]], [cov])
    np.testing.assert_allclose(log_density(x, two), log_density(x, one), rtol=1e-13)


def test_density_matches_naive_sum(rng):
    for _ in range(30):
        k, p = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        g = random_mixture(rng, k, p)
        x = rng.normal(scale=3, size=(15, p))
        naive = np.log(sum(
            g.weights[j] * multivariate_normal(g.means[j], g.covariances[j]).pdf(x) for j in range(k)
        ))
        naive = np.atleast_1d(naive)
        ok = np.isfinite(naive)
        np.testing.assert_allclose(log_density(x, g)[ok], naive[ok], rtol=1e-10)


def test_e_step_rows_and_loglik(rng):
    g = random_mixture(rng, 3, 2)
    x = rng.normal(scale=3, size=(50, 2))
    r, ll = e_step(x, g)
    np.testing.assert_allclose(r.sum(axis=1), 1.0, atol=1e-14)
    assert np.all(r >= 0)
    assert ll == pytest.approx(float(np.sum(log_density(x, g))), rel=1e-13)


def test_e_step_separated_and_equal_components():
    g = GaussianMixture([0.5, 0.5], [[0.0], [100.0]], [[[1.0]], [[1.0]]])
    r, _ = e_step(np.array([[0.0], [100.0]]), g)
    np.testing.assert_allclose(r, np.eye(2), atol=1e-12)
    same = GaussianMixture(np.full(3, 1 / 3), np.zeros((3, 2)), np.broadcast_to(np.eye(2), (3, 2, 2)))
    r, _ = e_step(np.random.default_rng(1).normal(size=(7, 2)), same)
    np.testing.assert_allclose(r, 1 / 3, atol=1e-15)


def test_vvv_hard_m_step_is_per_group_mle(rng):
    x = rng.normal(size=(30, 3))
    labels = np.repeat([1, 2], 15)
    g = m_step(x, hard_responsibilities(Partition(labels)), "VVV")
    for k in (1, 2):
        rows = x[labels == k]
        np.testing.assert_allclose(g.means[k - 1], rows.mean(axis=0), rtol=1e-12)
        np.testing.assert_allclose(g.covariances[k - 1], np.cov(rows.T, bias=True), rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(g.weights, [0.5, 0.5])


def test_eee_pooled_hand_example():
    x = np.array([[0, 0], [2, 0], [1, 3], [10, 10], [12, 12], [11, 14]], dtype=float)
    g = m_step(x, hard_responsibilities(Partition(np.array([1, 1, 1, 2, 2, 2]))), "EEE")
    want = np.array([[4.0, 2.0], [2.0, 14.0]]) / 6.0
    for k in range(2):
        np.testing.assert_allclose(g.covariances[k], want, rtol=1e-13)


def test_eii_scalar(rng):
    x = rng.normal(size=(40, 3))
    r = rng.dirichlet(np.ones(2), size=40)
    g = m_step(x, r, "EII")
    nk = r.sum(axis=0)
    mu = (r.T @ x) / nk[:, None]
    trace = sum(float(np.sum(r[:, k] * ((x - mu[k]) ** 2).sum(axis=1))) for k in range(2))
    for k in range(2):
        np.testing.assert_allclose(g.covariances[k], trace / (40 * 3) * np.eye(3), rtol=1e-12)


def constraint_violations(g):
    vol, shape, orient = g.decompose()
    cov = g.covariances
    name = g.model.value
    msgs = []
    off_diag = np.abs(cov - np.einsum("kii,ij->kij", cov, np.eye(g.p))).max()

    def same(a, what):
        if np.abs(a - a[0]).max() > 1e-8 * max(1.0, np.abs(a).max()):
            msgs.append(f"{what} not common")

    if name[0] == "E":
        same(vol, "volume")
    if name[1] == "E":
        same(shape, "shape")
    if name[1] == "I":
        same(shape.T, "spherical shape")
    if name[2] == "I" and off_diag > 1e-10:
        msgs.append("not diagonal")
    if name == "EEE":
        same(cov, "covariance")
    return msgs


@pytest.mark.parametrize("model", MODELS)
def test_m_step_respects_constraints(model, rng):
    x = np.vstack([rng.normal(size=(30, 3)) @ rng.normal(size=(3, 3)) + 5 * j for j in range(3)])
    r = rng.dirichlet(np.ones(3) * 0.3, size=x.shape[0])
    g = m_step(x, r, model)
    assert g.model is model
    assert constraint_violations(g) == []


@pytest.mark.parametrize("model", MODELS)
def test_m_step_beats_other_members_of_family(model, rng):
    x = rng.normal(size=(60, 2)) * [1.0, 3.0]
    r = rng.dirichlet(np.ones(3) * 0.5, size=60)
    g = m_step(x, r, model)
    best = expected_loglik(x, r, g)
    nk = r.sum(axis=0)
    for _ in range(10):
        a = rng.normal(size=(3, 2, 2))
        other_w = a @ np.swapaxes(a, 1, 2) * nk[:, None, None] + np.eye(2)
        cov = constrained_covariances(other_w, nk, model)
        other = GaussianMixture(g.weights, g.means, cov, model)
        assert expected_loglik(x, r, other) <= best + 1e-7 * abs(best)


def test_vev_inner_iterations_decrease_objective(rng, monkeypatch):
    x = rng.normal(size=(80, 3)) @ rng.normal(size=(3, 3))
    r = rng.dirichlet(np.ones(3) * 0.5, size=80)
    nk = r.sum(axis=0)
    mu = (r.T @ x) / nk[:, None]
    w = gmm._scatter(x, r, mu)
    objs = []
    for cap in range(1, 21):
        monkeypatch.setattr(gmm, "VEV_MAX_INNER", cap)
        cov, shape = gmm._vev_covariances(w, nk, None)
        vol = np.exp(np.mean(np.log(np.linalg.eigvalsh(cov)), axis=1))
        objs.append(vev_inner_objective(w, nk, vol, shape))
    assert np.all(np.diff(objs) <= 1e-9 * abs(objs[0]))


def test_single_component_closed_form(rng):
    x = rng.normal(size=(25, 3))
    for model in MODELS:
        fit = em(x, Partition(np.ones(25, dtype=int)), model)
        assert fit.ok and fit.n_iter == 1
        np.testing.assert_allclose(fit.mixture.means[0], x.mean(axis=0), rtol=1e-12)
    fit = em(x, Partition(np.ones(25, dtype=int)), "VVV")
    cov = np.cov(x.T, bias=True)
    closed = -25 / 2 * (3 * math.log(2 * math.pi) + np.linalg.slogdet(cov)[1] + 3)
    assert fit.loglik == pytest.approx(closed, rel=1e-12)


def test_separated_spherical_clusters_recovered():
    rng = np.random.default_rng(7)
    centers = np.array([[0.0, 0.0], [10.0, 0.0]])
    labels = np.repeat([0, 1], 250)
    x = centers[labels] + rng.normal(size=(500, 2))
    start = GaussianMixture([0.5, 0.5], [[1.0, 1.0], [8.0, -1.0]], [np.eye(2) * 4] * 2, "EII")
    fit = em(x, start, "EII")
    assert fit.converged
    for k in range(2):
        assert np.abs(fit.mixture.means[k] - x[labels == k].mean(axis=0)).max() < 0.1


def test_collapse_and_singularity_reported():
    x = np.random.default_rng(0).normal(size=(10, 3))
    labels = np.array([1] * 8 + [2] * 2)
    fit = em(x, Partition(labels), "VVV")
    assert not fit.ok and fit.status.startswith("Singularity")
    with pytest.raises(ComponentCollapse):
        m_step(x, np.column_stack([np.ones(10), np.zeros(10)]), "VVV")


def test_classify_ties_and_round_trip():
    assert classify(np.array([[0.2, 0.8]])).labels.tolist() == [1]  # single used component
    np.testing.assert_array_equal(classify(np.array([[0.2, 0.8], [0.9, 0.1]])).labels, [2, 1])
    np.testing.assert_array_equal(classify(np.array([[0.5, 0.5], [0.1, 0.9]])).labels, [1, 2])
    p = Partition(np.array([2, 1, 3, 3, 1]))
    assert classify(hard_responsibilities(p)).same_as(p)
    np.testing.assert_array_equal(classify(hard_responsibilities(p)).labels, p.labels)


def test_mixture_validation():
    with pytest.raises(ValueError):
        GaussianMixture([0.5, 0.6], [[0.0], [1.0]], [[[1.0]], [[1.0]]])
    with pytest.raises(ValueError):
        ModelName.parse("XYZ")
    assert ModelName.parse("eev") is ModelName.EEV


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(MODELS), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_em_loglik_never_decreases(model, k, p, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(60, p)) + rng.integers(0, 3, size=(60, 1)) * 4
    g = GaussianMixture(np.full(k, 1 / k), x[rng.choice(60, k, replace=False)],
                        np.broadcast_to(np.eye(p) * x.var(), (k, p, p)).copy(), model)
    fit = em(x, g, model, max_iter=200)
    assert np.all(np.diff(fit.trace) >= -1e-8)

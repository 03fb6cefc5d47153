import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from dgfflab import CapacitorProjection, DGFFSampler, Disk, DomainPair, capacitor, green_matrix
from dgfflab.sampler import project_capacitor, sample_conditional_zero, sample_dgff, sample_tilted, split_gibbs_markov
from dgfflab.walks import gamma_star

from conftest import box, dense_laplacian_oracle


def implied_covariance(sampler):
    """Covariance of the linear map from noise to field."""
    A = sampler._transform_noise(np.eye(sampler.noise_dim_))
    return A.T @ A


@pytest.mark.parametrize("method", ["dense", "sparse", "spectral"])
def test_every_method_has_covariance_G(method):
    dom = box(6, 5, (2, -1))
    s = DGFFSampler(dom, method).fit()
    G = np.linalg.inv(dense_laplacian_oracle(dom))
    assert np.abs(implied_covariance(s) - G).max() < 1e-10


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=2, max_size=30))
def test_sparse_and_dense_agree_on_any_domain(pts):
    from dgfflab import LatticeDomain

    dom = LatticeDomain(pts)
    G = np.linalg.inv(dense_laplacian_oracle(dom))
    for method in ("dense", "sparse"):
        assert np.abs(implied_covariance(DGFFSampler(dom, method).fit()) - G).max() < 1e-9


def test_auto_method_choice():
    assert DGFFSampler(box(4, 4)).fit().method_ == "spectral"
    disk = DomainPair.from_shapes(Disk((0, 0), 0.5), Disk((0, 0), 1.0), 8).W
    assert DGFFSampler(disk).fit().method_ == "dense"
    with pytest.raises(ValueError):
        DGFFSampler(disk, "spectral").fit()


def test_empirical_covariance_matches_green():
    dom = box(3, 3)
    vals = sample_dgff(dom, 60_000, seed=4).values
    G = green_matrix(dom).matrix
    emp = np.cov(vals.T)
    # entrywise standard error of a sample covariance is about sqrt((G_ii G_jj + G_ij^2) / n)
    se = np.sqrt((np.outer(np.diag(G), np.diag(G)) + G**2) / 60_000)
    assert np.all(np.abs(emp - G) <= 4 * se)


def test_replica_addressing_is_batch_independent():
    s = DGFFSampler(box(5, 5)).fit()
    whole = s.sample_values(600, seed=9, stream=2, batch=256)
    part = s.sample_values(100, seed=9, stream=2, replica_start=250, batch=7)
    assert np.array_equal(whole[250:350], part)
    other = s.sample_values(10, seed=9, stream=3)
    assert not np.allclose(whole[:10], other)


def test_sampler_estimator_api():
    s = DGFFSampler(box(2, 2), method="dense")
    assert clone(s).get_params()["method"] == "dense"
    smp = s.fit().sample(3, seed=1)
    assert len(smp) == 3 and smp.summary()["method"] == "dense"
    assert np.array_equal(smp.weights, np.ones(3))


def test_gibbs_markov_split_structure():
    W, V = box(9, 9), box(5, 5, (2, 2))
    smp = sample_dgff(W, 4, seed=0)
    split = split_gibbs_markov(smp, V)
    off = ~V.contains(W.sites)
    assert np.all(split.inner[:, off] == 0)
    L = dense_laplacian_oracle(W)
    assert np.abs((split.binding @ L.T)[:, ~off]).max() < 1e-10
    assert np.allclose(split.binding + split.inner, split.whole)


@pytest.fixture(scope="module")
def disk_pair():
    pair = DomainPair.from_shapes(Disk((0, 0), 0.5), Disk((0, 0), 1.0), 10)
    return pair, capacitor(pair, tol=1e-13)


def test_projection_has_unit_variance_and_independent_residual(disk_pair):
    pair, cap = disk_pair
    G = green_matrix(pair.W).matrix
    proj = CapacitorProjection(pair, cap).fit()
    a = proj.sigma_ * proj.lpsi_  # Z = a . h
    assert a @ G @ a == pytest.approx(1.0, abs=1e-10)
    # residual = (I - sigma psi a^T) h has zero covariance with Z
    R = np.eye(len(a)) - np.outer(proj.sigma_ * proj.psi_, a)
    assert np.abs(R @ G @ a).max() < 1e-10


def test_projection_equals_gamma_star_average(disk_pair):
    pair, cap = disk_pair
    smp = sample_dgff(pair.W, 50, seed=2)
    Z, res = project_capacitor(smp, cap)
    gs = gamma_star(pair, tol=1e-13)
    avg = smp.values[:, pair.W.index(gs.support.sites)] @ gs.weights
    assert np.abs(cap.sigma * Z - avg).max() < 1e-10
    Z0, _ = project_capacitor(res, cap)
    assert np.abs(Z0).max() < 1e-10


def test_conditional_zero_and_tilt(disk_pair):
    pair, cap = disk_pair
    c0 = sample_conditional_zero(pair, cap, 5, seed=3)
    assert np.abs(CapacitorProjection(pair, cap).fit().project(c0.values)).max() < 1e-10
    t = sample_tilted(pair, cap, 1.5, 20, seed=3)
    base = sample_dgff(pair.W, 20, seed=3).values
    assert np.allclose(t.values, base + 1.5 * cap.psi.values)
    energy = cap.psi.values @ cap.Lpsi
    expected = -1.5 * (base @ cap.Lpsi) - 0.5 * 1.5**2 * energy
    assert np.allclose(t.log_weights, expected)
    with pytest.raises(ValueError):
        sample_tilted(pair, cap, np.inf)


def test_projection_transformer_checks_shape(disk_pair):
    pair, cap = disk_pair
    proj = CapacitorProjection(pair, cap).fit()
    with pytest.raises(ValueError):
        proj.transform(np.zeros((1, 3)))

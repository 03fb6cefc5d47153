import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from dgfflab import Disk, DomainPair, HarmonicExtension, LatticeDomain, capacitor, green_matrix, solve_dirichlet
from dgfflab.errors import DomainTooLarge
from dgfflab.harmonic import GreenMatrix, ScalarField, SparseLaplacian, capacity_by_escape

from conftest import box, dense_laplacian_oracle


def test_three_site_path_green_values():
    # (I - P)^{-1} for a path of three sites with killing at both ends, times 14
    G = green_matrix(LatticeDomain([(0, 0), (1, 0), (2, 0)])).matrix
    assert np.allclose(14 * G, [[15, 4, 1], [4, 16, 4], [1, 4, 15]], atol=1e-12, rtol=0)


def test_single_site_green_is_one():
    assert green_matrix(LatticeDomain([(3, -2)])).matrix[0, 0] == 1.0


@given(a=st.integers(1, 8), b=st.integers(1, 8))
def test_green_inverts_laplacian(a, b):
    dom = box(a, b)
    G = green_matrix(dom).matrix
    L = dense_laplacian_oracle(dom)
    assert np.abs(L @ G - np.eye(len(dom))).max() < 1e-10
    assert np.allclose(G, G.T, atol=1e-13)
    assert G.min() > 0


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=30))
def test_sparse_laplacian_matches_oracle(pts):
    dom = LatticeDomain(pts)
    assert np.array_equal(SparseLaplacian(dom).dense(), dense_laplacian_oracle(dom))


def test_dirichlet_solution_matches_dense_solve():
    dom = box(7, 6)
    rng = np.random.default_rng(0)
    outer = dom.outer_boundary
    data = ScalarField(outer, rng.normal(size=len(outer)))
    rhs = rng.normal(size=len(dom))
    sol = solve_dirichlet(dom, data, rhs, tol=1e-13)
    # oracle: b(x) = rhs(x) + 1/4 sum of exterior neighbour values
    b = rhs.copy()
    pos = {tuple(s): i for i, s in enumerate(outer.sites.tolist())}
    for i, (x, y) in enumerate(dom.sites.tolist()):
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            j = pos.get((x + dx, y + dy))
            if j is not None:
                b[i] += 0.25 * data.values[j]
    expected = np.linalg.solve(dense_laplacian_oracle(dom), b)
    assert np.abs(sol.values - expected).max() < 1e-9


@pytest.mark.parametrize("method", ["cg", "direct"])
def test_linear_functions_are_reproduced(method):
    dom = box(9, 5, (-3, 2))
    outer = dom.outer_boundary
    f = lambda s: 2.0 * s[:, 0] - 0.5 * s[:, 1] + 1.0
    sol = solve_dirichlet(dom, ScalarField(outer, f(outer.sites)), method=method, tol=1e-13)
    assert np.abs(sol.values - f(dom.sites)).max() < 1e-9


def test_capacity_energy_equals_escape_sum():
    pair = DomainPair.from_shapes(Disk((0, 0), 0.5), Disk((0, 0), 1.0), 16)
    cap = capacitor(pair, tol=1e-13)
    assert abs(cap.capacity - capacity_by_escape(pair, tol=1e-13)) / cap.capacity < 1e-9
    assert cap.sigma2 == pytest.approx(1 / (2 * cap.capacity))
    # psi is 1 on V and strictly between 0 and 1 on W \ V
    psi_v = cap.psi(pair.V.sites)
    rest = cap.psi(pair.W.difference(pair.V).sites)
    assert np.all(psi_v == 1.0) and np.all((rest > 0) & (rest < 1))


def test_capacity_against_green_oracle(nested_boxes):
    # Cap = 1/2 * 1^T (L_W) psi with psi = G_W-based solve of the interpolation problem
    pair = nested_boxes
    W = pair.W
    L = dense_laplacian_oracle(W)
    iv = W.index(pair.V.sites)
    free = np.setdiff1d(np.arange(len(W)), iv)
    psi = np.zeros(len(W))
    psi[iv] = 1.0
    psi[free] = np.linalg.solve(L[np.ix_(free, free)], -L[np.ix_(free, iv)] @ np.ones(len(iv)))
    assert capacitor(pair, tol=1e-13).capacity == pytest.approx(0.5 * psi @ L @ psi, rel=1e-10)


def test_green_binary_round_trip(tmp_path):
    g = green_matrix(box(3, 4))
    path = tmp_path / "g.bin"
    g.to_binary(path)
    back = GreenMatrix.from_binary(path)
    assert back.domain == g.domain and np.array_equal(back.matrix, g.matrix)
    assert g((0, 0), (2, 3)) == pytest.approx(g((2, 3), (0, 0)), abs=1e-15)
    assert g((0, 0), (9, 9)) == 0.0


def test_green_size_cap():
    with pytest.raises(DomainTooLarge):
        green_matrix(box(10, 10), max_sites=50)


def test_harmonic_extension_is_a_projection():
    W, V = box(8, 8), box(4, 4, (2, 2))
    ext = HarmonicExtension(W, V).fit()
    H = ext.operator()
    assert np.allclose(H @ H, H, atol=1e-12)
    X = np.random.default_rng(1).normal(size=(3, len(W)))
    out = ext.transform(X)
    off = ~V.contains(W.sites)
    assert np.array_equal(out[:, off], X[:, off])
    # the extension is harmonic on V
    L = dense_laplacian_oracle(W)
    assert np.abs((out @ L.T)[:, ~off]).max() < 1e-10


def test_harmonic_extension_estimator_api():
    est = HarmonicExtension(box(3, 3), box(1, 1, (1, 1)))
    assert set(clone(est).get_params()) == {"domain", "sub"}
    with pytest.raises(ValueError):
        est.fit().transform(np.zeros((1, 4)))

import numpy as np
import pytest

from dgfflab import Disk, DomainPair, Rectangle, capacitor, green_matrix
from dgfflab.projection import (
    averaged_delta_variance_direct,
    averaged_delta_variance_formula,
    box_bound_profile,
    build_scheme,
    phi_bar_variance,
    pushforward_to_inner_boundary,
    time_reversal_chain,
)
from dgfflab.walks import BoundaryMeasure, harmonic_measure


@pytest.fixture(scope="module", params=["disks", "squares"])
def scheme(request):
    if request.param == "disks":
        pair = DomainPair.from_shapes(Disk((0, 0), 0.5), Disk((0, 0), 1.0), 24)
    else:
        pair = DomainPair.from_shapes(Rectangle((0.25, 0.25), (0.75, 0.75)), Rectangle((0, 0), (1, 1)), 24)
    return build_scheme(pair, 3), capacitor(pair, tol=1e-13)


def test_pushforward_lives_on_inner_boundary(scheme):
    sch, _ = scheme
    assert sch.gamma_pi.support == sch.pair.V.inner_boundary
    assert sch.gamma_pi.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_pushforward_against_harmonic_measure_rows(scheme):
    sch, _ = scheme
    V = sch.pair.V
    interior = V.interior
    # oracle: mix exit distributions of the interior, one start at a time
    starts = sch.gamma.support.sites
    inside = interior.contains(starts)
    outer, H = harmonic_measure(interior, starts[inside])
    mass = H.T @ sch.gamma.weights[inside]
    expected = np.zeros(len(V.inner_boundary))
    expected[V.inner_boundary.index(outer.sites)] += mass
    on_boundary = ~inside
    expected[V.inner_boundary.index(starts[on_boundary])] += sch.gamma.weights[on_boundary]
    assert np.abs(sch.gamma_pi.weights - expected).max() < 1e-10


def test_measure_on_inner_boundary_is_fixed():
    pair = DomainPair.from_shapes(Disk((0, 0), 0.5), Disk((0, 0), 1.0), 12)
    inner = pair.V.inner_boundary
    m = BoundaryMeasure.normalized(inner, np.arange(1, len(inner) + 1))
    out = pushforward_to_inner_boundary(m, pair.V)
    assert np.allclose(out.weights, m.weights)


def test_delta_variance_routes_agree(scheme):
    sch, cap = scheme
    d = averaged_delta_variance_direct(sch, cap)
    f = averaged_delta_variance_formula(sch, cap, tol=1e-13)
    assert d > 0 and abs(d - f) < 1e-8


def test_phi_bar_variance_with_dense_green(scheme):
    sch, _ = scheme
    g = sch.gamma_pi.on(sch.pair.W)
    assert phi_bar_variance(sch) == pytest.approx(g @ green_matrix(sch.pair.W).matrix @ g, rel=1e-10)


def test_time_reversal_chain_sides_agree(scheme):
    sch, _ = scheme
    lhs, rhs = time_reversal_chain(sch, tol=1e-13)
    assert lhs == pytest.approx(rhs, rel=1e-8)


def test_box_bound_profile_brute_force():
    rng = np.random.default_rng(0)
    from dgfflab import LatticeDomain

    pts = np.unique(rng.integers(-6, 7, size=(25, 2)), axis=0)
    sup = LatticeDomain(pts)
    m = BoundaryMeasure.normalized(sup, rng.uniform(0.1, 1.0, size=len(sup)))
    sites, w = sup.sites, m.weights
    for l in (2, 3, 5):
        half = l // 2
        best = 0.0
        for cx in range(-12, 13):
            for cy in range(-12, 13):
                sel = (np.abs(sites[:, 0] - cx) <= half) & (np.abs(sites[:, 1] - cy) <= half)
                best = max(best, w[sel].sum())
        assert box_bound_profile(m, 10, [l])[l] == pytest.approx(best * 10 / l, abs=1e-12)

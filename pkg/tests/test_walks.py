import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from dgfflab import LatticeDomain, capacitor
from dgfflab.errors import StepBudgetExceeded
from dgfflab.walks import (
    BoundaryMeasure,
    WalkConfig,
    gamma_star,
    harmonic_measure,
    hit_probability_exact,
    potential_kernel,
    potential_kernel_integral,
    simulate_until,
    time_reversal_capacity,
)

from conftest import box, dense_laplacian_oracle

STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def test_single_step_exit_is_uniform():
    res = simulate_until(LatticeDomain([(0, 0)]), (0, 0), WalkConfig(seed=5), 40_000)
    counts = [int(np.all(res.exit_sites == s, axis=1).sum()) for s in STEPS]
    assert sum(counts) == 40_000
    assert stats.chisquare(counts).pvalue > 1e-3
    assert np.all(res.steps == 1)


def test_outcomes_do_not_depend_on_batching():
    free = box(6, 6)
    cfg = WalkConfig(seed=2, stream=7)
    whole = simulate_until(free, (2, 2), cfg, 200)
    parts = [simulate_until(free, (2, 2), cfg, 100, replica_start=s) for s in (0, 100)]
    assert np.array_equal(whole.exit_sites, np.concatenate([p.exit_sites for p in parts]))
    assert np.array_equal(whole.steps, np.concatenate([p.steps for p in parts]))


def test_step_budget():
    with pytest.raises(StepBudgetExceeded) as exc:
        simulate_until(box(40, 40), (20, 20), WalkConfig(max_steps=3), 50)
    assert exc.value.count == 50
    res = simulate_until(box(40, 40), (20, 20), WalkConfig(max_steps=3), 50, on_budget="record")
    assert res.exceeded == 50


def hit_oracle(domain, target, avoid, start):
    # absorbing chain on domain minus target/avoid; exterior counts as avoid
    free = domain.difference(target).difference(avoid)
    L = dense_laplacian_oracle(free)
    b = np.zeros(len(free))
    for i, (x, y) in enumerate(free.sites.tolist()):
        b[i] = 0.25 * sum(target.contains(np.array([[x + dx, y + dy]]))[0] for dx, dy in STEPS)
    h = np.linalg.solve(L, b)
    return h[free.index(np.array([start]))[0]]


def test_hitting_probability_against_chain_oracle():
    dom = box(7, 5)
    target = LatticeDomain([(0, 0), (0, 1)])
    avoid = LatticeDomain([(6, 4)])
    p = hit_probability_exact(dom, target, avoid, (3, 2), tol=1e-13)
    assert p == pytest.approx(hit_oracle(dom, target, avoid, (3, 2)), abs=1e-10)


def test_hitting_probability_matches_simulation():
    dom = box(7, 5)
    target = LatticeDomain([(0, 0), (0, 1)])
    p = hit_probability_exact(dom, target, None, (3, 2), tol=1e-13)
    free = dom.difference(target)
    res = simulate_until(free, (3, 2), WalkConfig(seed=11), 50_000)
    phat = target.contains(res.exit_sites).mean()
    assert abs(phat - p) <= 4 * np.sqrt(p * (1 - p) / 50_000)


def test_harmonic_measure_rows_and_simulation():
    dom = box(5, 5)
    outer, H = harmonic_measure(dom, [(2, 2), (0, 0)])
    assert np.allclose(H.sum(axis=1), 1.0, atol=1e-12)
    # symmetry of the centre start
    assert np.allclose(H[0], H[0][np.argsort(outer.index(outer.sites[:, ::-1]))], atol=1e-12)
    res = simulate_until(dom, (2, 2), WalkConfig(seed=3), 40_000)
    emp = np.bincount(outer.index(res.exit_sites), minlength=len(outer)) / 40_000
    se = np.sqrt(H[0] * (1 - H[0]) / 40_000)
    assert np.all(np.abs(emp - H[0]) <= 4 * se + 1e-12)


def test_potential_kernel_known_values():
    assert potential_kernel((0, 0)) == 0.0
    assert potential_kernel((1, 0)) == pytest.approx(1.0, abs=1e-12)
    assert potential_kernel((1, 1)) == pytest.approx(4 / np.pi, abs=1e-12)
    assert potential_kernel((2, 0)) == pytest.approx(4 - 8 / np.pi, abs=1e-12)


@given(st.integers(-12, 12), st.integers(-12, 12))
def test_potential_kernel_is_harmonic_off_origin(x, y):
    avg = np.mean([potential_kernel((x + dx, y + dy)) for dx, dy in STEPS])
    expected = potential_kernel((x, y)) + (1.0 if (x, y) == (0, 0) else 0.0)
    assert avg == pytest.approx(expected, abs=1e-10)
    assert potential_kernel((x, y)) == potential_kernel((-y, x))


@pytest.mark.parametrize("m", [17, 20, 24])
def test_potential_kernel_far_field_branch(m):
    # the far branch omits the next term cos(4 theta) / (6 pi |x|^2)
    gap = potential_kernel((m, 0)) - potential_kernel_integral(m, 0)
    assert abs(gap - 1 / (6 * np.pi * m * m)) < 2e-5


def test_boundary_measure_validation():
    sup = LatticeDomain([(0, 0), (1, 0)])
    with pytest.raises(ValueError):
        BoundaryMeasure(sup, [0.7, 0.7])
    with pytest.raises(ValueError):
        BoundaryMeasure(sup, [1.5, -0.5])
    m = BoundaryMeasure.normalized(sup, [1, 3])
    assert m.mass(np.array([[1, 0]])) == pytest.approx(0.75)


def test_time_reversal_capacity_agrees(nested_boxes):
    cap = capacitor(nested_boxes, tol=1e-13)
    est = time_reversal_capacity(nested_boxes, 200_000, WalkConfig(seed=1))
    assert abs(est.capacity - cap.capacity) <= 3 * est.stderr
    assert nested_boxes.V.contains(est.hits).all()


def test_gamma_star_is_a_probability(nested_boxes):
    g = gamma_star(nested_boxes)
    assert g.support == nested_boxes.V.inner_boundary
    assert g.weights.sum() == pytest.approx(1.0) and g.weights.min() > 0

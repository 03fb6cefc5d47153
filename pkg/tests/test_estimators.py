import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats
from sklearn.base import clone

from dgfflab import EstimateReport, HardWallEstimator, capacitor
from dgfflab.errors import EffectiveSampleSizeTooLow, ProbabilityUnderflow
from dgfflab.estimators import (
    centering_formula,
    conditional_minima,
    convolution_reconstruction,
    double_log_slope,
    effective_sample_size,
    estimate_conditional_tail,
    estimate_extreme_centering,
    estimate_hard_wall,
    estimate_repulsion_profile,
    monotone_check,
    tail_level,
)

from conftest import box


@pytest.fixture(scope="module")
def small():
    from dgfflab import DomainPair

    pair = DomainPair.from_domains(box(5, 5, (2, 2)), box(9, 9), N=10)
    return pair, capacitor(pair, tol=1e-13)


def test_centering_formula_value():
    N = 64.0
    expected = 2 * np.sqrt(2 / np.pi) * (np.log(N) - 0.375 * np.log(np.log(N)))
    assert centering_formula(64) == pytest.approx(expected)
    assert tail_level(64, 1.0) == pytest.approx(1.0 - expected)


@given(st.lists(st.floats(0, 10), min_size=1, max_size=50).filter(lambda v: sum(v) > 0))
def test_ess_is_between_one_and_n(v):
    ess = effective_sample_size(v)
    assert 1 - 1e-9 <= ess <= len(v) + 1e-9


def test_ess_of_equal_weights():
    assert effective_sample_size(np.full(37, 0.2)) == pytest.approx(37)


@pytest.mark.parametrize("level", [-1.0, -0.5])
def test_hard_wall_routes_agree_with_plain(small, level):
    pair, cap = small
    plain = estimate_hard_wall(pair, level, 40_000, seed=1, stream=1, route="plain", cap=cap)
    for route in ("tilted", "conditional"):
        est = estimate_hard_wall(pair, level, 20_000, seed=2, stream=2, route=route, cap=cap)
        assert abs(est.estimate - plain.estimate) <= 3 * np.hypot(est.stderr, plain.stderr)


def test_hard_wall_trivial_level(small):
    pair, cap = small
    rep = estimate_hard_wall(pair, -np.inf, 100, route="plain", cap=cap)
    assert rep.estimate == 1.0 and rep.stderr == 0.0


def test_ess_guard_emits_bound(small):
    pair, cap = small
    with pytest.raises(EffectiveSampleSizeTooLow) as exc:
        estimate_hard_wall(pair, 3.0, 2000, route="tilted", shift=0.0, cap=cap)
    rep = exc.value.report
    assert rep.bound_only and rep.extra["upper_bound"] > 0


def test_hard_wall_estimator_api(small):
    pair, _ = small
    est = HardWallEstimator(level=-1.0, replicas=2000, route="conditional")
    assert clone(est).get_params()["route"] == "conditional"
    est.fit(pair)
    assert est.score() == pytest.approx(-est.report_.extra["neg_log_p"])
    with pytest.raises(ValueError):
        HardWallEstimator().fit(pair)


def test_report_serialization_drops_timing():
    rep = EstimateReport("q", 0.5, 0.1, 10, 0, 0, ci=(0.3, 0.7), extra={"a": np.float64(1.5)}, wall_clock=3.2)
    d = json.loads(rep.to_json())
    assert "wall_clock" not in d and d["extra"]["a"] == 1.5
    assert json.loads(rep.to_json(include_timing=True))["wall_clock"] == 3.2


def test_conditional_minima_decomposition(small):
    pair, cap = small
    mins, zs = conditional_minima(pair, cap, 500, seed=3, return_z=True)
    from dgfflab.sampler import sample_dgff

    vals = sample_dgff(pair.W, 500, seed=3).values
    # h restricted to V equals h0 + sigma Z there, since psi = 1 on V
    full_min = vals[:, pair.W.index(pair.V.sites)].min(axis=1)
    assert np.allclose(full_min, mins + cap.sigma * zs, atol=1e-10)


def test_conditional_tail_is_monotone_and_underflows(small):
    pair, cap = small
    reps, shifted = estimate_conditional_tail(pair, np.linspace(-1, 3, 9), 3000, cap=cap)
    p = [r.estimate for r in reps]
    assert all(a >= b for a, b in zip(p, p[1:]))
    with pytest.raises(ProbabilityUnderflow):
        estimate_conditional_tail(pair, [50.0, 60.0], 100, cap=cap)


def test_double_log_slope_recovers_gumbel_slope():
    # P(X >= u) = exp(-e^u) for X = log(E), E ~ Exp(1): log(-log P) = u
    x = np.log(np.random.default_rng(0).exponential(size=50_000))
    fit = double_log_slope(x, np.linspace(-2.0, 1.0, 7), n_boot=200)
    assert fit["ci"][0] < 1.0 < fit["ci"][1]
    assert fit["slope"] == pytest.approx(1.0, abs=0.05)


@pytest.mark.parametrize("c, u, sigma", [(0.0, 0.0, 0.5), (1.0, 0.3, 0.8), (-0.5, 0.2, 1.2)])
def test_convolution_of_point_mass(c, u, sigma):
    # a step integrand costs at most one grid cell times the kernel peak
    est, se = convolution_reconstruction(np.full(10, c), u, sigma)
    assert abs(est - stats.norm.cdf((c - u) / sigma)) <= 1 / (50 * np.sqrt(2 * np.pi))
    assert se < 1e-15


@pytest.mark.parametrize("u, sigma, s", [(0.0, 0.5, 1.0), (1.0, 0.8, 0.7)])
def test_convolution_of_gaussian_minima(u, sigma, s):
    # minima ~ N(0, s^2) give P = P(X >= V) with V ~ N(u, sigma^2)
    x = np.random.default_rng(1).normal(0.0, s, size=100_000)
    est, se = convolution_reconstruction(x, u, sigma)
    assert abs(est - stats.norm.cdf(-u / np.hypot(s, sigma))) <= 4 * se


def test_repulsion_profile_without_conditioning(small):
    pair, cap = small
    rep = estimate_repulsion_profile(pair, -np.inf, 200, cap=cap, quantiles=(0.1, 0.5, 0.9))
    for q, z in rep.extra["z_quantiles"].items():
        assert z == pytest.approx(stats.norm.ppf(float(q)), abs=1e-2)
    assert rep.estimate == pytest.approx(0.0, abs=1e-12)
    assert not rep.bound_only


def test_repulsion_lift_increases_with_level(small):
    pair, cap = small
    mins = conditional_minima(pair, cap, 4000, seed=5)
    lifts = [estimate_repulsion_profile(pair, lv, 4000, cap=cap, mins=mins).estimate for lv in (-1.0, 0.0, 1.0)]
    assert lifts[0] < lifts[1] < lifts[2]


def test_monotone_check_flags_rises():
    _, worst = monotone_check([0, 1, 2], [0.5, 0.4, 0.3], [0.01] * 3)
    assert worst == 0.0
    fitted, worst = monotone_check([0, 1, 2], [0.5, 0.6, 0.3], [0.01] * 3)
    assert worst == pytest.approx(0.1 / np.hypot(0.01, 0.01))
    assert np.all(np.diff(fitted) <= 1e-12)


def test_extreme_centering_report_fields():
    reps = estimate_extreme_centering({4: box(3, 3, (1, 1))}, 200, seed=1)
    (r,) = reps
    assert r.extra["difference"] == pytest.approx(r.estimate - centering_formula(4))
    assert r.route.startswith("exact-sampling/")

"""Monte Carlo estimators for extremes, hard-wall and tail probabilities.

All estimators return :class:`EstimateReport` objects. Replica ``i`` of a
run is determined by ``(seed, stream, i)`` alone, so reports are
reproducible bit for bit.

Notation: ``level`` is the threshold in ``{min_V h >= level}``; the
thresholds ``-m_N + u`` of the right-tail events are produced by
:func:`tail_level`.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special, stats
from sklearn.base import BaseEstimator
from sklearn.isotonic import IsotonicRegression
from sklearn.utils.validation import check_is_fitted

from .errors import EffectiveSampleSizeTooLow, ProbabilityUnderflow
from .harmonic import capacitor
from .rng import philox
from .sampler import DGFFSampler, project_capacitor

__all__ = [
    "G_CONST",
    "EstimateReport",
    "centering_formula",
    "tail_level",
    "effective_sample_size",
    "estimate_extreme_centering",
    "estimate_hard_wall",
    "HardWallEstimator",
    "conditional_minima",
    "estimate_conditional_tail",
    "double_log_slope",
    "estimate_repulsion_profile",
    "convolution_reconstruction",
    "monotone_check",
    "ESS_FRACTION",
]

G_CONST = 2.0 / np.pi
ESS_FRACTION = 0.01


def centering_formula(N):
    """``2 sqrt(g) (log N - 3/8 log log N)`` with ``g = 2/pi`` (no O(1) term)."""
    N = float(N)
    return 2.0 * np.sqrt(G_CONST) * (np.log(N) - 0.375 * np.log(np.log(N)))


def tail_level(N, u):
    """Threshold ``-m_N + u`` of the right-tail event for the minimum."""
    return -centering_formula(N) + u


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)
    return x


@dataclass
class EstimateReport:
    """A Monte Carlo estimate with its error bars and provenance.

    ``wall_clock`` is kept out of :meth:`to_dict` unless requested, so that
    serialized reports are identical across repeated runs.
    """

    quantity: str
    estimate: float
    stderr: float
    replicas: int
    seed: int
    stream: int
    route: str = "plain"
    tilt: dict | None = None
    ci: tuple | None = None
    ess: float | None = None
    bound_only: bool = False
    extra: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def to_dict(self, include_timing=False):
        d = asdict(self)
        if not include_timing:
            d.pop("wall_clock")
        return _jsonable(d)

    def to_json(self, include_timing=False):
        return json.dumps(self.to_dict(include_timing), sort_keys=True, separators=(",", ":"))


def effective_sample_size(values):
    """``(sum v)^2 / sum v^2`` for nonnegative contributions ``v``."""
    v = np.asarray(values, dtype=float)
    top = float(np.max(v)) if len(v) else 0.0
    if not top > 0:
        return 0.0
    v = v / top  # avoids underflow of v**2 for tiny weights
    return float(np.sum(v)) ** 2 / float(np.sum(v * v))


def _log_mean_and_se(logv):
    """``log mean(exp(logv))`` and the standard error of the mean, scaled back."""
    logv = np.asarray(logv, dtype=float)
    n = len(logv)
    m = float(np.max(logv))
    if not np.isfinite(m):
        return -np.inf, 0.0, 0.0, 0.0
    v = np.exp(logv - m)
    mean = v.mean()
    se = v.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0
    return m + np.log(mean), se / mean, effective_sample_size(v), m


def _batches(n, batch):
    for s in range(0, n, batch):
        yield s, min(batch, n - s)


# ---------------------------------------------------------------------------
# extremes
# ---------------------------------------------------------------------------


def estimate_extreme_centering(domains, replicas, *, seed=0, stream=0, batch=64, method="auto"):
    """Empirical ``E[max h]`` for each domain together with the centering formula.

    ``domains`` maps ``N`` to the lattice domain ``W_N``; the stream of
    scale ``N`` is ``stream * 2**20 + N``.
    """
    reports = []
    for N, dom in sorted(domains.items()):
        t0 = time.perf_counter()
        st = int(stream) * 2**20 + int(N)
        smp = DGFFSampler(dom, method).fit()
        maxima = np.empty(replicas)
        for s, k in _batches(replicas, batch):
            maxima[s : s + k] = smp.sample_values(k, seed, st, s).max(axis=1)
        mean = float(maxima.mean())
        se = float(maxima.std(ddof=1) / np.sqrt(replicas))
        formula = centering_formula(N) if N > 1 else None
        reports.append(
            EstimateReport(
                quantity="mean_max",
                estimate=mean,
                stderr=se,
                replicas=replicas,
                seed=seed,
                stream=st,
                route=f"exact-sampling/{smp.method_}",
                ci=(mean - 1.96 * se, mean + 1.96 * se),
                extra={
                    "N": int(N),
                    "sites": len(dom),
                    "formula": formula,
                    "difference": None if formula is None else mean - formula,
                    "max_std": float(maxima.std(ddof=1)),
                },
                wall_clock=time.perf_counter() - t0,
            )
        )
    return reports


# ---------------------------------------------------------------------------
# hard wall and right tail
# ---------------------------------------------------------------------------


def _v_mask(pair):
    return pair.W.index(pair.V.sites)


def conditional_minima(pair, cap, replicas, *, seed=0, stream=0, sampler=None, batch=128, return_z=False):
    """``min_V h0`` for exact samples ``h0`` of the field conditioned on ``Z_h = 0``.

    The unconditional field restricted to ``V`` is ``h0 + sigma Z`` with
    ``Z ~ N(0, 1)`` independent of ``h0``; with ``return_z`` the ``Z`` of
    each replica (from the same draw) is returned too.
    """
    sampler = sampler or DGFFSampler(pair.W).fit()
    iv = _v_mask(pair)
    mins = np.empty(replicas)
    zs = np.empty(replicas)
    for s, k in _batches(replicas, batch):
        smp = sampler.sample(k, seed, stream, s)
        Z, res = project_capacitor(smp, cap)
        mins[s : s + k] = res.values[:, iv].min(axis=1)
        zs[s : s + k] = Z
    return (mins, zs) if return_z else mins


def _hard_wall_plain(pair, level, replicas, seed, stream, sampler, batch):
    iv = _v_mask(pair)
    hits = np.empty(replicas, dtype=bool)
    for s, k in _batches(replicas, batch):
        vals = sampler.sample_values(k, seed, stream, s)
        hits[s : s + k] = vals[:, iv].min(axis=1) >= level
    p = float(hits.mean())
    return p, float(np.sqrt(p * (1 - p) / replicas)), float(hits.sum())


def _hard_wall_tilted(pair, cap, level, s_shift, replicas, seed, stream, sampler, batch):
    iv = _v_mask(pair)
    psi = np.asarray(cap.psi.values)
    Lpsi = np.asarray(cap.Lpsi)
    energy = float(psi @ Lpsi)
    logc = np.full(replicas, -np.inf)
    for s, k in _batches(replicas, batch):
        base = sampler.sample_values(k, seed, stream, s)
        logw = -s_shift * (base @ Lpsi) - 0.5 * s_shift**2 * energy
        hit = (base[:, iv] + s_shift * psi[iv]).min(axis=1) >= level
        logc[s : s + k] = np.where(hit, logw, -np.inf)
    return logc


def estimate_hard_wall(
    pair,
    level,
    replicas,
    *,
    seed=0,
    stream=0,
    route="tilted",
    shift=None,
    cap=None,
    sampler=None,
    batch=128,
    ess_fraction=ESS_FRACTION,
    quantity="hard_wall",
):
    """Estimate ``P(min_{V_N} h >= level)``.

    Parameters
    ----------
    route : {'tilted', 'conditional', 'plain'}
        ``tilted`` samples ``h + s psi`` and reweights by the likelihood
        ratio (default ``s = -level``, the lift that puts the mean of the
        wall at zero). ``conditional`` integrates out ``Z_h`` exactly:
        ``P = E[Phi_bar((level - min_V h0) / sigma)]`` with ``h0`` the
        conditioned field. ``plain`` counts hits.
    ess_fraction : float
        Effective sample size floor as a fraction of ``replicas``; below it
        :class:`EffectiveSampleSizeTooLow` carries a bound-only report.

    Notes
    -----
    ``extra`` holds ``-log P``, the reference ``Cap * level^2`` and, for
    ``level = 0``, the ratio to ``Cap * 4 g (log N)^2``.
    """
    t0 = time.perf_counter()
    cap = cap or capacitor(pair)
    sampler = sampler or DGFFSampler(pair.W).fit()
    tilt = None
    if route == "plain":
        p, se, hits = _hard_wall_plain(pair, level, replicas, seed, stream, sampler, batch)
        logp = np.log(p) if p > 0 else -np.inf
        rel_se = se / p if p > 0 else np.inf
        ess = hits
    elif route == "tilted":
        s_shift = float(-level if shift is None else shift)
        tilt = {"shift": s_shift, "profile": "capacitor"}
        logc = _hard_wall_tilted(pair, cap, level, s_shift, replicas, seed, stream, sampler, batch)
        logp, rel_se, ess, _ = _log_mean_and_se(logc)
    elif route == "conditional":
        mins = conditional_minima(pair, cap, replicas, seed=seed, stream=stream, sampler=sampler, batch=batch)
        logv = special.log_ndtr((mins - level) / cap.sigma)
        logp, rel_se, ess, _ = _log_mean_and_se(logv)
        tilt = {"integrated": "Z", "sigma": cap.sigma}
    else:
        raise ValueError(f"unknown route {route!r}")
    p = float(np.exp(logp))
    se = float(p * rel_se)
    N = pair.N
    extra = {
        "N": int(N),
        "level": float(level),
        "neg_log_p": float(-logp),
        "neg_log_p_stderr": float(rel_se),
        "capacity": cap.capacity,
        "cap_level_sq": cap.capacity * level**2,
    }
    if N > 1:
        extra["leading_order"] = cap.capacity * 4 * G_CONST * np.log(N) ** 2
        extra["ratio"] = float(-logp / extra["leading_order"]) if np.isfinite(logp) else None
    lo, hi = (p - 1.96 * se, p + 1.96 * se)
    report = EstimateReport(
        quantity=quantity,
        estimate=p,
        stderr=se,
        replicas=replicas,
        seed=seed,
        stream=stream,
        route=route,
        tilt=tilt,
        ci=(max(lo, 0.0), hi),
        ess=float(ess),
        extra=extra,
        wall_clock=time.perf_counter() - t0,
    )
    if route != "plain" and (ess < ess_fraction * replicas or not np.isfinite(logp)):
        report.bound_only = True
        upper = p + 3 * se if np.isfinite(logp) else 3.0 / replicas
        report.extra["upper_bound"] = float(upper)
        raise EffectiveSampleSizeTooLow(
            f"effective sample size {ess:.1f} below {ess_fraction:.0%} of {replicas} replicas", report
        )
    return report


class HardWallEstimator(BaseEstimator):
    """Estimator wrapper: ``fit(pair)`` stores the report in ``report_``.

    Parameters mirror :func:`estimate_hard_wall`; ``u`` sets the level
    ``-m_N + u`` unless ``level`` is given.
    """

    def __init__(self, u=None, level=None, replicas=10_000, route="tilted", shift=None, seed=0, stream=0):
        self.u = u
        self.level = level
        self.replicas = replicas
        self.route = route
        self.shift = shift
        self.seed = seed
        self.stream = stream

    def fit(self, pair, y=None):
        if self.level is None and self.u is None:
            raise ValueError("set u or level")
        level = self.level if self.level is not None else tail_level(pair.N, self.u)
        self.report_ = estimate_hard_wall(
            pair, level, self.replicas, seed=self.seed, stream=self.stream, route=self.route, shift=self.shift
        )
        return self

    def score(self, pair=None, y=None):
        check_is_fitted(self, "report_")
        return -self.report_.extra["neg_log_p"]


# ---------------------------------------------------------------------------
# conditional tail
# ---------------------------------------------------------------------------


def estimate_conditional_tail(pair, u_grid, replicas, *, seed=0, stream=0, cap=None, mins=None):
    """``P(min_V h >= -m_N + u | Z_h = 0)`` on a grid of ``u``.

    Returns one report per ``u``. Grid points with no successful replica
    yield a bound-only report (rule-of-three upper bound ``3/n``); call
    :func:`double_log_slope` for the fit. ``ProbabilityUnderflow`` is raised
    only if every grid point underflows.
    """
    cap = cap or capacitor(pair)
    t0 = time.perf_counter()
    if mins is None:
        mins = conditional_minima(pair, cap, replicas, seed=seed, stream=stream)
    m_N = centering_formula(pair.N)
    shifted = np.sort(mins + m_N)
    n = len(shifted)
    reports = []
    for u in u_grid:
        count = n - int(np.searchsorted(shifted, u, side="left"))
        p = count / n
        se = np.sqrt(p * (1 - p) / n)
        rep = EstimateReport(
            quantity="conditional_tail",
            estimate=p,
            stderr=float(se),
            replicas=n,
            seed=seed,
            stream=stream,
            route="conditioned-sampling",
            ci=tuple(stats.binomtest(count, n).proportion_ci(0.95, method="wilson")),
            extra={"u": float(u), "N": int(pair.N), "count": count},
        )
        if count == 0:
            rep.bound_only = True
            rep.extra["upper_bound"] = 3.0 / n
        reports.append(rep)
    elapsed = time.perf_counter() - t0
    for r in reports:
        r.wall_clock = elapsed / len(reports)
    if all(r.bound_only for r in reports):
        raise ProbabilityUnderflow("no replica satisfies the event on any grid point", 3.0 / n, reports)
    return reports, shifted


def double_log_slope(shifted_mins, u_grid, *, min_count=10, n_boot=1000, seed=0):
    """Slope of ``log(-log P(u))`` against ``u`` with a bootstrap 95% interval.

    ``shifted_mins`` are ``min_V h0 + m_N`` per replica. Only grid points
    with at least ``min_count`` successes and failures enter the fit; the
    bootstrap resamples replicas so correlations across ``u`` are kept.
    """
    x = np.sort(np.asarray(shifted_mins, dtype=float))
    n = len(x)
    u = np.asarray(u_grid, dtype=float)

    def surv(xs):
        return (len(xs) - np.searchsorted(xs, u, side="left")) / len(xs)

    p = surv(x)
    counts = p * n
    ok = (counts >= min_count) & (n - counts >= min_count)
    if ok.sum() < 3:
        raise ProbabilityUnderflow(f"only {int(ok.sum())} feasible grid points", None)
    uu = u[ok]

    def fit(pp):
        y = np.log(-np.log(pp[ok]))
        return np.polyfit(uu, y, 1)[0]

    slope = float(fit(p))
    rng = philox(seed, 0xB007)
    boots = np.empty(n_boot)
    for b in range(n_boot):
        xs = np.sort(x[rng.integers(0, n, n)])
        pb = surv(xs)
        pb = np.clip(pb, 0.5 / n, 1 - 0.5 / n)
        boots[b] = fit(pb)
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return {
        "slope": slope,
        "ci": (float(lo), float(hi)),
        "stderr": float(boots.std(ddof=1)),
        "u_feasible": uu.tolist(),
        "p_feasible": p[ok].tolist(),
    }


# ---------------------------------------------------------------------------
# repulsion profile and convolution identity
# ---------------------------------------------------------------------------


def estimate_repulsion_profile(
    pair, level, replicas, *, seed=0, stream=0, cap=None, quantiles=(0.1, 0.5, 0.9), mins=None, ess_fraction=ESS_FRACTION
):
    """Law of ``Z_h`` given ``{min_V h >= level}``.

    Given the conditioned field, the event is ``Z >= a`` with
    ``a = (level - min_V h0) / sigma``, so the conditional law of ``Z`` is a
    mixture of normals truncated at ``a``, weighted by ``Phi_bar(a)``.
    The report's estimate is ``E[sigma Z | event]``; ``extra`` holds
    quantiles of ``Z`` and the unconditional-sample check
    ``level = -inf`` reproduces ``N(0, 1)``. When the effective sample size
    of the mixture weights is below ``ess_fraction * replicas`` the report is
    marked ``bound_only`` and should not be read as a point estimate.
    """
    cap = cap or capacitor(pair)
    t0 = time.perf_counter()
    if mins is None:
        mins = conditional_minima(pair, cap, replicas, seed=seed, stream=stream)
    sigma = cap.sigma
    n = len(mins)
    a = np.full(n, -np.inf) if np.isneginf(level) else (level - mins) / sigma
    log_sf = special.log_ndtr(-a)
    log_pdf = np.where(np.isneginf(a), -np.inf, -0.5 * np.where(np.isneginf(a), 0.0, a) ** 2 - 0.5 * np.log(2 * np.pi))
    top = float(log_sf.max())
    w = np.exp(log_sf - top)
    # E[Z ; Z >= a] = phi(a)
    num = np.exp(log_pdf - top)
    mean_z = num.sum() / w.sum()
    se_z = np.sqrt(np.sum((num - mean_z * w) ** 2)) / w.sum()
    keep = w > 1e-12
    lo = max(-8.0, float(np.min(a[keep])) if np.isfinite(a[keep]).all() else -8.0)
    grid = np.linspace(lo, max(8.0, float(np.max(np.where(keep, a, -np.inf))) + 8.0), 2001)
    # P(Z <= z | event) = sum_i (sf(a_i) - sf(z))^+ / sum_i sf(a_i)
    sf_grid = np.exp(special.log_ndtr(-grid) - top)
    cdf = np.zeros_like(grid)
    for s0 in range(0, int(keep.sum()), 2000):
        wk = w[keep][s0 : s0 + 2000]
        cdf += np.clip(wk[None, :] - sf_grid[:, None], 0.0, None).sum(axis=1)
    cdf /= w.sum()
    qs = {str(q): float(np.interp(q, cdf, grid)) for q in quantiles}
    ess = effective_sample_size(w)
    return EstimateReport(
        quantity="lift_sigma_z",
        estimate=float(sigma * mean_z),
        stderr=float(sigma * se_z),
        replicas=n,
        seed=seed,
        stream=stream,
        route="conditional",
        ess=ess,
        bound_only=bool(ess < ess_fraction * n),
        extra={"level": float(level), "N": int(pair.N), "sigma": sigma, "z_quantiles": qs, "mean_z": float(mean_z)},
        wall_clock=time.perf_counter() - t0,
    )


def convolution_reconstruction(shifted_mins, u, sigma, *, width=None, span=8.0):
    """Rebuild ``P(Omega(u))`` from conditioned minima by Gaussian convolution.

    ``P(Omega(u)) = int phi_sigma(u - v) P(Omega(v) | Z = 0) dv`` evaluated on a
    grid of spacing ``sigma/50`` over ``u +- 8 sigma`` (trapezoid rule) with
    the empirical conditional survival function. Returns the estimate and
    its standard error (it is a per-replica average).
    """
    width = sigma / 50.0 if width is None else width
    v = u + np.arange(-span * sigma, span * sigma + 0.5 * width, width)
    kern = stats.norm.pdf(u - v, scale=sigma)
    wts = np.full(len(v), width)
    wts[0] = wts[-1] = width / 2
    kw = kern * wts
    x = np.asarray(shifted_mins, dtype=float)
    # g(x) = sum_v kw(v) 1[x >= v]
    cum = np.cumsum(kw)
    idx = np.searchsorted(v, x, side="right")
    g = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
    return float(g.mean()), float(g.std(ddof=1) / np.sqrt(len(g)))


def monotone_check(u_values, estimates, stderrs):
    """Isotonic (non-increasing) fit and the largest raw violation in standard errors."""
    u = np.asarray(u_values, dtype=float)
    p = np.asarray(estimates, dtype=float)
    se = np.asarray(stderrs, dtype=float)
    iso = IsotonicRegression(increasing=False).fit(u, p, sample_weight=1.0 / np.maximum(se, 1e-12) ** 2)
    fitted = iso.predict(u)
    order = np.argsort(u)
    worst = 0.0
    for i in range(len(order)):
        for j in range(i + 1, len(order)):
            a, b = order[i], order[j]
            rise = p[b] - p[a]
            if rise > 0:
                worst = max(worst, rise / np.hypot(se[a], se[b]) if (se[a] or se[b]) else np.inf)
    return fitted, float(worst)

"""Experiment drivers and result persistence.

Every experiment takes a validated :class:`~dgfflab.config.ExperimentConfig`
and returns an :class:`ExperimentResult` of JSON-ready reports, CSV tables
and :class:`~dgfflab.checks.CheckResult` verdicts. :func:`write_result`
persists them; everything except ``timings.json`` is a deterministic
function of the configuration.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .catalog import pair_from_specs
from .checks import BATTERY, CheckContext, CheckResult, check_capacity_triple
from .errors import DegenerateInterior, EffectiveSampleSizeTooLow, ProbabilityUnderflow
from .estimators import (
    EstimateReport,
    _jsonable,
    centering_formula,
    conditional_minima,
    double_log_slope,
    estimate_conditional_tail,
    estimate_extreme_centering,
    estimate_hard_wall,
    estimate_repulsion_profile,
    monotone_check,
    tail_level,
)
from .geometry import discretize, shape_from_dict
from .harmonic import capacitor, capacity_by_escape
from .projection import averaged_delta_variance_direct, build_scheme
from .sampler import DGFFSampler
from .walks import WalkConfig, time_reversal_capacity

__all__ = ["ExperimentResult", "EXPERIMENT_FUNCTIONS", "run_experiment", "write_result", "scoreboard", "context_from_config"]

_UNIT_SQUARE = {"kind": "rectangle", "lower": [0.0, 0.0], "upper": [1.0, 1.0]}


@dataclass
class ExperimentResult:
    experiment: str
    config_hash: str
    reports: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)


def context_from_config(cfg):
    tol = cfg.tolerances
    return CheckContext(
        seed=int(cfg.seed),
        replicas_scale=float(cfg.params.get("replicas_scale", 1.0)),
        exact_tol=float(tol.get("exact", 1e-8)),
        z=float(tol.get("sigma", 3.0)),
        solver_tol=float(tol.get("solver", 1e-10)),
    )


def _stream(*parts):
    """Stable integer stream id from small non-negative integers."""
    s = 0
    for p in parts:
        s = s * 4099 + int(p) + 1
    return s


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def run_capacity_suite(cfg, ctx):
    """Three capacity routes per geometry and scale."""
    target = cfg.count("target_hits", 12_000, ctx.replicas_scale)
    rows, reports = [], []
    exact_bad = stat_bad = 0
    worst_rel = worst_z = 0.0
    for gi, g in enumerate(cfg.geometries):
        for N in cfg.N:
            pair = pair_from_specs(g.V, g.W, N)
            cap = capacitor(pair, tol=ctx.solver_tol)
            esc = capacity_by_escape(pair, tol=ctx.solver_tol)
            outer = len(pair.W.outer_boundary)
            walks = int(math.ceil(target / (2 * cap.capacity / outer)))
            stream = _stream(gi, N)
            mc = time_reversal_capacity(pair, walks, WalkConfig(seed=cfg.seed, stream=stream))
            rel = abs(cap.capacity - esc) / cap.capacity
            z = abs(mc.capacity - cap.capacity) / mc.stderr if mc.stderr > 0 else math.inf
            worst_rel, worst_z = max(worst_rel, rel), max(worst_z, z)
            exact_bad += rel > ctx.exact_tol
            stat_bad += z > ctx.z
            rows.append([g.name, N, len(pair.V), len(pair.W), cap.capacity, esc, mc.capacity, mc.stderr, walks])
            reports.append(
                EstimateReport(
                    quantity="capacity",
                    estimate=mc.capacity,
                    stderr=mc.stderr,
                    replicas=walks,
                    seed=cfg.seed,
                    stream=stream,
                    route="time-reversal",
                    extra={"geometry": g.name, "N": N, "energy": cap.capacity, "escape": esc, "relative_difference": rel, "z": z},
                ).to_dict()
            )
    header = ["geometry", "N", "sites_V", "sites_W", "energy", "escape", "time_reversal", "time_reversal_stderr", "walks"]
    checks = [
        CheckResult("capacity-exact-routes", exact_bad == 0, worst_rel, ctx.exact_tol, "exact"),
        CheckResult("capacity-time-reversal", stat_bad == 0, worst_z, ctx.z, "statistical"),
    ]
    return reports, {"capacity": (header, rows)}, checks


def run_identity_suite(cfg, ctx):
    """The property battery; ``params.only`` restricts it to matching check names."""
    only = cfg.params.get("only")
    only = [only] if isinstance(only, str) else only
    overrides = {}
    if "r" in cfg.scales:
        overrides["r_rule"] = lambda N: cfg.scale("r", N)
    results = []
    for fn in BATTERY:
        if only and not any(o in fn.__name__ for o in only):
            continue
        kwargs = {k: v for k, v in overrides.items() if k in fn.__code__.co_varnames}
        if fn is check_capacity_triple and cfg.N:
            kwargs["Ns"] = tuple(cfg.N)
        results.append(fn(ctx, **kwargs))
    rows = [[c.name, "PASS" if c.passed else "FAIL", c.route, c.statistic, c.threshold] for c in results]
    reports = [c.to_dict() for c in results]
    return reports, {"checks": (["check", "verdict", "route", "statistic", "threshold"], rows)}, results


def run_centering(cfg, ctx):
    """Empirical expected maximum against the centering formula."""
    W_spec = cfg.geometries[0].W if cfg.geometries else _UNIT_SQUARE
    shape = shape_from_dict(W_spec)
    replicas = cfg.count("samples", 10_000, ctx.replicas_scale)
    domains = {N: discretize(shape, N) for N in cfg.N}
    reports = estimate_extreme_centering(domains, replicas, seed=cfg.seed, stream=1)
    rows = [[r.extra["N"], r.extra["sites"], r.estimate, r.stderr, r.extra["formula"], r.extra["difference"]] for r in reports]
    diffs = [r.extra["difference"] for r in reports if r.extra["difference"] is not None]
    band = float(cfg.params.get("band", 2.0))
    max_spread = float(cfg.params.get("spread", 1.5))
    worst = max(abs(d) for d in diffs)
    spread = max(diffs) - min(diffs)
    checks = [
        CheckResult("centering-band", worst <= band, worst, band, "statistical", {"differences": diffs}),
        CheckResult("centering-spread", spread <= max_spread, spread, max_spread, "statistical"),
    ]
    header = ["N", "sites", "mean_max", "stderr", "formula", "difference"]
    return [r.to_dict() for r in reports], {"centering": (header, rows)}, checks


def run_hard_wall(cfg, ctx):
    """``P(min_V h >= 0)`` (or ``>= -m_N + u`` for each ``u``) with the leading-order ratio.

    Estimates below the effective-sample-size floor are kept as bound-only
    reports and fail the ESS guard check.
    """
    route = cfg.params.get("route", "conditional")
    replicas = cfg.count("samples", 20_000, ctx.replicas_scale)
    lo, hi = cfg.params.get("ratio_band", [0.5, 1.1])
    rows, reports = [], []
    ess_bad = 0
    band_bad = 0
    ratios = {}
    for gi, g in enumerate(cfg.geometries):
        for N in cfg.N:
            pair = pair_from_specs(g.V, g.W, N)
            cap = capacitor(pair)
            smp = DGFFSampler(pair.W).fit()
            levels = [("hard-wall", 0.0)] if not cfg.u else [(f"u={u}", tail_level(N, u)) for u in cfg.u]
            for li, (label, level) in enumerate(levels):
                stream = _stream(gi, N, li)
                try:
                    rep = estimate_hard_wall(pair, level, replicas, seed=cfg.seed, stream=stream, route=route, cap=cap, sampler=smp)
                    guarded = True
                except EffectiveSampleSizeTooLow as exc:
                    rep = exc.report
                    guarded = False
                ess_bad += not guarded
                ratio = rep.extra.get("ratio")
                if level == 0.0:
                    ratios[(g.name, N)] = ratio
                    band_bad += ratio is None or not lo <= ratio <= hi
                rep.extra["geometry"] = g.name
                reports.append(rep.to_dict())
                rows.append([g.name, N, label, level, rep.estimate, rep.stderr, rep.extra["neg_log_p"], rep.extra.get("leading_order"), ratio, rep.ess, rep.ess / replicas, rep.bound_only])
    checks = [CheckResult("hard-wall-ess-guard", ess_bad == 0, ess_bad, 0, "statistical", {"floor_fraction": 0.01})]
    if ratios:
        worst = max((abs(r - 1) for r in ratios.values() if r is not None), default=math.inf)
        checks.append(CheckResult("hard-wall-ratio-band", band_bad == 0, worst, max(1 - lo, hi - 1), "statistical",
                                  {"ratios": {f"{k[0]}/{k[1]}": v for k, v in ratios.items()}}))
        for name in {k[0] for k in ratios}:
            top = max(N for (gname, N) in ratios if gname == name)
            r = ratios[(name, top)]
            checks.append(CheckResult(f"hard-wall-deviation-sign[{name}]", r is not None and r < 1, (r or math.nan) - 1, 0.0, "statistical"))
    header = ["geometry", "N", "event", "level", "estimate", "stderr", "neg_log_p", "leading_order", "ratio", "ess", "ess_fraction", "bound_only"]
    return reports, {"hard_wall": (header, rows)}, checks


def _conditioned(cfg, g, gi, N, replicas):
    pair = pair_from_specs(g.V, g.W, N)
    cap = capacitor(pair)
    mins = conditional_minima(pair, cap, replicas, seed=cfg.seed, stream=_stream(gi, N))
    return pair, cap, mins


def run_conditional_tail(cfg, ctx):
    """Conditional right tail on the ``u`` grid, its double-log slope and the averaging variance at ``r(N, u)``."""
    replicas = cfg.count("samples", 20_000, ctx.replicas_scale)
    rows, reports, checks, var_rows = [], [], [], []
    for gi, g in enumerate(cfg.geometries):
        for N in cfg.N:
            pair, cap, mins = _conditioned(cfg, g, gi, N, replicas)
            try:
                reps, shifted = estimate_conditional_tail(pair, cfg.u, replicas, seed=cfg.seed, stream=_stream(gi, N), cap=cap, mins=mins)
            except ProbabilityUnderflow as exc:
                reps, shifted = exc.report, np.sort(mins + centering_formula(N))
            for r in reps:
                r.extra["geometry"] = g.name
                reports.append(r.to_dict())
                rows.append([g.name, N, r.extra["u"], r.estimate, r.stderr, r.extra["count"], r.bound_only])
            _, worst = monotone_check(cfg.u, [r.estimate for r in reps], [max(r.stderr, 1 / replicas) for r in reps])
            checks.append(CheckResult(f"tail-monotone[{g.name}/{N}]", worst <= ctx.z, worst, ctx.z, "statistical"))
            try:
                fit = double_log_slope(shifted, cfg.u, seed=cfg.seed)
                ok = fit["slope"] > 0 and fit["ci"][0] > 0
                stat = fit["ci"][0]
            except ProbabilityUnderflow:
                fit, ok, stat = {"slope": None, "ci": None}, False, math.nan
            reports.append({"quantity": "double_log_slope", "geometry": g.name, "N": N, **_jsonable(fit)})
            checks.append(CheckResult(f"double-log-slope[{g.name}/{N}]", ok, stat, 0.0, "statistical", {"slope": fit["slope"], "ci": fit["ci"]}))
            if "r" in cfg.scales:
                for u in cfg.u:
                    r = cfg.scale("r", N, u)
                    try:
                        v = averaged_delta_variance_direct(build_scheme(pair, r), cap)
                    except DegenerateInterior:
                        v = None
                    var_rows.append([g.name, N, u, r, v, None if v is None else v * N / r])
    tables = {"conditional_tail": (["geometry", "N", "u", "estimate", "stderr", "count", "bound_only"], rows)}
    if var_rows:
        tables["averaging_variance"] = (["geometry", "N", "u", "r", "var_delta_bar", "scaled"], var_rows)
    return reports, tables, checks


def run_repulsion_profile(cfg, ctx):
    """Conditional lift ``E[sigma Z | Omega(u)]`` and quantiles of ``Z`` on the ``u`` grid.

    The lift must stay below ``u`` at every ``u >= 4`` whose estimate clears
    the effective-sample-size floor.
    """
    replicas = cfg.count("samples", 20_000, ctx.replicas_scale)
    quantiles = tuple(cfg.params.get("quantiles", (0.1, 0.5, 0.9)))
    rows, reports = [], []
    bad = 0
    worst = -math.inf
    for gi, g in enumerate(cfg.geometries):
        for N in cfg.N:
            pair, cap, mins = _conditioned(cfg, g, gi, N, replicas)
            for u in cfg.u:
                rep = estimate_repulsion_profile(pair, tail_level(N, u), replicas, cap=cap, mins=mins, seed=cfg.seed,
                                                 stream=_stream(gi, N), quantiles=quantiles)
                rep.extra.update(geometry=g.name, u=float(u))
                reports.append(rep.to_dict())
                qs = rep.extra["z_quantiles"]
                rows.append([g.name, N, u, rep.estimate, rep.stderr, rep.ess, rep.bound_only] + [qs[str(q)] for q in quantiles])
                if u >= 4 and not rep.bound_only:
                    gap = rep.estimate + ctx.z * rep.stderr - u
                    worst = max(worst, gap)
                    bad += gap >= 0
    # only estimates above the effective-sample-size floor count; none at u >= 4 is a failure
    guarded = worst > -math.inf
    checks = [CheckResult("lift-below-u", guarded and bad == 0, worst, 0.0, "statistical", {"guarded_points": guarded})]
    header = ["geometry", "N", "u", "lift", "stderr", "ess", "bound_only"] + [f"z_q{q}" for q in quantiles]
    return reports, {"repulsion_profile": (header, rows)}, checks


EXPERIMENT_FUNCTIONS = {
    "capacity-suite": run_capacity_suite,
    "identity-suite": run_identity_suite,
    "centering": run_centering,
    "hard-wall": run_hard_wall,
    "conditional-tail": run_conditional_tail,
    "repulsion-profile": run_repulsion_profile,
}


def run_experiment(cfg, ctx=None):
    ctx = ctx or context_from_config(cfg)
    t0 = time.perf_counter()
    reports, tables, checks = EXPERIMENT_FUNCTIONS[cfg.experiment](cfg, ctx)
    h = cfg.config_hash
    reports = [_jsonable({**r, "config_hash": h, "experiment": cfg.experiment}) for r in reports]
    for r in reports:
        r.pop("wall_clock", None)
    return ExperimentResult(cfg.experiment, h, reports, tables, checks, {"total_seconds": time.perf_counter() - t0})


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def scoreboard(result):
    lines = [f"# {result.experiment}  config {result.config_hash[:16]}"]
    lines += [c.line() for c in result.checks]
    n_pass = sum(c.passed for c in result.checks)
    lines.append(f"# {n_pass}/{len(result.checks)} checks passed")
    return "\n".join(lines) + "\n"


def _csv_text(header, rows, config_hash):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["# config_hash", config_hash])
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_result(result, cfg, out_dir):
    """Write reports, tables, checks, scoreboard and the echoed config into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "reports.jsonl"), "w") as fh:
        for r in result.reports:
            fh.write(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n")
    with open(os.path.join(out_dir, "checks.jsonl"), "w") as fh:
        for c in result.checks:
            d = c.to_dict()
            d["config_hash"] = result.config_hash
            fh.write(json.dumps(d, sort_keys=True, separators=(",", ":")) + "\n")
    for name, (header, rows) in result.tables.items():
        with open(os.path.join(out_dir, f"{name}.csv"), "w") as fh:
            fh.write(_csv_text(header, rows, result.config_hash))
    with open(os.path.join(out_dir, "scoreboard.txt"), "w") as fh:
        fh.write(scoreboard(result))
    with open(os.path.join(out_dir, "config.yaml"), "w") as fh:
        fh.write(f"# config_hash: {result.config_hash}\n")
        fh.write(cfg.to_yaml())
    # wall-clock data is not reproducible, so it lives apart from the reports
    with open(os.path.join(out_dir, "timings.json"), "w") as fh:
        json.dump({"config_hash": result.config_hash, **result.timings}, fh, sort_keys=True)

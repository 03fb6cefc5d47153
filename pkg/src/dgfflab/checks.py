"""The property battery: every invariant of the library as a named check.

Each check returns a :class:`CheckResult` recording the statistic, the
threshold it was compared against and the route (``exact``, ``statistical``
or ``fit``). :data:`BATTERY` lists them in execution order; the experiment
runner and the acceptance tests call the same functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from .catalog import GEOMETRY_CATALOG, catalog_pair
from .errors import DegenerateInterior
from .estimators import (
    centering_formula,
    conditional_minima,
    convolution_reconstruction,
    estimate_conditional_tail,
    estimate_hard_wall,
    estimate_repulsion_profile,
    monotone_check,
)
from .gaussian_checks import check_conditional_mean_bound, check_conditioning_bound, check_slepian_bound
from .geometry import (
    NEIGHBOR_STEPS,
    Disk,
    DomainPair,
    LatticeDomain,
    Rectangle,
    discrete_ball,
    discrete_box,
    discretize,
    lattice_distance,
    lattice_diameter,
    shape_from_dict,
    shrink_interior,
)
from .harmonic import (
    DirichletSolver,
    HarmonicExtension,
    ScalarField,
    capacitor,
    capacity_by_escape,
    green_matrix,
    solve_dirichlet,
)
from .projection import (
    averaged_delta_variance_direct,
    averaged_delta_variance_formula,
    box_bound_profile,
    build_scheme,
    phi_bar_variance,
    time_reversal_chain,
)
from .rng import philox
from .sampler import DGFFSampler, project_capacitor
from .walks import (
    GAMMA2,
    TABLE_RADIUS,
    WalkConfig,
    escape_constant,
    gamma_star,
    harmonic_measure,
    hitting_probabilities,
    potential_kernel,
    simulate_until,
    time_reversal_capacity,
)

__all__ = ["CheckContext", "CheckResult", "BATTERY", "run_battery"]

G_CONST = 2.0 / np.pi


@dataclass(frozen=True)
class CheckContext:
    """Shared knobs: seed, replica multiplier and tolerances."""

    seed: int = 0
    replicas_scale: float = 1.0
    exact_tol: float = 1e-8
    z: float = 3.0
    solver_tol: float = 1e-10

    def n(self, base):
        return max(2, int(round(base * self.replicas_scale)))


@dataclass
class CheckResult:
    name: str
    passed: bool
    statistic: float
    threshold: float
    route: str
    detail: dict = field(default_factory=dict)

    def line(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"{self.name}: {verdict} ({self.route}: {self.statistic:.4g} vs {self.threshold:.4g})"

    def to_dict(self):
        from .estimators import _jsonable

        return _jsonable(
            {
                "name": self.name,
                "passed": bool(self.passed),
                "statistic": float(self.statistic),
                "threshold": float(self.threshold),
                "route": self.route,
                "detail": self.detail,
            }
        )


def _spread(values):
    v = np.asarray(list(values), dtype=float)
    return float(v.max() / v.min()) if np.all(v > 0) else np.inf


# ---------------------------------------------------------------------------
# lattice geometry
# ---------------------------------------------------------------------------

_SHAPES = {
    "disk": Disk((0.0, 0.0), 1.0),
    "square": Rectangle((0.0, 0.0), (1.0, 1.0)),
    "offcenter-disk": Disk((0.4, 0.45), 0.2),
}


def check_boundary_partition(ctx, Ns=(8, 16, 33)):
    """Inner boundary and interior partition the domain; outer boundary is disjoint from it.

    The oracle is a direct scan of the four neighbors of every site.
    """
    bad = 0
    for shape in _SHAPES.values():
        for N in Ns:
            dom = discretize(shape, N)
            members = {tuple(s) for s in dom.sites.tolist()}
            inner = {s for s in members if any((s[0] + a, s[1] + b) not in members for a, b in NEIGHBOR_STEPS.tolist())}
            outer = {(s[0] + a, s[1] + b) for s in members for a, b in NEIGHBOR_STEPS.tolist()} - members
            got_inner = {tuple(s) for s in dom.inner_boundary.sites.tolist()}
            got_int = {tuple(s) for s in dom.interior.sites.tolist()}
            got_outer = {tuple(s) for s in dom.outer_boundary.sites.tolist()}
            ok = got_inner == inner and got_int == members - inner and got_outer == outer and not (got_outer & members)
            bad += not ok
    return CheckResult("boundary-partition", bad == 0, bad, 0, "exact")


def check_discretize_monotone(ctx, Ns=(8, 16, 32, 64)):
    pairs = [
        (Disk((0.0, 0.0), 0.3), Disk((0.0, 0.0), 0.5)),
        (Rectangle((0.25, 0.25), (0.75, 0.75)), Rectangle((0.0, 0.0), (1.0, 1.0))),
        (Disk((0.4, 0.45), 0.2), Rectangle((0.0, 0.0), (1.0, 1.0))),
    ]
    bad = sum(not discretize(a, N).issubset(discretize(b, N)) for a, b in pairs for N in Ns)
    return CheckResult("discretize-monotone", bad == 0, bad, 0, "exact")


def lattice_erode(domain, radius):
    """Sites ``x`` whose open Euclidean ``radius``-ball of lattice points lies in ``domain``."""
    ball = discrete_ball(radius).sites
    keep = np.ones(len(domain), dtype=bool)
    for off in ball:
        keep &= domain.contains(domain.sites + off)
    return LatticeDomain(domain.sites[keep])


def check_shrink_erode(ctx, Ns=(16, 32, 64), rs=(1, 2, 4)):
    """Discretizing the ``r/N``-interior lands inside the lattice erosion by radius ``r``."""
    bad = 0
    for shape in _SHAPES.values():
        for N in Ns:
            dom = discretize(shape, N)
            for r in rs:
                try:
                    shr = discretize(shrink_interior(shape, r / N), N)
                except Exception:
                    continue
                bad += not shr.issubset(lattice_erode(dom, r))
    return CheckResult("shrink-within-erosion", bad == 0, bad, 0, "exact")


def check_boundary_growth(ctx, Ns=(32, 64, 128, 256, 512)):
    """Log-log slope of the inner-boundary size of C^2 shapes lies in [0.8, 1.2]."""
    slopes = {}
    shapes = {"disk": Disk((0.0, 0.0), 1.0), "ellipse": shape_from_dict(GEOMETRY_CATALOG["ellipse-in-disk"][0])}
    for name, shape in shapes.items():
        sizes = [len(discretize(shape, N).inner_boundary) for N in Ns]
        slopes[name] = float(np.polyfit(np.log(Ns), np.log(sizes), 1)[0])
    worst = max(abs(s - 1.0) for s in slopes.values())
    return CheckResult("boundary-growth-linear", worst <= 0.2, worst, 0.2, "fit", {"slopes": slopes})


# ---------------------------------------------------------------------------
# harmonic solver
# ---------------------------------------------------------------------------


def check_green_identities(ctx, sizes=(1, 5, 40)):
    """``L G = I``, symmetry, positivity, the single site and the three-site path."""
    from .harmonic import SparseLaplacian

    worst = 0.0
    sym = 0.0
    neg = 0.0
    for s in sizes:
        dom = discrete_ball(s / 2 + 0.5) if s > 1 else LatticeDomain([(0, 0)])
        G = green_matrix(dom).matrix
        L = SparseLaplacian(dom).dense()
        worst = max(worst, float(np.abs(L @ G - np.eye(len(dom))).max()))
        sym = max(sym, float(np.abs(G - G.T).max()))
        neg = max(neg, float(-G.min()))
    single = abs(green_matrix(LatticeDomain([(0, 0)])).matrix[0, 0] - 1.0)
    path = green_matrix(LatticeDomain([(0, 0), (1, 0), (2, 0)])).matrix
    oracle = absorbing_chain_green(np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float) / 4.0)
    path_err = float(np.abs(path - oracle).max())
    stat = max(worst, sym, neg, single, path_err)
    ok = worst <= ctx.exact_tol and sym <= ctx.exact_tol and neg <= 0 and single == 0 and path_err <= min(1e-12, ctx.exact_tol)
    return CheckResult(
        "green-identities",
        ok,
        stat,
        ctx.exact_tol,
        "exact",
        {"LG_minus_I": worst, "asymmetry": sym, "negativity": neg, "single_site": single, "path_error": path_err},
    )


def absorbing_chain_green(P):
    """Expected visit counts ``(I - P)^{-1}`` of a substochastic transition matrix."""
    return np.linalg.inv(np.eye(len(P)) - P)


def _catalog_pairs(names, Ns):
    for name in names:
        for N in Ns:
            yield name, N, catalog_pair(name, N)


def check_capacity_triple(ctx, names=tuple(GEOMETRY_CATALOG), Ns=(32, 64, 128), target_hits=12_000):
    """Energy, escape-sum and time-reversal Monte Carlo capacities agree.

    The walk count is set so the expected number of hits is ``target_hits``
    (relative standard error about 1%).
    """
    rows = []
    exact_bad = stat_bad = 0
    worst_exact = worst_z = 0.0
    for k, (name, N, pair) in enumerate(_catalog_pairs(names, Ns)):
        cap = capacitor(pair, tol=ctx.solver_tol)
        esc = capacity_by_escape(pair, tol=ctx.solver_tol)
        outer = len(pair.W.outer_boundary)
        p = 2 * cap.capacity / outer
        walks = ctx.n(int(math.ceil(target_hits / p)))
        mc = time_reversal_capacity(pair, walks, WalkConfig(seed=ctx.seed, stream=1000 + k))
        rel = abs(cap.capacity - esc) / cap.capacity
        zval = abs(mc.capacity - cap.capacity) / mc.stderr if mc.stderr > 0 else np.inf
        worst_exact = max(worst_exact, rel)
        worst_z = max(worst_z, zval)
        exact_bad += rel > ctx.exact_tol
        stat_bad += zval > ctx.z
        rows.append(
            {
                "geometry": name,
                "N": N,
                "energy": cap.capacity,
                "escape": esc,
                "time_reversal": mc.capacity,
                "time_reversal_stderr": mc.stderr,
                "walks": walks,
                "relative_difference": rel,
                "z": zval,
            }
        )
    return CheckResult(
        "capacity-triple",
        exact_bad == 0 and stat_bad == 0,
        worst_exact,
        ctx.exact_tol,
        "exact+statistical",
        {"rows": rows, "worst_z": worst_z, "z_threshold": ctx.z},
    )


def check_capacity_monotone(ctx, Ns=(16, 32, 64)):
    """Enlarging ``W`` lowers the capacity; enlarging ``V`` raises it."""
    bad = 0
    rows = []
    for N in Ns:
        caps = {}
        for rv in (0.3, 0.4):
            for rw in (0.8, 1.0):
                pair = DomainPair.from_shapes(Disk((0.0, 0.0), rv), Disk((0.0, 0.0), rw), N)
                caps[(rv, rw)] = capacitor(pair, tol=ctx.solver_tol).capacity
        for sq in ((0.3, 0.7), (0.25, 0.75)):
            pair = DomainPair.from_shapes(Rectangle((sq[0],) * 2, (sq[1],) * 2), Rectangle((0.0, 0.0), (1.0, 1.0)), N)
            caps[("sq",) + sq] = capacitor(pair, tol=ctx.solver_tol).capacity
        bad += caps[(0.3, 1.0)] > caps[(0.3, 0.8)] + ctx.exact_tol
        bad += caps[(0.4, 1.0)] > caps[(0.4, 0.8)] + ctx.exact_tol
        bad += caps[(0.3, 0.8)] > caps[(0.4, 0.8)] + ctx.exact_tol
        bad += caps[("sq", 0.3, 0.7)] > caps[("sq", 0.25, 0.75)] + ctx.exact_tol
        rows.append({"N": N, "capacities": {str(k): v for k, v in caps.items()}})
    return CheckResult("capacity-monotone", bad == 0, bad, 0, "exact", {"rows": rows})


def check_capacity_bounded(ctx, Ns=(16, 32, 64, 128, 256, 512), name="concentric-disks"):
    caps = {N: capacitor(catalog_pair(name, N), tol=ctx.solver_tol).capacity for N in Ns}
    ratio = _spread(caps.values())
    return CheckResult("capacity-bounded", ratio <= 2.0, ratio, 2.0, "fit", {"capacities": caps})


def check_maximum_principle(ctx, n_instances=20):
    rng = philox(ctx.seed, 0xA1)
    worst = 0.0
    for _ in range(n_instances):
        r = float(rng.uniform(4, 15))
        dom = discrete_ball(r, (int(rng.integers(-5, 5)), int(rng.integers(-5, 5))))
        outer = dom.outer_boundary
        data = ScalarField(outer, rng.normal(size=len(outer)))
        u = solve_dirichlet(dom, data, tol=ctx.solver_tol).values
        over = max(u.max() - data.values.max(), data.values.min() - u.min(), 0.0)
        worst = max(worst, float(over))
    return CheckResult("maximum-principle", worst <= ctx.exact_tol, worst, ctx.exact_tol, "exact")


def _green_columns(domain, points):
    """Columns ``G_domain(., p)`` for ``points`` inside ``domain`` (zero rows for absent points)."""
    idx = domain.index(points)
    rhs = np.zeros((len(domain), len(points)))
    rhs[idx[idx >= 0], np.nonzero(idx >= 0)[0]] = 1.0
    return DirichletSolver(domain, method="direct").solve(rhs).reshape(len(domain), -1), idx


def _binding_covariance(W, V, points):
    """``Cov(phi(p), phi(q)) = G_W(p, q) - G_V(p, q)`` for ``p, q`` in ``points``."""
    GW, iW = _green_columns(W, points)
    GV, iV = _green_columns(V, points)
    return GW[iW, :] - GV[iV, :]


def check_binding_variance_bounds(ctx, sides=(16, 32), ratios=(2, 4), n_points=40):
    """Variance of the binding field sits between the logarithmic bounds up to ``C <= 5``."""
    rng = philox(ctx.seed, 0xA2)
    fitted = {}
    for s in sides:
        for q in ratios:
            V = discrete_box(s)
            W = discrete_box(q * s, (s // 3, 0))
            pts = V.sites[rng.choice(len(V), size=min(n_points, len(V)), replace=False)]
            var = np.diag(_binding_covariance(W, V, pts))
            dW, _ = cKDTree(W.outer_boundary.sites).query(pts)
            dV, _ = cKDTree(V.outer_boundary.sites).query(pts)
            lower = G_CONST * np.log(dW / lattice_diameter(V))
            upper = G_CONST * np.log(lattice_diameter(W) / dV)
            fitted[f"{s}x{q}"] = float(max(np.max(lower - var), np.max(var - upper)))
    C = max(fitted.values())
    return CheckResult("binding-variance-bounds", C <= 5.0, C, 5.0, "fit", {"fitted": fitted})


def _increment_constant(W, V, U, pts):
    cov = _binding_covariance(W, V, pts)
    d = np.diag(cov)
    inc = d[:, None] + d[None, :] - 2 * cov
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    off = dist > 0
    gap = lattice_distance(U, V.outer_boundary)
    return float(np.max(inc[off] * gap / dist[off])), float(np.max(inc[off] / dist[off])), cov


def check_binding_increments(ctx, radii=(8, 16, 32), n_points=30):
    """``E[(phi(x) - phi(y))^2] <= C |x - y| / dist(U, V^c)`` with ``C`` stable over scales."""
    rng = philox(ctx.seed, 0xA3)
    fitted = {}
    for n in radii:
        V = discrete_box(2 * n)
        W = discrete_box(4 * n)
        U = discrete_box(n)
        pts = U.sites[rng.choice(len(U), size=min(n_points, len(U)), replace=False)]
        fitted[n] = _increment_constant(W, V, U, pts)[0]
    ratio = _spread(fitted.values())
    return CheckResult("binding-increments", ratio <= 2.0, ratio, 2.0, "fit", {"fitted": fitted})


def density_constant(U):
    """``inf |C_r(x) & U| / r^2`` over ``x`` in ``U`` and ``0 < r <= diam U``."""
    pts = U.sites.astype(float)
    diam = lattice_diameter(U)
    best = np.inf
    for x in pts:
        d = np.sort(np.sqrt(((pts - x) ** 2).sum(1)))
        radii = np.unique(d[d > 0])
        radii = radii[radii <= diam]
        counts = np.searchsorted(d, radii, side="left")
        best = min(best, float(np.min(counts / radii**2)) if len(radii) else np.inf, len(d) / diam**2)
    return best


def check_oscillation_bound(ctx, radii=(8, 16, 32), samples=2000):
    """Expected oscillation of the binding field over a sub-box against ``c_U^{-1/4} sqrt(L diam U)``.

    ``L`` is the exact increment constant on ``U``; the ratio ``K`` must
    agree within a factor 2 across box sizes and placements.
    """
    rng = philox(ctx.seed, 0xA4)
    ks = {}
    for n in radii:
        for place, center in (("center", (0, 0)), ("offset", (n // 2, n // 2))):
            V = discrete_box(2 * n)
            W = discrete_box(4 * n)
            U = discrete_box(n // 2, center)
            pts = U.sites
            _, L, cov = _increment_constant(W, V, U, pts)
            w, Q = np.linalg.eigh(cov)
            A = Q * np.sqrt(np.clip(w, 0, None))
            m = ctx.n(samples)
            phi = rng.standard_normal((m, len(pts))) @ A.T
            osc = phi.max(1) - phi.min(1)
            cU = density_constant(U)
            scale = cU**-0.25 * np.sqrt(L * lattice_diameter(U))
            ks[f"{n}-{place}"] = float(osc.mean() / scale)
    ratio = _spread(ks.values())
    return CheckResult("oscillation-bound", ratio <= 2.0, ratio, 2.0, "fit", {"K": ks, "global_K": max(ks.values())})


# ---------------------------------------------------------------------------
# walks
# ---------------------------------------------------------------------------


def check_harmonic_measure(ctx, radii=(16, 32, 64)):
    """Rows sum to one, and exit laws from the inner quarter disk are uniform up to a factor 10."""
    ratios = {}
    row_err = 0.0
    for n in radii:
        C = discrete_ball(n)
        starts = discrete_ball(n / 4).sites
        _, H = harmonic_measure(C, starts)
        row_err = max(row_err, float(np.abs(H.sum(1) - 1).max()))
        ratios[n] = float((H.max(1) / H.min(1)).max())
    worst = max(ratios.values())
    ok = worst <= 10.0 and row_err <= ctx.exact_tol
    return CheckResult("harmonic-measure-uniform", ok, worst, 10.0, "exact", {"ratios": ratios, "row_sum_error": row_err})


def return_avoiding_escape(k, n):
    """``P^x(tau_{C_n^c} < tau^+_{outer(C_k)})`` for every ``x`` on the outer boundary of ``C_k``."""
    Ck = discrete_ball(k)
    ring = Ck.outer_boundary
    Cn = discrete_ball(n)
    U = Cn.difference(Ck).difference(ring)
    h = hitting_probabilities(U, Cn.outer_boundary, Ck.union(ring), method="cg")
    out = np.zeros(len(ring))
    for step in NEIGHBOR_STEPS:
        y = ring.sites + step
        inU = U.contains(y)
        val = np.where(inU, h(y), np.where(Cn.contains(y), 0.0, 1.0))
        out += 0.25 * val
    return ring, out


def check_return_escape_scaling(ctx, ks=(8, 16, 32, 64), factor=8):
    """``k (log n - log k) P(...)`` stays in a fixed positive interval for ``n = 8k``."""
    lows, highs = {}, {}
    for k in ks:
        _, p = return_avoiding_escape(k, factor * k)
        scaled = p * k * np.log(factor)
        lows[k], highs[k] = float(scaled.min()), float(scaled.max())
    ratio = max(_spread(lows.values()), _spread(highs.values()))
    ok = ratio <= 2.0 and min(lows.values()) > 0
    return CheckResult("return-escape-scaling", ok, ratio, 2.0, "fit", {"low": lows, "high": highs})


def check_escape_constant(ctx, Ns=(32, 64, 128, 256)):
    """Fitted escape-bound constant on annuli ``C_N minus C_{N/2}`` is stable within a factor 2."""
    consts = {}
    for N in Ns:
        inner = discrete_ball(N / 2)
        U = discrete_ball(N).difference(inner)
        outer = U.outer_boundary
        E = outer.intersection(inner)
        D = outer.difference(inner)
        consts[N] = escape_constant(U, E, D, probabilities=hitting_probabilities(U, D, E, method="cg"))
    ratio = _spread(consts.values())
    return CheckResult("escape-constant", ratio <= 2.0, ratio, 2.0, "fit", {"constants": consts})


def check_potential_kernel(ctx, oracle_radius=300):
    """Harmonicity of the exact table, ``a(1, 0) = 1`` against a large-ball Green oracle,
    and continuity of the asymptotic branch at the table edge."""
    worst = 0.0
    R = TABLE_RADIUS - 1
    for x in range(0, R + 1):
        for y in range(0, x + 1):
            if x == 0 and y == 0:
                continue
            mean = np.mean([potential_kernel((x + a, y + b)) for a, b in NEIGHBOR_STEPS.tolist()])
            worst = max(worst, abs(mean - potential_kernel((x, y))))
    ball = discrete_ball(oracle_radius)
    col, idx = _green_columns(ball, np.array([[0, 0]]))
    g = col[:, 0]
    a10 = float(g[ball.index(np.array([[0, 0]]))[0]] - g[ball.index(np.array([[1, 0]]))[0]])
    edge = abs(potential_kernel((TABLE_RADIUS, 0)) - (G_CONST * np.log(TABLE_RADIUS) + GAMMA2))
    ok = worst <= 1e-9 and abs(a10 - 1.0) <= 1e-3 and abs(potential_kernel((1, 0)) - 1.0) <= 1e-9 and edge <= 1e-3
    return CheckResult(
        "potential-kernel",
        ok,
        worst,
        1e-9,
        "exact",
        {"harmonicity": worst, "a10_table": potential_kernel((1, 0)), "a10_ball_oracle": a10, "edge_gap": float(edge)},
    )


def check_walk_one_step(ctx, replicas=100_000):
    """A walk released from a single free site exits uniformly over its four neighbors."""
    n = ctx.n(replicas)
    res = simulate_until(LatticeDomain([(0, 0)]), (0, 0), WalkConfig(seed=ctx.seed, stream=0xB1), n)
    keys = {tuple(s): i for i, s in enumerate(NEIGHBOR_STEPS.tolist())}
    counts = np.bincount([keys[tuple(s)] for s in res.exit_sites.tolist()], minlength=4)
    pval = float(stats.chisquare(counts).pvalue)
    return CheckResult("walk-one-step-uniform", pval >= 1e-3, pval, 1e-3, "statistical", {"counts": counts.tolist()})


def check_walk_annulus(ctx, k=8, n=32, replicas=40_000):
    """Walk frequencies of leaving ``C_n`` before ``C_k`` match exact solves at several radii."""
    Ck = discrete_ball(k)
    Cn = discrete_ball(n)
    U = Cn.difference(Ck)
    exact = hitting_probabilities(U, Cn.outer_boundary, Ck)
    worst = 0.0
    m = ctx.n(replicas)
    for j, rad in enumerate((10, 16, 24)):
        start = np.array([[rad, 0]])
        res = simulate_until(U, start, WalkConfig(seed=ctx.seed, stream=0xB2 + j), m)
        p = float(np.mean(~Cn.contains(res.exit_sites)))
        q = float(exact(start)[0])
        se = np.sqrt(q * (1 - q) / m)
        worst = max(worst, abs(p - q) / se)
    return CheckResult("walk-annulus-frequencies", worst <= ctx.z, worst, ctx.z, "statistical")


def check_gamma_star_time_reversal(ctx, N=32, walks=2_000_000, buckets=8):
    """First-entrance law of walks from the outer boundary matches the escape measure per angular bucket."""
    pair = catalog_pair("concentric-disks", N)
    gs = gamma_star(pair, tol=ctx.solver_tol)
    mc = time_reversal_capacity(pair, ctx.n(walks), WalkConfig(seed=ctx.seed, stream=0xB3))
    def bucket(sites):
        ang = np.arctan2(sites[:, 1] + 0.25, sites[:, 0] + 0.125)
        return np.minimum(((ang + np.pi) / (2 * np.pi) * buckets).astype(int), buckets - 1)
    expected = np.bincount(bucket(gs.support.sites), weights=gs.weights, minlength=buckets)
    h = len(mc.hits)
    freq = np.bincount(bucket(mc.hits), minlength=buckets) / h
    se = np.sqrt(expected * (1 - expected) / h)
    worst = float(np.max(np.abs(freq - expected) / se))
    return CheckResult("gamma-star-time-reversal", worst <= ctx.z, worst, ctx.z, "statistical",
                       {"hits": h, "expected": expected.tolist(), "observed": freq.tolist()})


# ---------------------------------------------------------------------------
# sampler and projection
# ---------------------------------------------------------------------------


def check_gibbs_markov_exact(ctx, names=("concentric-disks", "nested-squares", "square-in-disk"), N=16):
    """``G_W = G_{V^-} + H G_W H^T`` on domains of at most 1,000 sites."""
    worst = 0.0
    sizes = {}
    for name in names:
        pair = catalog_pair(name, N)
        W, sub = pair.W, pair.V.interior
        if len(W) > 1000:
            raise ValueError("exact Gibbs-Markov check needs at most 1,000 sites")
        GW = green_matrix(W).matrix
        Gsub = np.zeros_like(GW)
        ii = W.index(sub.sites)
        Gsub[np.ix_(ii, ii)] = green_matrix(sub).matrix
        H = HarmonicExtension(W, sub).fit().operator()
        worst = max(worst, float(np.abs(GW - Gsub - H @ GW @ H.T).max()))
        sizes[name] = len(W)
    return CheckResult("gibbs-markov-exact", worst <= ctx.exact_tol, worst, ctx.exact_tol, "exact", {"sites": sizes})


def check_gibbs_markov_sampled(ctx, N=32, replicas=8000, n_sites=5):
    """Empirical binding variances match ``G_W - G_{V^-}`` on a larger domain."""
    pair = catalog_pair("concentric-disks", N)
    W, sub = pair.W, pair.V.interior
    smp = DGFFSampler(W).fit()
    ext = HarmonicExtension(W, sub).fit()
    rng = philox(ctx.seed, 0xC1)
    pts = sub.sites[rng.choice(len(sub), n_sites, replace=False)]
    target = np.diag(_binding_covariance(W, sub, pts))
    iw = W.index(pts)
    m = ctx.n(replicas)
    acc = np.zeros(n_sites)
    acc4 = np.zeros(n_sites)
    for s in range(0, m, 500):
        k = min(500, m - s)
        phi = ext.transform(smp.sample_values(k, ctx.seed, 0xC1, s))[:, iw]
        acc += (phi**2).sum(0)
        acc4 += (phi**4).sum(0)
    var = acc / m
    se = np.sqrt((acc4 / m - var**2) / m)
    worst = float(np.max(np.abs(var - target) / se))
    return CheckResult("gibbs-markov-sampled", worst <= ctx.z, worst, ctx.z, "statistical")


def check_projection_law(ctx, name="concentric-disks", N=16, replicas=100_000, batch=5000):
    """``Var(Z) = 1``, ``Z`` uncorrelated with the residual, and ``sigma Z = sum gamma* h`` pathwise."""
    pair = catalog_pair(name, N)
    cap = capacitor(pair, tol=1e-13, method="direct")
    gs = gamma_star(pair, tol=1e-13, method="direct")
    gi = pair.W.index(gs.support.sites)
    smp = DGFFSampler(pair.W).fit()
    m = ctx.n(replicas)
    n = len(pair.W)
    sz = sz2 = sz4 = 0.0
    sr = np.zeros(n)
    sr2 = np.zeros(n)
    szr = np.zeros(n)
    path = 0.0
    for s in range(0, m, batch):
        k = min(batch, m - s)
        sample = smp.sample(k, ctx.seed, 0xC2, s)
        Z, res = project_capacitor(sample, cap)
        path = max(path, float(np.abs(cap.sigma * Z - sample.values[:, gi] @ gs.weights).max()))
        sz += Z.sum()
        sz2 += (Z**2).sum()
        sz4 += (Z**4).sum()
        R = res.values
        sr += R.sum(0)
        sr2 += (R**2).sum(0)
        szr += Z @ R
    mz = sz / m
    var = sz2 / m - mz**2
    se_var = np.sqrt(max(sz4 / m - (sz2 / m) ** 2, 0) / m)
    mr = sr / m
    vr = sr2 / m - mr**2
    cov = szr / m - mz * mr
    live = vr > 1e-14
    corr = float(np.max(np.abs(cov[live]) / np.sqrt(var * vr[live])))
    zvar = abs(var - 1) / se_var
    ok = zvar <= ctx.z and corr <= 0.02 and path <= 1e-10
    return CheckResult(
        "projection-law",
        ok,
        zvar,
        ctx.z,
        "statistical+exact",
        {"var_z": var, "var_z_stderr": se_var, "max_abs_corr": corr, "pathwise_error": path, "replicas": m},
    )


def check_phi_bar_regression(ctx, name="concentric-disks", N=32, r=4, replicas=20_000):
    """Slope of the averaged binding field on ``Z`` equals ``sigma``."""
    pair = catalog_pair(name, N)
    cap = capacitor(pair)
    scheme = build_scheme(pair, r)
    gi = pair.W.index(scheme.gamma_pi.support.sites)
    smp = DGFFSampler(pair.W).fit()
    m = ctx.n(replicas)
    vals = smp.sample_values(m, ctx.seed, 0xC3)
    Z = cap.sigma * (vals @ cap.Lpsi)
    phibar = vals[:, gi] @ scheme.gamma_pi.weights
    fit = stats.linregress(Z, phibar)
    zval = abs(fit.slope - cap.sigma) / fit.stderr
    return CheckResult("phi-bar-regression", zval <= ctx.z, zval, ctx.z, "statistical",
                       {"slope": fit.slope, "sigma": cap.sigma, "stderr": fit.stderr})


def check_delta_variance_sampled(ctx, name="concentric-disks", N=64, r=8, replicas=6000):
    """Exact ``Var(Delta_bar)`` against the empirical variance over conditioned samples."""
    pair = catalog_pair(name, N)
    cap = capacitor(pair)
    scheme = build_scheme(pair, r)
    exact = averaged_delta_variance_direct(scheme, cap)
    gi = pair.W.index(scheme.gamma_pi.support.sites)
    smp = DGFFSampler(pair.W).fit()
    m = ctx.n(replicas)
    dbar = np.empty(m)
    for s in range(0, m, 500):
        k = min(500, m - s)
        _, res = project_capacitor(smp.sample(k, ctx.seed, 0xC4, s), cap)
        dbar[s : s + k] = res.values[:, gi] @ scheme.gamma_pi.weights
    var = float(np.mean(dbar**2))
    se = float(np.std(dbar**2, ddof=1) / np.sqrt(m))
    zval = abs(var - exact) / se
    return CheckResult("delta-variance-sampled", zval <= ctx.z, zval, ctx.z, "statistical",
                       {"exact": exact, "empirical": var, "stderr": se})


def check_delta_variance_routes(ctx, names=tuple(GEOMETRY_CATALOG), Ns=(32, 64, 128), r_rule=lambda N: N / 16):
    """Direct and escape-formula routes for ``Var(Delta_bar)`` agree; both variances are admissible."""
    rows = []
    worst = 0.0
    neg = 0
    for name, N, pair in _catalog_pairs(names, Ns):
        cap = capacitor(pair)
        scheme = build_scheme(pair, r_rule(N))
        d = averaged_delta_variance_direct(scheme, cap)
        f = averaged_delta_variance_formula(scheme, cap)
        vphi = phi_bar_variance(scheme)
        worst = max(worst, abs(d - f))
        neg += d < -ctx.exact_tol or vphi < cap.sigma2 - ctx.exact_tol
        rows.append({"geometry": name, "N": N, "r": scheme.r, "direct": d, "formula": f, "var_phi_bar": vphi, "sigma2": cap.sigma2})
    ok = worst <= ctx.exact_tol and neg == 0
    return CheckResult("delta-variance-routes", ok, worst, ctx.exact_tol, "exact", {"rows": rows})


def delta_variance_sweep(pair, cap=None, r_min=2):
    """``Var(Delta_bar) N / r`` over dyadic ``r`` in ``[r_min, N/4]``."""
    cap = cap or capacitor(pair)
    out = {}
    r = r_min
    while r <= pair.N / 4:
        try:
            scheme = build_scheme(pair, r)
        except DegenerateInterior:
            break
        out[r] = averaged_delta_variance_direct(scheme, cap) * pair.N / r
        r *= 2
    return out


def check_delta_variance_scaling(ctx, names=("concentric-disks", "nested-squares"), Ns=(32, 64, 128)):
    """``Var(Delta_bar) N / r`` is bounded: its maximum over the dyadic sweep is stable within 2 over ``N``."""
    consts = {}
    sweeps = {}
    ratio = 0.0
    for name in names:
        per_N = {}
        for N in Ns:
            sw = delta_variance_sweep(catalog_pair(name, N))
            sweeps[f"{name}/{N}"] = sw
            per_N[N] = max(sw.values())
        consts[name] = per_N
        ratio = max(ratio, _spread(per_N.values()))
    return CheckResult("delta-variance-scaling", ratio <= 2.0, ratio, 2.0, "fit", {"constants": consts, "sweeps": sweeps})


def check_time_reversal_chain(ctx, names=("concentric-disks", "nested-squares", "ellipse-in-disk"), Ns=(32, 64), r_rule=lambda N: N / 16):
    worst = 0.0
    for name, N, pair in _catalog_pairs(names, Ns):
        lhs, rhs = time_reversal_chain(build_scheme(pair, r_rule(N)))
        worst = max(worst, abs(lhs - rhs) / lhs)
    return CheckResult("time-reversal-chain", worst <= ctx.exact_tol, worst, ctx.exact_tol, "exact")


def check_gamma_box_bound(ctx, name="nested-squares", Ns=(32, 64, 128), r_rule=lambda N: N / 16):
    """``max_x gamma(Q_l(x)) N / l`` has a fitted constant stable within a factor 2 over ``N``."""
    consts = {}
    for N in Ns:
        scheme = build_scheme(catalog_pair(name, N), r_rule(N))
        sides = [2**j for j in range(1, int(np.log2(N)))]
        consts[N] = max(box_bound_profile(scheme.gamma, N, sides).values())
    ratio = _spread(consts.values())
    return CheckResult("gamma-box-bound", ratio <= 2.0, ratio, 2.0, "fit", {"constants": consts})


def check_gaussian_lemmas(ctx, n_instances=100):
    """The three finite-dimensional Gaussian inequalities on random instances."""
    general, centered = check_conditioning_bound(n_instances, seed=ctx.seed, z=ctx.z)
    mean_bound = check_conditional_mean_bound(n_instances, seed=ctx.seed)
    slep = check_slepian_bound(n_instances, seed=ctx.seed, z=ctx.z)
    counts = {
        "conditioning": sum(c.passed for c in general),
        "conditioning-centered": sum(c.passed for c in centered),
        "conditional-mean": sum(c.passed for c in mean_bound),
        "slepian": sum(c.passed for c in slep),
    }
    failures = sum(n_instances - v for v in counts.values())
    return CheckResult("gaussian-lemmas", failures == 0, failures, 0, "exact+statistical",
                       {"passed": counts, "instances": n_instances})


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def small_pair():
    """``5 x 5`` box inside a ``9 x 9`` box (plain Monte Carlo is feasible)."""
    return DomainPair.from_domains(discrete_box(4), discrete_box(8), 10)


def check_importance_sampling(ctx, levels=(-1.0, -0.5), replicas=20_000):
    """Tilted and conditional estimates agree with plain counting within 3 combined standard errors."""
    pair = small_pair()
    cap = capacitor(pair)
    smp = DGFFSampler(pair.W).fit()
    m = ctx.n(replicas)
    worst = 0.0
    rows = []
    for j, level in enumerate(levels):
        plain = estimate_hard_wall(pair, level, m, seed=ctx.seed, stream=0xD0 + j, route="plain", cap=cap, sampler=smp)
        for route in ("tilted", "conditional"):
            est = estimate_hard_wall(pair, level, m, seed=ctx.seed, stream=0xE0 + j, route=route, cap=cap, sampler=smp)
            zval = abs(est.estimate - plain.estimate) / np.hypot(est.stderr, plain.stderr)
            worst = max(worst, zval)
            rows.append({"level": level, "route": route, "estimate": est.estimate, "plain": plain.estimate, "z": zval})
    return CheckResult("importance-sampling-unbiased", worst <= ctx.z, worst, ctx.z, "statistical", {"rows": rows})


def check_convolution_identity(ctx, us=(-0.5, 0.0, 0.5), replicas=20_000):
    """Convolving the conditional tail with the Gaussian kernel reproduces the direct estimate."""
    pair = small_pair()
    cap = capacitor(pair)
    smp = DGFFSampler(pair.W).fit()
    m = ctx.n(replicas)
    mins = conditional_minima(pair, cap, m, seed=ctx.seed, stream=0xD8, sampler=smp)
    shifted = mins + centering_formula(pair.N)
    worst = 0.0
    rows = []
    for j, u in enumerate(us):
        rec, rse = convolution_reconstruction(shifted, u, cap.sigma)
        level = -centering_formula(pair.N) + u
        direct = estimate_hard_wall(pair, level, m, seed=ctx.seed, stream=0xD9 + j, route="plain", cap=cap, sampler=smp)
        zval = abs(rec - direct.estimate) / np.hypot(rse, direct.stderr)
        worst = max(worst, zval)
        rows.append({"u": u, "reconstructed": rec, "direct": direct.estimate, "z": zval})
    return CheckResult("convolution-identity", worst <= ctx.z, worst, ctx.z, "statistical", {"rows": rows})


def check_tail_monotone(ctx, replicas=20_000, grid=np.linspace(-1.0, 2.0, 13)):
    """Tail estimates are non-increasing in ``u`` up to Monte Carlo noise."""
    pair = small_pair()
    cap = capacitor(pair)
    m = ctx.n(replicas)
    reports, _ = estimate_conditional_tail(pair, grid, m, seed=ctx.seed, stream=0xDA, cap=cap)
    est = [r.estimate for r in reports]
    se = [max(r.stderr, 1.0 / m) for r in reports]
    _, worst = monotone_check(grid, est, se)
    return CheckResult("tail-monotone", worst <= ctx.z, worst, ctx.z, "statistical")


def check_repulsion_profile(ctx, level=-0.5, replicas=20_000):
    """Mixture estimate of ``E[sigma Z | min_V h >= level]`` against direct counting,
    and the unconditioned profile against the standard normal."""
    pair = small_pair()
    cap = capacitor(pair)
    smp = DGFFSampler(pair.W).fit()
    m = ctx.n(replicas)
    rb = estimate_repulsion_profile(pair, level, m, seed=ctx.seed, stream=0xDB, cap=cap)
    sample = smp.sample(m, ctx.seed, 0xDC)
    Z, _ = project_capacitor(sample, cap)
    hit = sample.values[:, pair.W.index(pair.V.sites)].min(1) >= level
    lift = cap.sigma * Z[hit]
    direct, dse = float(lift.mean()), float(lift.std(ddof=1) / np.sqrt(hit.sum()))
    zval = abs(rb.estimate - direct) / np.hypot(rb.stderr, dse)
    qs = (0.1, 0.5, 0.9)
    free = estimate_repulsion_profile(pair, -np.inf, 1000, seed=ctx.seed, stream=0xDD, cap=cap, quantiles=qs)
    qerr = max(abs(free.extra["z_quantiles"][str(q)] - stats.norm.ppf(q)) for q in qs)
    ok = zval <= ctx.z and qerr <= 1e-2 and abs(free.estimate) <= 1e-12
    return CheckResult("repulsion-profile", ok, zval, ctx.z, "statistical",
                       {"mixture": rb.estimate, "direct": direct, "free_quantile_error": qerr})


BATTERY = (
    check_boundary_partition,
    check_discretize_monotone,
    check_shrink_erode,
    check_boundary_growth,
    check_green_identities,
    check_capacity_triple,
    check_capacity_monotone,
    check_capacity_bounded,
    check_maximum_principle,
    check_binding_variance_bounds,
    check_binding_increments,
    check_oscillation_bound,
    check_harmonic_measure,
    check_return_escape_scaling,
    check_escape_constant,
    check_potential_kernel,
    check_walk_one_step,
    check_walk_annulus,
    check_gamma_star_time_reversal,
    check_gibbs_markov_exact,
    check_gibbs_markov_sampled,
    check_projection_law,
    check_phi_bar_regression,
    check_delta_variance_sampled,
    check_delta_variance_routes,
    check_delta_variance_scaling,
    check_time_reversal_chain,
    check_gamma_box_bound,
    check_gaussian_lemmas,
    check_importance_sampling,
    check_convolution_identity,
    check_tail_monotone,
    check_repulsion_profile,
)


def run_battery(ctx, checks=BATTERY, only=None, on_result=None):
    """Run the checks in order; ``only`` restricts to names containing one of its strings."""
    results = []
    for fn in checks:
        if only and not any(o in fn.__name__ for o in only):
            continue
        res = fn(ctx)
        results.append(res)
        if on_result:
            on_result(fn, res)
    return results

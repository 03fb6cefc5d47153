"""Simple random walk: exact hitting probabilities, boundary measures,
trajectory simulation and the potential kernel of Z^2.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit
from scipy import integrate

from .errors import HypothesisViolated, StepBudgetExceeded
from .geometry import NEIGHBOR_STEPS, LatticeDomain, lattice_diameter
from .harmonic import (
    DEFAULT_TOL,
    DirichletSolver,
    ScalarField,
    escape_probabilities,
    solve_dirichlet,
)
from .rng import mix64, walk_key

__all__ = [
    "WalkConfig",
    "BoundaryMeasure",
    "WalkResult",
    "hitting_probabilities",
    "hit_probability_exact",
    "escape_probability",
    "gamma_star",
    "harmonic_measure",
    "simulate_until",
    "time_reversal_capacity",
    "potential_kernel",
    "potential_kernel_integral",
    "GAMMA2",
    "EscapeBoundCheck",
    "check_escape_bound",
    "escape_constant",
]

# a(u) = (2/pi) log|u| + GAMMA2 + O(|u|^-2); (2 * Euler-Mascheroni + log 8) / pi
GAMMA2 = (2.0 * np.euler_gamma + np.log(8.0)) / np.pi


@dataclass(frozen=True)
class WalkConfig:
    seed: int = 0
    stream: int = 0
    max_steps: int = 10**8


@dataclass(frozen=True, eq=False)
class BoundaryMeasure:
    """Probability weights on an ordered set of boundary sites."""

    support: LatticeDomain
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if len(w) != len(self.support):
            raise ValueError("one weight per support site required")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, support, raw):
        raw = np.asarray(raw, dtype=float)
        return cls(support, raw / raw.sum())

    def on(self, domain):
        """Weights aligned with ``domain``'s site order (zero off the support)."""
        return ScalarField(self.support, self.weights).on(domain)

    def mass(self, sites):
        return float(ScalarField(self.support, self.weights)(sites).sum())

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "weight"])
            for (x, y), v in zip(self.support.sites.tolist(), self.weights.tolist()):
                w.writerow([x, y, repr(v)])


# ---------------------------------------------------------------------------
# exact hitting probabilities
# ---------------------------------------------------------------------------


def hitting_probabilities(domain, target, avoid=None, *, exterior="avoid", tol=DEFAULT_TOL, method="cg"):
    """``P^x(walk reaches target before avoid)`` for every ``x`` in ``domain``.

    The walk is stopped on ``target``, on ``avoid`` and on leaving
    ``domain``; exterior sites belonging to neither set count as ``exterior``
    (``"avoid"`` or ``"target"``).
    """
    if exterior not in ("avoid", "target"):
        raise ValueError("exterior must be 'avoid' or 'target'")
    avoid = avoid if avoid is not None else LatticeDomain()
    if len(target.intersection(avoid)):
        raise ValueError("target and avoid must be disjoint")
    outer = domain.outer_boundary
    data_dom = target.union(avoid).union(outer)
    sites = data_dom.sites
    vals = np.where(target.contains(sites), 1.0, 0.0)
    if exterior == "target":
        vals = np.where(~avoid.contains(sites) & ~domain.contains(sites), 1.0, vals)
    return solve_dirichlet(domain, ScalarField(data_dom, vals), tol=tol, method=method)


def hit_probability_exact(domain, target, avoid, start, *, exterior="avoid", tol=DEFAULT_TOL, method="cg"):
    """Probability that the walk from ``start`` reaches ``target`` first."""
    start = np.asarray(start, dtype=np.int64).reshape(1, 2)
    if target.contains(start)[0]:
        return 1.0
    if avoid is not None and avoid.contains(start)[0]:
        return 0.0
    if not domain.contains(start)[0]:
        return 1.0 if exterior == "target" else 0.0
    field = hitting_probabilities(domain, target, avoid, exterior=exterior, tol=tol, method=method)
    return float(field(start)[0])


def escape_probability(pair, z, *, tol=DEFAULT_TOL, method="cg"):
    """``P^z(tau_{W^c} < tau^+_V)`` for a site ``z`` of the inner boundary of ``V``."""
    inner, p = escape_probabilities(pair, tol=tol, method=method)
    i = inner.index(np.asarray(z).reshape(1, 2))[0]
    if i < 0:
        raise ValueError("z must lie on the inner boundary of V")
    return float(p[i])


def gamma_star(pair, *, tol=DEFAULT_TOL, method="cg"):
    """Normalized escape probabilities on the inner boundary of ``V``."""
    inner, p = escape_probabilities(pair, tol=tol, method=method)
    return BoundaryMeasure.normalized(inner, p)


def harmonic_measure(domain, starts, *, solver=None):
    """Exit distributions ``P^x(S_{tau_{domain^c}} = y)`` on the outer boundary.

    Returns the outer boundary and an array with one row per start site.
    """
    starts = np.asarray(starts, dtype=np.int64).reshape(-1, 2)
    idx = domain.index(starts)
    if np.any(idx < 0):
        raise ValueError("start sites must lie in the domain")
    solver = solver or DirichletSolver(domain, method="direct")
    rhs = np.zeros((len(domain), len(starts)))
    rhs[idx, np.arange(len(starts))] = 1.0
    G_rows = np.asarray(solver.solve(rhs)).reshape(len(domain), -1)  # columns G(x_k, .)
    outer = domain.outer_boundary
    out = np.zeros((len(starts), len(outer)))
    for step in NEIGHBOR_STEPS:
        z = outer.sites - step
        zi = domain.index(z)
        ok = zi >= 0
        out[:, ok] += 0.25 * G_rows[zi[ok], :].T
    return outer, out


# ---------------------------------------------------------------------------
# trajectory simulation
# ---------------------------------------------------------------------------

_G = np.uint64(0x9E3779B97F4A7C15)
_START_SALT = np.uint64(0x5DEECE66D)
_THREE = np.uint64(3)
_TWO = np.uint64(2)
_ELEVEN = np.uint64(11)


@njit(cache=True)
def _inside(free, i, j):
    if i < 0 or j < 0 or i >= free.shape[0] or j >= free.shape[1]:
        return False
    return free[i, j]


@njit(cache=True)
def _walk_kernel(free, ox, oy, sx, sy, cdf, plus, key, replica0, n, max_steps, ex, ey, steps, status):
    skey = mix64(key ^ _START_SALT)
    for r in range(n):
        rep = np.uint64(replica0 + r)
        if cdf.shape[0] > 0:
            u = np.float64(mix64(mix64(skey ^ (rep * _G + _G))) >> _ELEVEN) * (1.0 / 9007199254740992.0)
            k = np.searchsorted(cdf, u, side="right")
            if k >= sx.shape[0]:
                k = sx.shape[0] - 1
        else:
            k = r
        x = sx[k]
        y = sy[k]
        base = mix64(key ^ mix64(rep * _G + _G))
        t = 0
        counter = np.uint64(0)
        nbits = 0
        bits = np.uint64(0)
        status[r] = 0
        if (not plus) and (not _inside(free, x - ox, y - oy)):
            ex[r] = x
            ey[r] = y
            steps[r] = 0
            continue
        while True:
            if nbits == 0:
                bits = mix64(base + counter * _G)
                counter += np.uint64(1)
                nbits = 32
            d = bits & _THREE
            bits = bits >> _TWO
            nbits -= 1
            if d == 0:
                x += 1
            elif d == 1:
                x -= 1
            elif d == 2:
                y += 1
            else:
                y -= 1
            t += 1
            if not _inside(free, x - ox, y - oy):
                break
            if t >= max_steps:
                status[r] = 1
                break
        ex[r] = x
        ey[r] = y
        steps[r] = t


@dataclass(frozen=True, eq=False)
class WalkResult:
    exit_sites: np.ndarray
    steps: np.ndarray
    exceeded: int
    replicas: int


def simulate_until(free, initial, config=WalkConfig(), n_replicas=None, *, plus=False, replica_start=0, on_budget="raise"):
    """Run independent walks until each first leaves ``free``.

    Parameters
    ----------
    free : LatticeDomain
        The walk is stopped at the first time it is outside this set.
    initial : array_like of shape (2,) or (m, 2), or BoundaryMeasure
        A single start, one start per replica, or a distribution to draw
        starts from.
    plus : bool
        If true the first step is always taken (return-time convention).
    replica_start : int
        Global index of the first replica; outcomes depend only on
        ``(seed, stream, replica)``.
    """
    if isinstance(initial, BoundaryMeasure):
        sites = initial.support.sites
        cdf = np.cumsum(initial.weights)
        cdf[-1] = 1.0
        if n_replicas is None:
            raise ValueError("n_replicas is required when starting from a measure")
    else:
        sites = np.asarray(initial, dtype=np.int64).reshape(-1, 2)
        cdf = np.zeros(0)
        if len(sites) == 1 and n_replicas is not None:
            sites = np.repeat(sites, n_replicas, axis=0)
        n_replicas = len(sites) if n_replicas is None else n_replicas
        if len(sites) != n_replicas:
            raise ValueError("need one start per replica")
    if len(free):
        mask, origin = free.to_mask()
    else:
        mask, origin = np.zeros((1, 1), dtype=bool), np.zeros(2, dtype=np.int64)
    ex = np.empty(n_replicas, dtype=np.int64)
    ey = np.empty(n_replicas, dtype=np.int64)
    steps = np.empty(n_replicas, dtype=np.int64)
    status = np.zeros(n_replicas, dtype=np.int8)
    _walk_kernel(
        mask,
        np.int64(origin[0]),
        np.int64(origin[1]),
        np.ascontiguousarray(sites[:, 0]),
        np.ascontiguousarray(sites[:, 1]),
        cdf,
        bool(plus),
        walk_key(config.seed, config.stream),
        np.int64(replica_start),
        n_replicas,
        np.int64(config.max_steps),
        ex,
        ey,
        steps,
        status,
    )
    exceeded = int(status.sum())
    if exceeded and on_budget == "raise":
        raise StepBudgetExceeded(
            f"{exceeded} of {n_replicas} walks exceeded {config.max_steps} steps",
            count=exceeded,
            replicas=n_replicas,
        )
    return WalkResult(np.stack([ex, ey], 1), steps, exceeded, n_replicas)


@dataclass(frozen=True)
class TimeReversalEstimate:
    capacity: float
    stderr: float
    hit_fraction: float
    walks: int
    outer_size: int
    hits: np.ndarray


def time_reversal_capacity(pair, n_walks, config=WalkConfig(), *, chunk=200_000):
    """Monte Carlo capacity from walks started uniformly on the outer boundary of ``W``.

    ``2 Cap = |outer(W)| * P^{Unif}(tau_V < tau^+_{W^c})``; the returned
    ``hits`` are the first-entrance sites into ``V`` of successful walks.
    """
    outer = pair.W.outer_boundary
    start = BoundaryMeasure.normalized(outer, np.ones(len(outer)))
    free = pair.W.difference(pair.V)
    n_hit = 0
    hits = []
    done = 0
    while done < n_walks:
        m = min(chunk, n_walks - done)
        res = simulate_until(free, start, config, m, plus=True, replica_start=done)
        in_V = pair.V.contains(res.exit_sites)
        n_hit += int(in_V.sum())
        hits.append(res.exit_sites[in_V])
        done += m
    p = n_hit / n_walks
    scale = len(outer) / 2.0
    return TimeReversalEstimate(
        capacity=scale * p,
        stderr=scale * np.sqrt(p * (1 - p) / n_walks),
        hit_fraction=p,
        walks=n_walks,
        outer_size=len(outer),
        hits=np.concatenate(hits) if hits else np.zeros((0, 2), dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# potential kernel
# ---------------------------------------------------------------------------

TABLE_RADIUS = 16


def _sinh_s(theta):
    c = np.cos(theta)
    return np.sqrt((1.0 - c) * (3.0 - c))


def potential_kernel_integral(m, n):
    """``a(m, n)`` from the one-dimensional Fourier representation.

    ``a(m, n) = (2/pi) int_0^pi (1 - cos(m t) e^{-|n| s(t)}) / sinh s(t) dt``
    with ``cosh s(t) = 2 - cos t``.
    """
    m, n = abs(int(m)), abs(int(n))
    if m == 0 and n == 0:
        return 0.0

    def f(t):
        c = np.cos(t)
        s = np.arccosh(2.0 - c)
        return (1.0 - np.cos(m * t) * np.exp(-n * s)) / _sinh_s(t)

    val, _ = integrate.quad(f, 0.0, np.pi, epsabs=1e-14, epsrel=1e-13, limit=1000)
    return 2.0 / np.pi * val


@lru_cache(maxsize=None)
def _table_entry(m, n):
    m, n = sorted((abs(m), abs(n)), reverse=True)
    return potential_kernel_integral(m, n)


def potential_kernel(u):
    """Potential kernel ``a(u)`` of two-dimensional simple random walk.

    Exact (quadrature, symmetrized) for ``|u|_inf <= 16``; beyond that the
    expansion ``(2/pi) log|u| + GAMMA2``.
    """
    x, y = (int(c) for c in np.asarray(u).reshape(2))
    if max(abs(x), abs(y)) <= TABLE_RADIUS:
        return _table_entry(x, y)
    return 2.0 / np.pi * np.log(np.hypot(x, y)) + GAMMA2


# ---------------------------------------------------------------------------
# escape bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EscapeBoundCheck:
    lhs: float
    rhs: float
    passed: bool
    trivial: bool


def _check_escape_hypotheses(U, E, D, M, R, gamma):
    outer = U.outer_boundary
    if len(E.intersection(D)) or not (E.union(D) == outer):
        raise HypothesisViolated("E and D must partition the outer boundary of U")
    if gamma is None:
        return
    if M < 1:
        raise HypothesisViolated("M must be at least 1")
    if np.max(gamma.boundary_distance(E.sites)) > M:
        raise HypothesisViolated("some site of E is farther than M from the comparison boundary")
    inside = gamma.contains(U.sites)
    dist_out = np.where(inside, gamma.boundary_distance(U.sites), 0.0)
    if np.max(dist_out) > M:
        raise HypothesisViolated("some site of U is farther than M from the complement of the comparison region")
    bound = 1.0 / max(2 * M, lattice_diameter(U) / R)
    if gamma.kappa_max > bound:
        raise HypothesisViolated(f"curvature {gamma.kappa_max:.4g} exceeds {bound:.4g}")


def check_escape_bound(U, E, D, x, M=1.0, R=1.0, *, C, gamma=None, probabilities=None):
    """Compare ``P^x(tau_D < tau_E)`` with ``C dist(x, E) / dist(x, D)``.

    ``gamma`` is the comparison region (anything with ``contains``,
    ``boundary_distance`` and ``kappa_max``); when given, the geometric
    hypotheses are validated and ``HypothesisViolated`` is raised on failure.
    """
    _check_escape_hypotheses(U, E, D, M, R, gamma)
    if probabilities is None:
        probabilities = hitting_probabilities(U, D, E)
    x = np.asarray(x, dtype=np.int64).reshape(1, 2)
    lhs = float(probabilities(x)[0])
    dE = float(np.min(np.hypot(*(E.sites - x).T)))
    dD = float(np.min(np.hypot(*(D.sites - x).T)))
    rhs = C * dE / dD
    return EscapeBoundCheck(lhs, rhs, lhs <= rhs, dE > dD / 4)


def escape_constant(U, E, D, *, probabilities=None):
    """Smallest ``C`` valid at every non-trivial site of ``U``.

    Sites with ``dist(x, E) > dist(x, D) / 4`` are excluded: there any
    ``C >= 4`` suffices because probabilities are at most one.
    """
    if probabilities is None:
        probabilities = hitting_probabilities(U, D, E)
    from scipy.spatial import cKDTree

    dE, _ = cKDTree(E.sites).query(U.sites)
    dD, _ = cKDTree(D.sites).query(U.sites)
    p = probabilities.on(U)
    mask = dE <= dD / 4
    if not np.any(mask):
        return 0.0
    return float(np.max(p[mask] * dD[mask] / dE[mask]))

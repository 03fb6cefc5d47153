"""Averaging measures on shrunken inner domains and the variance of the
averaged conditional binding field.

For a pair ``V_N`` in ``W_N`` and a scale ``r`` the scheme holds

* ``gamma``: normalized escape probabilities from the inner boundary of
  ``V_{N,r}`` (the discretized ``r/N``-interior of ``V``);
* ``gamma_pi``: the law of the walk started from ``gamma`` and stopped on
  the inner boundary of ``V_N``.

``Var(Delta_bar)`` is the variance of ``sum gamma(x) phi(x)`` given
``Z_h = 0``, with ``phi`` the binding field of ``h`` off ``V_N^-``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import NEIGHBOR_STEPS, DomainPair
from .harmonic import DEFAULT_TOL, DirichletSolver, capacitor, escape_probabilities
from .walks import BoundaryMeasure, gamma_star, hitting_probabilities

__all__ = [
    "AveragingScheme",
    "build_scheme",
    "pushforward_to_inner_boundary",
    "averaged_delta_variance_direct",
    "averaged_delta_variance_formula",
    "phi_bar_variance",
    "box_bound_profile",
    "time_reversal_chain",
]


@dataclass(frozen=True, eq=False)
class AveragingScheme:
    pair: DomainPair
    r: float
    shrunk: object
    gamma: BoundaryMeasure
    gamma_pi: BoundaryMeasure
    capacity_shrunk: float

    def summary(self):
        return {
            "N": self.pair.N,
            "r": self.r,
            "sites_V": len(self.pair.V),
            "sites_V_r": len(self.shrunk),
            "support_gamma": len(self.gamma.support),
            "support_gamma_pi": len(self.gamma_pi.support),
            "capacity_shrunk": self.capacity_shrunk,
        }


def pushforward_to_inner_boundary(measure, V, *, method="direct"):
    """Law of ``S_{tau}`` with ``tau`` the hitting time of the inner boundary of ``V``.

    ``measure`` lives on sites of ``V``. Mass already on the inner boundary
    stays put; the rest is carried by the harmonic measure of ``V^-``, for
    all starts at once through ``w = G_{V^-} mu`` and
    ``mu Pi(y) = 1/4 sum_{x ~ y, x in V^-} w(x)``.
    """
    inner = V.inner_boundary
    interior = V.interior
    out = measure.on(inner).astype(float)
    mu_int = measure.on(interior)
    if len(interior) and np.any(mu_int):
        w = DirichletSolver(interior, method=method).solve(mu_int)
        for step in NEIGHBOR_STEPS:
            j = interior.index(inner.sites + step)
            ok = j >= 0
            out[ok] += 0.25 * w[j[ok]]
    return BoundaryMeasure.normalized(inner, out)


def build_scheme(pair, r, *, tol=DEFAULT_TOL):
    """Averaging scheme at scale ``r`` (``r = 0`` uses ``V_N`` itself).

    Raises ``DegenerateInterior`` when the ``r/N``-interior is empty or
    irregular at this resolution.
    """
    shrunk = pair.shrunk_inner(r)
    inner_pair = DomainPair(shrunk, pair.W, pair.N)
    support, esc = escape_probabilities(inner_pair, tol=tol)
    gamma = BoundaryMeasure.normalized(support, esc)
    gamma_pi = pushforward_to_inner_boundary(gamma, pair.V)
    return AveragingScheme(pair, float(r), shrunk, gamma, gamma_pi, 0.5 * float(esc.sum()))


def phi_bar_variance(scheme, *, method="direct"):
    """``Var(sum gamma phi) = gamma_pi^T G_W gamma_pi`` by one sparse solve on ``W``."""
    W = scheme.pair.W
    g = scheme.gamma_pi.on(W)
    u = DirichletSolver(W, method=method).solve(g)
    return float(g @ u)


def averaged_delta_variance_direct(scheme, cap=None, *, method="direct"):
    """``Var(Delta_bar) = gamma_pi^T G gamma_pi - sigma^2 (gamma_pi . psi)^2``.

    The second term is the variance removed by conditioning on ``Z_h = 0``;
    ``psi = 1`` on the support of ``gamma_pi`` so it equals ``sigma^2``.
    """
    cap = cap or capacitor(scheme.pair)
    psi_on = np.asarray(cap.psi(scheme.gamma_pi.support.sites))
    proj = float(scheme.gamma_pi.weights @ psi_on)
    return phi_bar_variance(scheme, method=method) - cap.sigma2 * proj * proj


def _escape_before_shrunk(scheme, tol):
    """``q(x) = P^x(tau_{W^c} < tau_{V_{N,r}})`` as a field on ``W``."""
    W = scheme.pair.W
    return hitting_probabilities(W, W.outer_boundary, scheme.shrunk, tol=tol)


def averaged_delta_variance_formula(scheme, cap=None, *, tol=DEFAULT_TOL):
    """``[P^{gamma*}(tau_{W^c} < tau_{V_r}) - P^{gamma_pi}(tau_{W^c} < tau_{V_r})] / (2 Cap(V_r))``."""
    gs = gamma_star(scheme.pair, tol=tol)
    q = _escape_before_shrunk(scheme, tol)
    p_star = float(gs.weights @ q(gs.support.sites))
    p_pi = float(scheme.gamma_pi.weights @ q(scheme.gamma_pi.support.sites))
    return (p_star - p_pi) / (2.0 * scheme.capacity_shrunk)


def time_reversal_chain(scheme, cap=None, *, tol=DEFAULT_TOL):
    """Both sides of ``2 Cap(V_r) = 2 Cap(V) P^{gamma*}(tau_{V_r} < tau^+_{W^c})``.

    The left side uses the energy of the capacitor of ``(V_r, W)``; the
    right side uses escape probabilities of ``(V, W)`` and one hitting solve.
    """
    cap_r = capacitor(DomainPair(scheme.shrunk, scheme.pair.W, scheme.pair.N), tol=tol).capacity
    inner, esc = escape_probabilities(scheme.pair, tol=tol)
    q = _escape_before_shrunk(scheme, tol)
    rhs = float(esc @ (1.0 - q(inner.sites)))
    return 2.0 * cap_r, rhs


def box_bound_profile(measure, N, sides):
    """``max_x measure(Q_l(x)) * N / l`` for each box side ``l`` in ``sides``.

    ``Q_l(x) = {y : |y - x|_inf <= l/2}``; the maximum runs over all lattice
    centers, evaluated exactly with a summed-area table.
    """
    sites = measure.support.sites
    out = {}
    for l in sides:
        half = int(np.floor(l / 2))
        lo = sites.min(0) - half
        hi = sites.max(0) + half
        shape = hi - lo + 1
        grid = np.zeros(shape + 2 * half + 1)
        ij = sites - lo + half
        np.add.at(grid, (ij[:, 0], ij[:, 1]), measure.weights)
        S = np.zeros((grid.shape[0] + 1, grid.shape[1] + 1))
        S[1:, 1:] = grid.cumsum(0).cumsum(1)
        w = 2 * half + 1
        box = S[w:, w:] - S[:-w, w:] - S[w:, :-w] + S[:-w, :-w]
        out[l] = float(box.max()) * N / l
    return out

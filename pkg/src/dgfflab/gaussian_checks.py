"""Randomized checks of finite-dimensional Gaussian inequalities.

Each check draws instances from a seeded generator and returns one
:class:`InequalityCheck` per instance; probabilities are computed in closed
form where possible and by Monte Carlo (with standard errors) otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .rng import philox

__all__ = [
    "InequalityCheck",
    "conditional_gaussian",
    "check_conditioning_bound",
    "check_conditional_mean_bound",
    "equicorrelated_orthant",
    "check_slepian_bound",
]


@dataclass(frozen=True)
class InequalityCheck:
    """``lhs <= rhs`` up to ``z`` combined standard errors (``stderr = 0`` for exact values)."""

    lhs: float
    rhs: float
    stderr: float
    passed: bool
    params: dict

    @property
    def margin(self):
        return self.rhs - self.lhs


def _verdict(lhs, rhs, se, z=3.0, slack=1e-12):
    return bool(lhs <= rhs + z * se + slack)


def _random_covariance(rng, dim, rank=None):
    rank = dim if rank is None else rank
    A = rng.standard_normal((dim, rank))
    scale = np.exp(rng.uniform(-1.0, 1.0, size=dim))
    A = scale[:, None] * A
    return A @ A.T, A


def conditional_gaussian(cov, nx, y):
    """Mean and covariance of the first ``nx`` coordinates given the rest equal ``y``."""
    Sxx = cov[:nx, :nx]
    Sxy = cov[:nx, nx:]
    Syy = cov[nx:, nx:]
    K = Sxy @ np.linalg.pinv(Syy)
    return K @ y, Sxx - K @ Sxy.T, K


def _orthant_miss(rng, mean, cov, thresholds, n):
    """MC estimate of ``P(min_i (X_i - x_i) <= 0)`` and its standard error."""
    X = rng.multivariate_normal(mean, cov, size=n, method="eigh")
    hit = np.any(X - thresholds <= 0, axis=1)
    p = hit.mean()
    return float(p), float(np.sqrt(max(p * (1 - p), 1.0 / n) / n))


def check_conditioning_bound(n_instances=100, *, seed=0, nx=3, ny=2, mc=20_000, z=3.0):
    """Conditioning on ``Y = y`` inflates ``P(min (X - x) <= 0)`` by at most the
    inverse of ``min_i P(E[X_i | Y] <= E[X_i | Y = y])``.

    Also checks the centered special case: the unconditional probability is at
    least half of the probability conditioned on ``Y = 0``. Returns two lists.
    """
    rng = philox(seed, 0x6A55)
    general, centered = [], []
    d = nx + ny
    for k in range(n_instances):
        cov, _ = _random_covariance(rng, d)
        sd = np.sqrt(np.diag(cov))
        x = rng.normal(-1.5, 0.75, size=nx) * sd[:nx]
        y = rng.normal(0.0, 1.0, size=ny) * sd[nx:]
        cmean, ccov, K = conditional_gaussian(cov, nx, y)
        lhs, se_l = _orthant_miss(rng, cmean, ccov, x, mc)
        num, se_n = _orthant_miss(rng, np.zeros(nx), cov[:nx, :nx], x, mc)
        Syy = cov[nx:, nx:]
        var_i = np.einsum("ij,jk,ik->i", K, Syy, K)
        probs = np.where(var_i > 0, stats.norm.cdf((K @ y) / np.sqrt(np.maximum(var_i, 1e-300))), 1.0)
        den = float(np.min(probs))
        rhs = num / den
        se = float(np.hypot(se_l, se_n / den))
        general.append(InequalityCheck(lhs, rhs, se, _verdict(lhs, rhs, se, z), {"instance": k}))
        zmean, zcov, _ = conditional_gaussian(cov, nx, np.zeros(ny))
        c_lhs, se_c = _orthant_miss(rng, zmean, zcov, x, mc)
        # 0.5 * P(. | Y = 0) <= P(.)
        se2 = float(np.hypot(0.5 * se_c, se_n))
        centered.append(InequalityCheck(0.5 * c_lhs, num, se2, _verdict(0.5 * c_lhs, num, se2, z), {"instance": k}))
    return general, centered


def check_conditional_mean_bound(n_instances=100, *, seed=0, ny=6, rank=3):
    """``P(E[X|Y] <= E[X|Y=y]) >= Phi(-sqrt(y . pinv(Sigma) y))`` for ``y`` in the range of ``Sigma``.

    Instances use a rank-deficient covariance for ``Y``; both sides are exact.
    The returned checks are phrased as ``Phi(-sqrt(...)) <= P(...)``.
    """
    rng = philox(seed, 0x6A56)
    out = []
    for k in range(n_instances):
        r = int(rng.integers(1, rank + 1))
        A = rng.standard_normal((ny, r))
        a = rng.standard_normal(r)
        # X = a . xi + independent noise, Y = A xi, xi ~ N(0, I_r)
        Sigma = A @ A.T
        Syx = A @ a
        y = A @ rng.normal(0.0, 1.5, size=r)
        P = np.linalg.pinv(Sigma, rcond=1e-10, hermitian=True)
        b = P @ Syx
        var = float(b @ Sigma @ b)
        lhs = float(stats.norm.cdf(b @ y / np.sqrt(var))) if var > 1e-14 else 1.0
        rhs = float(stats.norm.cdf(-np.sqrt(max(float(y @ P @ y), 0.0))))
        out.append(InequalityCheck(rhs, lhs, 0.0, _verdict(rhs, lhs, 0.0, slack=1e-12), {"instance": k, "rank": r}))
    return out


def equicorrelated_orthant(n, rho):
    """``P(min_i xi_i >= 0)`` for ``n`` standard normals with common correlation ``rho >= 0``.

    Uses ``xi_i = sqrt(rho) W + sqrt(1 - rho) e_i`` and one-dimensional quadrature.
    """
    if rho == 0:
        return 0.5**n
    c = np.sqrt(rho / (1.0 - rho)) if rho < 1 else np.inf
    f = lambda w: stats.norm.pdf(w) * np.exp(n * stats.norm.logcdf(c * w))
    val, _ = integrate.quad(f, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
    return float(val)


def slepian_bound(n, rho):
    return float(np.exp(-1.0 / (2.0 * rho)) + 0.9**n)


def check_slepian_bound(n_instances=100, *, seed=0, max_n=20, mc=50_000, z=3.0):
    """``P(min xi_i >= 0) <= exp(-1/(2 rho)) + (9/10)^n`` when correlations are at most ``rho <= 1/2``.

    Half of the instances are equicorrelated (exact quadrature), the other
    half have random correlation matrices with off-diagonal entries at most
    ``1/2`` (Monte Carlo).
    """
    rng = philox(seed, 0x6A57)
    out = []
    for k in range(n_instances):
        n = int(rng.integers(1, max_n + 1))
        if k % 2 == 0:
            rho = float(rng.choice([0.1, 0.3, 0.5])) if k % 4 == 0 else float(rng.uniform(0.02, 0.5))
            lhs = equicorrelated_orthant(n, rho)
            rhs = slepian_bound(n, rho)
            out.append(InequalityCheck(lhs, rhs, 0.0, _verdict(lhs, rhs, 0.0), {"n": n, "rho": rho, "route": "exact"}))
            continue
        while True:
            F = rng.standard_normal((n, int(rng.integers(1, n + 1))))
            F += rng.uniform(0.0, 1.0) * np.ones_like(F)
            C = F @ F.T + np.diag(rng.uniform(0.05, 1.0, size=n))
            s = np.sqrt(np.diag(C))
            C = C / np.outer(s, s)
            off = C[~np.eye(n, dtype=bool)]
            rho = float(max(off.max(), 1e-3)) if n > 1 else 0.5
            if rho <= 0.5:
                break
        X = rng.multivariate_normal(np.zeros(n), C, size=mc, method="cholesky")
        p = float(np.mean(np.all(X >= 0, axis=1)))
        se = float(np.sqrt(max(p * (1 - p), 1.0 / mc) / mc))
        rhs = slepian_bound(n, rho)
        out.append(InequalityCheck(p, rhs, se, _verdict(p, rhs, se, z), {"n": n, "rho": rho, "route": "mc"}))
    return out

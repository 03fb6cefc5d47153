"""The lattice Laplacian, Dirichlet solves, capacitors and Green functions.

The operator is the positive definite one,
``L h(x) = 1/4 * sum_{y ~ x} (h(x) - h(y))`` with ``h = 0`` off the domain,
so that ``L^{-1}`` is the Green function of simple random walk killed on
exiting the domain (expected visit counts).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import DomainTooLarge, NoConvergence
from .geometry import NEIGHBOR_STEPS, DomainPair, LatticeDomain

__all__ = [
    "ScalarField",
    "SparseLaplacian",
    "DirichletSolver",
    "solve_dirichlet",
    "apply_laplacian",
    "Capacitor",
    "capacitor",
    "capacity_by_escape",
    "escape_probabilities",
    "GreenMatrix",
    "green_matrix",
    "harmonic_extension",
    "HarmonicExtension",
    "DEFAULT_TOL",
    "DENSE_MAX_SITES",
]

DEFAULT_TOL = 1e-10
DENSE_MAX_SITES = 20_000


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real values on the sites of a domain, implicitly zero elsewhere."""

    domain: LatticeDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if len(v) != len(self.domain):
            raise ValueError(f"expected {len(self.domain)} values, got {len(v)}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, domain, c):
        return cls(domain, np.full(len(domain), float(c)))

    @classmethod
    def from_function(cls, domain, fn):
        """``fn`` maps an ``(n, 2)`` int array of sites to ``n`` values."""
        return cls(domain, np.asarray(fn(domain.sites), dtype=float))

    def __call__(self, points):
        idx = self.domain.index(points)
        return np.where(idx >= 0, self.values[np.maximum(idx, 0)], 0.0) if len(self.domain) else np.zeros(len(idx))

    def on(self, domain):
        """Values on the sites of ``domain`` (zero extension)."""
        return self(domain.sites)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "value"])
            for (x, y), v in zip(self.domain.sites.tolist(), self.values.tolist()):
                w.writerow([x, y, repr(v)])


def _laplacian_matrix(domain):
    cached = domain.__dict__.get("_laplacian_csr")
    if cached is not None:
        return cached
    n = len(domain)
    nb = domain.neighbor_index
    rows = np.repeat(np.arange(n), 4)
    cols = nb.reshape(-1)
    keep = cols >= 0
    data = np.concatenate([np.ones(n), np.full(keep.sum(), -0.25)])
    rows = np.concatenate([np.arange(n), rows[keep]])
    cols = np.concatenate([np.arange(n), cols[keep]])
    mat = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    mat.sort_indices()
    domain.__dict__["_laplacian_csr"] = mat
    return mat


class SparseLaplacian:
    """``L`` restricted to a domain (Dirichlet zero outside)."""

    def __init__(self, domain):
        self.domain = domain

    @property
    def matrix(self):
        return _laplacian_matrix(self.domain)

    def apply(self, values):
        return self.matrix @ np.asarray(values, dtype=float)

    def quadratic_form(self, values):
        v = np.asarray(values, dtype=float)
        return float(v @ (self.matrix @ v))

    def dense(self):
        return self.matrix.toarray()


def apply_laplacian(field):
    """``L h`` on the field's domain, with ``h`` extended by zero."""
    return ScalarField(field.domain, SparseLaplacian(field.domain).apply(field.values))


class DirichletSolver:
    """Repeated solves of ``L_F u = b`` on a fixed free set ``F``.

    ``method='cg'`` is Jacobi-preconditioned conjugate gradient with relative
    tolerance ``tol`` and at most ``10 * |F|`` iterations; ``method='direct'``
    caches a sparse LU factorization with a symmetric fill-reducing ordering.
    """

    def __init__(self, free, method="cg", tol=DEFAULT_TOL, maxiter=None):
        if method not in ("cg", "direct"):
            raise ValueError(f"unknown method {method!r}")
        self.free = free
        self.method = method
        self.tol = tol
        self.maxiter = maxiter if maxiter is not None else 10 * max(len(free), 1)
        self.matrix = _laplacian_matrix(free).tocsc()
        self._lu = None
        self.last_residual = 0.0
        self.last_iterations = 0

    @property
    def lu(self):
        if self._lu is None:
            self._lu = spla.splu(
                self.matrix,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        return self._lu

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if len(self.free) == 0:
            return np.zeros_like(b)
        if self.method == "direct":
            return self.lu.solve(b)
        if b.ndim == 2:
            return np.stack([self._cg(b[:, j]) for j in range(b.shape[1])], axis=1)
        return self._cg(b)

    def _cg(self, b):
        bnorm = np.linalg.norm(b)
        if bnorm == 0:
            return np.zeros_like(b)
        diag = self.matrix.diagonal()
        M = sp.diags(1.0 / diag)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = spla.cg(self.matrix, b, rtol=self.tol, atol=0.0, maxiter=self.maxiter, M=M, callback=cb)
        res = np.linalg.norm(self.matrix @ x - b)
        self.last_residual = res / bnorm
        self.last_iterations = count[0]
        if info != 0 or res > 10 * self.tol * bnorm:
            raise NoConvergence(
                f"CG stopped after {count[0]} iterations with relative residual {res / bnorm:.3e}",
                residual=res / bnorm,
                iterations=count[0],
            )
        return x


def _boundary_rhs(free, data):
    """``1/4 * sum`` of prescribed values over the non-free neighbors of each free site."""
    b = np.zeros(len(free))
    if data is None or len(data.domain) == 0:
        return b
    nb_free = free.neighbor_index
    for j, step in enumerate(NEIGHBOR_STEPS):
        outside = nb_free[:, j] < 0
        if np.any(outside):
            b[outside] += 0.25 * data(free.sites[outside] + step)
    return b


def solve_dirichlet(domain, boundary_data=None, rhs=None, *, tol=DEFAULT_TOL, method="cg", maxiter=None):
    """Solve ``L h = rhs`` on the free sites with prescribed values elsewhere.

    Parameters
    ----------
    domain : LatticeDomain
        Where the solution is returned.
    boundary_data : ScalarField, optional
        Prescribed values. Sites of ``boundary_data.domain`` inside ``domain``
        are held fixed; its values outside ``domain`` act as exterior
        boundary values. Unspecified exterior sites are zero.
    rhs : ScalarField or array_like, optional
        Source term on ``domain`` (only the free sites are used).

    Returns
    -------
    ScalarField
        The solution on ``domain``.
    """
    fixed_idx = np.zeros(0, dtype=np.int64)
    if boundary_data is not None:
        pos = domain.index(boundary_data.domain.sites)
        fixed_idx = pos[pos >= 0]
    free_mask = np.ones(len(domain), dtype=bool)
    free_mask[fixed_idx] = False
    free = LatticeDomain._from_sorted_keys(domain.keys[free_mask])

    b = _boundary_rhs(free, boundary_data)
    if rhs is not None:
        r = rhs.on(domain) if isinstance(rhs, ScalarField) else np.asarray(rhs, dtype=float)
        b = b + r[free_mask]
    solver = DirichletSolver(free, method=method, tol=tol, maxiter=maxiter)
    u = solver.solve(b)
    out = np.zeros(len(domain))
    out[free_mask] = u
    if boundary_data is not None and len(fixed_idx):
        out[~free_mask] = boundary_data(domain.sites[~free_mask])
    return ScalarField(domain, out)


# ---------------------------------------------------------------------------
# capacitor and capacity
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Capacitor:
    """The capacitor of a pair and the derived capacity and projection scale."""

    pair: DomainPair
    psi: ScalarField
    capacity: float
    sigma2: float
    Lpsi: np.ndarray = field(repr=False)

    @property
    def sigma(self):
        return float(np.sqrt(self.sigma2))


def capacitor(pair, *, tol=DEFAULT_TOL, method="cg"):
    """Harmonic interpolant between 1 on ``V_N`` and 0 off ``W_N``.

    ``capacity = <psi, L psi> / 2`` and ``sigma2 = 1 / (2 * capacity)``.
    """
    psi = solve_dirichlet(pair.W, ScalarField.constant(pair.V, 1.0), tol=tol, method=method)
    Lpsi = SparseLaplacian(pair.W).apply(psi.values)
    Lpsi.setflags(write=False)
    energy = float(psi.values @ Lpsi)
    cap = 0.5 * energy
    return Capacitor(pair, psi, cap, 1.0 / (2.0 * cap), Lpsi)


def escape_probabilities(pair, *, tol=DEFAULT_TOL, method="cg"):
    """``P^z(tau_{W^c} < tau^+_V)`` for every ``z`` in the inner boundary of ``V``.

    Solves the complementary problem (0 on ``V``, 1 outside ``W``) and takes
    one walk step from ``z``.

    Returns
    -------
    (LatticeDomain, ndarray)
        The inner boundary of ``V`` and the escape probability at each site.
    """
    V, W = pair.V, pair.W
    outside = W.outer_boundary
    data_domain = V.union(outside)
    data = ScalarField(data_domain, outside.contains(data_domain.sites).astype(float))
    esc_field = solve_dirichlet(W, data, tol=tol, method=method)
    inner = V.inner_boundary
    p = np.zeros(len(inner))
    for step in NEIGHBOR_STEPS:
        y = inner.sites + step
        not_in_V = ~V.contains(y)
        in_W = W.contains(y)
        val = np.where(in_W, esc_field(y), 1.0)
        p += 0.25 * np.where(not_in_V, val, 0.0)
    return inner, p


def capacity_by_escape(pair, *, tol=DEFAULT_TOL, method="cg"):
    """Half the sum of escape probabilities from the inner boundary of ``V``."""
    _, p = escape_probabilities(pair, tol=tol, method=method)
    return 0.5 * float(p.sum())


# ---------------------------------------------------------------------------
# Green function
# ---------------------------------------------------------------------------


_GREEN_MAGIC = b"DGFFGRN1"


@dataclass(frozen=True, eq=False)
class GreenMatrix:
    domain: LatticeDomain
    matrix: np.ndarray

    def __call__(self, x, y):
        i = self.domain.index(np.asarray(x).reshape(1, 2))[0]
        j = self.domain.index(np.asarray(y).reshape(1, 2))[0]
        if i < 0 or j < 0:
            return 0.0
        return float(self.matrix[i, j])

    def to_binary(self, path):
        """Header ``DGFFGRN1``, ``n`` (uint64), sites (int64, n x 2), then G row-major float64."""
        with open(path, "wb") as fh:
            fh.write(_GREEN_MAGIC)
            fh.write(struct.pack("<Q", len(self.domain)))
            fh.write(np.ascontiguousarray(self.domain.sites, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(self.matrix, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path):
        with open(path, "rb") as fh:
            if fh.read(8) != _GREEN_MAGIC:
                raise ValueError("not a Green matrix file")
            (n,) = struct.unpack("<Q", fh.read(8))
            sites = np.frombuffer(fh.read(16 * n), dtype="<i8").reshape(n, 2)
            mat = np.frombuffer(fh.read(8 * n * n), dtype="<f8").reshape(n, n).copy()
        return cls(LatticeDomain(sites), mat)


def green_matrix(domain, *, max_sites=DENSE_MAX_SITES):
    """Dense ``G = L^{-1}`` on ``domain`` by Cholesky factorization."""
    n = len(domain)
    if n > max_sites:
        raise DomainTooLarge(f"{n} sites exceeds the dense Green-matrix cap of {max_sites}")
    L = SparseLaplacian(domain).dense()
    cf = scipy.linalg.cho_factor(L, lower=True)
    G = scipy.linalg.cho_solve(cf, np.eye(n))
    return GreenMatrix(domain, G)


# ---------------------------------------------------------------------------
# harmonic extension
# ---------------------------------------------------------------------------


def harmonic_extension(field, sub, *, tol=DEFAULT_TOL, method="cg"):
    """Replace ``field`` on ``sub`` by the harmonic interpolation of its other values."""
    keep = field.domain.difference(sub)
    data = ScalarField(keep, field(keep.sites))
    return solve_dirichlet(field.domain, data, tol=tol, method=method)


class HarmonicExtension(BaseEstimator, TransformerMixin):
    """Batch harmonic extension as a linear transformer.

    Rows of ``X`` are fields on ``domain`` (in its site order). ``transform``
    keeps each row off ``sub`` and overwrites it on ``sub`` with the harmonic
    extension of the remaining values (the binding field of the Gibbs-Markov
    decomposition when ``X`` holds DGFF samples).

    Parameters
    ----------
    domain : LatticeDomain
    sub : LatticeDomain
    """

    def __init__(self, domain=None, sub=None):
        self.domain = domain
        self.sub = sub

    def fit(self, X=None, y=None):
        if self.domain is None or self.sub is None:
            raise ValueError("domain and sub must be set")
        free = self.sub.intersection(self.domain)
        if len(free) != len(self.sub):
            raise ValueError("sub must be contained in domain")
        self.free_index_ = self.domain.index(free.sites)
        self.n_features_in_ = len(self.domain)
        rows, cols = [], []
        nb = free.neighbor_index
        for j, step in enumerate(NEIGHBOR_STEPS):
            out = np.nonzero(nb[:, j] < 0)[0]
            pos = self.domain.index(free.sites[out] + step)
            ok = pos >= 0
            rows.append(out[ok])
            cols.append(pos[ok])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        self.coupling_ = sp.csr_matrix(
            (np.full(len(rows), 0.25), (rows, cols)), shape=(len(free), len(self.domain))
        )
        self.solver_ = DirichletSolver(free, method="direct")
        return self

    def transform(self, X):
        check_is_fitted(self, "solver_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        out = X.copy()
        if len(self.free_index_):
            b = self.coupling_ @ X.T
            out[:, self.free_index_] = np.asarray(self.solver_.solve(np.asarray(b))).reshape(len(self.free_index_), -1).T
        return out

    def operator(self):
        """Dense matrix ``H`` with ``transform(X) = X @ H.T``."""
        check_is_fitted(self, "solver_")
        return self.transform(np.eye(self.n_features_in_)).T

"""Continuum shapes, their lattice discretizations and set/metric primitives.

Sites are stored as ``(n, 2)`` int64 arrays in lexicographic order of
``(x1, x2)``. All set operations go through a sorted 64-bit key so that the
ordering is preserved by construction and linear algebra built on top of a
domain is bit-reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, cKDTree
from scipy.spatial.distance import cdist

from .errors import DegenerateInterior, DisconnectedDiscretization, EmptyDiscretization

__all__ = [
    "ContinuumShape",
    "Disk",
    "Rectangle",
    "SmoothCurve",
    "Complement",
    "LatticeDomain",
    "DomainPair",
    "discretize",
    "shrink_interior",
    "boundary_sets",
    "lattice_metrics",
    "lattice_distance",
    "lattice_diameter",
    "discrete_ball",
    "discrete_box",
    "shape_from_dict",
    "NEIGHBOR_STEPS",
]

NEIGHBOR_STEPS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=np.int64)

_OFFSET = np.int64(1 << 30)
_SHIFT = np.int64(1 << 31)


def site_keys(points):
    """Order-preserving int64 keys for integer points (lexicographic)."""
    pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    return (pts[:, 0] + _OFFSET) * _SHIFT + (pts[:, 1] + _OFFSET)


def _sites_from_keys(keys):
    keys = np.asarray(keys, dtype=np.int64)
    x = keys // _SHIFT - _OFFSET
    y = keys % _SHIFT - _OFFSET
    return np.stack([x, y], axis=1)


# ---------------------------------------------------------------------------
# continuum shapes
# ---------------------------------------------------------------------------


class ContinuumShape:
    """Bounded, simply connected open subset of the plane."""

    kind = "abstract"

    def contains(self, points):
        """Strict membership test for an ``(m, 2)`` array of points."""
        raise NotImplementedError

    def boundary_distance(self, points):
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError

    @property
    def inradius(self):
        raise NotImplementedError

    @property
    def kappa_max(self):
        raise NotImplementedError

    def shrink(self, delta):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError

    def boundary_points(self, n):
        raise NotImplementedError

    def at_resolution(self, N):
        return self


@dataclass(frozen=True)
class Disk(ContinuumShape):
    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    kind = "disk"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise ValueError("disk radius must be positive")

    def contains(self, points):
        p = np.asarray(points, dtype=float).reshape(-1, 2) - np.asarray(self.center)
        return np.einsum("ij,ij->i", p, p) < self.radius**2

    def boundary_distance(self, points):
        p = np.asarray(points, dtype=float).reshape(-1, 2) - np.asarray(self.center)
        return np.abs(np.hypot(p[:, 0], p[:, 1]) - self.radius)

    def bounding_box(self):
        cx, cy = self.center
        r = self.radius
        return cx - r, cy - r, cx + r, cy + r

    @property
    def inradius(self):
        return self.radius

    @property
    def kappa_max(self):
        return 1.0 / self.radius

    def shrink(self, delta):
        if delta == 0:
            return self
        if delta >= self.radius:
            raise DegenerateInterior(f"delta={delta} >= radius={self.radius}")
        return Disk(self.center, self.radius - delta)

    def boundary_points(self, n):
        t = 2 * np.pi * np.arange(n) / n
        return np.asarray(self.center) + self.radius * np.stack([np.cos(t), np.sin(t)], 1)

    def to_dict(self):
        return {"kind": "disk", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Rectangle(ContinuumShape):
    """Open axis-aligned rectangle ``(lower[0], upper[0]) x (lower[1], upper[1])``."""

    lower: tuple = (0.0, 0.0)
    upper: tuple = (1.0, 1.0)
    kind = "rectangle"

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(c) for c in self.lower))
        object.__setattr__(self, "upper", tuple(float(c) for c in self.upper))
        if not (self.upper[0] > self.lower[0] and self.upper[1] > self.lower[1]):
            raise ValueError("rectangle must have upper > lower in both coordinates")

    def contains(self, points):
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return np.all((p > lo) & (p < hi), axis=1)

    def boundary_distance(self, points):
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        inside = self.contains(p)
        d_in = np.min(np.concatenate([p - lo, hi - p], axis=1), axis=1)
        q = np.clip(p, lo, hi)
        d_out = np.hypot(*(p - q).T)
        return np.where(inside, d_in, d_out)

    def bounding_box(self):
        return self.lower[0], self.lower[1], self.upper[0], self.upper[1]

    @property
    def inradius(self):
        return 0.5 * min(self.upper[0] - self.lower[0], self.upper[1] - self.lower[1])

    @property
    def kappa_max(self):
        # corners are not C^2
        return np.inf

    def shrink(self, delta):
        if delta == 0:
            return self
        if delta >= self.inradius:
            raise DegenerateInterior(f"delta={delta} >= inradius={self.inradius}")
        return Rectangle(
            (self.lower[0] + delta, self.lower[1] + delta),
            (self.upper[0] - delta, self.upper[1] - delta),
        )

    def boundary_points(self, n):
        (x0, y0), (x1, y1) = self.lower, self.upper
        per = 2 * ((x1 - x0) + (y1 - y0))
        s = per * np.arange(n) / n
        out = np.empty((n, 2))
        w, h = x1 - x0, y1 - y0
        for i, si in enumerate(s):
            if si < w:
                out[i] = (x0 + si, y0)
            elif si < w + h:
                out[i] = (x1, y0 + si - w)
            elif si < 2 * w + h:
                out[i] = (x1 - (si - w - h), y1)
            else:
                out[i] = (x0, y1 - (si - 2 * w - h))
        return out

    def to_dict(self):
        return {"kind": "rectangle", "lower": list(self.lower), "upper": list(self.upper)}


def _segments_intersect(p, q):
    """Pairwise proper intersections among non-adjacent closed-polyline edges."""
    m = len(p)
    a, b = p, q
    for i in range(m):
        j = np.arange(i + 2, m)
        if i == 0:
            j = j[j != m - 1]
        if len(j) == 0:
            continue
        c, d = a[j], b[j]
        d1 = np.cross(b[i] - a[i], c - a[i])
        d2 = np.cross(b[i] - a[i], d - a[i])
        d3 = np.cross(d - c, a[i] - c)
        d4 = np.cross(d - c, b[i] - c)
        if np.any((d1 * d2 < 0) & (d3 * d4 < 0)):
            return True
    return False


@dataclass(frozen=True, eq=False)
class SmoothCurve(ContinuumShape):
    """Region bounded by a closed C^2 curve stored as a dense polyline.

    ``vertices`` run counter-clockwise; ``tangents`` are unit tangents and
    ``curvature`` the signed curvature at each vertex. Curves built with
    :meth:`ellipse` remember their generator and are re-sampled with at least
    ``64 * N`` segments when discretized at scale ``N``.
    """

    vertices: np.ndarray
    tangents: np.ndarray
    curvature: np.ndarray
    generator: tuple | None = None
    kind = "smooth"

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 2)
        t = np.array(self.tangents, dtype=float).reshape(-1, 2)
        k = np.array(self.curvature, dtype=float).reshape(-1)
        if not (len(v) == len(t) == len(k)) or len(v) < 3:
            raise ValueError("vertices, tangents and curvature must align (>= 3 vertices)")
        t = t / np.linalg.norm(t, axis=1, keepdims=True)
        if self._signed_area(v) <= 0:
            raise ValueError("polyline must be counter-clockwise with positive area")
        for arr in (v, t, k):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "tangents", t)
        object.__setattr__(self, "curvature", k)
        if self.generator is None and len(v) <= 4096 and _segments_intersect(v, np.roll(v, -1, 0)):
            raise ValueError("polyline is self-intersecting")

    @staticmethod
    def _signed_area(v):
        x, y = v[:, 0], v[:, 1]
        return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)

    @classmethod
    def ellipse(cls, center=(0.0, 0.0), semi_axes=(1.0, 0.5), segments=4096, offset=0.0):
        cx, cy = map(float, center)
        a, b = map(float, semi_axes)
        t = 2 * np.pi * np.arange(segments) / segments
        p = np.stack([a * np.cos(t), b * np.sin(t)], 1)
        dp = np.stack([-a * np.sin(t), b * np.cos(t)], 1)
        speed = np.linalg.norm(dp, axis=1)
        tan = dp / speed[:, None]
        kappa = a * b / speed**3
        normal_in = np.stack([-tan[:, 1], tan[:, 0]], 1)
        if offset:
            p = p + offset * normal_in
            kappa = kappa / (1.0 - offset * kappa)
        p = p + (cx, cy)
        return cls(p, tan, kappa, generator=("ellipse", cx, cy, a, b, float(offset), int(segments)))

    @property
    def segments(self):
        return len(self.vertices)

    def at_resolution(self, N):
        if self.generator is None or self.segments >= 64 * N:
            return self
        _, cx, cy, a, b, off, _ = self.generator
        return SmoothCurve.ellipse((cx, cy), (a, b), segments=64 * N, offset=off)

    def contains(self, points):
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        out = np.zeros(len(p), dtype=bool)
        a = self.vertices
        b = np.roll(a, -1, axis=0)
        ys, inv = np.unique(p[:, 1], return_inverse=True)
        for k, y in enumerate(ys):
            cross = (a[:, 1] > y) != (b[:, 1] > y)
            if not np.any(cross):
                continue
            a_c, b_c = a[cross], b[cross]
            xc = a_c[:, 0] + (y - a_c[:, 1]) * (b_c[:, 0] - a_c[:, 0]) / (b_c[:, 1] - a_c[:, 1])
            xc.sort()
            sel = inv == k
            xs = p[sel, 0]
            n_right = len(xc) - np.searchsorted(xc, xs, side="right")
            on_edge = np.isin(xs, xc)
            out[sel] = (n_right % 2 == 1) & ~on_edge
        return out

    def boundary_distance(self, points):
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        a = self.vertices
        b = np.roll(a, -1, axis=0)
        tree = cKDTree(a)
        k = min(8, len(a))
        _, idx = tree.query(p, k=k)
        idx = idx.reshape(len(p), -1)
        best = np.full(len(p), np.inf)
        for col in range(idx.shape[1]):
            for seg in (idx[:, col], (idx[:, col] - 1) % len(a)):
                s0, s1 = a[seg], b[seg]
                d = s1 - s0
                tt = np.clip(np.einsum("ij,ij->i", p - s0, d) / np.einsum("ij,ij->i", d, d), 0, 1)
                q = s0 + tt[:, None] * d
                best = np.minimum(best, np.hypot(*(p - q).T))
        return best

    def bounding_box(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return lo[0], lo[1], hi[0], hi[1]

    @property
    def inradius(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        g = np.stack(np.meshgrid(np.linspace(lo[0], hi[0], 65), np.linspace(lo[1], hi[1], 65)), -1)
        g = g.reshape(-1, 2)
        g = g[self.contains(g)]
        return float(self.boundary_distance(g).max()) if len(g) else 0.0

    @property
    def kappa_max(self):
        return float(np.max(np.abs(self.curvature)))

    def shrink(self, delta):
        if delta == 0:
            return self
        if delta * self.kappa_max >= 1.0:
            raise DegenerateInterior(f"delta={delta} >= 1/kappa_max={1 / self.kappa_max}")
        if self.generator is not None:
            _, cx, cy, a, b, off, seg = self.generator
            return SmoothCurve.ellipse((cx, cy), (a, b), segments=seg, offset=off + delta)
        normal_in = np.stack([-self.tangents[:, 1], self.tangents[:, 0]], 1)
        v = self.vertices + delta * normal_in
        if self._signed_area(v) <= 0:
            raise DegenerateInterior("offset polyline has non-positive area")
        return SmoothCurve(v, self.tangents, self.curvature / (1.0 - delta * self.curvature))

    def boundary_points(self, n):
        idx = np.linspace(0, len(self.vertices), n, endpoint=False).astype(int)
        return self.vertices[idx]

    def to_dict(self):
        if self.generator is not None:
            _, cx, cy, a, b, off, seg = self.generator
            return {"kind": "ellipse", "center": [cx, cy], "semi_axes": [a, b], "offset": off, "segments": seg}
        return {
            "kind": "polyline",
            "vertices": self.vertices.tolist(),
            "tangents": self.tangents.tolist(),
            "curvature": self.curvature.tolist(),
        }

    def __eq__(self, other):
        return isinstance(other, SmoothCurve) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self.to_dict()))


@dataclass(frozen=True)
class Complement:
    """Open exterior of a shape; used only as the comparison region of escape bounds."""

    shape: ContinuumShape
    kind = "complement"

    def contains(self, points):
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        return ~self.shape.contains(p) & (self.shape.boundary_distance(p) > 0)

    def boundary_distance(self, points):
        return self.shape.boundary_distance(points)

    @property
    def kappa_max(self):
        return self.shape.kappa_max


def shape_from_dict(spec):
    """Build a shape from its ``to_dict`` form."""
    kind = spec.get("kind")
    if kind == "disk":
        return Disk(tuple(spec.get("center", (0.0, 0.0))), spec["radius"])
    if kind in ("rectangle", "square"):
        if "side" in spec:
            lo = tuple(spec.get("lower", (0.0, 0.0)))
            return Rectangle(lo, (lo[0] + spec["side"], lo[1] + spec["side"]))
        return Rectangle(tuple(spec["lower"]), tuple(spec["upper"]))
    if kind == "ellipse":
        return SmoothCurve.ellipse(
            tuple(spec.get("center", (0.0, 0.0))),
            tuple(spec["semi_axes"]),
            segments=int(spec.get("segments", 4096)),
            offset=float(spec.get("offset", 0.0)),
        )
    if kind == "polyline":
        return SmoothCurve(spec["vertices"], spec["tangents"], spec["curvature"])
    raise ValueError(f"unknown shape kind {kind!r}")


# ---------------------------------------------------------------------------
# lattice domains
# ---------------------------------------------------------------------------


class LatticeDomain:
    """Finite subset of Z^2 with cached boundary sets.

    Parameters
    ----------
    sites : array_like of shape (n, 2)
        Integer sites; duplicates are dropped and the result is sorted
        lexicographically.
    """

    def __init__(self, sites=()):
        keys = np.unique(site_keys(np.asarray(sites, dtype=np.int64).reshape(-1, 2)))
        self._init_from_keys(keys)

    def _init_from_keys(self, keys):
        keys = np.asarray(keys, dtype=np.int64)
        keys.setflags(write=False)
        sites = _sites_from_keys(keys)
        sites.setflags(write=False)
        self._keys = keys
        self._sites = sites

    @classmethod
    def _from_sorted_keys(cls, keys):
        obj = cls.__new__(cls)
        obj._init_from_keys(keys)
        return obj

    @classmethod
    def from_mask(cls, mask, origin=(0, 0)):
        """Sites ``origin + (i, j)`` for every true entry ``mask[i, j]``."""
        ij = np.argwhere(np.asarray(mask, dtype=bool)).astype(np.int64)
        return cls(ij + np.asarray(origin, dtype=np.int64))

    @property
    def sites(self):
        return self._sites

    @property
    def keys(self):
        return self._keys

    def __len__(self):
        return len(self._keys)

    @property
    def n_sites(self):
        return len(self._keys)

    def __repr__(self):
        return f"LatticeDomain(n_sites={len(self)})"

    def __eq__(self, other):
        return isinstance(other, LatticeDomain) and np.array_equal(self._keys, other._keys)

    def __hash__(self):
        return hash(self._keys.tobytes())

    def index(self, points):
        """Positions of ``points`` in the site ordering, ``-1`` where absent."""
        k = site_keys(points)
        if len(self._keys) == 0:
            return np.full(len(k), -1, dtype=np.int64)
        pos = np.searchsorted(self._keys, k)
        pos = np.minimum(pos, len(self._keys) - 1)
        return np.where(self._keys[pos] == k, pos, -1).astype(np.int64)

    def contains(self, points):
        return self.index(points) >= 0

    def __contains__(self, point):
        return bool(self.contains(np.asarray(point).reshape(1, 2))[0])

    @cached_property
    def neighbor_index(self):
        """``(n, 4)`` indices of the four neighbors (``-1`` outside the domain)."""
        out = np.empty((len(self), 4), dtype=np.int64)
        for j, step in enumerate(NEIGHBOR_STEPS):
            out[:, j] = self.index(self._sites + step)
        out.setflags(write=False)
        return out

    @cached_property
    def inner_boundary(self):
        mask = np.any(self.neighbor_index < 0, axis=1)
        return LatticeDomain._from_sorted_keys(self._keys[mask])

    @cached_property
    def interior(self):
        mask = np.all(self.neighbor_index >= 0, axis=1)
        return LatticeDomain._from_sorted_keys(self._keys[mask])

    @cached_property
    def outer_boundary(self):
        nb = (self._sites[:, None, :] + NEIGHBOR_STEPS[None, :, :]).reshape(-1, 2)
        outside = self.neighbor_index.reshape(-1) < 0
        return LatticeDomain(nb[outside])

    # set algebra ----------------------------------------------------------

    def union(self, other):
        return LatticeDomain._from_sorted_keys(np.union1d(self._keys, other.keys))

    def intersection(self, other):
        return LatticeDomain._from_sorted_keys(np.intersect1d(self._keys, other.keys, assume_unique=True))

    def difference(self, other):
        return LatticeDomain._from_sorted_keys(np.setdiff1d(self._keys, other.keys, assume_unique=True))

    def issubset(self, other):
        return bool(np.all(other.contains(self._sites))) if len(self) else True

    __or__ = union
    __and__ = intersection
    __sub__ = difference

    def bounding_box(self):
        lo = self._sites.min(axis=0)
        hi = self._sites.max(axis=0)
        return int(lo[0]), int(lo[1]), int(hi[0]), int(hi[1])

    def to_mask(self, margin=1):
        """Boolean occupancy grid with ``margin`` empty cells; returns ``(mask, origin)``."""
        x0, y0, x1, y1 = self.bounding_box()
        origin = np.array([x0 - margin, y0 - margin], dtype=np.int64)
        mask = np.zeros((x1 - x0 + 1 + 2 * margin, y1 - y0 + 1 + 2 * margin), dtype=bool)
        ij = self._sites - origin
        mask[ij[:, 0], ij[:, 1]] = True
        return mask, origin

    def is_connected(self):
        if len(self) == 0:
            return False
        mask, _ = self.to_mask()
        _, n = ndimage.label(mask)
        return n == 1

    def is_simply_connected(self):
        if not self.is_connected():
            return False
        mask, _ = self.to_mask()
        _, n = ndimage.label(~mask, structure=np.ones((3, 3)))
        return n == 1

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y"])
            w.writerows(self._sites.tolist())


def discretize(shape, N):
    """Lattice points ``x`` with ``x / N`` strictly inside ``shape``.

    Raises
    ------
    EmptyDiscretization
        If no lattice point falls inside, or the lattice set is disconnected
        or has holes at this scale.
    """
    if int(N) != N or N < 1:
        raise ValueError("N must be a positive integer")
    N = int(N)
    shape = shape.at_resolution(N)
    x0, y0, x1, y1 = shape.bounding_box()
    xs = np.arange(int(np.floor(N * x0)) - 1, int(np.ceil(N * x1)) + 2, dtype=np.int64)
    ys = np.arange(int(np.floor(N * y0)) - 1, int(np.ceil(N * y1)) + 2, dtype=np.int64)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], 1)
    inside = shape.contains(pts / N)
    dom = LatticeDomain(pts[inside])
    if len(dom) == 0:
        raise EmptyDiscretization(f"no lattice point of scale {N} inside {shape.kind}")
    if not dom.is_simply_connected():
        raise DisconnectedDiscretization(
            f"discretization of {shape.kind} at scale {N} is not connected and simply connected"
        )
    return dom


def shrink_interior(shape, delta):
    """The open delta-interior ``{x : dist(x, boundary) > delta}`` of ``shape``."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    return shape.shrink(float(delta))


def boundary_sets(domain):
    """``(inner boundary, outer boundary, interior)`` of a lattice domain."""
    return domain.inner_boundary, domain.outer_boundary, domain.interior


def _as_points(A):
    return A.sites if isinstance(A, LatticeDomain) else np.asarray(A, dtype=float).reshape(-1, 2)


def lattice_distance(A, B):
    """Exact Euclidean distance between two finite point sets."""
    a, b = _as_points(A), _as_points(B)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("sets must be non-empty")
    if len(a) > len(b):
        a, b = b, a
    d, _ = cKDTree(b).query(a, k=1)
    return float(d.min())


def lattice_diameter(A):
    """Exact Euclidean diameter of a finite point set (via its convex hull)."""
    a = _as_points(A).astype(float)
    if len(a) == 0:
        raise ValueError("set must be non-empty")
    if len(a) > 3:
        try:
            a = a[ConvexHull(a).vertices]
        except Exception:
            pass
    return float(cdist(a, a).max())


@dataclass(frozen=True)
class LatticeMetrics:
    dist: float
    diam_a: float
    diam_b: float


def lattice_metrics(A, B):
    """Distance between ``A`` and ``B`` and both diameters."""
    return LatticeMetrics(lattice_distance(A, B), lattice_diameter(A), lattice_diameter(B))


def discrete_ball(r, center=(0, 0)):
    """``{y in Z^2 : |y - center|_2 < r}``."""
    c = np.asarray(center, dtype=np.int64)
    R = int(np.ceil(r))
    g = np.arange(-R, R + 1, dtype=np.int64)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    m = gx**2 + gy**2 < r * r
    return LatticeDomain(np.stack([gx[m], gy[m]], 1) + c)


def discrete_box(r, center=(0, 0)):
    """``{y in Z^2 : |y - center|_inf <= r / 2}``."""
    c = np.asarray(center, dtype=np.int64)
    R = int(np.floor(r / 2))
    g = np.arange(-R, R + 1, dtype=np.int64)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    return LatticeDomain(np.stack([gx.ravel(), gy.ravel()], 1) + c)


@dataclass(frozen=True, eq=False)
class DomainPair:
    """Nested lattice domains ``V_N`` inside ``W_N`` at scale ``N``."""

    V: LatticeDomain
    W: LatticeDomain
    N: int = 1
    V_shape: ContinuumShape | None = None
    W_shape: ContinuumShape | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if len(self.V) == 0:
            raise EmptyDiscretization("inner domain is empty")
        if not self.V.issubset(self.W):
            raise ValueError("inner domain is not contained in the outer domain")

    @classmethod
    def from_shapes(cls, V_shape, W_shape, N):
        V = discretize(V_shape, N)
        W = discretize(W_shape, N)
        if not V.issubset(W):
            raise ValueError(f"V_N is not contained in W_N at N={N}")
        if np.any(~W_shape.contains(V_shape.at_resolution(N).boundary_points(256))):
            raise ValueError("V is not contained in W")
        return cls(V, W, int(N), V_shape, W_shape)

    @classmethod
    def from_domains(cls, V, W, N=1):
        return cls(V, W, int(N))

    def shrunk_inner(self, r):
        """``V_{N,r}``: discretization of the ``r/N``-interior of the continuum ``V``."""
        if r == 0:
            return self.V
        if self.V_shape is None:
            raise DegenerateInterior("shrinking requires the continuum inner shape")
        key = ("shrunk", float(r))
        if key not in self._cache:
            try:
                self._cache[key] = discretize(shrink_interior(self.V_shape, r / self.N), self.N)
            except EmptyDiscretization as exc:
                raise DegenerateInterior(str(exc)) from exc
        return self._cache[key]

    def to_dict(self):
        return {
            "N": self.N,
            "V": None if self.V_shape is None else self.V_shape.to_dict(),
            "W": None if self.W_shape is None else self.W_shape.to_dict(),
        }

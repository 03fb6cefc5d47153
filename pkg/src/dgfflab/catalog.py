"""Named continuum geometry pairs used by the experiments and checks."""

from __future__ import annotations

from functools import lru_cache

from .geometry import DomainPair, shape_from_dict

__all__ = ["GEOMETRY_CATALOG", "catalog_pair", "pair_from_specs"]

GEOMETRY_CATALOG = {
    "concentric-disks": (
        {"kind": "disk", "center": [0.0, 0.0], "radius": 0.5},
        {"kind": "disk", "center": [0.0, 0.0], "radius": 1.0},
    ),
    "nested-squares": (
        {"kind": "rectangle", "lower": [0.25, 0.25], "upper": [0.75, 0.75]},
        {"kind": "rectangle", "lower": [0.0, 0.0], "upper": [1.0, 1.0]},
    ),
    "ellipse-in-disk": (
        {"kind": "ellipse", "center": [0.0, 0.0], "semi_axes": [0.5, 0.25]},
        {"kind": "disk", "center": [0.0, 0.0], "radius": 1.0},
    ),
    "offcenter-disk-in-square": (
        {"kind": "disk", "center": [0.4, 0.45], "radius": 0.2},
        {"kind": "rectangle", "lower": [0.0, 0.0], "upper": [1.0, 1.0]},
    ),
    "square-in-disk": (
        {"kind": "rectangle", "lower": [-0.3, -0.3], "upper": [0.3, 0.3]},
        {"kind": "disk", "center": [0.0, 0.0], "radius": 1.0},
    ),
}


def pair_from_specs(V_spec, W_spec, N):
    return DomainPair.from_shapes(shape_from_dict(V_spec), shape_from_dict(W_spec), int(N))


@lru_cache(maxsize=64)
def catalog_pair(name, N):
    """Discretized catalog pair; cached because capacitors and schemes hang off it."""
    V_spec, W_spec = GEOMETRY_CATALOG[name]
    return pair_from_specs(V_spec, W_spec, N)

"""Bounded domains, uniform lattices and exterior-zero grid functions.

A grid function stores values on the interior lattice nodes only; every other
point of ℝⁿ (boundary nodes, exterior nodes, points off the lattice box) carries
the value zero. This is the discrete version of the working space of functions
vanishing almost everywhere outside Ω.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from mixlap.errors import BadSpacing, EmptyInterior, GridMismatch, MixlapError, NotInterior

# Nodes closer than this fraction of h to ∂Ω are classified as exterior.
_ON_BOUNDARY_RTOL = 1e-9

DOMAIN_KINDS = ("interval", "ball", "rectangle")


def _frozen(a) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Domain:
    """Interval [a, b], ball B_r(center) in ℝ², or axis-aligned rectangle.

    ``annulus`` optionally records a pair (x0, R) with closure(Ω) inside the
    open annulus R/4 < |x - x0| < 3R/4; it is validated on construction.
    """

    kind: str
    a: float = 0.0
    b: float = 1.0
    center: Tuple[float, ...] = ()
    radius: float = 1.0
    lo: Tuple[float, ...] = ()
    hi: Tuple[float, ...] = ()
    annulus: Optional[Tuple[Tuple[float, ...], float]] = None

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise MixlapError(f"unknown domain kind {self.kind!r}")
        if self.kind == "interval":
            if not self.b > self.a:
                raise MixlapError("interval needs a < b")
        elif self.kind == "ball":
            if len(self.center) != 2:
                raise MixlapError("ball domains are two-dimensional; center needs 2 coordinates")
            if not self.radius > 0:
                raise MixlapError("ball radius must be positive")
        else:
            if len(self.lo) != 2 or len(self.hi) != 2:
                raise MixlapError("rectangle needs 2D lo and hi corners")
            if not all(h > l for l, h in zip(self.lo, self.hi)):
                raise MixlapError("rectangle needs lo < hi on every axis")
        if self.annulus is not None:
            x0, R = self.annulus
            if not annulus_contains(self, np.asarray(x0, dtype=float), float(R)):
                raise MixlapError("annulus hint does not enclose the domain")

    # -- constructors -------------------------------------------------------
    @classmethod
    def interval(cls, a: float, b: float) -> "Domain":
        return cls("interval", a=float(a), b=float(b))

    @classmethod
    def ball(cls, center, radius: float) -> "Domain":
        return cls("ball", center=tuple(float(c) for c in center), radius=float(radius))

    @classmethod
    def rectangle(cls, lo, hi) -> "Domain":
        return cls("rectangle", lo=tuple(float(v) for v in lo), hi=tuple(float(v) for v in hi))

    @classmethod
    def from_dict(cls, d: dict) -> "Domain":
        kind = d.get("kind")
        if kind == "interval":
            return cls.interval(d["a"], d["b"])
        if kind == "ball":
            return cls.ball(d["center"], d["radius"])
        if kind == "rectangle":
            return cls.rectangle(d["lo"], d["hi"])
        raise MixlapError(f"unknown domain kind {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "interval":
            return {"kind": "interval", "a": self.a, "b": self.b}
        if self.kind == "ball":
            return {"kind": "ball", "center": list(self.center), "radius": self.radius}
        return {"kind": "rectangle", "lo": list(self.lo), "hi": list(self.hi)}

    # -- geometry -----------------------------------------------------------
    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2

    @property
    def advisory(self) -> bool:
        """Rectangles are only Lipschitz; audits on them are advisory."""
        return self.kind == "rectangle"

    def bbox(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.kind == "interval":
            return np.array([self.a]), np.array([self.b])
        if self.kind == "ball":
            c = np.array(self.center)
            return c - self.radius, c + self.radius
        return np.array(self.lo), np.array(self.hi)

    @property
    def diameter(self) -> float:
        if self.kind == "interval":
            return self.b - self.a
        if self.kind == "ball":
            return 2.0 * self.radius
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    @property
    def measure(self) -> float:
        if self.kind == "interval":
            return self.b - self.a
        if self.kind == "ball":
            return np.pi * self.radius**2
        lo, hi = self.bbox()
        return float(np.prod(hi - lo))

    @property
    def centroid(self) -> np.ndarray:
        lo, hi = self.bbox()
        return 0.5 * (lo + hi)

    def signed_distance(self, x) -> np.ndarray:
        """Distance to ∂Ω, positive inside and negative outside. ``x`` has shape (..., n)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "interval":
            t = x[..., 0]
            return np.minimum(t - self.a, self.b - t)
        if self.kind == "ball":
            return self.radius - np.linalg.norm(x - np.array(self.center), axis=-1)
        lo, hi = self.bbox()
        d_in = np.minimum(x - lo, hi - x)
        inside = np.all(d_in > 0, axis=-1)
        outside_gap = np.maximum(np.maximum(lo - x, x - hi), 0.0)
        return np.where(inside, d_in.min(axis=-1), -np.linalg.norm(outside_gap, axis=-1))

    def contains(self, x) -> np.ndarray:
        return self.signed_distance(x) > 0

    def bubble(self, x) -> np.ndarray:
        """Smooth nonnegative function vanishing exactly on ∂Ω (zero outside)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "interval":
            t = x[..., 0]
            v = (t - self.a) * (self.b - t) / (0.25 * (self.b - self.a) ** 2)
        elif self.kind == "ball":
            r2 = np.sum((x - np.array(self.center)) ** 2, axis=-1)
            v = 1.0 - r2 / self.radius**2
        else:
            lo, hi = self.bbox()
            v = np.prod((x - lo) * (hi - x) / (0.25 * (hi - lo) ** 2), axis=-1)
        return np.where(self.contains(x), v, 0.0)

    def boundary_samples(self, count: int, rng=None) -> np.ndarray:
        """Points on ∂Ω, deterministic when ``rng`` is None."""
        if self.kind == "interval":
            return np.array([[self.a], [self.b]])
        if rng is None:
            t = np.linspace(0.0, 1.0, count, endpoint=False)
        else:
            t = np.sort(rng.random(count))
        if self.kind == "ball":
            th = 2 * np.pi * t
            return np.array(self.center) + self.radius * np.stack([np.cos(th), np.sin(th)], axis=-1)
        lo, hi = self.bbox()
        w, hgt = hi - lo
        per = 2 * (w + hgt)
        s = t * per
        pts = np.empty((count, 2))
        for i, si in enumerate(s):
            if si < w:
                pts[i] = (lo[0] + si, lo[1])
            elif si < w + hgt:
                pts[i] = (hi[0], lo[1] + si - w)
            elif si < 2 * w + hgt:
                pts[i] = (hi[0] - (si - w - hgt), hi[1])
            else:
                pts[i] = (lo[0], hi[1] - (si - 2 * w - hgt))
        return pts

    def distance_range(self, x0) -> Tuple[float, float]:
        """(inf, sup) of |x - x0| over closure(Ω), exact for the three shapes."""
        x0 = np.asarray(x0, dtype=float)
        if self.kind == "interval":
            t = x0[0]
            far = max(abs(t - self.a), abs(t - self.b))
            near = 0.0 if self.a <= t <= self.b else min(abs(t - self.a), abs(t - self.b))
            return near, far
        if self.kind == "ball":
            d = float(np.linalg.norm(x0 - np.array(self.center)))
            return max(d - self.radius, 0.0), d + self.radius
        lo, hi = self.bbox()
        gap = np.maximum(np.maximum(lo - x0, x0 - hi), 0.0)
        far = np.maximum(np.abs(x0 - lo), np.abs(x0 - hi))
        return float(np.linalg.norm(gap)), float(np.linalg.norm(far))


def annulus_contains(domain: Domain, x0: np.ndarray, R: float) -> bool:
    near, far = domain.distance_range(x0)
    return R / 4 < near and far < 3 * R / 4


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform lattice ``origin + h * index`` over the bounding box of a domain.

    Interior nodes lie strictly inside Ω; nodes on ∂Ω count as exterior.
    Arrays are read-only.
    """

    domain: Domain
    h: float
    origin: np.ndarray
    shape: Tuple[int, ...]
    index: np.ndarray  # (N_int, n) integer lattice coordinates
    coords: np.ndarray  # (N_int, n)
    mask: np.ndarray  # bool array of ``shape``
    boundary_dist: np.ndarray  # (N_int,)
    flat: np.ndarray = field(repr=False)  # (N_int,) raveled lattice positions

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def n_interior(self) -> int:
        return self.index.shape[0]

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def lattice_coords(self) -> np.ndarray:
        axes = [self.origin[d] + self.h * np.arange(self.shape[d]) for d in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def position_of(self, node_index) -> int:
        """Row of the interior node with the given lattice index, or -1."""
        node_index = tuple(int(i) for i in np.atleast_1d(node_index))
        if any(i < 0 or i >= s for i, s in zip(node_index, self.shape)):
            return -1
        lookup = self._lookup()
        return int(lookup[node_index])

    def _lookup(self) -> np.ndarray:
        lk = np.full(self.shape, -1, dtype=np.int64)
        lk[tuple(self.index.T)] = np.arange(self.n_interior)
        return lk

    def same_as(self, other: "Grid") -> bool:
        return self is other or (
            self.domain == other.domain
            and self.h == other.h
            and self.shape == other.shape
            and np.array_equal(self.origin, other.origin)
        )


def build_grid(domain: Domain, h: float) -> Grid:
    """Lattice anchored at the lower corner of the bounding box of ``domain``."""
    h = float(h)
    if not (h > 0 and h <= domain.diameter / 2):
        raise BadSpacing(f"spacing h={h} must satisfy 0 < h <= diam/2 = {domain.diameter / 2}")
    lo, hi = domain.bbox()
    shape = tuple(int(np.ceil((hi[d] - lo[d]) / h - 1e-9)) + 1 for d in range(domain.dim))
    axes = [lo[d] + h * np.arange(shape[d]) for d in range(domain.dim)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    sd = domain.signed_distance(pts)
    mask = sd > _ON_BOUNDARY_RTOL * h
    if not mask.any():
        raise EmptyInterior(f"no lattice node of spacing {h} lies inside the domain")
    index = np.argwhere(mask)
    coords = pts[mask]
    return Grid(
        domain=domain,
        h=h,
        origin=_frozen(lo.astype(float)),
        shape=shape,
        index=_frozen(index),
        coords=_frozen(coords),
        mask=_frozen(mask),
        boundary_dist=_frozen(sd[mask]),
        flat=_frozen(np.ravel_multi_index(tuple(index.T), shape)),
    )


def boundary_distance(grid: Grid, node) -> float:
    """Euclidean distance from an interior node to ∂Ω.

    ``node`` is either the row number of the interior node or its lattice
    index tuple.
    """
    if isinstance(node, (tuple, list, np.ndarray)):
        row = grid.position_of(node)
    else:
        row = int(node)
        if not 0 <= row < grid.n_interior:
            row = -1
    if row < 0:
        raise NotInterior(f"node {node!r} is not an interior node")
    return float(grid.boundary_dist[row])


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.shape[0] != self.grid.n_interior:
            raise GridMismatch(f"{v.shape[0]} values for {self.grid.n_interior} interior nodes")
        if not np.all(np.isfinite(v)):
            raise MixlapError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.n_interior))

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "GridFunction":
        return cls(grid, fn(grid.coords))

    def on_lattice(self) -> np.ndarray:
        """Values on the whole lattice box with zeros off the interior."""
        full = np.zeros(self.grid.shape)
        full[tuple(self.grid.index.T)] = self.values
        return full

    def at(self, node_index) -> float:
        row = self.grid.position_of(node_index)
        return 0.0 if row < 0 else float(self.values[row])

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __add__(self, other: "GridFunction") -> "GridFunction":
        check_same_grid(self.grid, other.grid)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        check_same_grid(self.grid, other.grid)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, c * self.values)

    __rmul__ = __mul__


def check_same_grid(a: Grid, b: Grid) -> None:
    if not a.same_as(b):
        raise GridMismatch("grid functions live on different grids")


def random_smooth_functions(grid: Grid, count: int, rng: np.random.Generator, modes: int = 4):
    """Smooth random grid functions vanishing on ∂Ω.

    Each sample is the domain bubble times a random trigonometric polynomial
    with ``modes`` frequencies per axis and coefficients decaying like 1/k.
    """
    lo, hi = grid.domain.bbox()
    x = (grid.coords - lo) / (hi - lo)
    out = []
    for _ in range(count):
        p = np.full(grid.n_interior, rng.normal())
        for d in range(grid.dim):
            for k in range(1, modes + 1):
                a, b = rng.normal(size=2) / k
                p += a * np.cos(np.pi * k * x[:, d]) + b * np.sin(np.pi * k * x[:, d])
        out.append(GridFunction(grid, grid.domain.bubble(grid.coords) * p))
    return out

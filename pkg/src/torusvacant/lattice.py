"""Torus and Z^d geometry: points, wrap-around arithmetic, L-infinity balls,
axis lines, coordinate planes, and wrap-aware diameters.

A point is a tuple of ints. On the torus every coordinate lives in [0, N);
on Z^d coordinates are unrestricted. All operations here are pure.

Cell indexing is row-major with the last coordinate fastest (C order), so
``index = ((x0*N + x1)*N + x2)...``; grid files rely on this layout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

Point = tuple[int, ...]


@dataclass(frozen=True)
class TorusGeometry:
    """The d-dimensional discrete torus of side length N."""

    d: int
    N: int

    def __post_init__(self):
        if self.d < 3:
            raise ValueError(f"dimension must be >= 3, got {self.d}")
        if self.N < 2:
            raise ValueError(f"side length must be >= 2, got {self.N}")
        # cell indices are held in int64; guard the representable range
        if self.d * np.log2(self.N) > 62:
            raise ValueError(f"N^d overflows the 64-bit cell index (N={self.N}, d={self.d})")

    @property
    def n_cells(self) -> int:
        return self.N ** self.d

    def wrap(self, coords) -> Point:
        return tuple(int(c) % self.N for c in coords)

    def contains(self, p) -> bool:
        return len(p) == self.d and all(0 <= c < self.N for c in p)

    def index_of(self, p) -> int:
        """Row-major linear index, last coordinate fastest."""
        idx = 0
        for c in p:
            idx = idx * self.N + (int(c) % self.N)
        return idx

    def point_of(self, idx: int) -> Point:
        out = []
        for _ in range(self.d):
            out.append(idx % self.N)
            idx //= self.N
        return tuple(reversed(out))


def step(geom: TorusGeometry, p, direction: int, sign: int) -> Point:
    """One nearest-neighbor move: shift coordinate `direction` by `sign` mod N."""
    if not 0 <= direction < geom.d:
        raise ValueError(f"direction {direction} out of range for d={geom.d}")
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    q = list(p)
    q[direction] = (q[direction] + sign) % geom.N
    return tuple(q)


def circ_dist(N: int, a, b):
    """Circular distance |a-b| on Z/NZ (works elementwise on arrays)."""
    delta = np.abs(np.asarray(a) - np.asarray(b)) % N
    return np.minimum(delta, N - delta)


def linf_dist(geom: TorusGeometry, p, q) -> int:
    """Wrap-aware L-infinity distance between two torus points."""
    return int(np.max(circ_dist(geom.N, np.asarray(p), np.asarray(q))))


def zd_linf(p, q=None) -> int:
    p = np.asarray(p)
    if q is None:
        return int(np.max(np.abs(p)))
    return int(np.max(np.abs(p - np.asarray(q))))


def ball_offsets(d: int, radius: int) -> np.ndarray:
    """All Z^d offsets with |.|_inf <= radius, as an ((2r+1)^d, d) int array."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    rng = np.arange(-radius, radius + 1)
    grids = np.meshgrid(*([rng] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def sphere_offsets(d: int, radius: int) -> np.ndarray:
    """Z^d offsets with |.|_inf == radius."""
    offs = ball_offsets(d, radius)
    return offs[np.max(np.abs(offs), axis=1) == radius]


def ball(geom, center, radius: int):
    """Closed L-infinity ball. `geom=None` means Z^d; on the torus the ball
    must not self-overlap (2r+1 <= N)."""
    center = tuple(int(c) for c in center)
    offs = ball_offsets(len(center), radius)
    if geom is None:
        return [tuple(center + o) for o in offs]
    if 2 * radius + 1 > geom.N:
        raise ValueError(f"ball of radius {radius} does not fit torus N={geom.N}")
    pts = (np.asarray(center) + offs) % geom.N
    return [tuple(int(c) for c in row) for row in pts]


def sphere(geom, center, radius: int):
    center = tuple(int(c) for c in center)
    offs = sphere_offsets(len(center), radius)
    if geom is None:
        return [tuple(center + o) for o in offs]
    if 2 * radius + 1 > geom.N:
        raise ValueError(f"sphere of radius {radius} does not fit torus N={geom.N}")
    pts = (np.asarray(center) + offs) % geom.N
    return [tuple(int(c) for c in row) for row in pts]


@dataclass(frozen=True)
class AxisLine:
    """An image in E of an axis-parallel lattice line (the family with m=1).

    Canonical form: the base coordinate along `direction` is 0, so equal
    lines compare equal.
    """

    base: Point
    direction: int

    @staticmethod
    def through(geom: TorusGeometry, p, direction: int) -> "AxisLine":
        base = list(geom.wrap(p))
        base[direction] = 0
        return AxisLine(tuple(base), direction)

    def cells(self, geom: TorusGeometry):
        for k in range(geom.N):
            q = list(self.base)
            q[self.direction] = k
            yield tuple(q)


@dataclass(frozen=True)
class CoordinatePlane:
    """An image in E of a 2-d coordinate plane (the family with m=2).

    Canonical form: base coordinates along both directions are 0, hence
    exactly C(d,2)*N^(d-2) distinct planes.
    """

    base: Point
    directions: tuple[int, int]

    @staticmethod
    def through(geom: TorusGeometry, p, i: int, j: int) -> "CoordinatePlane":
        if i == j:
            raise ValueError("plane directions must be distinct")
        i, j = min(i, j), max(i, j)
        base = list(geom.wrap(p))
        base[i] = 0
        base[j] = 0
        return CoordinatePlane(tuple(base), (i, j))

    def cells(self, geom: TorusGeometry):
        i, j = self.directions
        for a in range(geom.N):
            for b in range(geom.N):
                q = list(self.base)
                q[i] = a
                q[j] = b
                yield tuple(q)


def axis_lines(geom: TorusGeometry):
    """All d*N^(d-1) canonical lines."""
    for direction in range(geom.d):
        others = [k for k in range(geom.d) if k != direction]
        for combo in itertools.product(range(geom.N), repeat=geom.d - 1):
            base = [0] * geom.d
            for k, v in zip(others, combo):
                base[k] = v
            yield AxisLine(tuple(base), direction)


def coordinate_planes(geom: TorusGeometry):
    """All C(d,2)*N^(d-2) canonical planes."""
    for i, j in itertools.combinations(range(geom.d), 2):
        others = [k for k in range(geom.d) if k not in (i, j)]
        for combo in itertools.product(range(geom.N), repeat=geom.d - 2):
            base = [0] * geom.d
            for k, v in zip(others, combo):
                base[k] = v
            yield CoordinatePlane(tuple(base), (i, j))


def min_circular_window(N: int, residues) -> int:
    """Length of the shortest circular interval of Z/NZ covering `residues`.

    Equals N minus the largest gap between cyclically consecutive occupied
    residues; 0 for the empty set.
    """
    res = np.unique(np.asarray(list(residues), dtype=np.int64) % N)
    if res.size == 0:
        return 0
    gaps = np.diff(np.r_[res, res[0] + N])
    return int(N - gaps.max() + 1)


def plane_diameter(geom: TorusGeometry, plane: CoordinatePlane, cells) -> int:
    """Wrap-aware L-infinity diameter of a cell set inside one plane.

    Per axis, the minimal circular window covering the projections, minus 1;
    the max over the plane's two directions. Coincides with the ordinary Z^2
    diameter whenever the set fits in a half-torus window. Empty set -> 0.
    """
    cells = list(cells)
    if not cells:
        return 0
    i, j = plane.directions
    for c in cells:
        q = list(c)
        q[i] = plane.base[i]
        q[j] = plane.base[j]
        if geom.wrap(q) != plane.base:
            raise ValueError(f"cell {c} is not in plane {plane}")
    wi = min_circular_window(geom.N, [c[i] for c in cells])
    wj = min_circular_window(geom.N, [c[j] for c in cells])
    return max(wi, wj) - 1

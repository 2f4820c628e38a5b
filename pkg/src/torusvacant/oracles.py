"""Brute-force reference implementations of the vacant-set queries.

These are deliberately naive (plain loops over cells, offsets, and
neighborhoods) and independent of the production code paths; the validation
suite and the tests compare the fast implementations against them exactly on
small tori.
"""

from __future__ import annotations

import itertools
import math
from collections import deque

import numpy as np

from .lattice import TorusGeometry
from .walk_engine import OccupancyGrid


def _vacant(grid: OccupancyGrid, t: int) -> np.ndarray:
    return grid.vacant_mask(t)


def brute_components(grid: OccupancyGrid, t: int):
    """Flood-fill labeling of the vacant set; returns (labels, sizes)."""
    geom = grid.geometry
    N, d = geom.N, geom.d
    vac = _vacant(grid, t)
    labels = np.zeros(vac.shape, dtype=np.int32)
    sizes = [0]
    next_label = 0
    for cell in itertools.product(range(N), repeat=d):
        if not vac[cell] or labels[cell]:
            continue
        next_label += 1
        size = 0
        queue = deque([cell])
        labels[cell] = next_label
        while queue:
            x = queue.popleft()
            size += 1
            for j in range(d):
                for s in (-1, 1):
                    y = list(x)
                    y[j] = (y[j] + s) % N
                    y = tuple(y)
                    if vac[y] and not labels[y]:
                        labels[y] = next_label
                        queue.append(y)
        sizes.append(size)
    return labels, np.asarray(sizes, dtype=np.int64)


def brute_V(grid: OccupancyGrid, t: int, K: float, beta: float) -> bool:
    """Triple loop over cells, directions, offsets; literal event definition."""
    geom = grid.geometry
    N, d = geom.N, geom.d
    vac = _vacant(grid, t)
    lam = int(math.floor(K * math.log(N))) + 1
    nb = N**beta
    m_values = [m for m in range(N) if m < nb]
    for x in itertools.product(range(N), repeat=d):
        for j in range(d):
            found = False
            for m in m_values:
                ok = True
                for k in range(lam):
                    y = list(x)
                    y[j] = (y[j] + m + k) % N
                    if not vac[tuple(y)]:
                        ok = False
                        break
                if ok:
                    found = True
                    break
            if not found:
                return False
    return True


def brute_plane_diameter(N: int, cells_2d) -> int:
    """Minimal circular covering windows by direct scan over all anchors."""
    cells = list(cells_2d)
    if not cells:
        return 0
    best = []
    for axis in range(2):
        res = sorted({c[axis] % N for c in cells})
        w = N
        for anchor in res:
            span = max((r - anchor) % N for r in res) + 1
            w = min(w, span)
        best.append(w)
    return max(best) - 1


def brute_U(grid: OccupancyGrid, t: int, K: float) -> bool:
    """Label every plane by flood fill and measure diameters directly."""
    geom = grid.geometry
    N, d = geom.N, geom.d
    vac = _vacant(grid, t)
    thr = int(math.floor(K * math.log(N)))
    for i, j in itertools.combinations(range(d), 2):
        others = [k for k in range(d) if k not in (i, j)]
        for fixed in itertools.product(range(N), repeat=d - 2):
            base = [0] * d
            for k, v in zip(others, fixed):
                base[k] = v
            seen = set()
            big = 0
            for a in range(N):
                for b in range(N):
                    base[i], base[j] = a, b
                    cell = tuple(base)
                    if not vac[cell] or cell in seen:
                        continue
                    comp = []
                    queue = deque([(a, b)])
                    seen.add(cell)
                    while queue:
                        ca, cb = queue.popleft()
                        comp.append((ca, cb))
                        for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                            na, nb_ = (ca + da) % N, (cb + db) % N
                            base[i], base[j] = na, nb_
                            ncell = tuple(base)
                            if vac[ncell] and ncell not in seen:
                                seen.add(ncell)
                                queue.append((na, nb_))
                    if brute_plane_diameter(N, comp) >= thr:
                        big += 1
                        if big >= 2:
                            return False
    return True


def brute_C(grid: OccupancyGrid, t: int, K: float, x) -> bool:
    """In-plane BFS from x to the sphere, literal event definition."""
    geom = grid.geometry
    N, d = geom.N, geom.d
    vac = _vacant(grid, t)
    x = tuple(int(c) % N for c in x)
    if not vac[x]:
        return False
    rho = int(math.floor(K * math.log(N)))
    if rho == 0:
        return True

    def circ(a, b):
        delta = abs(a - b) % N
        return min(delta, N - delta)

    for i, j in itertools.combinations(range(d), 2):
        seen = {x}
        queue = deque([x])
        reached = False
        while queue and not reached:
            cur = queue.popleft()
            for axis in (i, j):
                for s in (-1, 1):
                    y = list(cur)
                    y[axis] = (y[axis] + s) % N
                    y = tuple(y)
                    dist = max(circ(y[i], x[i]), circ(y[j], x[j]))
                    if dist > rho or not vac[y] or y in seen:
                        continue
                    if dist == rho:
                        reached = True
                        break
                    seen.add(y)
                    queue.append(y)
                if reached:
                    break
        if reached:
            return True
    return False


def brute_largest_ball(grid: OccupancyGrid, t: int) -> int:
    """All-pairs distance maximum, O(N^2d)."""
    geom = grid.geometry
    N, d = geom.N, geom.d
    visited = grid.visited_mask(t)
    vis_pts = np.argwhere(visited)
    best = 0
    for x in itertools.product(range(N), repeat=d):
        delta = np.abs(vis_pts - np.asarray(x)) % N
        dist = np.minimum(delta, N - delta).max(axis=1).min()
        best = max(best, int(dist) - 1)
    return max(best, 0)


def brute_max_axis_run(grid: OccupancyGrid, t: int) -> int:
    """Longest vacant circular run, by scanning every line directly."""
    geom = grid.geometry
    N, d = geom.N, geom.d
    vac = _vacant(grid, t)
    best = 0
    for j in range(d):
        others = [k for k in range(d) if k != j]
        for fixed in itertools.product(range(N), repeat=d - 1):
            base = [0] * d
            for k, v in zip(others, fixed):
                base[k] = v
            line = []
            for a in range(N):
                base[j] = a
                line.append(bool(vac[tuple(base)]))
            if all(line):
                best = max(best, N)
                continue
            run = 0
            for v in line + line:
                run = run + 1 if v else 0
                best = max(best, min(run, N))
    return best


def random_small_grid(d: int, N: int, gen, density: float | None = None) -> OccupancyGrid:
    """Synthetic occupancy grid with i.i.d. visited cells (for oracle tests)."""
    geom = TorusGeometry(d, N)
    p = gen.random() if density is None else density
    visited = gen.random((N,) * d) < p
    return OccupancyGrid.from_visited_mask(geom, visited)

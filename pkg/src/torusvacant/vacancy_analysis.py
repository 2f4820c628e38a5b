"""Vacant-set geometry read from an occupancy grid at a query time.

Everything here is a pure function of the grid's first-visit array: connected
components of the vacant set, the segment-ubiquity event V, the in-plane
uniqueness event U, the local connection event C, the giant-component event G
with its witness component, vacant fraction, largest vacant ball, coverage
probabilities, and the local-function averages.

Run lengths are counted in cells; a "segment of extent k" occupies k+1 cells.
The V event requires floor(K*ln N)+1 vacant cells per segment (the literal
reading of the defining event), and natural log is used throughout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc

from .lattice import TorusGeometry, CoordinatePlane, circ_dist
from .stats import wilson_ci
from .walk_engine import OccupancyGrid


# ---------------------------------------------------------------------------
# run lengths and component labeling
# ---------------------------------------------------------------------------

def circular_run_lengths(mask: np.ndarray, axis: int) -> np.ndarray:
    """Length (in cells, capped at N) of the True-run ending at each cell
    along `axis`, with wrap-around."""
    b = np.moveaxis(mask, axis, -1)
    N = b.shape[-1]
    bb = np.concatenate([b, b], axis=-1)
    idx = np.arange(2 * N, dtype=np.int32)
    last_false = np.maximum.accumulate(np.where(~bb, idx, np.int32(-1)), axis=-1)
    rl = (idx - last_false)[..., N:]
    return np.moveaxis(np.minimum(rl, N).astype(np.int32), -1, axis)


def max_axis_run(vacant: np.ndarray) -> int:
    """Longest vacant axis-parallel run on the torus, in cells."""
    best = 0
    for axis in range(vacant.ndim):
        best = max(best, int(circular_run_lengths(vacant, axis).max(initial=0)))
    return best


def _merge_wrap_labels(labels: np.ndarray, pairs: list[np.ndarray]) -> np.ndarray:
    """Union labels across wrap seams; relabels to 1..m in first-appearance
    order so results do not depend on scipy's internal ordering."""
    n = int(labels.max())
    if n == 0:
        return labels
    if pairs:
        edges = np.concatenate(pairs, axis=0)
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    if len(edges):
        g = coo_matrix(
            (np.ones(len(edges), dtype=np.int8), (edges[:, 0], edges[:, 1])),
            shape=(n + 1, n + 1),
        )
        _, comp = _cc(g, directed=False)
    else:
        comp = np.arange(n + 1)
    comp[0] = -1
    flat = comp[labels]
    # stable relabel: order of first appearance in the flattened grid
    seen, first_pos = np.unique(flat, return_index=True)
    keep = seen >= 0
    order = np.argsort(first_pos[keep])
    remap = np.zeros(comp.max() + 2, dtype=np.int32)
    remap[seen[keep][order]] = np.arange(1, keep.sum() + 1, dtype=np.int32)
    return remap[flat]


def label_torus_components(mask: np.ndarray) -> np.ndarray:
    """Nearest-neighbor component labels on the full torus (0 = background)."""
    structure = ndimage.generate_binary_structure(mask.ndim, 1)
    labels, _ = ndimage.label(mask, structure=structure)
    pairs = []
    for axis in range(mask.ndim):
        lo = np.take(labels, 0, axis=axis).ravel()
        hi = np.take(labels, mask.shape[axis] - 1, axis=axis).ravel()
        both = (lo > 0) & (hi > 0)
        if both.any():
            pairs.append(np.stack([lo[both], hi[both]], axis=1))
    return _merge_wrap_labels(labels, pairs)


@dataclass
class VacantComponents:
    """Component labeling of the vacant set at time t."""

    t: int
    labels: np.ndarray            # 0 = visited, 1..n = component ids
    sizes: np.ndarray             # sizes[k] = cells in component k (sizes[0] = 0)
    has_run: np.ndarray           # component contains a vacant axis run of >= run_cells cells
    run_cells: int

    @property
    def n_components(self) -> int:
        return len(self.sizes) - 1

    @property
    def vacant_cells(self) -> int:
        return int(self.sizes.sum())


def vacant_components(grid: OccupancyGrid, t: int | None = None, run_cells: int = 2) -> VacantComponents:
    """Label the vacant set via flooding over the 2d nearest-neighbor moves
    on the full torus, and flag components containing a straight axis run of
    at least `run_cells` vacant cells."""
    t = grid.total_steps if t is None else t
    vac = grid.vacant_mask(t)
    labels = label_torus_components(vac)
    n = int(labels.max())
    sizes = np.bincount(labels.ravel(), minlength=n + 1).astype(np.int64)
    sizes[0] = 0
    has_run = np.zeros(n + 1, dtype=bool)
    for axis in range(vac.ndim):
        rl = circular_run_lengths(vac, axis)
        hit = labels[rl >= run_cells]
        if hit.size:
            has_run[np.unique(hit)] = True
    return VacantComponents(t, labels, sizes, has_run, run_cells)


# ---------------------------------------------------------------------------
# the events V, U, C, G
# ---------------------------------------------------------------------------

def segment_cells(K: float, N: int) -> int:
    """Cells in one V-segment: floor(K ln N) + 1."""
    return int(math.floor(K * math.log(N))) + 1


def _offsets_count(N: int, beta: float) -> int:
    """Number of admissible segment offsets m with 0 <= m < N^beta."""
    nb = N ** beta
    m_max = int(math.floor(nb))
    if m_max == nb:
        m_max -= 1
    return m_max + 1


def detect_V(grid: OccupancyGrid, t: int | None = None, K: float = 1.0, beta: float = 0.5):
    """Segment-ubiquity event: every cell sees, in each direction within
    N^beta steps, a fully vacant segment of floor(K ln N)+1 cells.

    Scans each circular line once via run-length + sliding-window maxima,
    O(d*N^d) total. Returns (bool, witness); the witness is the first
    (cell, direction) with no admissible segment.
    """
    t = grid.total_steps if t is None else t
    geom = grid.geometry
    N = geom.N
    lam = segment_cells(K, N)
    n_off = _offsets_count(N, beta)
    if (lam - 1) + int(math.floor(N ** beta)) + 1 > N:
        raise ValueError(
            f"window does not fit: floor(K lnN)+floor(N^beta)+1 = "
            f"{(lam - 1) + int(math.floor(N ** beta)) + 1} > N = {N}"
        )
    vac = grid.vacant_mask(t)
    for axis in range(geom.d):
        rl = circular_run_lengths(vac, axis)
        seg_end_ok = (rl >= lam).astype(np.int8)
        # a segment starting at s is witnessed at position s + lam - 1, and a
        # cell accepts any start within the next n_off positions: a forward
        # sliding max, written as a centered filter plus a roll
        shifted = np.roll(seg_end_ok, -(lam - 1), axis=axis)
        filt = ndimage.maximum_filter1d(shifted, size=n_off, axis=axis, mode="wrap")
        ok = np.roll(filt, -(n_off // 2), axis=axis)
        if not ok.all():
            bad = np.unravel_index(int(np.argmin(ok)), ok.shape)
            return False, {"cell": tuple(int(c) for c in bad), "direction": axis}
    return True, None


def _cyclic_zero_run(occ: np.ndarray) -> np.ndarray:
    """Longest cyclic run of False per row of a (rows, N) boolean array."""
    n_rows, N = occ.shape
    occd = np.concatenate([occ, occ], axis=1)
    idx = np.arange(2 * N, dtype=np.int32)
    last_true = np.maximum.accumulate(np.where(occd, idx, np.int32(-1)), axis=1)
    zr = np.minimum((idx - last_true)[:, N:], N)
    return zr.max(axis=1)


def _plane_stacks(vac: np.ndarray):
    """Yield, per direction pair (i,j), the vacant array reshaped to
    (n_planes, N, N) with plane cells in the last two axes."""
    d = vac.ndim
    for i, j in itertools.combinations(range(d), 2):
        rest = [k for k in range(d) if k not in (i, j)]
        arr = np.transpose(vac, rest + [i, j])
        N = vac.shape[0]
        yield (i, j), arr.reshape(-1, N, N)


_PLANE_STRUCTURE = np.zeros((3, 3, 3), dtype=bool)
_PLANE_STRUCTURE[1] = [[False, True, False], [True, True, True], [False, True, False]]


def _label_planes(planes: np.ndarray) -> np.ndarray:
    """In-plane torus component labels for a (P, N, N) stack of planes."""
    labels, _ = ndimage.label(planes, structure=_PLANE_STRUCTURE)
    N = planes.shape[-1]
    pairs = []
    for axis in (1, 2):
        lo = np.take(labels, 0, axis=axis).ravel()
        hi = np.take(labels, N - 1, axis=axis).ravel()
        both = (lo > 0) & (hi > 0)
        if both.any():
            pairs.append(np.stack([lo[both], hi[both]], axis=1))
    return _merge_wrap_labels(labels, pairs)


def _plane_component_diameters(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per label of a (P, N, N) stack: wrap-aware diameter and plane index."""
    P, N, _ = labels.shape
    n = int(labels.max())
    if n == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    flat = labels.ravel()
    occupied = np.flatnonzero(flat)
    labs = flat[occupied]
    plane_idx = occupied // (N * N)
    a_coord = (occupied // N) % N
    b_coord = occupied % N
    diam = np.empty(n + 1, dtype=np.int64)
    for coords in (a_coord, b_coord):
        occ = np.zeros((n + 1, N), dtype=bool)
        occ[labs, coords] = True
        window = N - _cyclic_zero_run(occ)
        if coords is a_coord:
            diam = window
        else:
            diam = np.maximum(diam, window)
    diam = diam - 1
    diam[0] = 0
    plane_of = np.zeros(n + 1, dtype=np.int64)
    plane_of[labs] = plane_idx
    return diam[1:], plane_of[1:]


def detect_U(grid: OccupancyGrid, t: int | None = None, K: float = 1.0):
    """In-plane uniqueness event: in every coordinate plane, at most one
    vacant component has wrap-aware diameter >= floor(K ln N).

    Returns (bool, witness); the witness names the first violating plane.
    """
    t = grid.total_steps if t is None else t
    geom = grid.geometry
    thr = int(math.floor(K * math.log(geom.N)))
    if thr > geom.N - 1:
        return True, None    # no component can reach the threshold
    vac = grid.vacant_mask(t)
    for (i, j), planes in _plane_stacks(vac):
        labels = _label_planes(planes)
        diam, plane_of = _plane_component_diameters(labels)
        big = diam >= thr
        if big.sum() == 0:
            continue
        counts = np.bincount(plane_of[big])
        bad = np.flatnonzero(counts >= 2)
        if bad.size:
            return False, {"directions": (i, j), "plane_index": int(bad[0])}
    return True, None


def _extract_plane_patch(vac: np.ndarray, x, i: int, j: int, rho: int) -> np.ndarray:
    """(2rho+1)^2 vacant patch of the plane through x spanned by (i, j)."""
    N = vac.shape[0]
    sel = [slice(None)] * vac.ndim
    for k in range(vac.ndim):
        if k not in (i, j):
            sel[k] = x[k]
    plane = vac[tuple(sel)]
    if i > j:
        plane = plane.T
    ri = (np.arange(x[i] - rho, x[i] + rho + 1)) % N
    rj = (np.arange(x[j] - rho, x[j] + rho + 1)) % N
    return plane[np.ix_(ri, rj)]


_PATCH_STRUCTURE = ndimage.generate_binary_structure(2, 1)


def detect_C(grid: OccupancyGrid, t: int | None = None, K: float = 1.0, x=(0, 0, 0)) -> bool:
    """Local connection event: x is vacant and, inside some coordinate plane
    through x, a vacant nearest-neighbor path joins x to the sphere
    S(x, floor(K ln N))."""
    t = grid.total_steps if t is None else t
    geom = grid.geometry
    rho = int(math.floor(K * math.log(geom.N)))
    if 2 * rho + 1 > geom.N:
        raise ValueError(f"sphere of radius {rho} does not fit torus N={geom.N}")
    x = tuple(int(c) % geom.N for c in x)
    vac = grid.vacant_mask(t)
    if not vac[x]:
        return False
    if rho == 0:
        return True
    for i, j in itertools.combinations(range(geom.d), 2):
        patch = _extract_plane_patch(vac, x, i, j, rho)
        labels, _ = ndimage.label(patch, structure=_PATCH_STRUCTURE)
        center = labels[rho, rho]
        if center == 0:
            continue
        ring = np.concatenate([labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]])
        if (ring == center).any():
            return True
    return False


def detect_C_batch(grid: OccupancyGrid, t: int | None, K: float, probes) -> np.ndarray:
    """detect_C for many probe points at once: per plane orientation all
    probe patches are labeled in a single call."""
    t = grid.total_steps if t is None else t
    geom = grid.geometry
    rho = int(math.floor(K * math.log(geom.N)))
    if 2 * rho + 1 > geom.N:
        raise ValueError(f"sphere of radius {rho} does not fit torus N={geom.N}")
    probes = [tuple(int(c) % geom.N for c in x) for x in probes]
    vac = grid.vacant_mask(t)
    vacant_at = np.array([vac[x] for x in probes])
    if rho == 0:
        return vacant_at
    out = np.zeros(len(probes), dtype=bool)
    stack_structure = np.zeros((3, 3, 3), dtype=bool)
    stack_structure[1] = _PATCH_STRUCTURE
    for i, j in itertools.combinations(range(geom.d), 2):
        patches = np.empty((len(probes), 2 * rho + 1, 2 * rho + 1), dtype=bool)
        for k, x in enumerate(probes):
            patches[k] = _extract_plane_patch(vac, x, i, j, rho)
        labels, _ = ndimage.label(patches, structure=stack_structure)
        center = labels[:, rho, rho]
        ring = np.concatenate([labels[:, 0, :], labels[:, -1, :],
                               labels[:, :, 0], labels[:, :, -1]], axis=1)
        out |= (center > 0) & (ring == center[:, None]).any(axis=1)
    return out & vacant_at


def probe_grid(geom: TorusGeometry, spacing: int) -> list[tuple[int, ...]]:
    """Regular sublattice with pairwise wrap distance >= spacing."""
    if spacing < 1 or spacing > geom.N:
        raise ValueError("spacing must be in [1, N]")
    k = geom.N // spacing
    coords = [tuple(v) for v in itertools.product(range(0, k * spacing, spacing), repeat=geom.d)]
    return coords


@dataclass
class EventReport:
    """Truth values and witnesses for V, U, G plus giant-component stats."""

    t: int
    K: float
    beta: float
    L0: int
    V: bool
    U: bool
    G: bool
    giant_unique: bool = False
    giant_size: int = 0
    giant_fraction: float = 0.0
    C_fraction: float | None = None
    giant_probe_fraction: float | None = None
    neighborhood_ok: bool | None = None
    largest_component_fraction: float = 0.0
    witnesses: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "t": self.t, "K": self.K, "beta": self.beta, "L0": self.L0,
            "V": self.V, "U": self.U, "G": self.G,
            "giant": {"unique": self.giant_unique, "size": self.giant_size,
                      "fraction": self.giant_fraction},
            "C_fraction": self.C_fraction,
            "giant_probe_fraction": self.giant_probe_fraction,
            "neighborhood_ok": self.neighborhood_ok,
            "witnesses": {k: str(v) for k, v in self.witnesses.items()},
        }


def _covered_by_dilation(mask: np.ndarray, radius: int) -> bool:
    """True when every cell is within wrap L-inf distance `radius` of mask."""
    if radius <= 0:
        return bool(mask.all())
    out = mask.astype(np.uint8)
    for axis in range(mask.ndim):
        out = ndimage.maximum_filter1d(out, size=2 * radius + 1, axis=axis, mode="wrap")
    return bool(out.all())


def detect_G(grid: OccupancyGrid, t: int | None = None, K_runs: float = 1.0, beta: float = 0.5,
             n_probe_target: int = 2048) -> EventReport:
    """Giant-component event G = V and U (same K), with the giant component
    identified as the unique vacant component containing an axis run of
    extent L0 = floor(K_runs ln N); also verifies the N^beta-neighborhood
    property and reports the local-connection fraction over a probe grid."""
    t = grid.total_steps if t is None else t
    geom = grid.geometry
    N = geom.N
    L0 = int(math.floor(K_runs * math.log(N)))
    v_ok, v_wit = detect_V(grid, t, K_runs, beta)
    u_ok, u_wit = detect_U(grid, t, K_runs)
    report = EventReport(t=t, K=K_runs, beta=beta, L0=L0, V=v_ok, U=u_ok, G=v_ok and u_ok)
    if v_wit:
        report.witnesses["V"] = v_wit
    if u_wit:
        report.witnesses["U"] = u_wit

    comps = vacant_components(grid, t, run_cells=L0 + 1)
    if comps.n_components:
        report.largest_component_fraction = int(comps.sizes.max()) / geom.n_cells
    spacing = max(1, N // max(1, round(n_probe_target ** (1.0 / geom.d))))
    probes = probe_grid(geom, spacing)

    if report.G:
        cand = np.flatnonzero(comps.has_run)
        report.giant_unique = len(cand) == 1
        if not report.giant_unique:
            report.witnesses["giant"] = {"components_with_runs": [int(c) for c in cand]}
        if len(cand):
            o_label = int(cand[np.argmax(comps.sizes[cand])])
            report.giant_size = int(comps.sizes[o_label])
            report.giant_fraction = report.giant_size / geom.n_cells
            o_mask = comps.labels == o_label
            report.neighborhood_ok = _covered_by_dilation(o_mask, _offsets_count(N, beta) - 1)
            in_o = sum(1 for p in probes if o_mask[p])
            report.giant_probe_fraction = in_o / len(probes)
    report.C_fraction = float(detect_C_batch(grid, t, K_runs, probes).mean())
    return report


# ---------------------------------------------------------------------------
# scalar summaries
# ---------------------------------------------------------------------------

def vacant_fraction(grid: OccupancyGrid, t: int | None = None) -> float:
    t = grid.total_steps if t is None else t
    return float(grid.vacant_mask(t).sum()) / grid.geometry.n_cells


def largest_vacant_ball(grid: OccupancyGrid, t: int | None = None) -> int:
    """Largest radius of an L-infinity ball contained in the vacant set,
    0 when no vacant ball of radius >= 1 exists.

    Uses the identity max_x dist(x, visited) = min{r : dilating the visited
    set by r covers the torus} and binary-searches r with separable wrap
    maximum filters, O(d N^d log N).
    """
    t = grid.total_steps if t is None else t
    visited = grid.visited_mask(t)
    if visited.all():
        return 0
    N = grid.geometry.N
    lo, hi = 0, N // 2    # covered at N//2 always
    while lo < hi:
        mid = (lo + hi) // 2
        if _covered_by_dilation(visited, mid):
            hi = mid
        else:
            lo = mid + 1
    return max(lo - 1, 0)


def is_planar(points) -> bool:
    """Whether a point set lies in a single coordinate plane (the class A_2)."""
    pts = np.asarray(list(points))
    if pts.ndim != 2 or len(pts) == 0:
        return False
    d = pts.shape[1]
    varying = [j for j in range(d) if len(np.unique(pts[:, j])) > 1]
    return len(varying) <= 2


@dataclass
class CoverageEstimate:
    n_covered: int
    n_replicas: int
    estimate: float
    ci_lo: float
    ci_hi: float


def coverage_probability(geom: TorusGeometry, A, u: float, replicas: int, seed: int,
                         stream_base: int = 0) -> CoverageEstimate:
    """Monte Carlo estimate of P[X_[0,uN^d] covers A] with a Wilson CI.
    A must be contained in one coordinate plane."""
    from .walk_engine import WalkConfig, run_walk

    A = [tuple(int(c) % geom.N for c in p) for p in A]
    if not A:
        raise ValueError("A must be nonempty")
    if not is_planar(A):
        raise ValueError("A must lie in a single coordinate plane")
    idx = tuple(np.array([p[j] for p in A]) for j in range(geom.d))
    covered = 0
    for rep in range(replicas):
        grid = run_walk(WalkConfig(geom, u, seed, stream_base + rep))
        covered += int(grid.visited_mask()[idx].all())
    lo, hi = wilson_ci(covered, replicas)
    return CoverageEstimate(covered, replicas, covered / replicas, lo, hi)


# ---------------------------------------------------------------------------
# local functions and their spatial averages
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LocalFunctionSpec:
    """Monotone-decreasing [0,1] function of the visited pattern in the
    radius-L box around a site.

    phi0: indicator that the site itself is unvisited.
    phi1: indicator that, in some coordinate plane through the site, a vacant
          path joins the site to the sphere of radius `run_length` (defaults
          to L).
    custom: any callable on frozensets of offsets; monotonicity is validated
          by sampling.
    """

    selector: str = "phi0"
    L: int = 1
    run_length: int | None = None
    table: object = None

    def __post_init__(self):
        if self.selector not in ("phi0", "phi1", "custom"):
            raise ValueError(f"unknown selector {self.selector}")
        if self.selector == "custom" and not callable(self.table):
            raise ValueError("custom spec needs a callable table")

    @property
    def rho(self) -> int:
        r = self.L if self.run_length is None else self.run_length
        if r > self.L:
            raise ValueError("run_length must not exceed the box radius")
        return r


def _h_value(spec: LocalFunctionSpec, visited: np.ndarray, x, geom: TorusGeometry, t: int) -> float:
    """h(x, t) = phi((X_[0,t] ∩ C(x)) - x) evaluated from a visited mask."""
    x = tuple(int(c) % geom.N for c in x)
    if spec.selector == "phi0":
        return 0.0 if visited[x] else 1.0
    if spec.selector == "phi1":
        if visited[x]:
            return 0.0
        rho = spec.rho
        if rho == 0:
            return 1.0
        for i, j in itertools.combinations(range(geom.d), 2):
            patch = _extract_plane_patch(~visited, x, i, j, rho)
            labels, _ = ndimage.label(patch, structure=_PATCH_STRUCTURE)
            center = labels[rho, rho]
            if center == 0:
                continue
            ring = np.concatenate([labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]])
            if (ring == center).any():
                return 1.0
        return 0.0
    # custom table on the set of visited offsets within the box
    from .lattice import ball_offsets

    offs = ball_offsets(geom.d, spec.L)
    pts = (np.asarray(x) + offs) % geom.N
    vis = visited[tuple(pts[:, j] for j in range(geom.d))]
    pattern = frozenset(map(tuple, offs[vis]))
    return float(spec.table(pattern))


def validate_monotone(spec: LocalFunctionSpec, geom: TorusGeometry, n_samples: int = 64, seed: int = 0) -> None:
    """Sampled check that custom tables are monotone decreasing in the
    visited pattern; raises on a violation."""
    if spec.selector != "custom":
        return
    from .lattice import ball_offsets

    gen = np.random.Generator(np.random.Philox(key=[seed, 0]))
    offs = [tuple(o) for o in ball_offsets(geom.d, spec.L)]
    for _ in range(n_samples):
        mask = gen.random(len(offs)) < gen.random()
        small = frozenset(o for o, m in zip(offs, mask) if m)
        grow = gen.random(len(offs)) < 0.3
        big = small | frozenset(o for o, m in zip(offs, grow) if m)
        if spec.table(small) < spec.table(big) - 1e-12:
            raise ValueError("custom table is not monotone decreasing")


def local_function_average(grid: OccupancyGrid, spec: LocalFunctionSpec, t: int | None = None) -> float:
    """Spatial average of h(x, t) over every site of the torus."""
    t = grid.total_steps if t is None else t
    geom = grid.geometry
    validate_monotone(spec, geom)
    if spec.selector == "phi0":
        return vacant_fraction(grid, t)
    visited = grid.visited_mask(t)
    total = 0.0
    for x in itertools.product(range(geom.N), repeat=geom.d):
        total += _h_value(spec, visited, x, geom, t)
    return total / geom.n_cells


def gamma_tilde(grid: OccupancyGrid, schedules, spec: LocalFunctionSpec, ell_star: int):
    """Probe-estimator variant: average of h(x, D^x_{ell*}) over the probe
    centers, each evaluated at its own ell*-th departure time.

    Probes with fewer than ell* completed departures are evaluated at the
    horizon; their count is returned alongside the average.
    """
    geom = grid.geometry
    validate_monotone(spec, geom)
    vals = []
    short = 0
    for sched in schedules:
        if len(sched.departures) >= ell_star:
            tx = sched.departures[ell_star - 1]
        else:
            tx = grid.total_steps
            short += 1
        vals.append(_h_value(spec, grid.visited_mask(tx), sched.center, geom, tx))
    return float(np.mean(vals)), short


def check_probe_separation(geom: TorusGeometry, centers, r: int) -> None:
    """Pairwise wrap distance must be >= 2r+3 for decoupled probes."""
    centers = [tuple(c) for c in centers]
    for a, b in itertools.combinations(centers, 2):
        dist = int(np.max(circ_dist(geom.N, np.asarray(a), np.asarray(b))))
        if dist < 2 * r + 3:
            raise ValueError(f"probe centers {a}, {b} at distance {dist} < 2r+3 = {2 * r + 3}")

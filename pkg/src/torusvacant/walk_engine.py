"""Simple-random-walk simulation on the torus with streaming observers.

The walk is simulated in vectorized chunks: per chunk the engine draws the
moves, accumulates positions with cumulative sums, updates the first-visit
grid, and hands the block of (time, position) events to every observer in
order. Observers therefore see the full event stream without any full-path
storage. Identical (seed, replica_index, config) reproduce bit-identical
results.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .lattice import TorusGeometry, circ_dist

NEVER = np.uint32(0xFFFFFFFF)

GRID_MAGIC = b"TVGR"
GRID_VERSION = 1

# full-path retention cap for debugging observers (steps)
PATH_RETENTION_CAP = 2_000_000

_CHUNK = 1 << 19


class GridFormatError(ValueError):
    """Raised when a grid snapshot file is malformed."""


@dataclass(frozen=True)
class WalkConfig:
    """Parameters of one torus walk.

    `u` is the time-scale multiplier: the walk runs t = floor(u * N^d) steps.
    `start=None` means a uniform start drawn from the walk's own stream.
    """

    geometry: TorusGeometry
    u: float
    seed: int
    replica_index: int = 0
    start: tuple[int, ...] | None = None

    @property
    def total_steps(self) -> int:
        t = int(np.floor(self.u * self.geometry.n_cells))
        if t < 0:
            raise ValueError("u must be nonnegative")
        if t >= 2**32:
            raise ValueError(f"t={t} exceeds the 32-bit first-visit time width")
        return t


@dataclass
class OccupancyGrid:
    """Per-cell first-visit time of a walk; the vacant-set analyses read this.

    `first_visit` is a uint32 array of shape (N,)*d in C order (last
    coordinate fastest); unvisited cells hold NEVER.
    """

    geometry: TorusGeometry
    first_visit: np.ndarray
    total_steps: int
    seed: int = 0
    replica_index: int = 0

    @staticmethod
    def from_visited_mask(geometry: TorusGeometry, visited: np.ndarray, total_steps: int = 0) -> "OccupancyGrid":
        """Synthetic grid: visited cells get time 0, the rest NEVER."""
        fv = np.where(visited, np.uint32(0), NEVER).astype(np.uint32)
        return OccupancyGrid(geometry, fv, total_steps)

    def visited_mask(self, t: int | None = None) -> np.ndarray:
        t = self.total_steps if t is None else t
        if t > self.total_steps:
            raise ValueError(f"query time {t} exceeds total steps {self.total_steps}")
        return self.first_visit <= np.uint32(t)

    def vacant_mask(self, t: int | None = None) -> np.ndarray:
        return ~self.visited_mask(t)

    def save(self, path) -> None:
        geom = self.geometry
        with open(path, "wb") as fh:
            fh.write(GRID_MAGIC)
            fh.write(struct.pack("<B", GRID_VERSION))
            fh.write(struct.pack("<BIIQQQ", geom.d, geom.N, 0, self.total_steps, self.seed, self.replica_index))
            fh.write(self.first_visit.astype("<u4").tobytes(order="C"))

    @staticmethod
    def load(path) -> "OccupancyGrid":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != GRID_MAGIC:
                raise GridFormatError(f"bad magic {magic!r}, expected {GRID_MAGIC!r}")
            (version,) = struct.unpack("<B", fh.read(1))
            if version != GRID_VERSION:
                raise GridFormatError(f"unsupported grid version {version}")
            d, N, _pad, t, seed, replica = struct.unpack("<BIIQQQ", fh.read(struct.calcsize("<BIIQQQ")))
            geom = TorusGeometry(d, N)
            raw = fh.read(4 * geom.n_cells)
            if len(raw) != 4 * geom.n_cells:
                raise GridFormatError("truncated first-visit payload")
            fv = np.frombuffer(raw, dtype="<u4").astype(np.uint32).reshape((N,) * d)
        return OccupancyGrid(geom, fv, int(t), int(seed), int(replica))


class StepObserver:
    """Base class: receives the walk's event stream in order."""

    def on_start(self, config: WalkConfig, x0: np.ndarray) -> None:
        pass

    def on_chunk(self, t0: int, positions: np.ndarray) -> None:
        """`positions[k]` is X_{t0+1+k}; chunks arrive in time order."""

    def on_finish(self, total_steps: int) -> None:
        pass


class PathRecorder(StepObserver):
    """Retains the full path; refuses walks longer than the retention cap."""

    def __init__(self, cap: int = PATH_RETENTION_CAP):
        self.cap = cap
        self._parts: list[np.ndarray] = []

    def on_start(self, config, x0):
        if config.total_steps > self.cap:
            raise ValueError(f"path retention capped at {self.cap} steps, walk has {config.total_steps}")
        self._parts = [x0[None, :].astype(np.int32)]

    def on_chunk(self, t0, positions):
        self._parts.append(positions.astype(np.int32))

    @property
    def path(self) -> np.ndarray:
        return np.concatenate(self._parts, axis=0)


@dataclass
class ExcursionSchedule:
    """Return/departure interleaving for a concentric box pair A ⊆ Ã.

    R[k] is the k-th entrance time to A, D[k] the following first exit from
    Ã; `last_visits[k]` (when core tracking is on) is the last time in A
    before D[k]. `open_excursion` marks a final R without its D inside the
    horizon. The interleaving R1 <= D1 < R2 < D2 < ... is guaranteed.
    """

    center: tuple[int, ...]
    inner_radius: int
    outer_radius: int
    returns: list[int] = field(default_factory=list)
    departures: list[int] = field(default_factory=list)
    last_visits: list[int] = field(default_factory=list)
    open_excursion: bool = False

    def counts_at(self, t: int) -> tuple[int, int, int]:
        """(returns, completed, open) with times <= t."""
        r = int(np.searchsorted(np.asarray(self.returns), t, side="right"))
        c = int(np.searchsorted(np.asarray(self.departures), t, side="right"))
        return r, c, r - c

    def to_json(self) -> str:
        return json.dumps(
            {
                "center": list(self.center),
                "L": self.inner_radius,
                "r": self.outer_radius,
                "R": self.returns,
                "D": self.departures,
                "open": self.open_excursion,
            },
            separators=(",", ":"),
        )


class ExcursionObserver(StepObserver):
    """Streams the walk through the (A, Ã) state machine of the return/
    departure decomposition; keeps only event times, never the path."""

    _WAIT_R, _WAIT_D = 0, 1

    def __init__(self, center, inner_radius: int, outer_radius: int, track_last_visit: bool = False):
        if inner_radius > outer_radius:
            raise ValueError("inner box must be contained in the outer box")
        self.center = tuple(int(c) for c in center)
        self.L = int(inner_radius)
        self.r = int(outer_radius)
        self.track_last = track_last_visit
        self.schedule = ExcursionSchedule(self.center, self.L, self.r)
        self._mode = self._WAIT_R
        self._last_in_core = -1

    def _dists(self, positions: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center, dtype=np.int64)
        return circ_dist(self.N, positions.astype(np.int64), c[None, :]).max(axis=1)

    def on_start(self, config, x0):
        self.N = config.geometry.N
        if 2 * self.r + 1 > self.N:
            raise ValueError("outer box does not fit the torus")
        sched = self.schedule
        d0 = int(self._dists(x0[None, :])[0])
        if d0 <= self.L:
            sched.returns.append(0)
            self._mode = self._WAIT_D
            self._last_in_core = 0

    def on_chunk(self, t0, positions):
        dist = self._dists(positions)
        in_core = np.flatnonzero(dist <= self.L)
        out_outer = np.flatnonzero(dist > self.r)
        sched = self.schedule
        pos = 0
        n = len(dist)
        while pos < n:
            if self._mode == self._WAIT_R:
                k = np.searchsorted(in_core, pos)
                if k == len(in_core):
                    return
                idx = int(in_core[k])
                sched.returns.append(t0 + 1 + idx)
                self._last_in_core = t0 + 1 + idx
                self._mode = self._WAIT_D
                pos = idx + 1
            else:
                k = np.searchsorted(out_outer, pos)
                if k == len(out_outer):
                    if self.track_last and len(in_core):
                        last = int(in_core[-1])
                        if last >= pos - 1:
                            self._last_in_core = max(self._last_in_core, t0 + 1 + last)
                    return
                idx = int(out_outer[k])
                if self.track_last:
                    j = np.searchsorted(in_core, idx) - 1
                    if j >= 0 and in_core[j] >= pos - 1:
                        self._last_in_core = max(self._last_in_core, t0 + 1 + int(in_core[j]))
                    sched.last_visits.append(self._last_in_core)
                    self._last_in_core = -1
                sched.departures.append(t0 + 1 + idx)
                self._mode = self._WAIT_R
                pos = idx + 1

    def on_finish(self, total_steps):
        self.schedule.open_excursion = self._mode == self._WAIT_D


def run_walk(config: WalkConfig, observers=()) -> OccupancyGrid:
    """Simulate t = floor(u*N^d) steps of SRW on the torus.

    Fills the first-visit grid and feeds every (time, position) event to the
    observers in order. Each step picks one of the 2d nearest-neighbor moves
    uniformly.
    """
    geom = config.geometry
    d, N = geom.d, geom.N
    t = config.total_steps
    gen = _rng.stream(config.seed, config.replica_index)

    if config.start is None:
        x0 = gen.integers(0, N, size=d, dtype=np.int64)
    else:
        x0 = np.asarray([c % N for c in config.start], dtype=np.int64)
        if len(x0) != d:
            raise ValueError("start point has wrong dimension")

    fv = np.full(geom.n_cells, NEVER, dtype=np.uint32)
    lin0 = 0
    for c in x0:
        lin0 = lin0 * N + int(c)
    fv[lin0] = 0

    for obs in observers:
        obs.on_start(config, x0.copy())

    cur = x0.copy()
    done = 0
    while done < t:
        k = min(_CHUNK, t - done)
        moves = gen.integers(0, 2 * d, size=k, dtype=np.uint8)
        axis = moves >> 1
        sign = (np.int64(2) * (moves & 1).astype(np.int64)) - 1
        # positions after each step, via per-coordinate cumulative displacement
        pos = np.empty((k, d), dtype=np.int64)
        for j in range(d):
            delta = np.where(axis == j, sign, 0).cumsum()
            pos[:, j] = (cur[j] + delta) % N
        lin = pos[:, 0].copy()
        for j in range(1, d):
            lin *= N
            lin += pos[:, j]
        # only cells still unvisited can acquire a first-visit time
        cand = np.flatnonzero(fv[lin] == NEVER)
        if cand.size:
            uniq, first_idx = np.unique(lin[cand], return_index=True)
            fv[uniq] = (done + 1 + cand[first_idx]).astype(np.uint32)
        for obs in observers:
            obs.on_chunk(done, pos)
        cur = pos[-1].copy()
        done += k

    for obs in observers:
        obs.on_finish(t)

    return OccupancyGrid(geom, fv.reshape((N,) * d), t, config.seed, config.replica_index)


def replay_path(path: np.ndarray, geometry: TorusGeometry, observers) -> None:
    """Drive observers with a stored path (row 0 is X_0). Used by tests and
    by the schedule export of crafted walks."""
    path = np.asarray(path, dtype=np.int64) % geometry.N
    cfg = WalkConfig(geometry, 0.0, seed=0)
    for obs in observers:
        obs.on_start(cfg, path[0])
    if len(path) > 1:
        for obs in observers:
            obs.on_chunk(0, path[1:])
    for obs in observers:
        obs.on_finish(len(path) - 1)


def excursion_schedule(path_or_config, inner_center, inner_radius, outer_radius,
                       geometry: TorusGeometry | None = None,
                       track_last_visit: bool = False) -> ExcursionSchedule:
    """Return/departure schedule for the box pair B(c,L) ⊆ B(c,r).

    `path_or_config` is either a WalkConfig (the walk is simulated) or a
    stored path array (replayed), in which case `geometry` is required.
    """
    obs = ExcursionObserver(inner_center, inner_radius, outer_radius, track_last_visit)
    if isinstance(path_or_config, WalkConfig):
        run_walk(path_or_config, observers=[obs])
    else:
        if geometry is None:
            raise ValueError("geometry required when replaying a stored path")
        replay_path(path_or_config, geometry, [obs])
    return obs.schedule


def macroscopic_radii(N: int) -> tuple[int, int]:
    """Radii floor(N/8), floor(N/4) of the macroscopic concentric boxes."""
    return N // 8, N // 4


@dataclass
class ExcursionCounts:
    """Completed/return/open excursion counts per checkpoint."""

    checkpoints_u: list[float]
    returns: list[int]
    completed: list[int]
    open_counts: list[int]


def count_box_excursions(config: WalkConfig, x=None, L: int | None = None, r: int | None = None,
                         checkpoints=(1.0,)) -> ExcursionCounts:
    """Excursion counts to a concentric pair at each checkpoint u value.

    With x/L/r all None the macroscopic pair centered at the origin with
    radii floor(N/8), floor(N/4) is used; otherwise the probe pair
    (B(x,L), B(x,r)).
    """
    geom = config.geometry
    if x is None:
        L_, r_ = macroscopic_radii(geom.N)
        center = (0,) * geom.d
    else:
        if L is None or r is None:
            raise ValueError("probe pair needs both L and r")
        L_, r_ = L, r
        center = tuple(x)
    checkpoints = sorted(checkpoints)
    max_u = max(checkpoints)
    cfg = WalkConfig(geom, max_u, config.seed, config.replica_index, config.start)
    obs = ExcursionObserver(center, L_, r_)
    run_walk(cfg, observers=[obs])
    res = ExcursionCounts(list(checkpoints), [], [], [])
    for u in checkpoints:
        t = int(np.floor(u * geom.n_cells))
        ret, comp, open_ = obs.schedule.counts_at(t)
        res.returns.append(ret)
        res.completed.append(comp)
        res.open_counts.append(open_)
    return res


def schedules_to_ndjson(schedules) -> str:
    buf = io.StringIO()
    for s in schedules:
        buf.write(s.to_json())
        buf.write("\n")
    return buf.getvalue()

"""Simple random walk on the infinite lattice Z^nu.

Two layers live here:

* ``run_zd_walk`` — a single walk with an explicit stop rule (hit a finite
  set, leave a ball, or exhaust a step budget), optionally recording the
  path.

* a batch hit-or-escape engine built on exact L-infinity ball exit kernels.
  When a walker is far from everything that matters, the walk from its
  position up to the exit of a ball around it that avoids the target has an
  exactly computable exit-point law (a single sparse linear solve per
  radius). Replacing the stretch of steps by one draw from that law leaves
  every spatial hitting probability unchanged (strong Markov property), so
  the engine is used only where path shape and elapsed time are irrelevant:
  return/escape probabilities, harmonic measure, and travel-to-the-boxes
  phases. It is never used where durations or traces are recorded.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg

from .lattice import ball_offsets

# radii with affordable exact kernels, per dimension
KERNEL_RADII = {
    3: (2, 4, 8, 16, 32, 64),
    4: (2, 4, 8, 16),
    5: (2, 4),
    6: (2, 3),
    7: (2,),
}

_CACHE_DIR = Path(os.environ.get("TORUSVACANT_CACHE", Path.home() / ".cache" / "torusvacant")) / "kernels"


def green_prefactor(nu: int) -> float:
    """Leading constant of the lattice Green function, g(x) ~ C |x|^(2-nu)."""
    return 0.5 * nu * math.gamma(nu / 2 - 1) / math.pi ** (nu / 2)


def far_return_bound(nu: int, strength: float, distance: int) -> float:
    """Declared one-sided bound on the probability of ever hitting a target
    from L-inf distance `distance`; `strength` is the target's capacity when
    an estimate is available (with a safety factor), else its cell count."""
    if distance < 1:
        return 1.0
    return min(1.0, strength * green_prefactor(nu) * float(distance) ** (2 - nu))


def _alias_table(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias table for O(1) categorical sampling."""
    n = len(probs)
    cut = probs * n
    alias = np.arange(n, dtype=np.int64)
    small = [i for i in range(n) if cut[i] < 1.0]
    large = [i for i in range(n) if cut[i] >= 1.0]
    cut = cut.copy()
    while small and large:
        s, l = small.pop(), large.pop()
        alias[s] = l
        cut[l] = cut[l] - (1.0 - cut[s])
        (small if cut[l] < 1.0 else large).append(l)
    for i in small + large:
        cut[i] = 1.0
    return alias, cut


@dataclass
class ExitKernel:
    """Exact exit-point law of SRW started at the center of B_inf(0, rho)."""

    nu: int
    rho: int
    offsets: np.ndarray      # (K, nu) int32 exit cells
    probs: np.ndarray        # (K,)
    cdf: np.ndarray
    _alias: np.ndarray | None = None
    _cut: np.ndarray | None = None

    def sample(self, n: int, rng) -> np.ndarray:
        if self._alias is None:
            self._alias, self._cut = _alias_table(self.probs)
        u = rng.random(n)
        v = rng.random(n)
        k = (u * len(self.probs)).astype(np.int64)
        k = np.where(v < self._cut[k], k, self._alias[k])
        return self.offsets[k]


_kernel_cache: dict[tuple[int, int], ExitKernel] = {}


def exit_kernel(nu: int, rho: int) -> ExitKernel:
    """Build (and cache) the exit kernel by solving for the expected-visit
    vector g of the walk killed at the exit of the ball:
    (I - P_interior) g = e_center; the exit mass at an outside cell y is
    sum over interior neighbors x of g(x)/(2 nu)."""
    key = (nu, rho)
    if key in _kernel_cache:
        return _kernel_cache[key]
    cache_file = _CACHE_DIR / f"exit_d{nu}_r{rho}.npz"
    if cache_file.exists():
        data = np.load(cache_file)
        probs = data["probs"]
        kern = ExitKernel(nu, rho, data["offsets"], probs, np.cumsum(probs))
        _kernel_cache[key] = kern
        return kern
    side = 2 * rho + 1
    n = side**nu
    strides = np.array([side ** (nu - 1 - j) for j in range(nu)], dtype=np.int64)

    rows, cols = [], []
    coords = ball_offsets(nu, rho)          # interior cells, lexicographic
    lin = (coords + rho) @ strides
    order = np.argsort(lin)
    inv = np.empty(n, dtype=np.int64)
    inv[lin[order]] = order                 # lin is a permutation of range(n)
    for j in range(nu):
        for s in (-1, 1):
            nb = coords.copy()
            nb[:, j] += s
            inside = np.abs(nb[:, j]) <= rho
            rows.append(np.flatnonzero(inside))
            cols.append(inv[(nb[inside] + rho) @ strides])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    P = sparse.csr_matrix(
        (np.full(len(rows), 1.0 / (2 * nu)), (rows, cols)), shape=(n, n)
    )
    A = sparse.identity(n, format="csr") - P
    b = np.zeros(n)
    b[np.flatnonzero((coords == 0).all(axis=1))[0]] = 1.0
    g, info = cg(A, b, rtol=1e-13, atol=0.0, maxiter=200 * side)
    if info != 0:
        raise RuntimeError(f"exit kernel solve failed for nu={nu}, rho={rho} (info={info})")

    acc: dict[tuple[int, ...], float] = {}
    for j in range(nu):
        for s in (-1, 1):
            on_face = coords[:, j] == s * rho
            outs = coords[on_face].copy()
            outs[:, j] += s
            mass = g[on_face] / (2 * nu)
            for off, m in zip(outs, mass):
                t = tuple(int(v) for v in off)
                acc[t] = acc.get(t, 0.0) + float(m)
    offsets = np.array(sorted(acc.keys()), dtype=np.int32)
    probs = np.array([acc[tuple(o)] for o in offsets])
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise RuntimeError(f"exit kernel mass {total} != 1 for nu={nu}, rho={rho}")
    probs = probs / total
    kern = ExitKernel(nu, rho, offsets, probs, np.cumsum(probs))
    _kernel_cache[key] = kern
    try:
        _CACHE_DIR.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=_CACHE_DIR, suffix=".tmp", delete=False) as fh:
            np.savez_compressed(fh, offsets=offsets, probs=probs)
            tmp = fh.name
        os.replace(tmp, cache_file)
    except OSError:
        pass    # cache is an optimization only
    return kern


def batch_step(positions: np.ndarray, rng) -> None:
    """One SRW step, in place, for an (n, nu) position array."""
    n, nu = positions.shape
    mv = rng.integers(0, 2 * nu, size=n)
    axis = (mv >> 1).astype(np.int64)
    sign = 2 * (mv & 1).astype(np.int64) - 1
    positions[np.arange(n), axis] += sign


def batch_hit_before_escape(nu: int, target_radius: int, escape_radius: int,
                            starts: np.ndarray, rng,
                            radii=None, max_rounds: int = 50_000_000) -> np.ndarray:
    """For each start, whether SRW enters B_inf(0, target_radius) before it
    is first observed outside B_inf(0, escape_radius).

    Walkers step singly near the target and take exact ball-exit jumps when
    the largest available kernel ball around them avoids the target;
    observations happen per step and per jump, so "escape" means the first
    observation at distance > escape_radius (the one-sided truncation bias
    of estimators built on this is bounded by `far_return_bound`).
    """
    if radii is None:
        # jumps much larger than the escape scale waste overshoot; cap at R/8
        radii = [r for r in KERNEL_RADII.get(nu, ()) if r <= max(escape_radius // 8, 8)]
    radii = np.array(sorted(radii), dtype=np.int64)
    kernels = {int(r): exit_kernel(nu, int(r)) for r in radii}

    hit = np.zeros(len(starts), dtype=bool)
    p = np.array(starts, dtype=np.int64, copy=True)
    ids = np.arange(len(starts))
    for _ in range(max_rounds):
        if len(ids) == 0:
            return hit
        dist = np.abs(p).max(axis=1)
        done_hit = dist <= target_radius
        done = done_hit | (dist > escape_radius)
        if done.any():
            hit[ids[done_hit]] = True
            keep = ~done
            ids, p, dist = ids[keep], p[keep], dist[keep]
            if len(ids) == 0:
                return hit
        allowed = dist - target_radius - 1
        k = np.searchsorted(radii, allowed, side="right") - 1 if len(radii) else np.full(len(p), -1)
        steppers = np.flatnonzero(k < 0)
        if steppers.size:
            sub = p[steppers]
            batch_step(sub, rng)
            p[steppers] = sub
        for ki in np.unique(k[k >= 0]):
            group = np.flatnonzero(k == ki)
            kern = kernels[int(radii[ki])]
            p[group] += kern.sample(len(group), rng).astype(np.int64)
        if len(ids) > len(starts):
            raise AssertionError("active set grew")
    raise RuntimeError("batch_hit_before_escape did not converge within max_rounds")


@dataclass
class ZdWalkResult:
    outcome: str                  # 'hit' | 'exited' | 'exhausted'
    end: tuple[int, ...]
    steps: int
    path: np.ndarray | None = None


def run_zd_walk(start, hit_set=None, exit_radius: int | None = None,
                max_steps: int | None = None, rng=None, seed: int = 0,
                record_path: bool = False, chunk: int = 8192) -> ZdWalkResult:
    """Walk on Z^nu until the first satisfied stop condition.

    `hit_set` is a finite set of points; `exit_radius` stops the walk on the
    first step strictly outside B_inf(0, exit_radius). `max_steps` must be
    set (termination guarantee); exhausting it is reported as its own
    outcome, never silently truncated.
    """
    if max_steps is None:
        raise ValueError("max_steps must always be set")
    if rng is None:
        rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    start = np.asarray(start, dtype=np.int64)
    nu = len(start)
    hits = None
    if hit_set is not None:
        hits = np.asarray(sorted(tuple(int(c) for c in p) for p in hit_set), dtype=np.int64)
        if hits.ndim != 2 or hits.shape[1] != nu:
            raise ValueError("hit set has wrong dimension")

    def _event_scan(block: np.ndarray):
        """Index of first stop event within the block, and its kind."""
        first, kind = len(block), None
        if hits is not None:
            m = (block[:, None, :] == hits[None, :, :]).all(axis=2).any(axis=1)
            i = int(np.argmax(m)) if m.any() else len(block)
            if i < first:
                first, kind = i, "hit"
        if exit_radius is not None:
            m = np.abs(block).max(axis=1) > exit_radius
            i = int(np.argmax(m)) if m.any() else len(block)
            if i < first:
                first, kind = i, "exited"
        return first, kind

    cur = start.copy()
    path_parts = [start[None, :].copy()] if record_path else None
    # check the start itself: H_U = inf{n >= 0}
    first, kind = _event_scan(cur[None, :])
    if kind is not None:
        return ZdWalkResult(kind, tuple(int(c) for c in cur), 0,
                            np.asarray(path_parts[0]) if record_path else None)
    done = 0
    while done < max_steps:
        k = min(chunk, max_steps - done)
        mv = rng.integers(0, 2 * nu, size=k)
        axis = (mv >> 1).astype(np.int64)
        sign = 2 * (mv & 1).astype(np.int64) - 1
        block = np.zeros((k, nu), dtype=np.int64)
        block[np.arange(k), axis] = sign
        block = cur[None, :] + np.cumsum(block, axis=0)
        first, kind = _event_scan(block)
        if kind is not None:
            if record_path:
                path_parts.append(block[: first + 1])
            end = block[first]
            return ZdWalkResult(kind, tuple(int(c) for c in end), done + first + 1,
                                np.concatenate(path_parts) if record_path else None)
        if record_path:
            path_parts.append(block)
        cur = block[-1].copy()
        done += k
    return ZdWalkResult("exhausted", tuple(int(c) for c in cur), max_steps,
                        np.concatenate(path_parts) if record_path else None)

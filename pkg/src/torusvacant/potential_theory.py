"""Infinite-lattice quantities: return probabilities, Green values, the
finite-torus return probability, the high-dimension constants, harmonic
measure and capacity of a box, the limit excursion law with its product
formula, and the star self-avoiding walk count.

Return probabilities come from two independent routes (Bessel quadrature
and truncated Monte Carlo) that cross-check each other; every truncated
estimator carries an explicit one-sided bias bound alongside its CI.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import integrate, sparse
from scipy.special import i0e

from . import rng as _rng
from .lattice import ball_offsets
from .stats import wilson_ci
from .zd_walk import batch_hit_before_escape, batch_step, far_return_bound


# ---------------------------------------------------------------------------
# return probabilities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReturnProbability:
    """q(nu) with its Green value; value = 1 - 1/green always holds."""

    nu: int
    value: float
    green: float
    error: float
    method: str                      # 'quadrature' | 'montecarlo'
    ci: tuple[float, float] | None = None
    bias_bound: float = 0.0          # one-sided truncation bias (montecarlo)
    escape_radius: int | None = None
    n_samples: int | None = None


def green_value(nu: int, tol: float = 1e-11) -> tuple[float, float]:
    """g_nu(0) = integral over t >= 0 of exp(-t) I0(t/nu)^nu dt, evaluated in
    the exponentially scaled form i0e(t/nu)^nu which cancels the exp(-t)
    factor exactly and leaves an integrand with algebraic decay."""
    if nu <= 2:
        raise ValueError(f"walk on Z^{nu} is recurrent; the Green value diverges")

    def f(t):
        return i0e(t / nu) ** nu

    split = max(10.0, 2.0 * nu)
    head, e1 = integrate.quad(f, 0.0, split, epsabs=tol, epsrel=tol, limit=400)
    tail, e2 = integrate.quad(f, split, np.inf, epsabs=tol, epsrel=tol, limit=400)
    return head + tail, e1 + e2


def q_nu_quadrature(nu: int, tol: float = 1e-11) -> ReturnProbability:
    """Return probability via the Green-value quadrature, q = 1 - 1/g."""
    g, err = green_value(nu, tol)
    return ReturnProbability(nu, 1.0 - 1.0 / g, g, err / g**2, "quadrature")


def q_nu_montecarlo(nu: int, escape_radius: int = 256, n_samples: int = 200_000,
                    seed: int = 0, stream_id: int = 0) -> ReturnProbability:
    """Fraction of walks that step once from the origin and come back before
    being observed outside B(0, escape_radius). Escaped walks count as never
    returning, so the estimate sits below q(nu) by at most the declared
    one-sided bias bound.
    """
    if nu <= 2:
        raise ValueError(f"walk on Z^{nu} is recurrent")
    if escape_radius < 2:
        raise ValueError("escape_radius must be >= 2")
    gen = _rng.stream(seed, stream_id)
    starts = np.zeros((n_samples, nu), dtype=np.int64)
    batch_step(starts, gen)
    hit = batch_hit_before_escape(nu, 0, escape_radius, starts, gen)
    k = int(hit.sum())
    q = k / n_samples
    lo, hi = wilson_ci(k, n_samples)
    g = 1.0 / (1.0 - q)
    return ReturnProbability(
        nu, q, g, (hi - lo) / 2, "montecarlo", ci=(lo, hi),
        bias_bound=far_return_bound(nu, 1, escape_radius),
        escape_radius=escape_radius, n_samples=n_samples,
    )


def exact_truncated_return(nu: int, escape_radius: int) -> float:
    """Absorbing-chain value of the truncated return probability, feasible
    for small escape radii only (state count (2R+1)^nu)."""
    R = escape_radius
    n_states = (2 * R + 1) ** nu
    if n_states > 300_000:
        raise ValueError("escape radius too large for the exact chain")
    coords = ball_offsets(nu, R)
    strides = np.array([(2 * R + 1) ** (nu - 1 - j) for j in range(nu)], dtype=np.int64)
    lin = (coords + R) @ strides
    order = np.argsort(lin)
    inv = np.empty(n_states, dtype=np.int64)
    inv[lin[order]] = order
    origin = int(np.flatnonzero((coords == 0).all(axis=1))[0])
    # h(x) = P_x[hit 0 before leaving B(0,R)]; absorb at 0 and outside
    rows, cols, rhs = [], [], np.zeros(n_states)
    for j in range(nu):
        for s in (-1, 1):
            nb = coords.copy()
            nb[:, j] += s
            inside = np.abs(nb[:, j]) <= R
            tgt = np.full(len(coords), -1, dtype=np.int64)
            tgt[inside] = inv[(nb[inside] + R) @ strides]
            is_origin = tgt == origin
            rhs[is_origin] += 1.0 / (2 * nu)
            keep = inside & ~is_origin
            rows.append(np.flatnonzero(keep))
            cols.append(tgt[keep])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    P = sparse.csr_matrix((np.full(len(rows), 1.0 / (2 * nu)), (rows, cols)),
                          shape=(n_states, n_states))
    free = np.ones(n_states, dtype=bool)
    free[origin] = False
    A = sparse.identity(n_states, format="csr") - P
    h = np.zeros(n_states)
    sol = sparse.linalg.spsolve(A[free][:, free].tocsc(), rhs[free])
    h[free] = sol
    h[origin] = 1.0
    # value after one uniform step from the origin
    acc = 0.0
    for j in range(nu):
        for s in (-1, 1):
            e = np.zeros(nu, dtype=np.int64)
            e[j] = s
            acc += h[inv[(e + R) @ strides]] / (2 * nu)
    return float(acc)


def q_nu_asymptotic(nu: int) -> float:
    """Leading-order reference q ~ 1/(2 nu); used only for trend checks."""
    return 1.0 / (2 * nu)


# ---------------------------------------------------------------------------
# finite-torus return probability
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteTorusReturn:
    d: int
    m: int
    N: int
    value: float
    method: str
    ci: tuple[float, float] | None = None
    n_samples: int | None = None


def _torus_hit_horizon_exact(nu: int, N: int) -> float:
    """P_{e1}[H_0 < N^2] on (Z/NZ)^nu by transition-matrix iteration."""
    n_states = N**nu
    if n_states > 10_000:
        raise ValueError("state space too large for the exact route")
    strides = np.array([N ** (nu - 1 - j) for j in range(nu)], dtype=np.int64)
    coords = np.stack(np.unravel_index(np.arange(n_states), (N,) * nu), axis=1)
    rows, cols = [], []
    for j in range(nu):
        for s in (-1, 1):
            nb = coords.copy()
            nb[:, j] = (nb[:, j] + s) % N
            rows.append(np.arange(n_states))
            cols.append(nb @ strides)
    P = sparse.csr_matrix(
        (np.full(2 * nu * n_states, 1.0 / (2 * nu)),
         (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_states, n_states),
    )
    p = np.zeros(n_states)
    start = np.zeros(nu, dtype=np.int64)
    start[0] = 1 % N
    p[start @ strides] = 1.0
    absorbed = 0.0
    for _ in range(N * N - 1):
        p = P.T @ p
        absorbed += p[0]
        p[0] = 0.0
    return float(absorbed)


def q_N_finite(d: int, m: int, N: int, n_samples: int = 20_000,
               seed: int = 0, stream_id: int = 0) -> FiniteTorusReturn:
    """Probability that the (d-m)-dimensional torus walk started at a unit
    vector hits the origin within N^2 steps. Exact by matrix iteration for
    small tori, Monte Carlo otherwise."""
    if not 1 <= m <= d - 3:
        raise ValueError(f"need 1 <= m <= d-3, got m={m}, d={d}")
    if N < 2:
        raise ValueError("N must be >= 2")
    nu = d - m
    if N**nu <= 10_000:
        return FiniteTorusReturn(d, m, N, _torus_hit_horizon_exact(nu, N), "exact")
    gen = _rng.stream(seed, stream_id)
    pos = np.zeros((n_samples, nu), dtype=np.int64)
    pos[:, 0] = 1
    alive = np.arange(n_samples)
    hits = 0
    for _ in range(N * N - 1):
        p = pos[alive]
        batch_step(p, gen)
        p %= N
        pos[alive] = p
        at0 = (p == 0).all(axis=1)
        hits += int(at0.sum())
        alive = alive[~at0]
        if len(alive) == 0:
            break
    lo, hi = wilson_ci(hits, n_samples)
    return FiniteTorusReturn(d, m, N, hits / n_samples, "montecarlo", (lo, hi), n_samples)


# ---------------------------------------------------------------------------
# the high-dimension constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantsRow:
    d: int
    q: float
    q_err: float
    mu: float
    mu_err: float
    lambda0: float | None
    c0: float | None


@dataclass(frozen=True)
class ConstantsReport:
    rows: tuple[ConstantsRow, ...]
    d0_interval: tuple[int, int]


def mu_of(d: int, q: float) -> float:
    """mu(d) = 49 (2/d + (1 - 2/d) q(d-2)); the giant-component machinery
    needs mu < 1."""
    return 49.0 * (2.0 / d + (1.0 - 2.0 / d) * q)


def constants_row(d: int, tol: float = 1e-11) -> ConstantsRow:
    if d < 5:
        raise ValueError("constants are defined for d >= 5")
    rp = q_nu_quadrature(d - 2, tol)
    mu = mu_of(d, rp.value)
    mu_err = 49.0 * (1.0 - 2.0 / d) * rp.error
    lam0 = c0 = None
    if mu + mu_err < 1.0:
        lam0 = math.log(7.0) - 0.25 * math.log(mu)
        c0 = 8.0 * d / math.log(1.0 / mu)
    return ConstantsRow(d, rp.value, rp.error, mu, mu_err, lam0, c0)


def find_d0(tol: float = 1e-11, d_max: int = 400) -> tuple[int, int]:
    """Interval for the smallest d >= 5 with mu(d) < 1, from the quadrature
    error envelopes."""
    lo = hi = None
    for d in range(5, d_max + 1):
        row = constants_row(d, tol)
        if lo is None and row.mu - row.mu_err < 1.0:
            lo = d
        if hi is None and row.mu + row.mu_err < 1.0:
            hi = d
            break
    if hi is None:
        raise RuntimeError(f"mu(d) >= 1 for all d <= {d_max}")
    return lo, hi


def constants_report(d_values=None, tol: float = 1e-11) -> ConstantsReport:
    if d_values is None:
        d_values = list(range(5, 13)) + [50, 100, 110, 120, 121, 122, 123, 124, 125, 130, 150]
    rows = tuple(constants_row(d, tol) for d in d_values)
    return ConstantsReport(rows, find_d0(tol))


# ---------------------------------------------------------------------------
# harmonic measure, capacity, and the limit excursion law
# ---------------------------------------------------------------------------

def box_boundary_offsets(d: int, L: int) -> np.ndarray:
    """Cells of C = B(0,L) with a neighbor outside C (|z|_inf = L)."""
    offs = ball_offsets(d, L)
    return offs[np.abs(offs).max(axis=1) == L]


def _orbit_key(z) -> tuple[int, ...]:
    """Canonical key under coordinate permutations and sign flips."""
    return tuple(sorted((abs(int(c)) for c in z), reverse=True))


@dataclass
class HarmonicProfile:
    """Estimated harmonic-measure weights on the inner boundary of B(0,L),
    their total (the capacity), and the normalized entry law."""

    L: int
    d: int
    escape_radius: int
    weights: dict                  # boundary point -> e_C estimate
    capacity: float
    bias_bound: float              # one-sided, from escape truncation
    sample_counts: dict            # orbit key -> samples
    method: str = "montecarlo"

    def mu_C(self) -> dict:
        return {z: w / self.capacity for z, w in self.weights.items()}

    def boundary_points(self) -> list[tuple[int, ...]]:
        return sorted(self.weights.keys())

    def to_ndjson(self) -> str:
        lines = []
        for z in self.boundary_points():
            lines.append(json.dumps({"z": list(z), "e": self.weights[z],
                                     "mu": self.weights[z] / self.capacity},
                                    separators=(",", ":")))
        return "\n".join(lines) + "\n"


def harmonic_measure(L: int, d: int, escape_radius: int | None = None,
                     n_samples: int = 100_000, seed: int = 0,
                     stream_id: int = 0) -> HarmonicProfile:
    """Estimate e_C(z) = P_z[no return to C] for the inner boundary of
    B(0,L) by escape truncation, pooling samples across each orbit of the
    box symmetry group (the symmetrized estimator). Interior cells carry
    weight exactly 0."""
    if d < 3 or L < 0:
        raise ValueError("need d >= 3 and L >= 0")
    if escape_radius is None:
        escape_radius = max(64 * L, 1024) if d == 3 else max(32 * L, 128)
    if escape_radius < max(2, 10 * L):
        raise ValueError("escape_radius too small (need >= 10L and >= 2)")
    gen = _rng.stream(seed, stream_id)
    boundary = box_boundary_offsets(d, L)
    orbits: dict[tuple, list] = {}
    for z in boundary:
        orbits.setdefault(_orbit_key(z), []).append(tuple(int(c) for c in z))
    n_orbits = len(orbits)
    weights: dict[tuple, float] = {}
    counts: dict[tuple, int] = {}
    for key, members in sorted(orbits.items()):
        n_o = max(2000, int(round(n_samples * len(members) / len(boundary))))
        rep = np.asarray(members[0], dtype=np.int64)
        starts = np.tile(rep, (n_o, 1))
        batch_step(starts, gen)
        inside = np.abs(starts).max(axis=1) <= L
        esc = np.zeros(n_o, dtype=bool)
        if (~inside).any():
            hit = batch_hit_before_escape(d, L, escape_radius, starts[~inside], gen)
            esc[~inside] = ~hit
        e_hat = float(esc.mean())
        counts[key] = n_o
        for z in members:
            weights[z] = e_hat
    cap = float(sum(weights.values()))
    # the hitting probability from afar is governed by the capacity; the 1.5
    # covers the estimate's own error and lattice corrections
    bias = far_return_bound(d, 1.5 * max(cap, 1.0), escape_radius - L)
    return HarmonicProfile(L, d, escape_radius, weights, cap, bias, counts)


@dataclass(frozen=True)
class QPath:
    """A finite nearest-neighbor Z^d path with both endpoints on the
    L-sphere (the canonical path space of the limit law)."""

    sites: np.ndarray

    @property
    def length(self) -> int:
        return len(self.sites) - 1

    def validate(self, L: int) -> None:
        s = self.sites
        if np.abs(s[0]).max() != L or np.abs(s[-1]).max() != L:
            raise ValueError("path endpoints must lie on the L-sphere")
        if len(s) > 1:
            steps = np.abs(np.diff(s, axis=0)).sum(axis=1)
            if not (steps == 1).all():
                raise ValueError("consecutive path sites must be nearest neighbors")


def _sample_mu_C(profile: HarmonicProfile, n: int, gen) -> np.ndarray:
    pts = profile.boundary_points()
    w = np.array([profile.weights[z] for z in pts])
    if w.sum() <= 0:
        raise ValueError("profile has no positive capacity")
    cdf = np.cumsum(w / w.sum())
    k = np.searchsorted(cdf, gen.random(n), side="right")
    return np.asarray(pts, dtype=np.int64)[k]


def sample_Q(profile: HarmonicProfile, escape_radius: int | None = None,
             n: int = 1000, seed: int = 0, stream_id: int = 0) -> list[QPath]:
    """Draw paths from the limit law: start from the normalized harmonic
    measure, walk on Z^d, and truncate at the last visit to C before the
    walk is first observed outside B(0, escape_radius). Recording continues
    through any re-entries; the probability that a post-escape return would
    have extended a path is bounded by the profile's truncation bound.

    Full paths are retained, so keep n modest; the summary sampler below
    covers bulk statistics.
    """
    L, d = profile.L, profile.d
    escape_radius = profile.escape_radius if escape_radius is None else escape_radius
    gen = _rng.stream(seed, stream_id)
    pos = _sample_mu_C(profile, n, gen)
    ids = np.arange(n)
    last_visit_row = np.zeros(n, dtype=np.int64)      # row index of last C-visit
    rows_per_walker: list[list[np.ndarray]] = [[pos[i].copy()] for i in range(n)]
    n_rows = np.ones(n, dtype=np.int64)
    max_rounds = 500 * escape_radius**2
    for _ in range(max_rounds):
        if len(ids) == 0:
            break
        p = pos[ids] if len(ids) != len(pos) else pos
        batch_step(p, gen)
        dist = np.abs(p).max(axis=1)
        for j, i in enumerate(ids):
            rows_per_walker[i].append(p[j].copy())
        n_rows[ids] += 1
        in_c = dist <= L
        last_visit_row[ids[in_c]] = n_rows[ids[in_c]] - 1
        escaped = dist > escape_radius
        if len(ids) == len(pos):
            pos = p
        else:
            pos[ids] = p
        ids = ids[~escaped]
    else:
        raise RuntimeError("sample_Q exceeded its round budget")
    out = []
    for i in range(n):
        sites = np.stack(rows_per_walker[i][: last_visit_row[i] + 1])
        path = QPath(sites)
        path.validate(L)
        out.append(path)
    return out


@dataclass
class QSummarySample:
    """Entry point, trace size within C, return flag, and (when tracked)
    duration of limit-law excursions."""

    entries: np.ndarray        # (n, d) start points on the L-sphere
    trace_sizes: np.ndarray    # (n,) cells of C ever visited
    returned: np.ndarray       # (n,) any C-visit after time 0
    durations: np.ndarray      # (n,) last C-visit time, -1 when not tracked
    bias_bound: float


def sample_q_summaries(profile: HarmonicProfile, n: int, seed: int = 0,
                       stream_id: int = 0, escape_radius: int | None = None,
                       track_duration: bool = False) -> QSummarySample:
    """Summary statistics of the limit law without path storage.

    With `track_duration=False` the walk may take exact ball-exit jumps while
    outside C (they cannot touch C, so entry/trace/return statistics are
    unaffected); durations are then reported as -1.
    """
    L, d = profile.L, profile.d
    R = profile.escape_radius if escape_radius is None else escape_radius
    gen = _rng.stream(seed, stream_id)
    entries = _sample_mu_C(profile, n, gen)

    side = 2 * L + 1
    strides = np.array([side ** (d - 1 - j) for j in range(d)], dtype=np.int64)
    trace = np.zeros((n, side**d), dtype=bool)
    trace[np.arange(n), (entries + L) @ strides] = True
    returned = np.zeros(n, dtype=bool)
    durations = np.full(n, -1, dtype=np.int64)
    if track_duration:
        durations[:] = 0

    from .zd_walk import KERNEL_RADII, exit_kernel

    radii = np.array([r for r in KERNEL_RADII.get(d, ()) if r <= max(R // 8, 8)],
                     dtype=np.int64) if not track_duration else np.array([], dtype=np.int64)
    kernels = {int(r): exit_kernel(d, int(r)) for r in radii}

    pos = entries.astype(np.int64).copy()
    ids = np.arange(n)
    t = 0
    max_rounds = 500 * R * R
    for _ in range(max_rounds):
        if len(ids) == 0:
            return QSummarySample(entries, trace.sum(axis=1), returned, durations,
                                  far_return_bound(d, side**d, R - L))
        p = pos[ids]
        dist = np.abs(p).max(axis=1)
        # record the occupied state before moving: steps and jump landings
        # alike are observed here exactly once (t=0 is the start, not a return)
        if t > 0:
            in_c = dist <= L
            if in_c.any():
                w = ids[in_c]
                returned[w] = True
                trace[w, (p[in_c] + L) @ strides] = True
                if track_duration:
                    durations[w] = t
        escaped = dist > R
        if escaped.any():
            keep = ~escaped
            ids, p, dist = ids[keep], p[keep], dist[keep]
            if len(ids) == 0:
                continue
        allowed = dist - L - 1
        k = np.searchsorted(radii, allowed, side="right") - 1 if len(radii) else np.full(len(p), -1)
        steppers = np.flatnonzero(k < 0)
        t += 1
        if steppers.size:
            sub = p[steppers]
            batch_step(sub, gen)
            p[steppers] = sub
        for ki in np.unique(k[k >= 0]):
            group = np.flatnonzero(k == ki)
            kern = kernels[int(radii[ki])]
            p[group] += kern.sample(len(group), gen).astype(np.int64)
        pos[ids] = p
    raise RuntimeError("sample_q_summaries exceeded its round budget")


def q_path_probability(profile: HarmonicProfile, path: QPath) -> float:
    """Exact-form probability of one path under the limit law, built from the
    profile's estimates: cap^-1 e(w0) (2d)^-T e(wT)."""
    path.validate(profile.L)
    z0 = tuple(int(c) for c in path.sites[0])
    zT = tuple(int(c) for c in path.sites[-1])
    e0 = profile.weights.get(z0, 0.0)
    eT = profile.weights.get(zT, 0.0)
    return e0 * eT / profile.capacity * (2 * profile.d) ** (-path.length)


# ---------------------------------------------------------------------------
# star self-avoiding walks on Z^2
# ---------------------------------------------------------------------------

_DX = np.array([1, 1, 0, -1, -1, -1, 0, 1], dtype=np.int64)
_DY = np.array([0, 1, 1, 1, 0, -1, -1, -1], dtype=np.int64)


@njit(cache=True)
def _saw_count_from(n, x0, y0):
    size = 2 * n + 3
    c = n + 1
    visited = np.zeros((size, size), dtype=np.uint8)
    visited[c, c] = 1
    px = np.empty(n + 1, dtype=np.int64)
    py = np.empty(n + 1, dtype=np.int64)
    nxt = np.zeros(n + 1, dtype=np.int64)
    px[1] = c + x0
    py[1] = c + y0
    visited[px[1], py[1]] = 1
    if n == 1:
        return 1
    depth = 1
    total = 0
    dx = _DX
    dy = _DY
    while depth >= 1:
        if nxt[depth] == 8:
            visited[px[depth], py[depth]] = 0
            nxt[depth] = 0
            depth -= 1
            continue
        k = nxt[depth]
        nxt[depth] += 1
        nx = px[depth] + dx[k]
        ny = py[depth] + dy[k]
        if visited[nx, ny]:
            continue
        if depth + 1 == n:
            total += 1
            continue
        depth += 1
        px[depth] = nx
        py[depth] = ny
        visited[nx, ny] = 1
    return total


def star_saw_count(n: int) -> int:
    """Exact number of n-step star (8-neighbor) self-avoiding paths on Z^2
    from the origin, by depth-first enumeration. The two first-step classes
    (axis, diagonal) are symmetry-equivalent, so only two searches run."""
    if not 1 <= n <= 12:
        raise ValueError("exact enumeration budget is 1 <= n <= 12")
    return 4 * int(_saw_count_from(n, 1, 0)) + 4 * int(_saw_count_from(n, 1, 1))

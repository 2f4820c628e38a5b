"""The cross-module invariant suite behind `torus-vacant validate`.

Every check here is exact or exhaustively decidable at small size: geometry
identities, determinism, schedule interleaving, brute-force agreement of the
vacant-set queries, file-format round trips, estimator identities. Each
check returns a witness string on failure; the command exits nonzero if any
check fails.
"""

from __future__ import annotations

import itertools
import math
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import lattice, oracles
from .. import rng as _rng
from ..coupling_lab import build_histogram, maximal_coupling, tv_distance
from ..lattice import TorusGeometry
from ..potential_theory import q_nu_quadrature, star_saw_count
from ..vacancy_analysis import (
    detect_C, detect_U, detect_V, largest_vacant_ball, local_function_average,
    LocalFunctionSpec, max_axis_run, vacant_components, vacant_fraction,
)
from ..walk_engine import (
    ExcursionObserver, GridFormatError, OccupancyGrid, WalkConfig, run_walk,
)
from .commands import variance_budget


@dataclass
class CheckResult:
    name: str
    ok: bool
    witness: str = ""


def _check(results, name, ok, witness=""):
    results.append(CheckResult(name, bool(ok), "" if ok else str(witness)))


def _random_grids(seed: int, n_grids: int):
    gen = _rng.stream(seed, 901)
    grids = []
    for i in range(n_grids):
        if i % 3 == 2:
            geom = TorusGeometry(3, int(gen.integers(4, 9)))
            u = float(gen.uniform(0.2, 2.0))
            grids.append(run_walk(WalkConfig(geom, u, seed, 7000 + i)))
        else:
            grids.append(oracles.random_small_grid(3, int(gen.integers(4, 9)), gen))
    return grids


def run_validation(seed: int = 0, n_grids: int = 12, detect_V_impl=None) -> list[CheckResult]:
    """Run the full suite; `detect_V_impl` is injectable so mutation tests can
    verify the suite actually catches a broken implementation."""
    dV = detect_V_impl or detect_V
    res: list[CheckResult] = []
    gen = _rng.stream(seed, 900)

    # --- lattice ---------------------------------------------------------
    geom = TorusGeometry(3, 6)
    a = np.arange(6)
    cd = np.minimum(np.abs(a[:, None] - a[None, :]), 6 - np.abs(a[:, None] - a[None, :]))
    tri_ok = True
    for x in range(6):
        for y in range(6):
            if not (cd[x, y] == cd[y, x] and (cd[x, y] == 0) == (x == y)):
                tri_ok = False
    tri = cd[:, None, :] + cd[None, :, :].transpose(1, 0, 2)
    tri_ok &= bool((cd[:, :, None] <= tri.transpose(0, 2, 1)).all())
    _check(res, "lattice.metric_1d_exhaustive_N6", tri_ok)

    p = (0, 0, 0)
    inv_ok = all(
        lattice.step(geom, lattice.step(geom, p, j, +1), j, -1) == p for j in range(3)
    )
    _check(res, "lattice.step_invertible", inv_ok)

    ball = lattice.ball(geom, (1, 2, 3), 1)
    ball_ok = len(ball) == 27 and all(lattice.linf_dist(geom, (1, 2, 3), q) <= 1 for q in ball)
    by_dist = [q for q in itertools.product(range(6), repeat=3)
               if lattice.linf_dist(geom, (1, 2, 3), q) <= 1]
    _check(res, "lattice.ball_equals_metric_ball", ball_ok and set(ball) == set(by_dist))

    g4 = TorusGeometry(3, 4)
    lines = list(lattice.axis_lines(g4))
    planes = list(lattice.coordinate_planes(g4))
    counts_ok = len(lines) == 3 * 16 and len(planes) == 3 * 4
    cell_lines = sum(1 for ln in lines if (0, 1, 2) in set(ln.cells(g4)))
    cell_planes = sum(1 for pl in planes if (0, 1, 2) in set(pl.cells(g4)))
    _check(res, "lattice.line_plane_enumeration", counts_ok and cell_lines == 3 and cell_planes == 3,
           f"lines={len(lines)} planes={len(planes)} on_lines={cell_lines} on_planes={cell_planes}")

    g8 = TorusGeometry(3, 8)
    pl = lattice.CoordinatePlane.through(g8, (0, 0, 0), 0, 1)
    dia = lattice.plane_diameter(g8, pl, [(0, 0, 0), (3, 1, 0)])
    brute = oracles.brute_plane_diameter(8, [(0, 0), (3, 1)])
    _check(res, "lattice.plane_diameter_example", dia == 3 and brute == 3, f"{dia} vs {brute}")

    # --- walk engine ------------------------------------------------------
    cfg = WalkConfig(TorusGeometry(3, 12), 0.8, seed, 31)
    g1 = run_walk(cfg)
    g2 = run_walk(cfg)
    _check(res, "walk.determinism_bitwise", np.array_equal(g1.first_visit, g2.first_visit))

    cfg0 = WalkConfig(TorusGeometry(3, 8), 0.0, seed, 32)
    gz = run_walk(cfg0)
    _check(res, "walk.zero_steps_one_visit", int(gz.visited_mask().sum()) == 1)

    obs = ExcursionObserver((0, 0, 0), 1, 3)
    run_walk(WalkConfig(TorusGeometry(3, 10), 1.0, seed, 33), [obs])
    sch = obs.schedule
    inter_ok = len(sch.departures) <= len(sch.returns) <= len(sch.departures) + 1
    seq = []
    for k in range(len(sch.returns)):
        seq.append(sch.returns[k])
        if k < len(sch.departures):
            seq.append(sch.departures[k])
    inter_ok &= all(seq[k] < seq[k + 1] for k in range(1, len(seq) - 1))
    inter_ok &= not seq or seq[0] <= seq[1] if len(seq) > 1 else True
    _check(res, "walk.schedule_interleaving", inter_ok, str(seq[:10]))

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "grid.tvgr"
        g1.save(path)
        g3 = OccupancyGrid.load(path)
        _check(res, "walk.grid_file_roundtrip",
               np.array_equal(g1.first_visit, g3.first_visit) and g3.total_steps == g1.total_steps)
        blob = bytearray(path.read_bytes())
        blob[0] ^= 0xFF
        bad = Path(tmp) / "bad.tvgr"
        bad.write_bytes(bytes(blob))
        try:
            OccupancyGrid.load(bad)
            _check(res, "walk.grid_file_bad_magic_rejected", False, "no error raised")
        except GridFormatError as exc:
            _check(res, "walk.grid_file_bad_magic_rejected", True, str(exc))

    # --- vacancy analysis vs brute force ----------------------------------
    grids = _random_grids(seed, n_grids)
    all_ok, witness = True, ""
    for gi, grid in enumerate(grids):
        t = grid.total_steps
        N = grid.geometry.N
        K = float(gen.uniform(0.4, 1.2))
        beta = float(gen.uniform(0.3, 0.6))
        lam = int(math.floor(K * math.log(N))) + 1
        if (lam - 1) + int(math.floor(N**beta)) + 1 <= N:
            got, _ = dV(grid, t, K, beta)
            want = oracles.brute_V(grid, t, K, beta)
            if got != want:
                all_ok, witness = False, f"grid {gi}: V got {got} want {want} (K={K:.3f}, beta={beta:.3f})"
                break
        got_u, _ = detect_U(grid, t, K)
        want_u = oracles.brute_U(grid, t, K)
        if got_u != want_u:
            all_ok, witness = False, f"grid {gi}: U got {got_u} want {want_u} (K={K:.3f})"
            break
        if 2 * int(math.floor(K * math.log(N))) + 1 <= N:
            x = tuple(int(v) for v in gen.integers(0, N, 3))
            got_c = detect_C(grid, t, K, x)
            want_c = oracles.brute_C(grid, t, K, x)
            if got_c != want_c:
                all_ok, witness = False, f"grid {gi}: C at {x} got {got_c} want {want_c}"
                break
        comps = vacant_components(grid, t)
        blab, bsizes = oracles.brute_components(grid, t)
        if comps.n_components != len(bsizes) - 1 or sorted(comps.sizes[1:]) != sorted(bsizes[1:]):
            all_ok, witness = False, f"grid {gi}: components {comps.n_components} vs {len(bsizes) - 1}"
            break
        if comps.vacant_cells != int(grid.vacant_mask(t).sum()):
            all_ok, witness = False, f"grid {gi}: size partition broken"
            break
        if largest_vacant_ball(grid, t) != oracles.brute_largest_ball(grid, t):
            all_ok, witness = False, f"grid {gi}: largest ball mismatch"
            break
        if max_axis_run(grid.vacant_mask(t)) != oracles.brute_max_axis_run(grid, t):
            all_ok, witness = False, f"grid {gi}: max run mismatch"
            break
    _check(res, "vacancy.brute_force_agreement", all_ok, witness)

    grid = grids[0]
    phi0 = local_function_average(grid, LocalFunctionSpec("phi0", L=1))
    _check(res, "vacancy.phi0_equals_vacant_fraction",
           abs(phi0 - vacant_fraction(grid)) < 1e-15)

    # --- potential theory --------------------------------------------------
    r3 = q_nu_quadrature(3)
    _check(res, "potential.q_equals_1_minus_inv_green",
           abs(r3.value - (1 - 1 / r3.green)) < 1e-14)
    _check(res, "potential.q3_reference_value", abs(r3.value - 0.3405373296) < 1e-8,
           f"{r3.value}")
    moves = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)]
    a2_direct = sum(
        1 for m1 in moves for m2 in moves
        if (m1[0] + m2[0], m1[1] + m2[1]) not in ((0, 0), m1)
    )
    _check(res, "potential.star_saw_small",
           star_saw_count(1) == 8 and star_saw_count(2) == a2_direct == 56,
           f"a(2)={star_saw_count(2)} direct={a2_direct}")

    # --- coupling helpers ---------------------------------------------------
    e = np.array([[1, 0, 0], [0, 1, 0], [-1, 0, 0]])
    tsz = np.array([1, 3, 2])
    h = build_histogram(e, tsz, "joint", 3, 1)
    tv0 = tv_distance(h, h, n_bootstrap=10, seed=0)
    _check(res, "coupling.tv_identical_zero", tv0.raw == 0.0)
    h2 = build_histogram(e[[1, 1, 1]], tsz[[1, 1, 1]], "joint", 3, 1)
    h3 = build_histogram(e[[0, 0, 0]], tsz[[0, 0, 0]], "joint", 3, 1)
    tv2 = tv_distance(h2, h3, n_bootstrap=10, seed=0)
    _check(res, "coupling.tv_disjoint_two", abs(tv2.raw - 2.0) < 1e-12, f"{tv2.raw}")
    p = np.array([0.5, 0.5])
    q = np.array([0.75, 0.25])
    joint, mm = maximal_coupling(p, q)
    _check(res, "coupling.maximal_marginals",
           np.allclose(joint.sum(axis=1), p) and np.allclose(joint.sum(axis=0), q)
           and abs(mm - 0.25) < 1e-12, f"mismatch={mm}")

    # --- experiments ---------------------------------------------------------
    vb = variance_budget(1.0, 1, 120)
    from .commands import budget_expression
    edges_ok = (budget_expression(1.0, 1, 120, 10, 3) >= vb.value
                and budget_expression(1.0, 1, 120, 12, 3) >= vb.value)
    _check(res, "experiments.variance_budget_minimized", edges_ok, str(vb))

    return res


def format_report(results: list[CheckResult]) -> str:
    lines = []
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        lines.append(f"[{status}] {r.name}" + (f"  ({r.witness})" if r.witness else ""))
    n_fail = sum(not r.ok for r in results)
    lines.append(f"{len(results) - n_fail}/{len(results)} checks passed")
    return "\n".join(lines)

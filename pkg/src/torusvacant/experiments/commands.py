"""The experiment commands behind the `torus-vacant` CLI.

Each command validates its config, fans replicas out over a deterministic
task grid, and writes a CSV table (hash-stamped, byte-reproducible), an
NDJSON file of per-replica records, and a JSON metadata sidecar.

Where a command sweeps the time scale u on a fixed torus, replicas simulate
one walk at the largest u and read earlier times from the first-visit grid;
the law at each u is exactly that of a walk stopped there, only the
correlation structure across u changes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import rng as _rng
from ..lattice import TorusGeometry
from ..stats import linear_fit, mean_ci, wilson_ci
from ..vacancy_analysis import (
    detect_G, largest_vacant_ball, max_axis_run, segment_cells, vacant_fraction,
)
from ..walk_engine import ExcursionObserver, WalkConfig, macroscopic_radii, run_walk
from .config import ConfigError, config_hash, validate_config
from .runner import run_tasks, task_fn, write_csv, write_metadata, write_ndjson


# ---------------------------------------------------------------------------
# replica task functions (module level: they cross process boundaries)
# ---------------------------------------------------------------------------

@task_fn("survival")
def _survival_replica(config, point, replica):
    geom = TorusGeometry(config["d"], config["N"])
    u = config["u_grid"][point]
    sid = _rng.replica_stream_id(point, replica)
    grid = run_walk(WalkConfig(geom, u, config["seed"], sid))
    return {"point": point, "replica": replica, "u": u,
            "vacant_fraction": vacant_fraction(grid)}


@task_fn("scan-u")
def _scan_replica(config, point, replica):
    geom = TorusGeometry(config["d"], config["N"])
    u_grid = sorted(config["u_grid"])
    sid = _rng.replica_stream_id(point, replica)
    grid = run_walk(WalkConfig(geom, max(u_grid), config["seed"], sid))
    out = {"point": point, "replica": replica, "per_u": {}}
    for u in u_grid:
        t = int(math.floor(u * geom.n_cells))
        rep = detect_G(grid, t, config["K"], config["beta"])
        out["per_u"][str(u)] = {
            "G": rep.G, "V": rep.V, "U": rep.U,
            "giant_fraction": rep.giant_fraction,
            "C_fraction": rep.C_fraction,
            "largest_fraction": rep.largest_component_fraction,
        }
    return out


@task_fn("segments")
def _segments_replica(config, point, replica):
    N = config["N_list"][point]
    geom = TorusGeometry(config["d"], N)
    u_grid = sorted(config["u_grid"])
    sid = _rng.replica_stream_id(point, replica)
    grid = run_walk(WalkConfig(geom, max(u_grid), config["seed"], sid))
    out = {"point": point, "replica": replica, "N": N, "per_u": {}}
    from ..vacancy_analysis import detect_V
    for u in u_grid:
        t = int(math.floor(u * geom.n_cells))
        entry = {"max_run": max_axis_run(grid.vacant_mask(t)), "V": {}}
        for K in config["K_grid"]:
            ok, _ = detect_V(grid, t, K, config["beta"])
            entry["V"][str(K)] = ok
        out["per_u"][str(u)] = entry
    return out


@task_fn("largest-ball")
def _ball_replica(config, point, replica):
    N = config["N_list"][point]
    geom = TorusGeometry(config["d"], N)
    sid = _rng.replica_stream_id(point, replica)
    grid = run_walk(WalkConfig(geom, config["u"], config["seed"], sid))
    return {"point": point, "replica": replica, "N": N,
            "lhat": largest_vacant_ball(grid)}


@task_fn("excursions")
def _excursions_replica(config, point, replica):
    geom = TorusGeometry(config["d"], config["N"])
    checkpoints = sorted(config["u_checkpoints"])
    sid = _rng.replica_stream_id(point, replica)
    L8, L4 = macroscopic_radii(geom.N)
    observers = [ExcursionObserver((0,) * geom.d, L8, L4)]
    keys = ["macro"]
    for probe in config.get("probes", []):
        observers.append(ExcursionObserver((0,) * geom.d, probe["L"], probe["r"]))
        keys.append(f"probe_L{probe['L']}_r{probe['r']}")
    run_walk(WalkConfig(geom, max(checkpoints), config["seed"], sid), observers)
    counts = {}
    for key, obs in zip(keys, observers):
        counts[key] = {}
        for u in checkpoints:
            t = int(math.floor(u * geom.n_cells))
            ret, comp, op = obs.schedule.counts_at(t)
            counts[key][str(u)] = [ret, comp, op]
    return {"point": point, "replica": replica, "counts": counts}


@task_fn("qnu")
def _qnu_replica(config, point, replica):
    from ..potential_theory import q_nu_montecarlo, q_nu_quadrature

    nu = config["nu_values"][point]
    quad = q_nu_quadrature(nu)
    escape = config.get("escape_radius", 256 if nu == 3 else 64)
    n = config.get("n_samples", 200_000)
    mc = q_nu_montecarlo(nu, escape, n, seed=config["seed"],
                         stream_id=_rng.replica_stream_id(point, replica))
    return {"point": point, "nu": nu,
            "quad_value": quad.value, "quad_error": quad.error,
            "mc_value": mc.value, "mc_error": mc.error,
            "mc_bias_bound": mc.bias_bound, "escape_radius": escape, "n": n}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _emit(out_dir, command, config, header, rows, records):
    out = Path(out_dir)
    write_csv(out / "results.csv", header, rows)
    write_ndjson(out / "replicas.ndjson", records)
    write_metadata(out, command, config)


def cmd_survival(config: dict, out_dir, jobs: int = 1):
    validate_config("survival", config)
    h = config_hash(config)
    u_grid = sorted(config["u_grid"])
    tasks = [(i, r) for i in range(len(u_grid)) for r in range(config["replicas"])]
    results = run_tasks("survival", config, tasks, jobs)
    rows = []
    for i, u in enumerate(u_grid):
        vals = [res["vacant_fraction"] for res in results if res["point"] == i]
        mean, lo, hi = mean_ci(vals)
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        rows.append((h, u, mean, std, lo, hi, len(vals)))
    header = ["config", "u", "mean_vacant_fraction", "std", "ci_lo", "ci_hi", "replicas"]
    _emit(out_dir, "survival", config, header, rows, results)
    return rows


def cmd_scan_u(config: dict, out_dir, jobs: int = 1):
    validate_config("scan-u", config)
    h = config_hash(config)
    u_grid = sorted(config["u_grid"])
    tasks = [(0, r) for r in range(config["replicas"])]
    results = run_tasks("scan-u", config, tasks, jobs)
    rows = []
    means = []
    for u in u_grid:
        per = [res["per_u"][str(u)] for res in results]
        g_freq = float(np.mean([p["G"] for p in per]))
        giant_mean = float(np.mean([p["giant_fraction"] for p in per]))
        c_mean = float(np.mean([p["C_fraction"] for p in per]))
        largest_mean = float(np.mean([p["largest_fraction"] for p in per]))
        means.append(largest_mean)
        rows.append((h, u, g_freq, giant_mean, c_mean, largest_mean))
    header = ["config", "u", "G_frequency", "giant_fraction_mean",
              "C_fraction_mean", "largest_component_fraction"]
    _emit(out_dir, "scan-u", config, header, rows, results)
    thr = config.get("component_threshold", 0.05)
    crossing = estimate_crossing(u_grid, means, thr)
    meta_path = Path(out_dir) / "crossing.json"

    meta_path.write_text(json.dumps({"threshold": thr, "u_crossing": crossing}) + "\n")
    return rows, crossing


def estimate_crossing(u_grid, largest_means, threshold: float):
    """First downward crossing of the largest-component fraction, linearly
    interpolated; None when the curve never crosses."""
    for (u1, f1), (u2, f2) in zip(zip(u_grid, largest_means), list(zip(u_grid, largest_means))[1:]):
        if f1 >= threshold > f2:
            return u1 + (f1 - threshold) / (f1 - f2) * (u2 - u1)
    return None


def cmd_segments(config: dict, out_dir, jobs: int = 1):
    validate_config("segments", config)
    h = config_hash(config)
    beta = config["beta"]
    for N in config["N_list"]:
        for K in config["K_grid"]:
            lam = segment_cells(K, N)
            if (lam - 1) + int(math.floor(N**beta)) + 1 > N:
                raise ConfigError(f"V window does not fit at N={N}, K={K}, beta={beta}")
    tasks = [(i, r) for i in range(len(config["N_list"])) for r in range(config["replicas"])]
    results = run_tasks("segments", config, tasks, jobs)
    rows = []
    for i, N in enumerate(config["N_list"]):
        for u in sorted(config["u_grid"]):
            per = [res["per_u"][str(u)] for res in results if res["point"] == i]
            run_mean = float(np.mean([p["max_run"] for p in per]))
            for K in config["K_grid"]:
                freq = float(np.mean([p["V"][str(K)] for p in per]))
                rows.append((h, N, u, K, freq, run_mean))
    header = ["config", "N", "u", "K", "V_frequency", "max_run_mean"]
    _emit(out_dir, "segments", config, header, rows, results)
    return rows


def cmd_largest_ball(config: dict, out_dir, jobs: int = 1):
    validate_config("largest-ball", config)
    h = config_hash(config)
    tasks = [(i, r) for i in range(len(config["N_list"])) for r in range(config["replicas"])]
    results = run_tasks("largest-ball", config, tasks, jobs)
    rows = []
    means = []
    for i, N in enumerate(config["N_list"]):
        vals = [res["lhat"] for res in results if res["point"] == i]
        mean, lo, hi = mean_ci(vals)
        means.append(mean)
        rows.append((h, N, config["u"], mean, lo, hi, len(vals)))
    header = ["config", "N", "u", "lhat_mean", "ci_lo", "ci_hi", "replicas"]
    _emit(out_dir, "largest-ball", config, header, rows, results)
    if len(config["N_list"]) >= 3 and all(m > 0 for m in means):
        slope, intercept, r2, s_se, _ = linear_fit(np.log(np.log(config["N_list"])),
                                                   np.log(means))
        fit = {"exponent": slope, "exponent_se": s_se, "r2": r2}
    else:
        fit = None

    (Path(out_dir) / "fit.json").write_text(json.dumps({"loglogN_fit": fit}) + "\n")
    return rows, fit


def cmd_excursions(config: dict, out_dir, jobs: int = 1):
    validate_config("excursions", config)
    h = config_hash(config)
    geom = TorusGeometry(config["d"], config["N"])
    for probe in config.get("probes", []):
        if 2 * probe["r"] + 1 > geom.N:
            raise ConfigError(f"probe halo r={probe['r']} does not fit N={geom.N}")
    tasks = [(0, r) for r in range(config["replicas"])]
    results = run_tasks("excursions", config, tasks, jobs)
    keys = list(results[0]["counts"].keys())
    rows = []
    for key in keys:
        for u in sorted(config["u_checkpoints"]):
            triples = np.array([res["counts"][key][str(u)] for res in results], dtype=float)
            rows.append((h, key, u,
                         float(triples[:, 0].mean()), float(triples[:, 1].mean()),
                         float(triples[:, 2].mean()),
                         float(triples[:, 0].std(ddof=1)) if len(triples) > 1 else 0.0))
    header = ["config", "pair", "u", "returns_mean", "completed_mean", "open_mean", "returns_std"]
    _emit(out_dir, "excursions", config, header, rows, results)
    return rows


def cmd_coupling(config: dict, out_dir, jobs: int = 1):
    validate_config("coupling", config)
    h = config_hash(config)
    from ..coupling_lab import tv_scaling_study
    from ..potential_theory import harmonic_measure

    L, d = config["L"], config["d"]
    profile = harmonic_measure(L, d, escape_radius=max(64 * L, 128),
                               n_samples=config.get("n_harmonic", 200_000),
                               seed=config["seed"], stream_id=1)
    rows_raw = tv_scaling_study(
        d, L, config["r_list"], config["n_per_point"], profile,
        n_q=config.get("n_q", config["n_per_point"]), seed=config["seed"])
    rows = [(h, r.L, r.r, r.N, r.n, r.tv_raw, r.tv_corrected, r.ci_lo, r.ci_hi, r.q_bias_bound)
            for r in rows_raw]
    header = ["config", "L", "r", "N", "n", "tv_raw", "tv_corrected", "ci_lo", "ci_hi", "q_bias_bound"]
    _emit(out_dir, "coupling", config, header, rows, [])
    return rows


def cmd_constants(config: dict, out_dir, jobs: int = 1):
    validate_config("constants", config)
    h = config_hash(config)
    from ..potential_theory import constants_report

    report = constants_report(config["d_values"], config.get("quad_tol", 1e-11))
    rows = [(h, row.d, row.mu,
             row.lambda0 if row.lambda0 is not None else "",
             row.c0 if row.c0 is not None else "")
            for row in report.rows]
    header = ["config", "d", "mu", "lambda0", "c0"]
    _emit(out_dir, "constants", config, header, rows, [])

    (Path(out_dir) / "d0.json").write_text(
        json.dumps({"d0_interval": list(report.d0_interval)}) + "\n")
    return rows, report


def cmd_qnu(config: dict, out_dir, jobs: int = 1):
    validate_config("qnu", config)
    h = config_hash(config)
    tasks = [(i, 0) for i in range(len(config["nu_values"]))]
    results = run_tasks("qnu", config, tasks, jobs)
    rows = []
    for res in results:
        rows.append((h, res["nu"], res["quad_value"], res["quad_error"], "quadrature"))
        rows.append((h, res["nu"], res["mc_value"], res["mc_error"], "montecarlo"))
    header = ["config", "nu", "value", "error", "method"]
    _emit(out_dir, "qnu", config, header, rows, results)
    return rows


# ---------------------------------------------------------------------------
# variance budget
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VarianceBudget:
    u: float
    L: int
    N: int
    r_opt: int
    value: float


def budget_expression(u: float, L: int, N: int, r: int, d: int) -> float:
    return (r / N) ** d + u * L**d / r


def variance_budget(u: float, L: int, N: int, d: int = 3) -> VarianceBudget:
    """Exact integer minimization of (r/N)^d + u L^d / r over the admissible
    halo range 10L <= r <= N/10."""
    r_lo, r_hi = 10 * L, N // 10
    if r_lo > r_hi:
        raise ValueError(f"empty admissible range: 10L={r_lo} > N/10={r_hi}")
    values = [(budget_expression(u, L, N, r, d), r) for r in range(r_lo, r_hi + 1)]
    best, r_opt = min(values)
    return VarianceBudget(u, L, N, r_opt, best)

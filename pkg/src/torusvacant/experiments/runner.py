"""Deterministic replica execution and result persistence.

Replicas are scheduled by (point_index, replica_index); each task derives its
own random stream from the experiment seed, so partitioning across workers
cannot affect results, and the merge step orders by task index. CSV cells are
formatted with a fixed float format so byte-identical reruns are guaranteed.
"""

from __future__ import annotations

import json
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import FORMAT_VERSION, config_hash

_FLOAT_FMT = "%.12g"


def fmt_cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return _FLOAT_FMT % v
    return str(v)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt_cell(v) for v in row) + "\n")


def write_ndjson(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def _git_hash() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).parent)
        return out.stdout.strip() if out.returncode == 0 else "unknown"
    except OSError:
        return "unknown"


def write_metadata(out_dir, command: str, config: dict) -> None:
    meta = {
        "format_version": FORMAT_VERSION,
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "git_hash": _git_hash(),
        "created_unix": int(time.time()),
    }
    path = Path(out_dir) / "metadata.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


_WORKER_FNS = {}


def task_fn(name):
    """Register a module-level replica function for parallel dispatch."""
    def deco(fn):
        _WORKER_FNS[name] = fn
        return fn
    return deco


def _dispatch(args):
    name, config, point_index, replica_index = args
    return _WORKER_FNS[name](config, point_index, replica_index)


def run_tasks(name: str, config: dict, tasks, jobs: int = 1):
    """Run `(point_index, replica_index)` tasks, serially or on a process
    pool; the result list follows the given task order either way."""
    arglist = [(name, config, p, r) for p, r in tasks]
    if jobs <= 1:
        return [_dispatch(a) for a in arglist]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_dispatch, arglist, chunksize=max(1, len(arglist) // (4 * jobs) or 1)))

"""Writers for trajectories and reports.

Every file starts with the run configuration as one JSON object, so
``read_header`` recovers exactly the configuration that produced it. Floats
are written with ``repr`` and JSON keys are sorted; equal inputs give equal
bytes.
"""
from __future__ import annotations

import json
from typing import Any, Iterable, TextIO

import numpy as np

from .flow import Trajectory
from .hamiltonian import to_polar, torus_distance

HEADER_PREFIX = "# config: "


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=True)


def column_names(n: int) -> list[str]:
    names = ["t"]
    for j in range(1, n + 1):
        names += [f"x{j}", f"y{j}"]
    return names + ["z"]


def trajectory_rows(traj: Trajectory, dt: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Times and Cartesian states, either at solver steps or every ``dt``."""
    if dt is None:
        return np.asarray(traj.t), traj.cartesian()
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    t_end = traj.t_end
    count = int(np.floor(abs(t_end) / dt + 1e-9))
    times = np.sign(t_end) * dt * np.arange(count + 1) if t_end else np.zeros(1)
    if abs(times[-1] - t_end) > 1e-12:
        times = np.append(times, t_end)
    return times, traj.cartesian(traj(times))


def _fmt(v) -> str:
    return repr(float(v))


def write_csv(fh: TextIO, config: dict[str, Any], traj: Trajectory, dt: float | None = None) -> None:
    times, pts = trajectory_rows(traj, dt)
    fh.write(HEADER_PREFIX + dumps(config) + "\n")
    fh.write(",".join(column_names(traj.n)) + "\n")
    for t, p in zip(times, pts):
        fh.write(",".join([_fmt(t), *map(_fmt, p)]) + "\n")


def write_jsonl(fh: TextIO, config: dict[str, Any], traj: Trajectory, dt: float | None = None) -> None:
    times, pts = trajectory_rows(traj, dt)
    names = column_names(traj.n)
    fh.write(dumps({"config": config}) + "\n")
    for t, p in zip(times, pts):
        # rows keep column order rather than sorted keys
        fh.write(json.dumps(dict(zip(names, [float(t), *map(float, p)]))) + "\n")


def write_plotdata(fh: TextIO, config: dict[str, Any], traj: Trajectory, dt: float | None = 0.1) -> None:
    """Whitespace columns ``t z r_1 .. r_n dist_T`` for gnuplot."""
    times, pts = trajectory_rows(traj, dt)
    r, _, z = to_polar(pts)
    dist = torus_distance(pts)
    names = ["t", "z", *(f"r{j}" for j in range(1, traj.n + 1)), "dist_T"]
    fh.write(HEADER_PREFIX + dumps(config) + "\n")
    fh.write("# " + " ".join(names) + "\n")
    for k in range(len(times)):
        row = [times[k], z[k], *r[k], dist[k]]
        fh.write(" ".join(map(_fmt, row)) + "\n")


def write_json(fh: TextIO, config: dict[str, Any], payload: dict[str, Any]) -> None:
    fh.write(json.dumps({"config": config, **payload}, sort_keys=True, indent=2) + "\n")


def read_header(lines: Iterable[str] | str) -> dict[str, Any]:
    """Configuration embedded in a CSV, JSONL, plotdata or JSON output."""
    if isinstance(lines, str):
        text = lines
    else:
        text = "".join(lines)
    first = text.split("\n", 1)[0]
    if first.startswith(HEADER_PREFIX):
        return json.loads(first[len(HEADER_PREFIX) :])
    try:
        return json.loads(first)["config"]
    except (json.JSONDecodeError, KeyError, TypeError):
        pass
    try:
        return json.loads(text)["config"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValueError("no configuration header found") from exc

"""Deterministic output files: CSV for bulk arrays, JSON for reports, a hashed manifest.

Floats are written with ``repr`` (shortest round-trip decimal), so every
file reads back bit for bit.

CSV column order
  pi.csv     t, x_index, pi
  rho.csv    t, x_index, rho_0 ... rho_{n_y^2 - 1}   (micro index i1 * n_y + i2)
  trace.csv  t, x_index, g_0 ... g_{3 n_y - 1}       (Gamma_N edges in order, nodes by coordinate)
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .coupled import Trajectory
from .inverse import MeasurementSet


@dataclass
class RunArtifacts:
    config: dict
    trajectory: Trajectory | None = None
    measurement: MeasurementSet | None = None
    reports: dict = field(default_factory=dict)   # name -> JSON-able dict
    error: str | None = None


def _fmt(x: float) -> str:
    return repr(float(x))


def trajectory_csv(traj: Trajectory | None, which: str, width: int = 0) -> str:
    if which == "pi":
        header = ["t", "x_index", "pi"]
    else:
        prefix = "rho" if which == "rho" else "g"
        if traj is not None:
            width = (traj.rho if which == "rho" else traj.trace_N).shape[-1]
        header = ["t", "x_index"] + [f"{prefix}_{j}" for j in range(width)]
    lines = [",".join(header)]
    if traj is not None:
        data = {"pi": traj.pi, "rho": traj.rho, "trace": traj.trace_N}[which]
        for n, t in enumerate(traj.t):
            for i in range(data.shape[1]):
                vals = [data[n, i]] if which == "pi" else data[n, i]
                lines.append(",".join([_fmt(t), str(i)] + [_fmt(v) for v in vals]))
    return "\n".join(lines) + "\n"


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(t, x_index, values) columns of a trajectory CSV."""
    rows = Path(path).read_text(encoding="utf-8").splitlines()[1:]
    if not rows:
        return np.zeros(0), np.zeros(0, dtype=int), np.zeros((0, 0))
    parts = [r.split(",") for r in rows]
    t = np.array([float(p[0]) for p in parts])
    xi = np.array([int(p[1]) for p in parts])
    vals = np.array([[float(v) for v in p[2:]] for p in parts])
    return t, xi, vals


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=True) + "\n"


def write_measurement(meas: MeasurementSet, path) -> None:
    Path(path).write_text(dumps(meas.to_dict()), encoding="utf-8")


def read_measurement(path) -> MeasurementSet:
    return MeasurementSet.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_outputs(art: RunArtifacts, out_dir, *, n_trace: int = 0, n_micro: int = 0) -> dict:
    """Write all artifacts plus ``manifest.json``; returns the manifest.

    The manifest lists the config echo, the package version and the sha256
    of every emitted file; its own digest covers all of that.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    files: dict[str, bytes] = {}
    if art.trajectory is not None or (n_trace or n_micro):
        files["pi.csv"] = trajectory_csv(art.trajectory, "pi").encode()
        files["rho.csv"] = trajectory_csv(art.trajectory, "rho", n_micro).encode()
        files["trace.csv"] = trajectory_csv(art.trajectory, "trace", n_trace).encode()
    if art.measurement is not None:
        files["measurement.json"] = dumps(art.measurement.to_dict()).encode()
    for name, rep in sorted(art.reports.items()):
        files[f"{name}.json"] = dumps(rep).encode()
    for name, blob in files.items():
        p = out / name
        try:
            p.write_bytes(blob)
        except OSError as exc:
            raise OSError(f"cannot write {p}: {exc}") from exc
    manifest = {"version": __version__, "config": art.config,
                "files": {name: sha256(blob) for name, blob in sorted(files.items())}}
    if art.error is not None:
        manifest["error"] = art.error
    manifest["digest"] = sha256(dumps(manifest).encode())
    (out / "manifest.json").write_text(dumps(manifest), encoding="utf-8")
    return manifest

"""Trajectory directory: manifest.json, diagnostics.csv and binary state snapshots."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from ..gridio import write_binary
from .problem import ProblemSpec, SolverConfig, TrajectoryRecord

DIAG_COLUMNS = ("t", "dt", "phi", "s_delta_core", "bochner", "max_abs", "v1_coeff", "newton_iters", "substeps", "step_residual")


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_diagnostics(traj: TrajectoryRecord, path: str | Path) -> None:
    cols = [c for c in DIAG_COLUMNS if any(c in d for d in traj.diagnostics)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for d in traj.diagnostics:
            w.writerow([_fmt(d.get(c, "")) for c in cols])


def write_trajectory(traj: TrajectoryRecord, directory: str | Path, spec: ProblemSpec | None = None,
                     config: SolverConfig | None = None, stride: int = 1) -> list[Path]:
    """Write the trajectory; returns the written paths (manifest last)."""
    directory = Path(directory)
    snap = directory / "snapshots"
    snap.mkdir(parents=True, exist_ok=True)
    written = []
    diag = directory / "diagnostics.csv"
    write_diagnostics(traj, diag)
    written.append(diag)
    last = len(traj.states) - 1
    for i, (t, s) in enumerate(zip(traj.times, traj.states)):
        if i % stride == 0 or i == last:
            p = snap / f"state_{i:06d}.bin"
            write_binary(s, p)
            written.append(p)
    manifest = {
        "status": traj.status,
        "message": traj.message,
        "n_states": len(traj.states),
        "t_final": traj.times[-1],
        "snapshot_stride": stride,
        "spec": spec.describe() if spec else None,
        "config": config.describe() if config else None,
    }
    mpath = directory / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    written.append(mpath)
    return written

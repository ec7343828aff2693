"""On-disk formats: path CSV, control JSON, report JSON, run manifests.

Paths travel as CSV with a header row t,x0,...,x{d-1}. Controls travel as
JSON carrying the grid nodes and the cellwise coefficient tables, tagged by
lane ("ldp" controls hold phi/psi with psi bounds, "mdp" controls hold
phi/tilt). Reports are plain JSON dicts produced by the to_dict methods,
wrapped with a manifest of the producing parameters; manifests never include
timestamps, so rerunning a command reproduces its output byte for byte.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path as FsPath

import numpy as np

from . import __version__
from .core import Control, MdpControl, Path, TimeGrid
from .errors import InvalidArgumentError

__all__ = [
    "save_path_csv",
    "load_path_csv",
    "save_control",
    "load_control",
    "save_report",
    "load_report",
    "ensemble_summary",
    "make_manifest",
]


class _NumpyEncoder(json.JSONEncoder):
    def default(self, obj):
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        return super().default(obj)


def save_path_csv(file, path: Path) -> None:
    file = FsPath(file)
    with file.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{j}" for j in range(path.dim)])
        for t, row in zip(path.grid.nodes, path.values):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def load_path_csv(file) -> Path:
    file = FsPath(file)
    try:
        with file.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [row for row in reader if row]
    except FileNotFoundError:
        raise InvalidArgumentError(f"path file not found: {file}")
    if not header or header[0] != "t" or len(rows) < 2:
        raise InvalidArgumentError(f"{file} is not a path CSV (header t,x0,...)")
    data = np.array([[float(v) for v in row] for row in rows])
    return Path(TimeGrid(data[:, 0]), data[:, 1:], kind="linear")


def save_control(file, control) -> None:
    if isinstance(control, Control):
        payload = {
            "kind": "ldp",
            "nodes": control.grid.nodes.tolist(),
            "phi": control.phi.tolist(),
            "psi": control.psi.tolist(),
            "psi_bounds": list(control.psi_bounds),
        }
    elif isinstance(control, MdpControl):
        payload = {
            "kind": "mdp",
            "nodes": control.grid.nodes.tolist(),
            "phi": control.phi.tolist(),
            "tilt": control.tilt.tolist(),
        }
    else:
        raise InvalidArgumentError("save_control takes a Control or MdpControl")
    FsPath(file).write_text(json.dumps(payload, indent=2, cls=_NumpyEncoder) + "\n")


def load_control(file):
    file = FsPath(file)
    try:
        raw = json.loads(file.read_text())
    except FileNotFoundError:
        raise InvalidArgumentError(f"control file not found: {file}")
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"control file is not valid JSON: {exc}")
    try:
        grid = TimeGrid(np.asarray(raw["nodes"], dtype=float))
        if raw.get("kind") == "mdp":
            return MdpControl(grid, np.asarray(raw["phi"]), np.asarray(raw["tilt"]))
        return Control(
            grid,
            np.asarray(raw["phi"]),
            np.asarray(raw["psi"]),
            psi_bounds=tuple(raw.get("psi_bounds", (1.0, 1.0))),
        )
    except KeyError as exc:
        raise InvalidArgumentError(f"control file is missing key {exc}")


def save_report(file, payload: dict) -> None:
    FsPath(file).write_text(json.dumps(payload, indent=2, cls=_NumpyEncoder) + "\n")


def load_report(file) -> dict:
    file = FsPath(file)
    try:
        return json.loads(file.read_text())
    except FileNotFoundError:
        raise InvalidArgumentError(f"report file not found: {file}")
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"report file is not valid JSON: {exc}")


def ensemble_summary(ens) -> dict:
    """Compact JSON-ready digest of a particle run."""
    terminal = ens.terminal
    qs = np.percentile(terminal, [5, 25, 50, 75, 95], axis=0)
    out = {
        "kind": ens.kind,
        "eps": ens.eps,
        "n_particles": ens.n_particles,
        "dim": ens.dim,
        "seed": ens.seed,
        "horizon": ens.grid.horizon,
        "n_steps": ens.grid.n_steps,
        "terminal_mean": terminal.mean(axis=0).tolist(),
        "terminal_std": terminal.std(axis=0).tolist(),
        "terminal_quantiles": {
            "q05": qs[0].tolist(),
            "q25": qs[1].tolist(),
            "q50": qs[2].tolist(),
            "q75": qs[3].tolist(),
            "q95": qs[4].tolist(),
        },
        "meta": ens.meta,
    }
    if ens.sup_sq is not None:
        out["mean_sup_sq_to_reference"] = float(np.mean(ens.sup_sq))
    return out


def make_manifest(command: str, **params) -> dict:
    """Reproducibility block for report files: inputs only, no timestamps."""
    return {"tool": "mvsde", "version": __version__, "command": command, **params}

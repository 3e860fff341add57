"""File formats: JSON documents, self-describing CSV tables, matrix export,
and deterministic run manifests."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import Discretization


def save_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_json(path) -> dict:
    return json.loads(Path(path).read_text())


def sha256_file(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def write_csv(path, columns: list[str], units: list[str], rows) -> None:
    """Two header lines (names, units), then the data rows."""
    lines = [",".join(columns), ",".join(units)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_field_csv(path, d: Discretization, values: np.ndarray) -> None:
    grid = d.grid
    rows = []
    for i in range(grid.size):
        owner = (f"v{grid.node_vertex[i]}" if grid.node_vertex[i] >= 0
                 else f"e{grid.node_edge[i]}")
        rows.append((i, owner, grid.node_s[i], grid.node_x[i], d.mass[i], values[i]))
    write_csv(path, ["node_id", "edge_id", "s", "x", "mass", "value"],
              ["index", "id", "arclength", "fiber", "mu", "density"], rows)


def write_measure_csv(path, counts: np.ndarray, density: np.ndarray) -> None:
    rows = [(i, int(counts[i]), density[i]) for i in range(len(counts))]
    write_csv(path, ["node_id", "count", "density"], ["index", "walkers", "per_mu"], rows)


def export_matrix(out_dir, d: Discretization) -> list[str]:
    """Coordinate triplets of K plus a JSON sidecar with masses and coordinates."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    K = d.stiffness.tocoo()
    tri = out / "stiffness.txt"
    lines = [f"{i} {j} {_fmt(v)}" for i, j, v in zip(K.row, K.col, K.data)]
    tri.write_text("\n".join(lines) + "\n")
    grid = d.grid
    sidecar = {
        "masses": d.mass.tolist(),
        "boundary_policy": d.boundary_policy,
        "pinned": np.flatnonzero(d.pinned).tolist(),
        "nodes": [
            {
                "id": i,
                "owner": (f"v{grid.node_vertex[i]}" if grid.node_vertex[i] >= 0
                          else f"e{grid.node_edge[i]}"),
                "s": float(grid.node_s[i]),
                "sigma": float(grid.node_sigma[i]),
                "x": float(grid.node_x[i]),
            }
            for i in range(grid.size)
        ],
        "grid": {"nodes_per_edge": grid.nodes_per_edge, "fiber_nodes": grid.nx},
        "complex": d.sc.to_dict(),
    }
    side = out / "discretization.json"
    save_json(side, sidecar)
    return [str(tri), str(side)]


def load_discretization(out_dir) -> Discretization:
    """Rebuild the discretization from the sidecar (assembly is deterministic)."""
    from .assembly import assemble, build_grid
    from .complexes import StripComplex

    doc = load_json(Path(out_dir) / "discretization.json")
    sc = StripComplex.from_dict(doc["complex"])
    grid = build_grid(sc, doc["grid"]["nodes_per_edge"], doc["grid"]["fiber_nodes"])
    return assemble(sc, grid, doc["boundary_policy"])


def quotient_map_to_dict(qmap) -> dict:
    doc = {
        "vertices": {str(k): v for k, v in qmap.vertex_map.items()},
        "edges": {str(k): v for k, v in qmap.edge_map.items()},
        "fiber_factor": qmap.fiber_factor,
    }
    if qmap.certificate is not None:
        doc["A"] = {str(k): v for k, v in qmap.certificate.A.items()}
        doc["a"] = {str(k): v for k, v in qmap.certificate.a.items()}
        doc["ok"] = qmap.certificate.ok
    return doc


@dataclass
class RunManifest:
    """Reproducibility record: equal manifests (minus wall clock) mean equal outputs."""

    command: str
    seed: int | None = None
    config_digest: str = ""
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    version: str = __version__
    wall_clock_s: float = 0.0
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path) -> None:
        self.outputs[str(path)] = sha256_file(path)

    def write(self, path) -> None:
        self.wall_clock_s = time.perf_counter() - self._t0
        doc = {
            "command": self.command,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "version": self.version,
            "wall_clock_s": self.wall_clock_s,
        }
        save_json(path, doc)

"""Shared helpers between the CLI and config-driven experiments."""

from __future__ import annotations

from .complexes import PointOnComplex, StripComplex, build_treebolic
from .errors import ValidationError
from .serialize import load_json


def parse_point(text: str) -> PointOnComplex:
    """Parse 'edge,s,x' or 'v:vertex,x' point specifications."""
    try:
        if text.startswith("v:"):
            parts = text[2:].split(",")
            x = float(parts[1]) if len(parts) > 1 else 0.0
            return PointOnComplex.at_vertex(int(parts[0]), x)
        parts = text.split(",")
        x = float(parts[2]) if len(parts) > 2 else 0.0
        return PointOnComplex.on_edge(int(parts[0]), float(parts[1]), x)
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"bad point spec {text!r}: {exc}", "point") from exc


def build_space_from_config(cfg: dict) -> StripComplex:
    if "file" in cfg:
        return StripComplex.from_dict(load_json(cfg["file"]))
    if "treebolic" in cfg:
        tb = cfg["treebolic"]
        for key in ("p", "q", "alpha", "beta", "k_min", "k_max", "R"):
            if key not in tb:
                raise ValidationError("missing required key", f"space.treebolic.{key}")
        return build_treebolic(int(tb["p"]), float(tb["q"]), float(tb["alpha"]),
                               float(tb["beta"]), int(tb["k_min"]), int(tb["k_max"]),
                               float(tb["R"]))
    raise ValidationError("need either 'file' or 'treebolic'", "space")


def discretize_from_config(space_path, nodes_per_edge: int, fiber_nodes: int,
                           boundary: str):
    from .assembly import assemble, build_grid

    sc = StripComplex.from_dict(load_json(space_path))
    grid = build_grid(sc, nodes_per_edge, fiber_nodes)
    return sc, assemble(sc, grid, boundary)

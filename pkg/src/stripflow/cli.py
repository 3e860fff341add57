"""Command line interface and experiment orchestration.

Exit codes: 0 ok, 2 validation error, 3 numerical error, 4 acceptance failure.
Every command that writes outputs also writes a manifest.json capturing the
command line, seed, input digests and output digests; reruns with the same
seed and inputs produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import shlex
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .acceptance import run_all
from .assemble_io import (build_space_from_config, discretize_from_config,
                          parse_point)
from .errors import NumericalError, StripflowError, ValidationError
from .serialize import (RunManifest, export_matrix, load_discretization, load_json,
                        quotient_map_to_dict, save_json, sha256_text, write_csv,
                        write_field_csv, write_measure_csv)


def _manifest(args, out_dir: Path, seed=None) -> RunManifest:
    return RunManifest(command=" ".join(map(shlex.quote, sys.argv)), seed=seed)


def cmd_graph(args) -> int:
    from .graph import build_tree

    g = build_tree(args.p, args.q, args.kmin, args.kmax)
    out = Path(args.out)
    man = _manifest(args, out.parent)
    save_json(out, g.to_dict())
    man.add_output(out)
    man.write(out.with_suffix(".manifest.json"))
    print(f"wrote {out}: {len(g.vertices)} vertices, {len(g.edges)} edges")
    return 0


def cmd_space(args) -> int:
    if args.space_cmd == "build-treebolic":
        from .complexes import build_treebolic

        sc = build_treebolic(args.p, args.q, args.alpha, args.beta,
                             args.kmin, args.kmax, args.R)
        out = Path(args.out)
        man = _manifest(args, out.parent)
        save_json(out, sc.to_dict())
        man.add_output(out)
        man.write(out.with_suffix(".manifest.json"))
        print(f"wrote {out}: treebolic p={args.p} q={args.q} "
              f"alpha={args.alpha} beta={args.beta}")
        return 0
    # exhaustion evaluation
    from .complexes import StripComplex, treebolic_exhaustion

    sc = StripComplex.from_dict(load_json(args.space))
    point = parse_point(args.point)
    value = treebolic_exhaustion(sc, point)
    print(f"rho1({args.point}) = {value:.12g}")
    return 0


def cmd_assemble(args) -> int:
    sc, d = discretize_from_config(args.space, args.nodes_per_edge,
                                   args.fiber_nodes, args.boundary)
    out = Path(args.out)
    man = _manifest(args, out)
    man.add_input(args.space)
    for path in export_matrix(out, d):
        man.add_output(path)
    man.write(out / "manifest.json")
    print(f"wrote {out}: {d.size} dofs, policy {d.boundary_policy}")
    return 0


def cmd_heat(args) -> int:
    from .heat import heat_kernel

    d = load_discretization(args.disc)
    scheme = {"cn": "crank_nicolson", "ie": "implicit_euler"}.get(args.scheme, args.scheme)
    kern = heat_kernel(d, args.source, args.t, args.dt, scheme)
    out = Path(args.out)
    man = _manifest(args, out.parent)
    write_field_csv(out, d, kern.values)
    man.add_output(out)
    man.write(out.with_suffix(".manifest.json"))
    print(f"kernel at t={args.t}: retained mass {kern.retained_mass:.12f} -> {out}")
    return 0


def cmd_spectrum(args) -> int:
    from .assembly import assemble
    from .heat import spectral_bottom

    d = load_discretization(args.disc)
    if args.mode and args.mode != d.boundary_policy:
        d = assemble(d.sc, d.grid, args.mode)
    lam = spectral_bottom(d)
    print(f"spectral bottom ({d.boundary_policy}): {lam:.10g}")
    return 0


def cmd_mc(args) -> int:
    from .brownian import exit_distribution, green_estimate, sample_ctmc, sample_sde
    from .complexes import StripComplex

    d = load_discretization(args.disc)
    out = Path(args.out) if args.out else None
    man = _manifest(args, out.parent if out else Path("."), seed=args.seed)
    if args.mc_cmd == "ctmc":
        emp = sample_ctmc(d, args.source, args.t, args.paths, args.seed)
        print(f"ctmc: surviving fraction {emp.surviving_fraction:.4f}")
    elif args.mc_cmd == "sde":
        point = parse_point(args.point)
        emp = sample_sde(d.sc, point, args.t, args.dt, args.paths, args.seed,
                         d.grid, d.boundary_policy)
        print(f"sde: absorbed {emp.absorbed}")
    elif args.mc_cmd == "exit":
        region = [int(tok) for tok in args.region.split(",")]
        law = exit_distribution(d, region, args.source, args.paths, args.seed)
        print(f"exit law over {len(law.boundary_dofs)} boundary dofs, "
              f"capped mass {law.capped_mass:.4g}")
        if out:
            write_csv(out, ["node_id", "probability"], ["index", "fraction"],
                      zip(law.boundary_dofs.tolist(), law.probabilities.tolist()))
            man.add_output(out)
            man.write(out.with_suffix(".manifest.json"))
        return 0
    else:  # green
        horizons = [float(tok) for tok in args.horizons.split(",")]
        curve = green_estimate(d, args.source, args.zeta, horizons,
                               args.paths, args.seed)
        print("green curve:", ", ".join(f"{T}:{v:.6g}" for T, v in
                                        zip(curve.horizons, curve.estimates)))
        if out:
            write_csv(out, ["horizon", "estimate"], ["time", "occupation_per_mu"],
                      zip(curve.horizons.tolist(), curve.estimates.tolist()))
            man.add_output(out)
            man.write(out.with_suffix(".manifest.json"))
        return 0
    if out:
        write_measure_csv(out, emp.counts, emp.density)
        man.add_output(out)
        man.write(out.with_suffix(".manifest.json"))
    return 0


def cmd_project(args) -> int:
    from .complexes import StripComplex
    from .quotients import collapse_fiber, horocyclic_collapse, slice_plane

    sc = StripComplex.from_dict(load_json(args.space))
    if args.project_cmd == "collapse-fiber":
        target, qmap = collapse_fiber(sc)
    elif args.project_cmd == "slice-plane":
        target, qmap = slice_plane(sc)
    else:
        b = {int(k): float(v) for k, v in (tok.split(":") for tok in args.b.split(","))}
        target, qmap = horocyclic_collapse(sc, b)
    out = Path(args.out)
    man = _manifest(args, out.parent)
    man.add_input(args.space)
    save_json(out, quotient_map_to_dict(qmap))
    target_path = out.with_name(out.stem + ".target.json")
    save_json(target_path, target.to_dict())
    man.add_output(out)
    man.add_output(target_path)
    man.write(out.with_suffix(".manifest.json"))
    ok = qmap.certificate.ok if qmap.certificate else True
    print(f"wrote {out} (+ target); certificate ok: {ok}")
    return 0


def cmd_exhaust(args) -> int:
    from .graph import MetricGraph, edge_exhaustion

    g = MetricGraph.from_dict(load_json(args.graph))
    rho = edge_exhaustion(g, args.epsilon, args.origin)
    rows = []
    for eid, (s, vals) in rho.sample(args.samples).items():
        rows.extend((eid, si, vi) for si, vi in zip(s, vals))
    out = Path(args.out)
    man = _manifest(args, out.parent)
    man.add_input(args.graph)
    write_csv(out, ["edge_id", "s", "rho1"], ["id", "arclength", "value"], rows)
    man.add_output(out)
    man.write(out.with_suffix(".manifest.json"))
    print(f"wrote {out}")
    return 0


def cmd_subord(args) -> int:
    from .complexes import Fiber
    from .subordination import (LINE, resolvent_fourier_coefficient,
                                resolvent_kernel_G)

    fiber = LINE if args.fiber == "line" else Fiber("circle", args.L)
    if args.subord_cmd == "G":
        val = resolvent_kernel_G(fiber, args.x, args.y)
        print(f"G({args.x}, {args.y}) = {val:.10g}")
    else:
        val = resolvent_fourier_coefficient(fiber, args.k)
        print(f"Ghat_{args.k} = {val:.10g}")
    return 0


def cmd_accept(args) -> int:
    numbers = [int(tok) for tok in args.criteria.split(",")] if args.criteria else None
    results = run_all(numbers)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 4 if failed else 0


def cmd_run(args) -> int:
    return run_experiment_file(args.config)


# -- config-driven experiments ------------------------------------------------------

_TASKS = ("assemble", "heat", "spectrum", "mc", "exhaust", "subord", "accept")


def run_experiment_file(path) -> int:
    config = yaml.safe_load(Path(path).read_text())
    return run_experiment(config, config_text=Path(path).read_text())


def run_experiment(config: dict, config_text: str | None = None) -> int:
    """Execute one config document; see README for the schema."""
    if not isinstance(config, dict):
        raise ValidationError("config must be a mapping", "")
    task = config.get("task")
    if task not in _TASKS:
        raise ValidationError(f"unknown task {task!r}; expected one of {_TASKS}", "task")
    seed = config.get("seed", 0)
    if not isinstance(seed, int):
        raise ValidationError("seed must be an integer", "seed")
    out_dir = Path(config.get("out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    man = RunManifest(command=f"run_experiment(task={task})", seed=seed,
                      config_digest=sha256_text(config_text or repr(sorted(config.items()))))

    if task == "accept":
        results = run_all(config.get("params", {}).get("criteria"))
        rows = [(r.number, r.name, "PASS" if r.passed else "FAIL", r.detail)
                for r in results]
        table = out_dir / "acceptance.csv"
        write_csv(table, ["criterion", "name", "status", "detail"],
                  ["index", "text", "flag", "text"], rows)
        man.add_output(table)
        man.write(out_dir / "manifest.json")
        return 4 if any(not r.passed for r in results) else 0

    if task == "subord":
        params = _require(config, "params", dict)
        from .complexes import Fiber
        from .subordination import LINE, resolvent_kernel_G

        fiber = LINE if params.get("fiber") == "line" else Fiber("circle", float(params["L"]))
        val = resolvent_kernel_G(fiber, float(params["x"]), float(params["y"]))
        table = out_dir / "subord.csv"
        write_csv(table, ["x", "y", "G"], ["fiber", "fiber", "kernel"],
                  [(params["x"], params["y"], val)])
        man.add_output(table)
        man.write(out_dir / "manifest.json")
        return 0

    if task == "exhaust":
        from .graph import MetricGraph, edge_exhaustion

        graph_doc = _require(config, "graph", dict)
        params = config.get("params", {})
        g = MetricGraph.from_dict(graph_doc)
        rho = edge_exhaustion(g, float(params.get("epsilon", g.min_edge_length / 16.0)),
                              int(params.get("origin", g.vertices[0].id)))
        rows = []
        for eid, (s, vals) in rho.sample(int(params.get("samples", 65))).items():
            rows.extend((eid, si, vi) for si, vi in zip(s, vals))
        table = out_dir / "exhaustion.csv"
        write_csv(table, ["edge_id", "s", "rho1"], ["id", "arclength", "value"], rows)
        man.add_output(table)
        man.write(out_dir / "manifest.json")
        return 0

    # remaining tasks need a space + discretization
    space_cfg = _require(config, "space", dict)
    disc_cfg = _require(config, "discretization", dict)
    sc = build_space_from_config(space_cfg)
    from .assembly import assemble, build_grid

    grid = build_grid(sc, int(_require(disc_cfg, "nodes_per_edge", int)),
                      int(disc_cfg.get("fiber_nodes", 1)))
    d = assemble(sc, grid, disc_cfg.get("boundary", "reflecting"))
    params = config.get("params", {})

    if task == "assemble":
        for path in export_matrix(out_dir, d):
            man.add_output(path)
    elif task == "heat":
        from .heat import heat_kernel

        kern = heat_kernel(d, int(_require(params, "source", int)),
                           float(_require(params, "t", (int, float))),
                           params.get("dt"), params.get("scheme", "crank_nicolson"))
        table = out_dir / "kernel.csv"
        write_field_csv(table, d, kern.values)
        man.add_output(table)
    elif task == "spectrum":
        from .heat import spectral_bottom

        lam = spectral_bottom(d)
        table = out_dir / "spectrum.csv"
        write_csv(table, ["lambda"], ["eigenvalue"], [(lam,)])
        man.add_output(table)
    elif task == "mc":
        from .brownian import sample_ctmc

        emp = sample_ctmc(d, int(_require(params, "source", int)),
                          float(_require(params, "t", (int, float))),
                          int(params.get("paths", 10**4)), seed)
        table = out_dir / "measure.csv"
        write_measure_csv(table, emp.counts, emp.density)
        man.add_output(table)
    man.write(out_dir / "manifest.json")
    return 0


def _require(doc: dict, key: str, types) -> object:
    if key not in doc:
        raise ValidationError("missing required key", key)
    value = doc[key]
    if types is not None and not isinstance(value, types):
        raise ValidationError(f"wrong type {type(value).__name__}", key)
    return value


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stripflow",
                                description="heat flow and Brownian motion on strip complexes")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("graph", help="metric graph constructions")
    gsub = g.add_subparsers(dest="graph_cmd", required=True)
    gt = gsub.add_parser("build-tree")
    gt.add_argument("--p", type=int, required=True)
    gt.add_argument("--q", type=float, required=True)
    gt.add_argument("--kmin", type=int, required=True)
    gt.add_argument("--kmax", type=int, required=True)
    gt.add_argument("--out", required=True)
    gt.set_defaults(func=cmd_graph)

    s = sub.add_parser("space", help="strip complex constructions")
    ssub = s.add_subparsers(dest="space_cmd", required=True)
    st = ssub.add_parser("build-treebolic")
    for name, typ in (("--p", int), ("--q", float), ("--alpha", float),
                      ("--beta", float), ("--kmin", int), ("--kmax", int), ("--R", float)):
        st.add_argument(name, type=typ, required=True)
    st.add_argument("--out", required=True)
    st.set_defaults(func=cmd_space)
    se = ssub.add_parser("exhaustion")
    se.add_argument("--space", required=True)
    se.add_argument("--point", required=True,
                    help="edge,s,x or v:vertex,x")
    se.set_defaults(func=cmd_space)

    a = sub.add_parser("assemble")
    a.add_argument("--space", required=True)
    a.add_argument("--nodes-per-edge", type=int, required=True)
    a.add_argument("--fiber-nodes", type=int, default=1)
    a.add_argument("--boundary", default="reflecting",
                   choices=["reflecting", "absorbing"])
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_assemble)

    h = sub.add_parser("heat")
    h.add_argument("--disc", required=True)
    h.add_argument("--source", type=int, required=True)
    h.add_argument("--t", type=float, required=True)
    h.add_argument("--dt", type=float)
    h.add_argument("--scheme", default="cn", choices=["cn", "ie"])
    h.add_argument("--out", required=True)
    h.set_defaults(func=cmd_heat)

    sp = sub.add_parser("spectrum")
    sp.add_argument("--disc", required=True)
    sp.add_argument("--mode", choices=["reflecting", "absorbing"])
    sp.set_defaults(func=cmd_spectrum)

    m = sub.add_parser("mc")
    msub = m.add_subparsers(dest="mc_cmd", required=True)
    for name in ("ctmc", "sde", "exit", "green"):
        mp = msub.add_parser(name)
        mp.add_argument("--disc", required=True)
        mp.add_argument("--paths", type=int, default=10**4)
        mp.add_argument("--seed", type=int, default=0)
        mp.add_argument("--out")
        if name in ("ctmc", "sde"):
            mp.add_argument("--t", type=float, required=True)
        if name == "ctmc":
            mp.add_argument("--source", type=int, required=True)
        if name == "sde":
            mp.add_argument("--point", required=True)
            mp.add_argument("--dt", type=float, required=True)
        if name == "exit":
            mp.add_argument("--source", type=int, required=True)
            mp.add_argument("--region", required=True,
                            help="comma separated dof ids")
        if name == "green":
            mp.add_argument("--source", type=int, required=True)
            mp.add_argument("--zeta", type=int, required=True)
            mp.add_argument("--horizons", required=True,
                            help="comma separated horizons")
        mp.set_defaults(func=cmd_mc)

    pr = sub.add_parser("project")
    prsub = pr.add_subparsers(dest="project_cmd", required=True)
    for name in ("collapse-fiber", "slice-plane", "horocyclic"):
        pp = prsub.add_parser(name)
        pp.add_argument("--space", required=True)
        pp.add_argument("--out", required=True)
        if name == "horocyclic":
            pp.add_argument("--b", required=True,
                            help="level:weight pairs, e.g. 1:1.0,2:0.5")
        pp.set_defaults(func=cmd_project)

    ex = sub.add_parser("exhaust")
    ex.add_argument("--graph", required=True)
    ex.add_argument("--epsilon", type=float, required=True)
    ex.add_argument("--origin", type=int, required=True)
    ex.add_argument("--samples", type=int, default=65)
    ex.add_argument("--out", required=True)
    ex.set_defaults(func=cmd_exhaust)

    su = sub.add_parser("subord")
    susub = su.add_subparsers(dest="subord_cmd", required=True)
    sg = susub.add_parser("G")
    sg.add_argument("--fiber", default="circle", choices=["circle", "line"])
    sg.add_argument("--L", type=float, default=2.0 * np.pi)
    sg.add_argument("--x", type=float, required=True)
    sg.add_argument("--y", type=float, required=True)
    sg.set_defaults(func=cmd_subord)
    sf_ = susub.add_parser("fourier")
    sf_.add_argument("--fiber", default="circle", choices=["circle"])
    sf_.add_argument("--L", type=float, default=2.0 * np.pi)
    sf_.add_argument("--k", type=int, required=True)
    sf_.set_defaults(func=cmd_subord)

    ac = sub.add_parser("accept", help="run the acceptance suite")
    ac.add_argument("--criteria", help="comma separated criterion numbers")
    ac.set_defaults(func=cmd_accept)

    ru = sub.add_parser("run", help="run a config-driven experiment")
    ru.add_argument("--config", required=True)
    ru.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except StripflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

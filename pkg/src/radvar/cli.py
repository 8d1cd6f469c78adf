"""Command line interface.

numpy and the library modules are imported inside the handlers so that
--threads can set the BLAS thread variables before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _pair(text: str):
    from fractions import Fraction
    a, b = (Fraction(t.strip()) for t in text.split(","))
    return a, b


def _vector(text: str) -> list:
    return [float(t) for t in text.split(",") if t.strip()]


def _config(args):
    from .runner import ExperimentConfig
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig.default()
    if args.seed is not None:
        cfg = cfg.with_overrides(**{"run.seed": args.seed})
    return cfg


def _graph(cfg, args=None):
    from .experiments import make_domain
    from .geometry import LipschitzGraph
    path = getattr(args, "graph", None) or (cfg.get("domain", "graph_file")
                                            if cfg.get("domain", "kind") == "file" else None)
    if path:
        return LipschitzGraph.from_dict(json.loads(Path(path).read_text()))
    return make_domain(cfg.get("domain", "kind"), dim=int(cfg.num("domain", "dim")),
                       radius=cfg.num("domain", "radius"), lipschitz=cfg.num("domain", "lipschitz"),
                       height=cfg.num("domain", "height"), n=int(cfg.num("domain", "n")),
                       seed=cfg.seed)


def _mesh(cfg, args):
    from dataclasses import replace
    from .geometry import BoundaryMesh
    if getattr(args, "mesh", None):
        return BoundaryMesh.from_json(args.mesh)
    spec = cfg.mesh_spec()
    over = {k: v for k, v in (("R_trunc", getattr(args, "rtrunc", None)),
                              ("resolution", getattr(args, "resolution", None)),
                              ("n_walks", getattr(args, "walks", None))) if v is not None}
    return replace(spec, **over).build(_graph(cfg, args))


def _field(cfg, kind=None):
    from .experiments import make_field
    return make_field(kind or cfg.get("field", "kind"), dim=int(cfg.num("domain", "dim")))


def _builder(cfg, args, field_kind=None):
    from .kernels import KernelFactory
    from .omega import OmegaBuilder, OmegaConfig
    mesh = _mesh(cfg, args)
    eps = args.epsilon if getattr(args, "epsilon", None) is not None else cfg.num("omega", "epsilon")
    tol = args.tol if getattr(args, "tol", None) is not None else cfg.num("omega", "tol")
    oc = OmegaConfig(epsilon=eps, tol=tol, n_max=getattr(args, "depth", None) or int(cfg.num("omega", "n_max")))
    return OmegaBuilder(KernelFactory(mesh, _field(cfg, field_kind)), oc)


def _out(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _dump(path: Path, data) -> None:
    from .runner import _plain
    path.write_text(json.dumps(_plain(data), indent=2, sort_keys=True) + "\n")
    print(path)


def _csv(path: Path, rows) -> None:
    from .runner import _write_csv
    _write_csv(path, rows)
    print(path)


# ------------------------------------------------------------------ handlers

def cmd_geometry(args) -> int:
    cfg = _config(args)
    mesh = _mesh(cfg, args)
    out = _out(args)
    (out / "graph.json").write_text(json.dumps(mesh.graph.to_dict(), indent=2) + "\n")
    mesh.to_json(out / "mesh.json")
    print(out / "mesh.json")
    print(f"{mesh.size} cells, tail mass {mesh.tail_mass:.3g}, c_S {mesh.graph.c_S:.4f}")
    return 0


def cmd_harmonic(args) -> int:
    cfg = _config(args)
    out = _out(args)
    if args.action == "oracle-compare":
        from .experiments import check_oracle
        res = check_oracle(n_walks=args.walks or int(cfg.num("harmonic", "oracle_walks")),
                           seed=cfg.seed, pole_height=_vector(args.pole)[-1] if args.pole else 1.0)
        _dump(out / "oracle_compare.json", res.to_dict())
        for name, rows in res.series.items():
            _csv(out / f"{name}.csv", rows)
        print(res.line())
        return 0 if res.passed else 1
    from .harmonic import estimate_harmonic_measure
    mesh = _mesh(cfg, args)
    pole = _vector(args.pole) if args.pole else mesh.pole.tolist()
    est = estimate_harmonic_measure(mesh.graph, pole, mesh,
                                    args.walks or int(cfg.num("mesh", "n_walks")), cfg.seed,
                                    cfg.num("mesh", "shell"))
    _dump(out / "measure.json", {"pole": pole, **est.to_dict()})
    return 0


def cmd_kernels(args) -> int:
    from .kernels import KernelFactory, save_kernel
    from .partitions import seg
    cfg = _config(args)
    f = KernelFactory(_mesh(cfg, args), _field(cfg), scheme=args.scheme)
    if args.kind in ("k", "c", "b"):
        if args.y is None:
            raise SystemExit("--y is required for k, c and b kernels")
        kern = getattr(f, args.kind)(args.y)
    else:
        if args.segment is None:
            raise SystemExit("--segment is required for b_delta and omega_tilde")
        d = seg(*_pair(args.segment))
        eps = args.epsilon if args.epsilon is not None else cfg.num("omega", "epsilon")
        kern = f.b_segment(d, args.n_quad) if args.kind == "b_delta" else f.omega_tilde(d, eps, args.n_quad)
    for p in save_kernel(kern, _out(args) / f"kernel_{args.kind}"):
        print(p)
    return 0


def cmd_partitions(args) -> int:
    from .partitions import Partition, counterexample_partition, regularity, seg
    out = _out(args)
    if args.action == "counterexample":
        delta = seg(*_pair(args.segment))
        ce = counterexample_partition(delta, args.A, args.lam)
        cert = ce.certificate(args.A, args.lam)
        (out / "counterexample.json").write_text(ce.tau.to_json() + "\n")
        print(out / "counterexample.json")
        print(json.dumps({k: str(v) for k, v in cert.items()}, indent=2))
        return 0 if cert["tau_weakly_regular"] and cert["tau1_violates"] else 1
    tau = Partition.from_json(Path(args.file).read_text())
    strong, weak = regularity(tau, args.lam)
    print(json.dumps({"segments": len(tau), "lambda_regular": strong, "weakly_regular": weak}))
    return 0


def cmd_omega(args) -> int:
    from dataclasses import replace
    from .kernels import save_kernel
    from .partitions import seg
    cfg = _config(args)
    b = _builder(cfg, args)
    b.cfg = replace(b.cfg, independence=args.independence)
    kern, rep = b.omega_segment(seg(*_pair(args.segment)))
    out = _out(args)
    for p in save_kernel(kern, out / "omega"):
        print(p)
    _dump(out / "omega_report.json", rep.to_dict())
    _csv(out / "omega_increments.csv", rep.csv_rows())
    return 0


def cmd_variation(args) -> int:
    from .kernels import KernelFactory
    from .variation import bourgain_search, variation_profile
    cfg = _config(args)
    mesh = _mesh(cfg, args)
    u = _field(cfg, args.field)
    f = KernelFactory(mesh, u, scheme="auto" if mesh.graph.is_flat else "monte_carlo")
    delta = args.delta if args.delta is not None else 2.0 ** -cfg.num("variation", "y_min_exp")
    out = _out(args)
    nodes = None
    if args.action == "bourgain":
        from .geometry import surface_ball
        nodes = surface_ball(mesh, _vector(args.center), args.radius)
    prof = variation_profile(f, u, delta, nodes=nodes,
                             n_walks=int(cfg.num("variation", "n_walks")), seed=cfg.seed)
    _csv(out / "variation_profile.csv", prof.csv_rows())
    if args.action == "bourgain":
        res = bourgain_search(mesh, prof, _vector(args.center), args.radius, u,
                              args.yanchor or cfg.num("variation", "y_anchor"))
        _dump(out / "bourgain.json", res.to_dict())
    return 0


def cmd_measure(args) -> int:
    import math
    from fractions import Fraction
    from .variation import kappa_anchor, nu_approx, pole_measure, scaling_exponent
    cfg = _config(args)
    out = _out(args)
    center = _vector(args.center)
    if args.action == "nu":
        b = _builder(cfg, args, cfg.get("field", "variation_kind"))
        kappa = kappa_anchor(b.mesh, center, cfg.num("variation", "y_anchor"), seed=cfg.seed)
        k_min = round(-math.log2(args.ymin))
        nu = nu_approx(b, kappa, [Fraction(1, 2**k) for k in range(1, k_min + 1)], tol=args.cauchy_tol)
        _dump(out / "nu.json", nu.to_dict())
        _csv(out / "nu_weights.csv", [("node", "x", "mass")] + [
            (i, float(b.mesh.centers[i, 0]), float(w)) for i, w in enumerate(nu.measure.weights)])
        return 0
    from .runner import read_csv
    mesh = _mesh(cfg, args)
    if args.measure:
        from .variation import MeasureOnMesh
        import numpy as np
        rows = read_csv(args.measure)[1:]
        measure = MeasureOnMesh(np.array([r[-1] for r in rows], dtype=float), str(args.measure))
    else:
        measure = pole_measure(mesh)
    fit = scaling_exponent(measure, mesh, center, sorted(_vector(args.radii), reverse=True))
    _dump(out / "exponent.json", fit.to_dict())
    return 0


def cmd_run(args) -> int:
    from .runner import emit_report, run
    cfg = _config(args)
    if args.checks:
        cfg = cfg.with_overrides(**{"run.checks": args.checks})
    out = _out(args)
    report = run(cfg, cache_dir=None if args.no_cache else out / "cache", log=print)
    for p in emit_report(report, out):
        print(p)
    print(report.table(), end="")
    print(f"report hash {report.digest}")
    return 0 if report.passed else 1


def cmd_report(args) -> int:
    from .runner import load_report, render_table
    d = Path(args.dir)
    data = load_report(d / "report.json")
    timings_path = d / "timings.json"
    timings = json.loads(timings_path.read_text()) if timings_path.exists() else {}
    print(render_table(data, timings), end="")
    return 0 if data["passed"] else 1


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="radvar", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None, help="root seed (overrides the config)")
    p.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP threads")
    p.add_argument("--out", default="radvar-out", help="output directory")
    p.add_argument("--config", default=None, help="INI experiment config")
    sub = p.add_subparsers(dest="command", required=True)

    def mesh_flags(q):
        q.add_argument("--graph", help="graph JSON file")
        q.add_argument("--mesh", help="mesh JSON file (skips construction)")
        q.add_argument("--rtrunc", type=float)
        q.add_argument("--resolution", type=float)
        q.add_argument("--walks", type=int)

    q = sub.add_parser("geometry", help="build and save a boundary mesh")
    mesh_flags(q)
    q.set_defaults(func=cmd_geometry)

    q = sub.add_parser("harmonic", help="harmonic measure estimates")
    q.add_argument("action", choices=["estimate-measure", "oracle-compare"])
    q.add_argument("--pole", help="comma separated pole coordinates")
    mesh_flags(q)
    q.set_defaults(func=cmd_harmonic)

    q = sub.add_parser("kernels", help="build one discrete kernel")
    q.add_argument("action", choices=["build"])
    q.add_argument("--kind", required=True, choices=["k", "c", "b", "b_delta", "omega_tilde"])
    q.add_argument("--y", type=float)
    q.add_argument("--segment", help="a,b (fractions allowed)")
    q.add_argument("--epsilon", type=float)
    q.add_argument("--n-quad", type=int, default=1)
    q.add_argument("--scheme", default="auto", choices=["auto", "oracle", "semigroup", "monte_carlo"])
    mesh_flags(q)
    q.set_defaults(func=cmd_kernels)

    q = sub.add_parser("partitions", help="exact partition tools")
    q.add_argument("action", choices=["counterexample", "certify"])
    q.add_argument("file", nargs="?")
    q.add_argument("--A", type=int, default=2)
    q.add_argument("--lambda", dest="lam", default="2")
    q.add_argument("--segment", default="0,1")
    q.set_defaults(func=cmd_partitions)

    q = sub.add_parser("omega", help="omega_Delta with its convergence report")
    q.add_argument("action", choices=["build"])
    q.add_argument("--segment", required=True)
    q.add_argument("--epsilon", type=float)
    q.add_argument("--tol", type=float)
    q.add_argument("--depth", type=int, help="maximal dyadic depth")
    q.add_argument("--independence", action="store_true")
    mesh_flags(q)
    q.set_defaults(func=cmd_omega)

    q = sub.add_parser("variation", help="radial variation profiles")
    q.add_argument("action", choices=["profile", "bourgain"])
    q.add_argument("--delta", type=float)
    q.add_argument("--field", choices=["pole", "hat", "constant"])
    q.add_argument("--center", default="0")
    q.add_argument("--radius", type=float, default=0.1)
    q.add_argument("--yanchor", type=float)
    mesh_flags(q)
    q.set_defaults(func=cmd_variation)

    q = sub.add_parser("measure", help="limit measure and scaling exponent")
    q.add_argument("action", choices=["nu", "exponent"])
    q.add_argument("--epsilon", type=float)
    q.add_argument("--tol", type=float)
    q.add_argument("--ymin", type=float, default=2.0**-7)
    q.add_argument("--cauchy-tol", type=float, default=1e-2)
    q.add_argument("--center", default="0")
    q.add_argument("--radii", default="0.25,0.125,0.0625,0.03125,0.015625")
    q.add_argument("--measure", help="CSV of cell masses (last column); pole measure if absent")
    mesh_flags(q)
    q.set_defaults(func=cmd_measure)

    q = sub.add_parser("run", help="run the configured checks and write a report")
    q.add_argument("--checks", help="comma separated subset of checks")
    q.add_argument("--no-cache", action="store_true")
    q.set_defaults(func=cmd_run)

    q = sub.add_parser("report", help="print the table of a saved report")
    q.add_argument("dir")
    q.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        for var in THREAD_VARS:
            os.environ[var] = str(args.threads)
    from .errors import RadvarError
    try:
        return args.func(args)
    except RadvarError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

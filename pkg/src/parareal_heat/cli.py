"""Command-line entry point.

    parareal-heat run --preset fig1 [--workers 4] [--out results] [--max-iter 12]
    parareal-heat run --config my_run.json [--workers 4]
    parareal-heat mesh --w 0.2 --target-h 0.08 --out mesh.txt
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigurationError, PararealHeatError, SolverError
from .experiments import PRESETS, load_config, preset, run_experiment
from .mesh import StripGeometry, build_strip_mesh, mesh_width_stats, refine_uniform, write_mesh

EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_IO = 4

log = logging.getLogger("parareal_heat")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parareal-heat", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a preset campaign or a JSON-configured experiment")
    src = run_p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESETS))
    src.add_argument("--config", metavar="PATH", help="flat JSON file with ExperimentConfig fields")
    run_p.add_argument("--workers", type=int, help="threads for concurrent fine propagations")
    run_p.add_argument("--out", help="output directory for CSV and metadata files")
    run_p.add_argument("--max-iter", type=int, dest="max_iter", help="number of Parareal iterations")

    mesh_p = sub.add_parser("mesh", help="write a strip mesh as plain text")
    mesh_p.add_argument("--w", type=float, default=0.2)
    mesh_p.add_argument("--x0", type=float, default=None)
    mesh_p.add_argument("--target-h", type=float, default=0.08, dest="target_h")
    mesh_p.add_argument("--refinements", type=int, default=0)
    mesh_p.add_argument("--out", required=True)
    return parser


def _run(args) -> int:
    configs = preset(args.preset) if args.preset else [load_config(args.config)]
    overrides = {k: getattr(args, k) for k in ("workers", "out", "max_iter") if getattr(args, k) is not None}
    configs = [c.replace(**overrides) for c in configs]
    for cfg in configs:
        cfg.validate()
    for cfg in configs:
        res = run_experiment(cfg)
        line = f"{res.csv_path}  dofs={res.dofs}  d0={res.state.defects[0]:.3e}  d_final={res.state.defects[-1]:.3e}"
        if res.sigma_max is not None:
            line += f"  sigma_max={res.sigma_max:.6f}"
        print(line, flush=True)
    return 0


def _mesh(args) -> int:
    mesh = build_strip_mesh(StripGeometry(args.w, args.x0), args.target_h)
    for _ in range(args.refinements):
        mesh = refine_uniform(mesh)
    write_mesh(mesh, args.out)
    h_min, h_max = mesh_width_stats(mesh)
    print(f"{args.out}: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles, h in [{h_min:.4f}, {h_max:.4f}]")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _run(args)
        return _mesh(args)
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigurationError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PararealHeatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

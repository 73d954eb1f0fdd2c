"""Command line interface (``mpcpart``)."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .errors import (CorruptFile, DepthExceeded, DomainNotCovered, NonConvergence,
                     PartitionError, VersionMismatch)
from .problem import ToleranceConfig

EXIT_OK, EXIT_ERROR, EXIT_NOT_COVERED, EXIT_NONCONVERGENCE, EXIT_IO = 0, 1, 2, 3, 4


def resolve_problem(name: str):
    from .problems import cwh, toy

    builtin = {
        "toy_a": toy.toy_a,
        "toy_b": toy.toy_b,
        "toy_b_enlarged": toy.toy_b_enlarged,
        "toy_zero_overlap": toy.toy_zero_overlap,
        "toy_constant": toy.toy_constant,
        "cwh": cwh.cwh,
    }
    if name in builtin:
        return builtin[name]()
    if os.path.exists(name):
        from .problem_io import load_problem

        return load_problem(name)
    raise SystemExit(f"unknown problem {name!r} (built-ins: {', '.join(builtin)})")


def _theta(text: str) -> np.ndarray:
    return np.array([float(t) for t in text.replace(" ", "").split(",") if t])


def _tolerances(args) -> ToleranceConfig:
    return ToleranceConfig(eps_a=args.eps_a, eps_r=args.eps_r, max_depth=args.max_depth)


def cmd_partition(args) -> int:
    from .phase2 import RefineConfig, partition
    from .storage import save

    template = resolve_problem(args.problem)
    tol = _tolerances(args)
    tree = partition(template, RefineConfig(args.mode, tol, args.workers))
    out = args.out or f"{template.label or 'tree'}_{args.mode}.mpt"
    nbytes = save(tree, out, args.model)
    progress = args.progress_csv or os.path.splitext(out)[0] + ".progress.csv"
    tree.progress.write_csv(progress)
    st = tree.stats()
    print(f"tree: {out} ({nbytes} bytes, {args.model})")
    print(f"progress: {progress}")
    print(f"tau={st.tau} lambda={st.lam} vertices={st.vertex_count} "
          f"time={tree.meta['phase1_time'] + st.wall_time:.3f}s")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .runtime import control, eval_explicit, eval_semi_explicit
    from .storage import load

    tree = load(args.tree)
    if args.theta is not None:
        thetas = [_theta(args.theta)]
    else:
        with open(args.theta_file) as fh:
            thetas = [_theta(line) for line in fh if line.strip()]
    template = None
    if tree.mode != "explicit" or args.problem:
        template = resolve_problem(args.problem or tree.meta["label"])
    tol = ToleranceConfig(eps_a=max(tree.meta.get("eps_a", 0.0), 1e-12))
    for th in thetas:
        if tree.mode == "explicit":
            res = eval_explicit(tree, th)
            u = res.x if template is None else control(template, res.x)
        else:
            res = eval_semi_explicit(tree, template, th, tol)
            u = None if res.x is None else control(template, res.x)
        delta = "".join(map(str, res.delta))
        ctrl = "infeasible" if u is None else ",".join(f"{v:.9g}" for v in np.atleast_1d(u))
        value = "" if res.value is None else f" value={res.value:.9g}"
        print(f"theta={','.join(f'{v:g}' for v in th)} delta={delta} control={ctrl}{value}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .problems.cwh import CwhConfig, cwh
    from .sim import (explicit_controller, implicit_controller, semi_explicit_controller,
                      simulate_closed_loop)
    from .storage import load

    if args.problem != "cwh":
        raise SystemExit("simulate supports the cwh problem only")
    template = cwh()
    tol = ToleranceConfig(eps_a=1.0)
    if args.tree:
        tree = load(args.tree)
        if tree.mode == "explicit":
            ctrl = explicit_controller(tree, template)
        else:
            ctrl = semi_explicit_controller(tree, template, tol)
    else:
        ctrl = implicit_controller(template, tol)
    traj = simulate_closed_loop(ctrl, _theta(args.x0), args.steps, CwhConfig(),
                                args.disturbance, args.seed)
    if args.out:
        traj.write_csv(args.out)
    print(f"fuel={traj.fuel:.9g} steps={args.steps} out_of_domain={len(traj.out_of_domain)} "
          f"infeasible={len(traj.infeasible)}")
    return EXIT_OK


def _sweep(args):
    from .bench import bench_sweep
    from .problems.cwh import TABLE_SETTINGS

    if args.problem != "cwh":
        raise SystemExit("bench supports the cwh problem only")
    if not 1 <= args.eps_list <= len(TABLE_SETTINGS):
        raise SystemExit(f"--eps-list must be between 1 and {len(TABLE_SETTINGS)}")
    return bench_sweep(TABLE_SETTINGS[:args.eps_list], queries=args.queries, seed=args.seed,
                       workers=args.workers, max_depth=args.max_depth)


def cmd_bench(args) -> int:
    from .bench import psi_fit, write_bench_csv

    result = _sweep(args)
    write_bench_csv(result, args.out)
    for r in result.rows:
        print(f"{r.mode:9s} s={r.s:<5g} eps_a={r.eps_a:.4g} eps_r={r.eps_r:<5g} tau={r.tau:<3d} "
              f"lambda={r.lam:<7d} t_solve={r.t_solve:.2f}s t_query={r.t_query_median:.2e}s "
              f"bytes={r.bytes}")
    if len(result.rows) > 2:
        slope, _ = psi_fit([r for r in result.rows if r.mode == "semi"])
        print(f"tau vs log(1/psi) slope: {slope:.3f}")
    print(f"report: {args.out}")
    return EXIT_OK


def cmd_export(args) -> int:
    from .bench import export_convergence, export_fuel, export_query_times, fuel_study

    result = _sweep(args)
    os.makedirs(args.out_dir, exist_ok=True)
    export_convergence(result, os.path.join(args.out_dir, "convergence.csv"))
    export_query_times(result, os.path.join(args.out_dir, "query_times.csv"))
    export_fuel(fuel_study(result, seeds=range(args.seeds)), os.path.join(args.out_dir, "fuel.csv"))
    print(f"plot data written to {args.out_dir}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    from .storage import field_count_size, load, reference_size

    tree = load(args.tree)
    st = tree.stats()
    m = tree.meta["m"]
    n_hat = len(tree.meta["output_index"])
    info = {
        "label": tree.meta["label"], "mode": tree.mode, "model": tree.meta["model"],
        "p": tree.p, "m": m, "n_hat": n_hat, "eps_a": tree.meta["eps_a"],
        "eps_r": tree.meta["eps_r"], "tau": st.tau, "lambda": st.lam,
        "vertices": st.vertex_count, "bytes": os.path.getsize(args.tree),
        "field_count_bytes": field_count_size(tree, tree.meta["model"]),
        "reference_bytes": reference_size(st.lam, tree.p, m, n_hat, tree.meta["model"], tree.mode),
        "leaf_volume": tree.leaf_volume_sum(),
    }
    print(json.dumps(info, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mpcpart", description="Simplicial partitions for "
                                 "semi-explicit and explicit mixed-integer MPC.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, problem_default=None):
        p.add_argument("--problem", default=problem_default)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("partition", help="build a partition and save it")
    common(p, "toy_a")
    p.add_argument("--eps-a", type=float, default=0.0)
    p.add_argument("--eps-r", type=float, default=0.0)
    p.add_argument("--mode", choices=("semi", "explicit"), default="semi")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-depth", type=int, default=40)
    p.add_argument("--model", choices=("M1", "M2"), default="M1")
    p.add_argument("--out")
    p.add_argument("--progress-csv")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("eval", help="query a saved partition")
    common(p)
    p.add_argument("--tree", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--theta")
    g.add_argument("--theta-file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="closed-loop run of the station-keeping problem")
    common(p, "cwh")
    p.add_argument("--tree", help="saved partition (default: implicit enumeration)")
    p.add_argument("--x0", default="5,0.5")
    p.add_argument("--steps", type=int, default=30)
    p.add_argument("--disturbance", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    for name, func, helptext in (("bench", cmd_bench, "tolerance sweep report"),
                                 ("export-plot-data", cmd_export, "CSV data for plots")):
        p = sub.add_parser(name, help=helptext)
        common(p, "cwh")
        p.add_argument("--eps-list", type=int, default=2,
                       help="number of tolerance settings to run, coarsest first")
        p.add_argument("--queries", type=int, default=200)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--max-depth", type=int, default=40)
        if name == "bench":
            p.add_argument("--out", default="bench.csv")
        else:
            p.add_argument("--out-dir", default="plot-data")
            p.add_argument("--seeds", type=int, default=5)
        p.set_defaults(func=func)

    p = sub.add_parser("inspect", help="summary of a saved partition")
    p.add_argument("--tree", required=True)
    p.set_defaults(func=cmd_inspect)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DomainNotCovered as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_COVERED
    except (NonConvergence, DepthExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (OSError, CorruptFile, VersionMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PartitionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: parse inputs, run pipelines, emit artifacts.

Every run writes its artifacts plus exactly one run_manifest.json
capturing the resolved command, parameters, input digests, package
versions, and wall time.  Artifacts are byte-deterministic for a fixed
manifest; the manifest itself carries the (varying) wall time.

Exit codes: 0 success, 2 contract violation, 3 input error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import __version__
from .errors import ContractViolation, InputError
from .rational import rational_to_json


def _fraction_arg(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as e:
        raise argparse.ArgumentTypeError(f"not an exact rational: {text!r}") from e


def _point_arg(text: str) -> list[Fraction]:
    return [_fraction_arg(tok) for tok in text.split(",")]


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as e:
        raise InputError(f"input file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise InputError(
            f"malformed JSON in {path} at line {e.lineno}, column {e.colno}: {e.msg}"
        ) from e


def _digest(path: str) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            h.update(fh.read())
    except FileNotFoundError as e:
        raise InputError(f"input file not found: {path}") from e
    return h.hexdigest()


def _json_bytes(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


class Run:
    """Artifact collector plus manifest bookkeeping for one command."""

    def __init__(self, args):
        self.args = args
        self.out = Path(getattr(args, "out", ".") or ".")
        self.artifacts: dict[str, str] = {}
        self.inputs: dict[str, str] = {}
        self.t0 = time.time()

    def add_input(self, path: str):
        self.inputs[path] = _digest(path)

    def add(self, name: str, content: str):
        self.artifacts[name] = content

    def finish(self, parameters: dict) -> int:
        self.out.mkdir(parents=True, exist_ok=True)
        for name, content in self.artifacts.items():
            (self.out / name).write_text(content)
        manifest = {
            "command": sys.argv[1:] if self.args.argv is None else self.args.argv,
            "subcommand": self.args.command,
            "inputs": self.inputs,
            "outputs": sorted(self.artifacts),
            "parameters": parameters,
            "seed": getattr(self.args, "seed", 0),
            "versions": {
                "selectorkit": __version__,
                "python": sys.version.split()[0],
            },
            "wall_time_s": round(time.time() - self.t0, 6),
        }
        (self.out / "run_manifest.json").write_text(_json_bytes(manifest))
        return 0


# ---------------------------------------------------------------------------
# subcommands


def cmd_reduce(args) -> int:
    from .setalg import countable_reduction, sequence_from_json, sequence_to_json

    run = Run(args)
    run.add_input(args.sets)
    xs = sequence_from_json(_load_json(args.sets))
    ks = countable_reduction(xs)
    flat = [p for it in ks.items for p in it.parts]
    disjoint = all(
        not flat[i].intersects(flat[j])
        for i in range(len(flat))
        for j in range(i + 1, len(flat))
    )
    report = {
        "items": len(xs.items),
        "input_measure_sum": rational_to_json(xs.measure()),
        "reduced_measure_sum": rational_to_json(ks.measure()),
        "pairwise_disjoint": disjoint,
        "subset_of_originals": all(
            k.issubset(j) for j, k in zip(xs.items, ks.items)
        ),
    }
    run.add("reduced.json", _json_bytes(sequence_to_json(ks)))
    run.add("reduction_report.json", _json_bytes(report))
    print(f"reduced {len(xs.items)} sets; disjoint={disjoint}")
    return run.finish({"sets": args.sets})


def cmd_extract(args) -> int:
    from .selector import chain_to_json, extract, selector_csv
    from .svf import cellwise_svf_from_json

    run = Run(args)
    run.add_input(args.svf)
    svf = cellwise_svf_from_json(_load_json(args.svf))
    chain = extract(svf, args.n, args.dom_budget)
    run.add("chain.json", _json_bytes(chain_to_json(chain)))
    if svf.alpha == 1:
        lo, hi = svf.domain_box.lo[0], svf.domain_box.hi[0]
        pts = [[lo + (hi - lo) * Fraction(i, 256)] for i in range(257)]
        run.add("selector_section.csv", selector_csv(chain, pts))
    print(
        f"extracted chain to level {args.n}; certified error "
        f"{chain.final_error_bound} (normalized range units)"
    )
    return run.finish(
        {
            "svf": args.svf,
            "n": args.n,
            "dom_budget": str(args.dom_budget),
        }
    )


def cmd_eval(args) -> int:
    from .selector import chain_from_json, eval_selector

    run = Run(args)
    run.add_input(args.chain)
    chain = chain_from_json(_load_json(args.chain))
    res = eval_selector(chain, args.at, args.dom_budget)
    if res.defined:
        text = ", ".join(str(c) for c in res.value)
        print(text)
        payload = {
            "point": [str(c) for c in args.at],
            "value": [rational_to_json(c) for c in res.value],
            "value_float": list(res.as_floats()),
        }
    else:
        print(f"undefined ({res.reason})")
        payload = {"point": [str(c) for c in args.at], "undefined": res.reason}
    run.add("eval.json", _json_bytes(payload))
    return run.finish(
        {"chain": args.chain, "at": [str(c) for c in args.at]}
    )


def cmd_solve_di(args) -> int:
    from .inclusion import filippov_iterate, problem_from_json, trajectory_csv

    run = Run(args)
    run.add_input(args.problem)
    prob, solver = problem_from_json(_load_json(args.problem))
    traj = filippov_iterate(prob, **solver)
    run.add("trajectory.csv", trajectory_csv(traj))
    cert = {
        "field": prob.name,
        "delta": prob.delta,
        "iterations": traj.iterations,
        "residuals": traj.residuals,
        "converged": traj.converged,
        "certified": traj.certified,
        "tube_margin": traj.tube_margin,
    }
    run.add("certificate.json", _json_bytes(cert))
    status = "certified" if traj.certified else "NOT certified"
    print(
        f"{prob.name}: {traj.iterations} iterations, residual "
        f"{traj.residuals[-1]:.3e}, {status}"
    )
    return run.finish({"problem": args.problem, **solver})


def cmd_robot_sim(args) -> int:
    from .robot import SimConfig, gnuplot_script, sim_csv, simulate

    run = Run(args)
    chain = None
    if args.controller == "selector":
        from .robot import export_svf
        from .selector import extract

        svf = export_svf(box_halfwidth=2.0, resolution=args.res)
        chain = extract(svf, args.n)
    cfg = SimConfig(
        controller=args.controller,
        x0=tuple(float(c) for c in args.x0),
        T=args.T,
        dt_control=args.dt,
    )
    result = simulate(cfg, chain=chain)
    run.add("sim.csv", sim_csv(result))
    run.add("sim_metadata.json", _json_bytes(result.metadata()))
    if args.plot_script:
        run.add("plot.gp", gnuplot_script("sim.csv", "sim"))
    meta = result.metadata()
    print(
        f"{args.controller}: terminal sup-norm "
        f"{meta['terminal_sup_norm']:.4f}, V(T) = {meta['terminal_clf']:.4f}, "
        f"control TV = {meta['control_total_variation']:.2f}"
    )
    return run.finish(
        {
            "controller": args.controller,
            "x0": [str(c) for c in args.x0],
            "T": args.T,
            "dt": args.dt,
            "res": str(args.res),
            "n": args.n,
        }
    )


def cmd_robot_export(args) -> int:
    import numpy as np

    from .robot import export_svf

    run = Run(args)
    svf = export_svf(box_halfwidth=float(args.box), resolution=args.res)
    payload = {
        "grid_shape": list(svf.grid.shape),
        "box_halfwidth": float(args.box),
        "resolution": str(args.res),
        "tau": svf.tau,
        "range_lo": [float(c) for c in svf.range_map.lo],
        "range_hi": [float(c) for c in svf.range_map.hi],
        "meta": {k: v for k, v in svf.meta.items() if not k.startswith("_")},
        "nets": [np.asarray(n).tolist() for n in svf.nets],
    }
    run.add("robot_svf.json", _json_bytes(payload))
    print(
        f"exported {svf.grid.n_cells} cells, tau = {svf.tau:.5f} "
        f"(admits n <= {max(k for k in range(2, 16) if svf.tau <= 2.0 ** -(k + 1))})"
    )
    return run.finish({"res": str(args.res), "box": str(args.box)})


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="selectorkit",
        description="Constructive measurable-selector toolkit",
    )
    p.add_argument("--out", default=".", help="artifact output directory")
    p.add_argument("--seed", type=int, default=0, help="recorded RNG seed")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("reduce", help="countable reduction of a set sequence")
    q.add_argument("sets", help="SetSequence JSON file")
    q.set_defaults(fn=cmd_reduce)

    q = sub.add_parser("extract", help="selector extraction from a cellwise SVF")
    q.add_argument("svf", help="cellwise SVF JSON file")
    q.add_argument("--n", type=int, default=4, help="precision level (error 2^-n)")
    q.add_argument(
        "--dom-budget",
        type=_fraction_arg,
        default=Fraction(1, 16),
        help="domain-loss witness budget",
    )
    q.set_defaults(fn=cmd_extract)

    q = sub.add_parser("eval", help="evaluate an extracted chain")
    q.add_argument("chain", help="chain JSON file")
    q.add_argument("--at", type=_point_arg, required=True, help="point, comma-sep")
    q.add_argument("--dom-budget", type=_fraction_arg, default=None)
    q.set_defaults(fn=cmd_eval)

    q = sub.add_parser("solve-di", help="Filippov iteration for an inclusion")
    q.add_argument("problem", help="problem JSON file")
    q.set_defaults(fn=cmd_solve_di)

    r = sub.add_parser("robot", help="three-wheel robot case study")
    rsub = r.add_subparsers(dest="robot_command", required=True)

    q = rsub.add_parser("sim", help="closed-loop simulation")
    q.add_argument("--controller", choices=["analytic", "selector"], required=True)
    q.add_argument("--x0", type=_point_arg, default=[1, 1, 1])
    q.add_argument("--T", type=float, default=10.0)
    q.add_argument("--dt", type=float, default=0.01)
    q.add_argument("--res", type=_fraction_arg, default=Fraction(4, 33))
    q.add_argument("--n", type=int, default=4)
    q.add_argument("--plot-script", action="store_true")
    q.set_defaults(fn=cmd_robot_sim)

    q = rsub.add_parser("export-svf", help="export the subgradient SVF")
    q.add_argument("--res", type=_fraction_arg, default=Fraction(4, 33))
    q.add_argument("--box", type=_fraction_arg, default=Fraction(2))
    q.set_defaults(fn=cmd_robot_export)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        return args.fn(args)
    except InputError as e:
        print(f"input error: {e}", file=sys.stderr)
        return 3
    except ContractViolation as e:
        print(f"contract violation: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

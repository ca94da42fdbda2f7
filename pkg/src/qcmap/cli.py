"""Command-line front end.

Subcommands: solve (JSON), cmap / simulate / ode (CSV), validate-graph.
Exit codes: 0 success, 1 solver or validation failure, 2 usage error.
Failures emit a JSON envelope {error, message, context} on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import __version__
from .activations import TReLU, parse_activation
from .errors import QcmapError, UnattainableTargetError
from .finite_width import InitScheme, SimConfig, run_simulation, theory_trace
from .kernel_maps import LocalMapParams, default_rule, local_c, lrelu_c_map
from .netgraph import (
    NetworkGraph,
    build_rescaled_resnet,
    build_vanilla,
    eval_U,
    load_graph_json,
    validate_graph,
)
from .ode_limit import find_T, integrate_psi
from .solvers import eoc_lrelu, solve_dks, solve_eoc_smooth, solve_tat_lrelu, solve_tat_smooth

__all__ = ["main", "run"]


def _parse_graph(spec: str) -> NetworkGraph:
    kind, _, rest = spec.partition(":")
    if kind == "vanilla":
        return build_vanilla(int(rest))
    if kind == "resnet":
        parts = rest.split(":")
        if len(parts) < 2:
            raise ValueError("resnet graph spec needs resnet:<blocks>:<w>[:transitions]")
        blocks, w = int(parts[0]), float(parts[1])
        transitions = len(parts) > 2 and parts[2] == "transitions"
        return build_rescaled_resnet(
            blocks, w, with_transitions=transitions, final_nonlinear=transitions
        )
    if kind == "file":
        return load_graph_json(rest)
    raise ValueError(f"unknown graph spec: {spec!r}")


def _emit_error(code: str, message: str, context: dict | None = None) -> None:
    envelope = {"error": code, "message": message, "context": context or {}}
    print(json.dumps(envelope), file=sys.stderr)


def _open_output(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _cmd_solve(args) -> int:
    graph = _parse_graph(args.graph) if args.graph else None
    if args.method == "tat-lrelu":
        if args.eta is None:
            raise ValueError("tat-lrelu requires --eta")
        solution = solve_tat_lrelu(graph, args.eta)
        payload = solution.to_dict()
        payload["achieved_eta"] = solution.achieved_eta
    elif args.method == "tat-smooth":
        if args.tau is None:
            raise ValueError("tat-smooth requires --tau")
        solution = solve_tat_smooth(graph, parse_activation(args.activation), args.tau)
        payload = solution.to_dict()
    elif args.method == "dks":
        if args.zeta is None:
            raise ValueError("dks requires --zeta")
        solution = solve_dks(graph, parse_activation(args.activation), args.zeta)
        payload = solution.to_dict()
    elif args.method == "eoc":
        act = parse_activation(args.activation)
        if act.smooth:
            solution = solve_eoc_smooth(act, sigma_b=args.sigma_b)
        else:
            solution = eoc_lrelu(getattr(act, "alpha", 0.0))
        payload = solution.to_dict()
        payload["activation"] = args.activation
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(f"unknown method {args.method}")
    out, close = _open_output(args.output)
    json.dump(payload, out, indent=2)
    out.write("\n")
    if close:
        out.close()
    return 0


def _cmd_cmap(args) -> int:
    graph = _parse_graph(args.graph)
    act = parse_activation(args.activation)
    if isinstance(act, TReLU):
        local = lambda c: lrelu_c_map(act.alpha, c)
    else:
        rule = default_rule()
        params = LocalMapParams(act)
        local = lambda c: local_c(params, rule, c, 1.0, 1.0)
    grid = np.linspace(args.start, 1.0, args.points)
    values = eval_U(graph, local, grid)
    out, close = _open_output(args.output)
    writer = csv.writer(out)
    writer.writerow(["c", "C_f"])
    for c, v in zip(grid, np.atleast_1d(values)):
        writer.writerow([f"{c:.12g}", f"{v:.12g}"])
    if close:
        out.close()
    return 0


def _cmd_simulate(args) -> int:
    act = parse_activation(args.activation)
    config = SimConfig(
        width=args.width,
        depth=args.depth,
        trials=args.trials,
        pairs_per_trial=args.pairs,
        seed=args.seed,
        initial_c=args.c0,
    )
    scheme = InitScheme(args.init)
    trace = run_simulation(config, act, scheme)
    if isinstance(act, TReLU):
        local = lambda c: lrelu_c_map(act.alpha, c)
    else:
        rule = default_rule()
        params = LocalMapParams(act)
        local = lambda c: local_c(params, rule, c, 1.0, 1.0)
    theory = theory_trace(local, config.initial_c, config.depth)
    out, close = _open_output(args.output)
    writer = csv.writer(out)
    writer.writerow(["layer_index", "mean_c", "std_c", "mean_q", "theory_c"])
    for layer in range(config.depth + 1):
        writer.writerow([
            layer,
            f"{trace.mean_c[layer]:.12g}",
            f"{trace.std_c[layer]:.12g}",
            f"{trace.mean_q[layer]:.12g}",
            f"{theory[layer]:.12g}",
        ])
    if close:
        out.close()
    return 0


def _cmd_ode(args) -> int:
    if args.eta is not None:
        T = find_T(args.eta)
    elif args.T is not None:
        T = args.T
    else:
        raise ValueError("ode requires --eta or --T")
    solution = integrate_psi(args.c0, T)
    out, close = _open_output(args.output)
    writer = csv.writer(out)
    writer.writerow(["t", "x"])
    for t, x in zip(solution.times, solution.states):
        writer.writerow([f"{t:.12g}", f"{x:.12g}"])
    if close:
        out.close()
    return 0


def _cmd_validate_graph(args) -> int:
    graph = _parse_graph(args.graph)
    validate_graph(graph)
    print(json.dumps({"valid": True, "nodes": graph.num_nodes}))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qcmap",
        description="Q/C map analysis and activation transformation solvers",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    graph_help = "vanilla:<L> | resnet:<blocks>:<w>[:transitions] | file:<path.json>"

    p = sub.add_parser("solve", help="solve for transformation parameters")
    p.add_argument("--method", required=True,
                   choices=["tat-lrelu", "tat-smooth", "dks", "eoc"])
    p.add_argument("--graph", help=graph_help)
    p.add_argument("--activation", default="tanh")
    p.add_argument("--eta", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--zeta", type=float)
    p.add_argument("--sigma-b", type=float, default=0.0)
    p.add_argument("--output", "-o")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("cmap", help="emit the global C map curve as CSV")
    p.add_argument("--graph", required=True, help=graph_help)
    p.add_argument("--activation", required=True)
    p.add_argument("--from", dest="start", type=float, default=-1.0)
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--output", "-o")
    p.set_defaults(func=_cmd_cmap)

    p = sub.add_parser("simulate", help="finite-width Monte-Carlo run, CSV out")
    p.add_argument("--activation", required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=["gaussian", "suo"], default="gaussian")
    p.add_argument("--c0", type=float, default=0.0)
    p.add_argument("--output", "-o")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("ode", help="integrate the depth-limit ODE, CSV out")
    p.add_argument("--eta", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--c0", type=float, default=0.0)
    p.add_argument("--output", "-o")
    p.set_defaults(func=_cmd_ode)

    p = sub.add_parser("validate-graph", help="check graph invariants")
    p.add_argument("--graph", required=True, help=graph_help)
    p.set_defaults(func=_cmd_validate_graph)

    return parser


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else int(e.code or 0)
    try:
        return args.func(args)
    except UnattainableTargetError as err:
        _emit_error("unattainable-target", str(err), {"max_value": err.max_value})
        return 1
    except QcmapError as err:
        _emit_error(type(err).__name__, str(err))
        return 1
    except (ValueError, OSError) as err:
        _emit_error(type(err).__name__, str(err))
        return 1


def main() -> None:  # pragma: no cover - thin wrapper
    sys.exit(run())

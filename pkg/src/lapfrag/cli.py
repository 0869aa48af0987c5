"""Command-line interface.

Exit codes: 0 success, 1 validation/usage error, 2 numeric failure.
Machine-readable output goes to stdout with --json; file artifacts go
under --out. All floats serialize at full double precision.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import NumericError, ValidationError
from .graphs import build_laplacian, gen_banded_path, read_graph, write_graph
from .perturbation import (
    edge_map_to_csv,
    node_map_to_csv,
    parse_scenario,
    profile_to_csv,
    scenario_vectors,
    sensitivity_profile,
    worst_case_edge_map,
    worst_case_node_map,
)
from .frequency import (
    assemble_first_order,
    assemble_second_order,
    default_rect,
    eval_grid,
    grid_sidecar,
    grid_to_csv,
    hinf_norm,
    mask_contours,
    precompute_factorization,
)
from .pipeline import ExperimentSpec, run_experiment
from .simulate import (
    AllPassSpec,
    DelaySpec,
    SimConfig,
    StaticReal,
    oscillation_frequency,
    simulate,
    stability_verdict,
    trajectory_to_csv,
    verdict_to_json,
)
from .smallgain import (
    allpass_destabilizer,
    delay_destabilizer,
    destabilizer_to_json,
    static_destabilizer,
    verify_destabilization,
)
from .spectral import (
    ClassifierParams,
    classify_localization,
    eig_sym,
    eigenvectors_to_csv,
    report_to_json,
)

__all__ = ["main", "dispatch"]


class _Parser(argparse.ArgumentParser):
    """Argparse variant whose usage errors exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _load_graph(args):
    if getattr(args, "graph", None) and getattr(args, "banded", None):
        raise ValidationError("give either --graph or --banded, not both")
    if getattr(args, "graph", None):
        return read_graph(args.graph, format=getattr(args, "format", None))
    if getattr(args, "banded", None):
        n, b = args.banded
        return gen_banded_path(n, b)
    raise ValidationError("a graph source is required (--graph PATH or --banded N B)")


def _classifier_params(args) -> ClassifierParams:
    return ClassifierParams(
        alpha=args.alpha,
        q_max=args.qmax,
        r2_min=args.r2min,
        ipr_min=args.iprmin,
        max_peaks=args.max_peaks,
    )


def _parse_rect(text):
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 4:
        raise ValidationError(f"--rect needs re0,re1,im0,im1, got {text!r}")
    return tuple(parts)


def _parse_grid(text):
    parts = [int(x) for x in text.split(",")]
    if len(parts) != 2:
        raise ValidationError(f"--grid needs NX,NY, got {text!r}")
    return tuple(parts)


def _parse_eps(text):
    try:
        return tuple(float(x) for x in text.split(",") if x != "")
    except ValueError:
        raise ValidationError(f"bad --eps list {text!r}") from None


def _parse_delta(text):
    kind, _, arg = text.partition(":")
    try:
        if kind == "static":
            return StaticReal(float(arg))
        if kind == "delay":
            g, t = arg.split(",")
            return DelaySpec(float(g), float(t))
        if kind == "allpass":
            g, a = arg.split(",")
            return AllPassSpec(float(g), float(a))
    except ValueError:
        pass
    raise ValidationError(
        f"bad --delta {text!r}; expected static:G, delay:GAIN,T or allpass:GAIN,A"
    )


def _assemble(args, L, pv):
    order = getattr(args, "order", "second")
    if order == "second":
        return assemble_second_order(L, pv, args.beta)
    if order in ("first+", "first+L"):
        return assemble_first_order(L, pv, sign=+1)
    if order in ("first-", "first-L"):
        return assemble_first_order(L, pv, sign=-1)
    raise ValidationError(f"unknown --order {order!r}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    g = gen_banded_path(*args.banded)
    if args.out:
        write_graph(g, args.out)
    else:
        sys.stdout.write(f"n {g.n}\n")
        for (i, j, w) in g.edges:
            sys.stdout.write(f"{i} {j} {w!r}\n")
    if args.json:
        _emit({"n": g.n, "edges": g.m, "out": args.out})
    return 0


def cmd_spectrum(args) -> int:
    g = _load_graph(args)
    spectrum = eig_sym(build_laplacian(g))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        eigenvectors_to_csv(spectrum, os.path.join(args.out, "eigenvectors.csv"))
    if args.json:
        _emit(
            {
                "n": spectrum.n,
                "eigenvalues": [float(x) for x in spectrum.eigenvalues],
                "min_gap": spectrum.min_gap,
            }
        )
    return 0


def cmd_localize(args) -> int:
    g = _load_graph(args)
    spectrum = eig_sym(build_laplacian(g))
    report = classify_localization(
        spectrum, g, _classifier_params(args), threads=args.threads
    )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "localization.json"), "w", encoding="utf-8") as fh:
            json.dump(report_to_json(report), fh, indent=2, sort_keys=True)
            fh.write("\n")
        eigenvectors_to_csv(spectrum, os.path.join(args.out, "eigenvectors.csv"))
    if args.json:
        _emit(report_to_json(report))
    return 0


def cmd_sensitivity(args) -> int:
    g = _load_graph(args)
    L = build_laplacian(g)
    spectrum = eig_sym(L)
    node_map = worst_case_node_map(spectrum)
    pairs = [(i, j) for (i, j, _) in g.edges]
    edge_map = worst_case_edge_map(spectrum, pairs)
    profile = None
    if args.scenario:
        scen = parse_scenario(args.scenario)
        profile = sensitivity_profile(spectrum, scen, L)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        node_map_to_csv(node_map, os.path.join(args.out, "node_sensitivity.csv"))
        edge_map_to_csv(pairs, edge_map, os.path.join(args.out, "edge_sensitivity.csv"))
        if profile is not None:
            profile_to_csv(
                spectrum, profile.real, os.path.join(args.out, "profile.csv")
            )
    if args.json:
        out = {
            "node_map": [float(x) for x in node_map],
            "edge_map": [[int(k), int(l), float(v)] for (k, l), v in zip(pairs, edge_map)],
        }
        if profile is not None:
            out["profile"] = [
                {"eigenindex": i, "lambda": float(lam), "value": float(val.real)}
                for i, (lam, val) in enumerate(zip(spectrum.eigenvalues, profile))
            ]
        _emit(out)
    return 0


def cmd_margin(args) -> int:
    g = _load_graph(args)
    L = build_laplacian(g)
    scen = parse_scenario(args.scenario)
    pv = scenario_vectors(scen, L)
    ss = _assemble(args, L, pv)
    norm, wbar = hinf_norm(ss)
    margin = math.inf if norm == 0 else 1.0 / norm
    if args.json:
        _emit({"hinf": norm, "omega_bar": wbar, "margin": margin})
    else:
        sys.stdout.write(f"hinf {norm!r}\nomega_bar {wbar!r}\nmargin {margin!r}\n")
    return 0


def cmd_pspec(args) -> int:
    g = _load_graph(args)
    L = build_laplacian(g)
    scen = parse_scenario(args.scenario)
    pv = scenario_vectors(scen, L)
    ss = _assemble(args, L, pv)
    fact = precompute_factorization(ss)
    spectrum = eig_sym(L)
    rect = args.rect if args.rect else default_rect(spectrum, args.beta)
    nx, ny = args.grid
    grid = eval_grid(ss, rect, nx, ny, args.eps, fact=fact, log_imag=args.log_imag)
    margin = omega_bar = None
    try:
        norm, omega_bar = hinf_norm(ss, fact)
        margin = math.inf if norm == 0 else 1.0 / norm
    except ValidationError:
        pass  # +L variant has no finite margin
    side = grid_sidecar(grid, margin=margin, omega_bar=omega_bar)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        grid_to_csv(grid, os.path.join(args.out, "pspec.csv"))
        with open(os.path.join(args.out, "pspec.json"), "w", encoding="utf-8") as fh:
            json.dump(side, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if args.contours:
            contours = {
                repr(float(e)): mask_contours(grid, e) for e in grid.epsilons
            }
            with open(os.path.join(args.out, "contours.json"), "w", encoding="utf-8") as fh:
                json.dump(contours, fh, sort_keys=True)
                fh.write("\n")
    if args.json:
        _emit(side)
    return 0


def cmd_destabilize(args) -> int:
    g = _load_graph(args)
    L = build_laplacian(g)
    scen = parse_scenario(args.scenario)
    pv = scenario_vectors(scen, L)
    ss = assemble_second_order(L, pv, args.beta)
    fact = precompute_factorization(ss)
    maker = {
        "static": static_destabilizer,
        "delay": delay_destabilizer,
        "allpass": allpass_destabilizer,
    }[args.kind]
    dest = maker(ss, fact)
    verification = None
    if args.verify:
        verification = verify_destabilization(ss, dest, fact=fact)
    payload = destabilizer_to_json(dest, verification)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "destabilizer.json"), "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if args.json:
        _emit(payload)
    return 0


def cmd_simulate(args) -> int:
    g = _load_graph(args)
    L = build_laplacian(g)
    pv = None
    delta = None
    if args.scenario:
        pv = scenario_vectors(parse_scenario(args.scenario), L)
    if args.delta:
        delta = _parse_delta(args.delta)
    rng = np.random.default_rng(args.seed)
    if args.ic == "random":
        theta0 = rng.standard_normal(g.n) * 1e-2
        theta0 -= theta0.mean()
    else:
        theta0 = np.zeros(g.n)
    cfg = SimConfig(
        L=L,
        beta=args.beta,
        theta0=theta0,
        omega0=np.zeros(g.n),
        t_final=args.tfinal,
        pv=pv,
        delta=delta,
        h=args.h,
    )
    traj = simulate(cfg)
    verdict = stability_verdict(traj)
    out = verdict_to_json(verdict)
    if verdict.kind == "growing" and traj.output is not None:
        out["frequency"] = oscillation_frequency(traj)
    out["truncated"] = traj.truncated
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        trajectory_to_csv(traj, os.path.join(args.out, "trajectory.csv"), decimate=args.decimate)
        with open(os.path.join(args.out, "verdict.json"), "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if args.json:
        _emit(out)
    return 0


def cmd_experiment(args) -> int:
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            spec = ExperimentSpec.from_json(json.load(fh))
        if args.outdir:
            spec.outdir = args.outdir
    else:
        if not (args.banded or args.graph):
            raise ValidationError("experiment needs --spec FILE or a graph source")
        spec = ExperimentSpec(
            banded=tuple(args.banded) if args.banded else None,
            graph_path=args.graph,
            beta=args.beta,
            kinds=tuple(args.kinds.split(",")) if args.kinds else ("global-node", "edge"),
            rect=args.rect,
            grid=args.grid,
            epsilons=args.eps,
            outdir=args.outdir or "experiment-out",
            seed=args.seed,
            classifier=_classifier_params(args),
            threads=args.threads,
        )
    summary = run_experiment(spec)
    if args.plots:
        from .report import render_experiment

        render_experiment(spec.outdir)
    if args.json:
        _emit(summary.to_json())
    return 0


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------

def _add_graph_opts(p, banded_meta=("N", "B")):
    p.add_argument("--graph", help="edge-list or Matrix Market file")
    p.add_argument("--format", choices=["edge-list", "matrix-market"], default=None)
    p.add_argument(
        "--banded", nargs=2, type=int, metavar=banded_meta, help="banded path graph"
    )


def _add_classifier_opts(p):
    p.add_argument("--alpha", type=float, default=0.5, help="peak-set threshold")
    p.add_argument("--qmax", type=float, default=0.8, help="max decay ratio")
    p.add_argument("--r2min", type=float, default=0.5, help="min fit quality")
    p.add_argument("--iprmin", type=float, default=None, help="IPR floor (default 10/n)")
    p.add_argument("--max-peaks", type=int, default=4, help="max peak-set size")


def _add_common(p):
    p.add_argument("--json", action="store_true", help="JSON to stdout")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="lapfrag", description=__doc__)
    parser.add_argument("--version", action="version", version=f"lapfrag {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a banded path graph")
    p.add_argument("--banded", nargs=2, type=int, metavar=("N", "B"), required=True)
    p.add_argument("--out", help="output file (edge list or .mtx)")
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("spectrum", help="eigendecompose the Laplacian")
    _add_graph_opts(p)
    p.add_argument("--out", help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("localize", help="classify localized eigenvectors")
    _add_graph_opts(p)
    _add_classifier_opts(p)
    p.add_argument("--out", help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("sensitivity", help="worst-case sensitivity maps")
    _add_graph_opts(p)
    p.add_argument("--scenario", help="also emit a per-eigenvalue profile")
    p.add_argument("--out", help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("margin", help="H-infinity norm and robust margin")
    _add_graph_opts(p)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--scenario", required=True)
    p.add_argument("--order", default="second", choices=["second", "first+", "first-"])
    _add_common(p)
    p.set_defaults(func=cmd_margin)

    p = sub.add_parser("pspec", help="pseudospectrum grid")
    _add_graph_opts(p)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--scenario", required=True)
    p.add_argument("--order", default="second", choices=["second", "first+", "first-"])
    p.add_argument("--rect", type=_parse_rect, default=None)
    p.add_argument("--grid", type=_parse_grid, default=(120, 90))
    p.add_argument("--eps", type=_parse_eps, default=(0.2, 1.0))
    p.add_argument("--log-imag", action="store_true")
    p.add_argument("--contours", action="store_true")
    p.add_argument("--out", help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_pspec)

    p = sub.add_parser("destabilize", help="synthesize a margin-critical perturbation")
    _add_graph_opts(p)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--scenario", required=True)
    p.add_argument("--kind", default="delay", choices=["static", "delay", "allpass"])
    p.add_argument("--verify", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out", help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_destabilize)

    p = sub.add_parser("simulate", help="time-domain integration")
    _add_graph_opts(p)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--scenario", help="perturbation channel")
    p.add_argument("--delta", help="static:G | delay:GAIN,T | allpass:GAIN,A")
    p.add_argument("--tfinal", type=float, default=100.0)
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--ic", default="random", choices=["random", "zero"])
    p.add_argument("--decimate", type=int, default=1)
    p.add_argument("--out", help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="run the full pipeline")
    _add_graph_opts(p)
    p.add_argument("--spec", help="experiment spec JSON file")
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--kinds", help="comma list: global-node,edge,local-node,local-reciprocal")
    p.add_argument("--rect", type=_parse_rect, default=None)
    p.add_argument("--grid", type=_parse_grid, default=(120, 90))
    p.add_argument("--eps", type=_parse_eps, default=(0.2, 1.0))
    p.add_argument("--outdir", help="output directory")
    p.add_argument("--plots", action="store_true", help="render figures into OUTDIR/figures")
    _add_classifier_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_experiment)

    return parser


def dispatch(argv=None) -> int:
    """Parse arguments and run the chosen command; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return 1
    except SystemExit as exc:  # --version / --help
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except NumericError as exc:
        sys.stderr.write(f"numeric error: {exc}\n")
        return 2


def main() -> None:
    sys.exit(dispatch())

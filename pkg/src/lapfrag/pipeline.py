"""End-to-end experiment orchestration.

One run walks the full chain: localization and region split, worst-case
sensitivity maps, localized/delocalized picks, stability margins,
pseudospectrum grids with RHP clearance, delay destabilization with
time-domain verification. Every stage lands its artifacts in the output
directory and the manifest records provenance. Reruns are byte-identical:
randomness enters only through the seed.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .graphs import Graph, build_laplacian, gen_banded_path, is_connected, read_graph
from .perturbation import (
    Edge,
    GlobalNode,
    LocalNode,
    LocalReciprocal,
    PerturbationScenario,
    edge_map_to_csv,
    node_map_to_csv,
    scenario_vectors,
    worst_case_edge_map,
    worst_case_node_map,
)
from .frequency import (
    assemble_second_order,
    default_rect,
    eval_grid,
    grid_sidecar,
    grid_to_csv,
    hinf_norm,
    precompute_factorization,
    rhp_clearance,
)
from .simulate import DelaySpec, SimConfig, oscillation_frequency, simulate, stability_verdict, trajectory_to_csv
from .smallgain import delay_destabilizer, destabilizer_to_json, verify_destabilization
from .spectral import (
    ClassifierParams,
    classify_localization,
    eig_sym,
    eigenvectors_to_csv,
    report_to_json,
)

__all__ = [
    "ExperimentSpec",
    "ContrastSummary",
    "KindContrast",
    "run_experiment",
    "margin_contrast",
]

_NODE_KINDS = ("global-node", "local-node", "local-reciprocal")


@dataclass
class ExperimentSpec:
    """Declarative description of one experiment run."""

    banded: tuple[int, int] | None = None
    graph_path: str | None = None
    beta: float = 0.1
    kinds: tuple[str, ...] = ("global-node", "edge")
    picks: str = "auto"  # or {"localized": ..., "delocalized": ...} per kind
    explicit_picks: dict | None = None
    rect: tuple[float, float, float, float] | None = None
    grid: tuple[int, int] = (120, 90)
    epsilons: tuple[float, ...] = (0.2, 1.0)
    outdir: str = "experiment-out"
    seed: int = 0
    classifier: ClassifierParams = field(default_factory=ClassifierParams)
    destabilize: bool = True
    sim_t_final: float | None = None
    threads: int | None = None

    def load_graph(self) -> Graph:
        if (self.banded is None) == (self.graph_path is None):
            raise ValidationError("specify exactly one graph source (banded or file)")
        if self.banded is not None:
            return gen_banded_path(*self.banded)
        return read_graph(self.graph_path)

    @classmethod
    def from_json(cls, d: dict) -> "ExperimentSpec":
        src = d.get("graph", {})
        kwargs = {
            "banded": tuple(src["banded"]) if "banded" in src else None,
            "graph_path": src.get("path"),
            "beta": float(d.get("beta", 0.1)),
            "kinds": tuple(d.get("kinds", ["global-node", "edge"])),
            "picks": d.get("picks", "auto"),
            "explicit_picks": d.get("explicit_picks"),
            "rect": tuple(d["rect"]) if d.get("rect") else None,
            "grid": tuple(d.get("grid", [120, 90])),
            "epsilons": tuple(d.get("epsilons", [0.2, 1.0])),
            "outdir": d.get("outdir", "experiment-out"),
            "seed": int(d.get("seed", 0)),
            "destabilize": bool(d.get("destabilize", True)),
            "sim_t_final": d.get("sim_t_final"),
            "threads": d.get("threads"),
        }
        cp = d.get("classifier", {})
        kwargs["classifier"] = ClassifierParams(
            alpha=float(cp.get("alpha", 0.5)),
            q_max=float(cp.get("q_max", 0.8)),
            r2_min=float(cp.get("r2_min", 0.5)),
            ipr_min=cp.get("ipr_min"),
            max_peaks=int(cp.get("max_peaks", 4)),
        )
        return cls(**kwargs)


@dataclass
class KindContrast:
    kind: str
    localized_pick: object
    delocalized_pick: object
    margin_localized: float | None
    margin_delocalized: float | None
    sensitivity_ratio: float
    rhp_reach: dict


@dataclass
class ContrastSummary:
    no_localization: bool
    localized_count: int
    per_kind: dict[str, KindContrast]

    def to_json(self) -> dict:
        return {
            "no_localization": self.no_localization,
            "localized_count": self.localized_count,
            "per_kind": {
                k: {
                    "localized_pick": v.localized_pick,
                    "delocalized_pick": v.delocalized_pick,
                    "margin_localized": v.margin_localized,
                    "margin_delocalized": v.margin_delocalized,
                    "sensitivity_ratio": v.sensitivity_ratio,
                    "rhp_reach": v.rhp_reach,
                }
                for k, v in sorted(self.per_kind.items())
            },
        }


def _node_scenario(kind: str, k: int) -> PerturbationScenario:
    return {
        "global-node": GlobalNode,
        "local-node": LocalNode,
        "local-reciprocal": LocalReciprocal,
    }[kind](k)


def _median_pick(candidates: np.ndarray, values: np.ndarray):
    """Element of `candidates` whose value sits at the median rank."""
    order = np.argsort(values, kind="stable")
    return candidates[order[order.size // 2]]


def margin_contrast(
    L, beta: float, scenario_localized, scenario_delocalized
) -> tuple[float, float]:
    """Robust margins of the second-order assemblies for two scenario picks."""
    m_loc = _margin_for(L, beta, scenario_localized)
    m_del = _margin_for(L, beta, scenario_delocalized)
    return m_loc, m_del


def _margin_for(L, beta, scenario) -> float:
    pv = scenario_vectors(scenario, L)
    ss = assemble_second_order(L, pv, beta)
    norm, _ = hinf_norm(ss)
    return math.inf if norm == 0 else 1.0 / norm


def run_experiment(spec: ExperimentSpec) -> ContrastSummary:
    g = spec.load_graph()
    if not is_connected(g):
        raise ValidationError("experiment requires a connected graph")
    os.makedirs(spec.outdir, exist_ok=True)
    manifest: dict[str, dict] = {}

    def emit(name: str, stage: str, writer) -> str:
        path = os.path.join(spec.outdir, name)
        writer(path)
        manifest[name] = {"path": name, "stage": stage}
        return path

    L = build_laplacian(g)
    spectrum = eig_sym(L)
    report = classify_localization(spectrum, g, spec.classifier, threads=spec.threads)

    emit("eigenvectors.csv", "localization", lambda p: eigenvectors_to_csv(spectrum, p))
    emit(
        "localization.json",
        "localization",
        lambda p: _dump_json(report_to_json(report), p),
    )

    node_wc = worst_case_node_map(spectrum)
    emit("node_sensitivity.csv", "sensitivity", lambda p: node_map_to_csv(node_wc, p))
    pairs = [(i, j) for (i, j, _) in g.edges]
    edge_wc = worst_case_edge_map(spectrum, pairs)
    emit(
        "edge_sensitivity.csv",
        "sensitivity",
        lambda p: edge_map_to_csv(pairs, edge_wc, p),
    )

    P = np.zeros(g.n, dtype=bool)
    P[list(report.localized_region)] = True
    no_loc = report.localized_count == 0

    rect = spec.rect if spec.rect is not None else default_rect(spectrum, spec.beta)
    nx, ny = spec.grid

    per_kind: dict[str, KindContrast] = {}
    for kind in spec.kinds:
        if kind in _NODE_KINDS:
            if no_loc:
                cand = np.arange(g.n)
                loc_pick = int(cand[np.argmax(node_wc)])
                del_pick = int(_median_pick(cand, node_wc))
                ratio = float(node_wc.max() / np.median(node_wc))
            else:
                loc_nodes = np.flatnonzero(P)
                del_nodes = np.flatnonzero(~P)
                loc_pick = int(loc_nodes[np.argmax(node_wc[loc_nodes])])
                del_pick = int(_median_pick(del_nodes, node_wc[del_nodes]))
                ratio = float(node_wc[P].max() / np.median(node_wc[~P]))
            s_loc = _node_scenario(kind, loc_pick)
            s_del = _node_scenario(kind, del_pick)
            pick_json_loc, pick_json_del = loc_pick, del_pick
        elif kind == "edge":
            arr = np.asarray(pairs)
            in_P = P[arr[:, 0]] & P[arr[:, 1]]
            in_Pb = ~P[arr[:, 0]] & ~P[arr[:, 1]]
            if no_loc or not in_P.any() or not in_Pb.any():
                loc_i = int(np.argmax(edge_wc))
                order = np.argsort(edge_wc, kind="stable")
                del_i = int(order[order.size // 2])
                ratio = float(edge_wc.max() / np.median(edge_wc))
            else:
                idx_P = np.flatnonzero(in_P)
                idx_Pb = np.flatnonzero(in_Pb)
                loc_i = int(idx_P[np.argmax(edge_wc[idx_P])])
                del_i = int(_median_pick(idx_Pb, edge_wc[idx_Pb]))
                ratio = float(np.median(edge_wc[in_P]) / np.median(edge_wc[in_Pb]))
            s_loc = Edge(*pairs[loc_i])
            s_del = Edge(*pairs[del_i])
            pick_json_loc = list(pairs[loc_i])
            pick_json_del = list(pairs[del_i])
        else:
            raise ValidationError(f"unknown scenario kind {kind!r}")

        if spec.explicit_picks and kind in spec.explicit_picks:
            raise ValidationError("explicit picks are not implemented; use auto")

        margins = {}
        reach: dict[str, dict[str, float]] = {}
        for tag, scen in (("localized", s_loc), ("delocalized", s_del)):
            pv = scenario_vectors(scen, L)
            ss = assemble_second_order(L, pv, spec.beta, spectrum=spectrum)
            fact = precompute_factorization(ss)
            norm, wbar = hinf_norm(ss, fact)
            margins[tag] = 1.0 / norm if norm else math.inf
            grid = eval_grid(ss, rect, nx, ny, spec.epsilons, fact=fact)
            base = f"pspec_{kind}_{tag}"
            emit(base + ".csv", "pseudospectrum", lambda p, gr=grid: grid_to_csv(gr, p))
            emit(
                base + ".json",
                "pseudospectrum",
                lambda p, gr=grid, m=margins[tag], w=wbar: _dump_json(
                    grid_sidecar(gr, margin=m, omega_bar=w), p
                ),
            )
            reach[tag] = {
                repr(float(e)): rhp_clearance(ss, float(e), fact=fact)
                for e in spec.epsilons
                if e > 0
            }

        per_kind[kind] = KindContrast(
            kind=kind,
            localized_pick=pick_json_loc,
            delocalized_pick=pick_json_del,
            margin_localized=margins["localized"],
            margin_delocalized=margins["delocalized"],
            sensitivity_ratio=ratio,
            rhp_reach=reach,
        )

    if spec.destabilize and not no_loc:
        kind = next((k for k in spec.kinds if k in _NODE_KINDS), None)
        if kind is not None:
            k_loc = per_kind[kind].localized_pick
            scen = _node_scenario(kind, int(k_loc))
            pv = scenario_vectors(scen, L)
            ss = assemble_second_order(L, pv, spec.beta, spectrum=spectrum)
            dest = delay_destabilizer(ss)
            rng = np.random.default_rng(spec.seed)
            theta0 = rng.standard_normal(g.n) * 1e-2
            theta0 -= theta0.mean()
            t_final = spec.sim_t_final or max(
                80.0, 60.0 * 2.0 * math.pi / dest.target_omega
            )
            runs = {}
            for tag, mul in (("super", 1.05), ("sub", 0.9)):
                cfg = SimConfig(
                    L=L,
                    beta=spec.beta,
                    theta0=theta0,
                    omega0=np.zeros(g.n),
                    t_final=t_final,
                    pv=pv,
                    delta=DelaySpec(gain=mul * dest.kind.gain, T=dest.kind.T),
                )
                traj = simulate(cfg)
                verdict = stability_verdict(traj)
                freq = None
                if verdict.kind == "growing":
                    freq = oscillation_frequency(traj)
                runs[tag] = {
                    "gain_multiplier": mul,
                    "verdict": verdict.kind,
                    "rate": verdict.rate,
                    "frequency": freq,
                }
                emit(
                    f"trajectory_{tag}.csv",
                    "destabilize",
                    lambda p, tr=traj: trajectory_to_csv(tr, p, decimate=10),
                )
            emit(
                "destabilizer.json",
                "destabilize",
                lambda p: _dump_json(
                    {**destabilizer_to_json(dest), "simulations": runs}, p
                ),
            )

    summary = ContrastSummary(
        no_localization=no_loc,
        localized_count=report.localized_count,
        per_kind=per_kind,
    )
    emit("summary.json", "summary", lambda p: _dump_json(summary.to_json(), p))
    _dump_json(manifest, os.path.join(spec.outdir, "manifest.json"))
    return summary


def _dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")

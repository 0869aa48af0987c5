"""Figure rendering for experiment outputs.

Optional report path: turns the delimited artifacts of a run into PNG
figures (localization overview, sensitivity maps, pseudospectrum heatmaps,
growth trajectories). Everything here is presentation only; the CSV/JSON
artifacts remain the canonical outputs.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .frequency import PspecGrid
from .simulate import Trajectory
from .spectral import LocalizationReport, Spectrum

__all__ = [
    "fig_localization",
    "fig_node_sensitivity",
    "fig_edge_sensitivity",
    "fig_pseudospectrum",
    "fig_trajectory",
    "render_experiment",
]

_RED = "#c44536"
_BLUE = "#2b6f9e"


def fig_localization(spectrum: Spectrum, report: LocalizationReport, path: str) -> str:
    fig, (ax0, ax1) = plt.subplots(
        2, 1, figsize=(8, 6), gridspec_kw={"height_ratios": [3, 1]}
    )
    nodes = np.arange(spectrum.n)
    for i in range(spectrum.n):
        color = _RED if report.labels[i] else _BLUE
        alpha = 0.55 if report.labels[i] else 0.25
        ax0.plot(nodes, np.abs(spectrum.eigenvectors[:, i]), color=color, lw=0.6, alpha=alpha)
    ax0.set_xlabel("node index")
    ax0.set_ylabel("|eigenvector|")
    ax0.set_title(
        f"{report.localized_count} localized of {spectrum.n} eigenvectors"
    )
    in_region = np.zeros(spectrum.n, dtype=bool)
    in_region[list(report.localized_region)] = True
    ax1.bar(nodes, in_region.astype(float), width=1.0, color=_RED, alpha=0.6)
    ax1.bar(nodes, (~in_region).astype(float), width=1.0, color=_BLUE, alpha=0.25)
    ax1.set_yticks([])
    ax1.set_xlabel("node index (red: localized region)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def fig_node_sensitivity(values: np.ndarray, region, path: str) -> str:
    n = values.shape[0]
    fig, ax = plt.subplots(figsize=(8, 4))
    in_region = np.zeros(n, dtype=bool)
    in_region[list(region)] = True
    ax.semilogy(np.flatnonzero(~in_region), values[~in_region], ".", color=_BLUE, ms=3)
    if in_region.any():
        ax.semilogy(np.flatnonzero(in_region), values[in_region], ".", color=_RED, ms=3)
    ax.set_xlabel("node index")
    ax.set_ylabel("worst-case sensitivity")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def fig_edge_sensitivity(pairs, values: np.ndarray, n: int, path: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 5))
    arr = np.asarray(list(pairs))
    with np.errstate(divide="ignore"):
        logv = np.log10(np.maximum(values, 1e-300))
    sc = ax.scatter(arr[:, 0], arr[:, 1], c=logv, s=4, cmap="viridis")
    fig.colorbar(sc, ax=ax, label="log10 worst-case edge sensitivity")
    ax.set_xlabel("node k")
    ax.set_ylabel("node l")
    ax.set_xlim(-0.5, n - 0.5)
    ax.set_ylim(-0.5, n - 0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def fig_pseudospectrum(grid: PspecGrid, path: str, title: str = "") -> str:
    fig, ax = plt.subplots(figsize=(7, 5))
    finite = np.where(np.isfinite(grid.values), grid.values, np.nan)
    pc = ax.pcolormesh(grid.re_axis, grid.im_axis, finite, shading="auto", cmap="magma")
    fig.colorbar(pc, ax=ax, label="log10 |M(s)|")
    for eps in grid.epsilons:
        if eps > 0:
            ax.contour(
                grid.re_axis,
                grid.im_axis,
                grid.masks[eps].astype(float),
                levels=[0.5],
                colors="lime",
                linewidths=1.0,
            )
    ax.axvline(0.0, color="w", lw=0.8, ls="--")
    ax.set_xlabel("Re s")
    ax.set_ylabel("Im s")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def fig_trajectory(traj: Trajectory, path: str, title: str = "") -> str:
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    pos = traj.sync > 0
    ax0.semilogy(traj.times[pos], traj.sync[pos], color=_RED, lw=0.9)
    ax0.set_ylabel("sync deviation d(t)")
    if title:
        ax0.set_title(title)
    if traj.output is not None:
        ax1.plot(traj.times, traj.output, color=_BLUE, lw=0.7)
        ax1.set_ylabel("channel output y(t)")
    ax1.set_xlabel("time")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_experiment(outdir: str) -> list[str]:
    """Render figures for a completed experiment directory from its artifacts."""
    import csv as _csv
    import json as _json

    figdir = os.path.join(outdir, "figures")
    os.makedirs(figdir, exist_ok=True)
    written = []

    loc_path = os.path.join(outdir, "localization.json")
    eig_path = os.path.join(outdir, "eigenvectors.csv")
    if os.path.exists(loc_path) and os.path.exists(eig_path):
        with open(loc_path, encoding="utf-8") as fh:
            loc = _json.load(fh)
        with open(eig_path, encoding="utf-8") as fh:
            rows = list(_csv.reader(fh))
        eigenvalues = np.array([float(x) for x in rows[0]])
        V = np.array([[float(x) for x in row] for row in rows[1:]])
        n = V.shape[0]
        fig, (ax0, ax1) = plt.subplots(
            2, 1, figsize=(8, 6), gridspec_kw={"height_ratios": [3, 1]}
        )
        labels = [x == "localized" for x in loc["labels"]]
        for i in range(V.shape[1]):
            color = _RED if labels[i] else _BLUE
            ax0.plot(np.abs(V[:, i]), color=color, lw=0.6, alpha=0.5 if labels[i] else 0.2)
        ax0.set_ylabel("|eigenvector|")
        ax0.set_title(f"{loc['localized_count']} localized of {len(labels)}")
        mask = np.zeros(n)
        mask[loc["localized_region"]] = 1.0
        ax1.bar(np.arange(n), mask, width=1.0, color=_RED, alpha=0.6)
        ax1.set_yticks([])
        ax1.set_xlabel("node index (red: localized region)")
        fig.tight_layout()
        p = os.path.join(figdir, "localization.png")
        fig.savefig(p, dpi=150)
        plt.close(fig)
        written.append(p)

    ns_path = os.path.join(outdir, "node_sensitivity.csv")
    if os.path.exists(ns_path) and os.path.exists(loc_path):
        with open(ns_path, encoding="utf-8") as fh:
            rows = list(_csv.DictReader(fh))
        vals = np.array([float(r["value"]) for r in rows])
        with open(loc_path, encoding="utf-8") as fh:
            region = _json.load(fh)["localized_region"]
        p = os.path.join(figdir, "node_sensitivity.png")
        fig_node_sensitivity(vals, region, p)
        written.append(p)

    es_path = os.path.join(outdir, "edge_sensitivity.csv")
    if os.path.exists(es_path):
        with open(es_path, encoding="utf-8") as fh:
            rows = list(_csv.DictReader(fh))
        pairs = [(int(r["k"]), int(r["l"])) for r in rows]
        vals = np.array([float(r["value"]) for r in rows])
        n = 1 + max(max(k, l) for k, l in pairs)
        p = os.path.join(figdir, "edge_sensitivity.png")
        fig_edge_sensitivity(pairs, vals, n, p)
        written.append(p)

    for name in sorted(os.listdir(outdir)):
        if name.startswith("pspec_") and name.endswith(".csv"):
            side = os.path.join(outdir, name[:-4] + ".json")
            if not os.path.exists(side):
                continue
            with open(side, encoding="utf-8") as fh:
                meta = _json.load(fh)
            with open(os.path.join(outdir, name), encoding="utf-8") as fh:
                rows = list(_csv.DictReader(fh))
            nx, ny = meta["nx"], meta["ny"]
            vals = np.array(
                [np.inf if r["log10mag"] == "inf" else float(r["log10mag"]) for r in rows]
            ).reshape(ny, nx)
            re_axis = np.array([float(r["re"]) for r in rows]).reshape(ny, nx)[0]
            im_axis = np.array([float(r["im"]) for r in rows]).reshape(ny, nx)[:, 0]
            fig, ax = plt.subplots(figsize=(7, 5))
            finite = np.where(np.isfinite(vals), vals, np.nan)
            pc = ax.pcolormesh(re_axis, im_axis, finite, shading="auto", cmap="magma")
            fig.colorbar(pc, ax=ax, label="log10 |M(s)|")
            for eps in meta["epsilons"]:
                if eps > 0:
                    ax.contour(
                        re_axis,
                        im_axis,
                        (vals >= -np.log10(eps)).astype(float),
                        levels=[0.5],
                        colors="lime",
                        linewidths=1.0,
                    )
            ax.axvline(0.0, color="w", lw=0.8, ls="--")
            ax.set_xlabel("Re s")
            ax.set_ylabel("Im s")
            ax.set_title(name[:-4])
            fig.tight_layout()
            p = os.path.join(figdir, name[:-4] + ".png")
            fig.savefig(p, dpi=150)
            plt.close(fig)
            written.append(p)

    for name in sorted(os.listdir(outdir)):
        if name.startswith("trajectory_") and name.endswith(".csv"):
            with open(os.path.join(outdir, name), encoding="utf-8") as fh:
                rows = list(_csv.DictReader(fh))
            t = np.array([float(r["t"]) for r in rows])
            d = np.array([float(r["d"]) for r in rows])
            fig, ax = plt.subplots(figsize=(8, 4))
            pos = d > 0
            ax.semilogy(t[pos], d[pos], color=_RED, lw=0.9)
            ax.set_xlabel("time")
            ax.set_ylabel("sync deviation d(t)")
            ax.set_title(name[:-4])
            fig.tight_layout()
            p = os.path.join(figdir, name[:-4] + ".png")
            fig.savefig(p, dpi=150)
            plt.close(fig)
            written.append(p)

    return written

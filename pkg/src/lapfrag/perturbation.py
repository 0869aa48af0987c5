"""Rank-one perturbation scenarios and first-order eigenvalue sensitivities.

Four scenarios perturb the Laplacian as L + delta * b c: an edge channel,
a node channel reading the deviation from the network mean, a node channel
reading the node's own Laplacian row, and its reciprocal variant. All four
annihilate the constant vector on the output side (c @ 1 = 0), which keeps
the consensus mode unobservable and the uncertain channel stable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    AmbiguousMatchError,
    DegenerateSpectrumError,
    ValidationError,
)
from .graphs import LaplacianMatrix
from .spectral import Spectrum, eig_sym

__all__ = [
    "Edge",
    "GlobalNode",
    "LocalNode",
    "LocalReciprocal",
    "PerturbationScenario",
    "PerturbationVectors",
    "parse_scenario",
    "scenario_vectors",
    "perturbed_laplacian",
    "first_order_sensitivity",
    "scenario_sensitivity",
    "sensitivity_profile",
    "worst_case_node_sensitivity",
    "worst_case_node_map",
    "worst_case_edge_sensitivity",
    "worst_case_edge_map",
    "fd_sensitivity_oracle",
    "node_map_to_csv",
    "edge_map_to_csv",
    "profile_to_csv",
]

DEGENERACY_REL = 1e-8


@dataclass(frozen=True)
class Edge:
    k: int
    l: int
    allow_virtual: bool = False

    def __str__(self):
        return f"edge:{self.k},{self.l}"


@dataclass(frozen=True)
class GlobalNode:
    k: int

    def __str__(self):
        return f"global-node:{self.k}"


@dataclass(frozen=True)
class LocalNode:
    k: int

    def __str__(self):
        return f"local-node:{self.k}"


@dataclass(frozen=True)
class LocalReciprocal:
    k: int

    def __str__(self):
        return f"local-reciprocal:{self.k}"


PerturbationScenario = Edge | GlobalNode | LocalNode | LocalReciprocal


def parse_scenario(text: str) -> PerturbationScenario:
    """Parse the CLI grammar: edge:K,L | global-node:K | local-node:K | local-reciprocal:K."""
    try:
        kind, _, arg = text.partition(":")
        if kind == "edge":
            k_s, l_s = arg.split(",")
            return Edge(int(k_s), int(l_s))
        if kind == "global-node":
            return GlobalNode(int(arg))
        if kind == "local-node":
            return LocalNode(int(arg))
        if kind == "local-reciprocal":
            return LocalReciprocal(int(arg))
    except (ValueError, TypeError):
        pass
    raise ValidationError(
        f"bad scenario {text!r}; expected edge:K,L, global-node:K, "
        "local-node:K or local-reciprocal:K"
    )


@dataclass(frozen=True)
class PerturbationVectors:
    """Input column b and output row c of the rank-one channel."""

    b: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).copy()
        c = np.asarray(self.c, dtype=float).copy()
        if b.ndim != 1 or c.ndim != 1 or b.shape != c.shape:
            raise ValidationError(f"b and c must be equal-length vectors, got {b.shape}, {c.shape}")
        b.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.b.shape[0]


def _check_index(k: int, n: int) -> None:
    if not (0 <= k < n):
        raise ValidationError(f"node index {k} out of range for n={n}")


def scenario_vectors(s: PerturbationScenario, L: LaplacianMatrix) -> PerturbationVectors:
    """Build the (b, c) pair of a scenario against a given Laplacian."""
    n = L.n
    if isinstance(s, Edge):
        _check_index(s.k, n)
        _check_index(s.l, n)
        if s.k == s.l:
            raise ValidationError("edge scenario needs two distinct nodes")
        if L.entries[s.k, s.l] == 0.0 and not s.allow_virtual:
            raise ValidationError(
                f"({s.k},{s.l}) is not an edge; pass allow_virtual to perturb a non-edge"
            )
        e = np.zeros(n)
        e[s.k] = 1.0
        e[s.l] = -1.0
        return PerturbationVectors(e, e.copy())
    if isinstance(s, GlobalNode):
        _check_index(s.k, n)
        b = np.zeros(n)
        b[s.k] = 1.0
        c = np.full(n, -1.0 / n)
        c[s.k] += 1.0
        return PerturbationVectors(b, c)
    if isinstance(s, LocalNode):
        _check_index(s.k, n)
        b = np.zeros(n)
        b[s.k] = 1.0
        return PerturbationVectors(b, L.entries[s.k, :].copy())
    if isinstance(s, LocalReciprocal):
        _check_index(s.k, n)
        row = L.entries[s.k, :].copy()
        return PerturbationVectors(row.copy(), row)
    raise ValidationError(f"unknown scenario {s!r}")


def perturbed_laplacian(
    L: LaplacianMatrix, s: PerturbationScenario, delta: complex
) -> np.ndarray:
    """L + delta * outer(b, c). Complex in general; rows still sum to zero."""
    if not np.isfinite(delta):
        raise ValidationError(f"delta must be finite, got {delta}")
    pv = scenario_vectors(s, L)
    return L.entries.astype(complex) + delta * np.outer(pv.b, pv.c)


def first_order_sensitivity(v: np.ndarray, pv: PerturbationVectors) -> float:
    """Leading eigenvalue derivative (v @ b)(c @ v) from the raw rank-one form."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > 1e-8:
        raise ValidationError(f"eigenvector is not normalized: ||v|| = {norm}")
    return float((v @ pv.b) * (pv.c @ v))


def scenario_sensitivity(lam: float, v: np.ndarray, s: PerturbationScenario) -> float:
    """Closed-form first-order sensitivity per scenario kind.

    Edge: (v_k - v_l)^2; global node: v_k^2 (0 on the constant eigenvector);
    local node: lam * v_k^2; local reciprocal: lam^2 * v_k^2.
    """
    v = np.asarray(v, dtype=float)
    if isinstance(s, Edge):
        return float((v[s.k] - v[s.l]) ** 2)
    if isinstance(s, GlobalNode):
        return 0.0 if lam <= 0.0 else float(v[s.k] ** 2)
    if isinstance(s, LocalNode):
        return float(lam * v[s.k] ** 2)
    if isinstance(s, LocalReciprocal):
        return float(lam * lam * v[s.k] ** 2)
    raise ValidationError(f"unknown scenario {s!r}")


def _require_simple(spectrum: Spectrum) -> None:
    scale = max(spectrum.lam_max, 1e-300)
    if spectrum.min_gap < DEGENERACY_REL * scale:
        gaps = np.diff(spectrum.eigenvalues)
        i = int(np.argmin(gaps))
        raise DegenerateSpectrumError(spectrum.min_gap, scale, pair=(i, i + 1))


def sensitivity_profile(
    spectrum: Spectrum, s: PerturbationScenario, L: LaplacianMatrix
) -> np.ndarray:
    """First-order sensitivity of every eigenvalue under one scenario.

    Uses the raw rank-one form, so the zero mode comes out exactly
    unperturbed in all four scenarios. Refuses degenerate spectra.
    """
    _require_simple(spectrum)
    pv = scenario_vectors(s, L)
    V = spectrum.eigenvectors
    return (V.T @ pv.b) * (pv.c @ V)


def worst_case_node_sensitivity(spectrum: Spectrum, k: int) -> float:
    """max_i v_i(k)^2 over non-constant eigenvectors."""
    _check_index(k, spectrum.n)
    keep = ~np.array([spectrum.is_zero_mode(i) for i in range(spectrum.n)])
    return float(np.max(spectrum.eigenvectors[k, keep] ** 2))


def worst_case_node_map(spectrum: Spectrum) -> np.ndarray:
    keep = ~np.array([spectrum.is_zero_mode(i) for i in range(spectrum.n)])
    return np.max(spectrum.eigenvectors[:, keep] ** 2, axis=1)


def worst_case_edge_sensitivity(spectrum: Spectrum, k: int, l: int) -> float:
    """max_i (v_i(k) - v_i(l))^2 over non-constant eigenvectors."""
    _check_index(k, spectrum.n)
    _check_index(l, spectrum.n)
    if k == l:
        return 0.0
    keep = ~np.array([spectrum.is_zero_mode(i) for i in range(spectrum.n)])
    diff = spectrum.eigenvectors[k, keep] - spectrum.eigenvectors[l, keep]
    return float(np.max(diff**2))


def worst_case_edge_map(
    spectrum: Spectrum, pairs, chunk: int = 8192
) -> np.ndarray:
    """Vectorized worst-case sensitivity for a list of (k, l) pairs."""
    pairs = np.asarray(list(pairs), dtype=int)
    if pairs.size == 0:
        return np.zeros(0)
    keep = ~np.array([spectrum.is_zero_mode(i) for i in range(spectrum.n)])
    V = spectrum.eigenvectors[:, keep]
    out = np.empty(pairs.shape[0])
    for start in range(0, pairs.shape[0], chunk):
        sl = pairs[start : start + chunk]
        diff = V[sl[:, 0], :] - V[sl[:, 1], :]
        out[start : start + chunk] = np.max(diff**2, axis=1)
    return out


def fd_sensitivity_oracle(
    L: LaplacianMatrix,
    s: PerturbationScenario,
    delta_step: float = 1e-6,
) -> np.ndarray:
    """Finite-difference eigenvalue derivatives, matched by eigenvector overlap.

    Independent of the analytic formulas: solves the full eigenproblem of
    L + delta_step * b c and differences against the nominal eigenvalues.
    """
    if not (1e-9 <= delta_step <= 1e-3):
        raise ValidationError(f"delta_step must lie in [1e-9, 1e-3], got {delta_step}")
    spectrum = eig_sym(L)
    _require_simple(spectrum)
    Lt = perturbed_laplacian(L, s, delta_step)
    lam_t, Vt = scipy.linalg.eig(Lt)
    V = spectrum.eigenvectors
    # overlap[i, j] = |<v_i, vt_j>|
    overlap = np.abs(V.T @ Vt.conj())
    deriv = np.empty(L.n)
    taken = set()
    for i in range(L.n):
        row = overlap[i]
        order = np.argsort(row)[::-1]
        best, second = order[0], order[1] if L.n > 1 else order[0]
        if L.n > 1 and row[best] - row[second] < 1e-3:
            raise AmbiguousMatchError(
                f"eigenvalue matching ambiguous for index {i}: overlaps "
                f"{row[best]:.6f} vs {row[second]:.6f}"
            )
        if int(best) in taken:
            raise AmbiguousMatchError(
                f"eigenvalue matching is not one-to-one at index {i}"
            )
        taken.add(int(best))
        deriv[i] = (lam_t[best].real - spectrum.eigenvalues[i]) / delta_step
    return deriv


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

def node_map_to_csv(values: np.ndarray, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "value"])
        for k, val in enumerate(values):
            writer.writerow([k, repr(float(val))])


def edge_map_to_csv(pairs, values: np.ndarray, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "l", "value"])
        for (k, l), val in zip(pairs, values):
            writer.writerow([int(k), int(l), repr(float(val))])


def profile_to_csv(spectrum: Spectrum, values: np.ndarray, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eigenindex", "lambda", "value"])
        for i, (lam, val) in enumerate(zip(spectrum.eigenvalues, values)):
            writer.writerow([i, repr(float(lam)), repr(float(val))])

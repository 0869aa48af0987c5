"""State-space assembly, compressed resolvent evaluation, H-infinity margins,
and structured pseudospectrum grids.

The uncertain channel is scalar: M(s) = c (sI - A)^{-1} b. For A built from
a symmetric Laplacian the transfer function has an explicit modal expansion
(sum of residues over first- or second-order pole factors), which makes
pointwise evaluation O(n) and the peak search on the imaginary axis cheap
and reliable: resonances sit near the square roots of the Laplacian
eigenvalues for light damping.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    NumericError,
    ResolventSingularError,
    UnstableSystemError,
    ValidationError,
)
from .graphs import LaplacianMatrix
from .perturbation import PerturbationVectors
from .spectral import Spectrum, eig_sym, second_order_mu

__all__ = [
    "StateSpace",
    "Modal",
    "PspecGrid",
    "assemble_first_order",
    "assemble_second_order",
    "eval_transfer",
    "precompute_factorization",
    "eval_grid",
    "hinf_norm",
    "robust_margin",
    "rhp_clearance",
    "pbh_zero_mode_check",
    "grid_to_csv",
    "grid_sidecar",
    "mask_contours",
]

RESIDUE_FLOOR = 1e-12
POLE_PROXIMITY = 1e-12


@dataclass(frozen=True)
class Modal:
    """Modal expansion data for A derived from a symmetric Laplacian."""

    kind: str  # "first" | "second"
    lam: np.ndarray = field(repr=False)
    residues: np.ndarray = field(repr=False)
    sign: int = -1  # first order only: A = sign * L
    beta: float = 0.0  # second order only

    def poles(self) -> np.ndarray:
        if self.kind == "first":
            return (self.sign * self.lam).astype(complex)
        out = []
        for lam in self.lam:
            mp, mm = second_order_mu(float(lam), self.beta)
            out.extend((mp, mm))
        return np.array(out, dtype=complex)

    def observable_poles(self) -> np.ndarray:
        mask = np.abs(self.residues) > RESIDUE_FLOOR
        if self.kind == "first":
            return (self.sign * self.lam[mask]).astype(complex)
        out = []
        for lam in self.lam[mask]:
            mp, mm = second_order_mu(float(lam), self.beta)
            out.extend((mp, mm))
        return np.array(out, dtype=complex)

    def eval_many(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        flat = s.ravel()[:, None]
        # Deflated terms contribute exactly zero; dropping them keeps the
        # expansion finite at unobservable poles (e.g. the consensus mode).
        keep = np.abs(self.residues) > RESIDUE_FLOOR
        res = self.residues[keep]
        lam = self.lam[keep]
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "first":
                terms = res[None, :] / (flat - self.sign * lam[None, :])
            else:
                terms = res[None, :] / (flat * flat + self.beta * flat + lam[None, :])
        return terms.sum(axis=1).reshape(s.shape)


@dataclass(frozen=True)
class StateSpace:
    """SISO triple (A, b, c); second-order systems carry the damping beta."""

    order: str  # "first" | "second"
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)
    beta: float | None = None
    modal: Modal | None = field(default=None, repr=False)
    lap: np.ndarray | None = field(default=None, repr=False)
    pv: PerturbationVectors | None = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return self.a.shape[0]


def assemble_first_order(
    L: LaplacianMatrix,
    pv: PerturbationVectors,
    sign: int | str = -1,
    spectrum: Spectrum | None = None,
) -> StateSpace:
    """First-order channel c (sI -+ L)^{-1} b.

    sign=+1 places the poles on the nonnegative real axis (the raw Laplacian
    resolvent, for pseudospectrum pictures); sign=-1 is the stable diffusion
    dynamics.
    """
    if isinstance(sign, str):
        sign = {"+L": 1, "-L": -1, "+": 1, "-": -1}.get(sign, 0)
    if sign not in (1, -1):
        raise ValidationError(f"sign must be +1 (+L) or -1 (-L), got {sign!r}")
    if pv.n != L.n:
        raise ValidationError(f"vector length {pv.n} != Laplacian dimension {L.n}")
    if spectrum is None:
        spectrum = eig_sym(L)
    V = spectrum.eigenvectors
    residues = (pv.c @ V) * (V.T @ pv.b)
    modal = Modal("first", spectrum.eigenvalues.copy(), residues, sign=sign)
    return StateSpace(
        order="first",
        a=sign * L.entries,
        b=pv.b.copy(),
        c=pv.c.copy(),
        modal=modal,
        lap=L.entries,
        pv=pv,
    )


def assemble_second_order(
    L: LaplacianMatrix,
    pv: PerturbationVectors,
    beta: float,
    spectrum: Spectrum | None = None,
) -> StateSpace:
    """Oscillator channel: input drives the acceleration, output reads positions.

    Generator [[0, I], [-L, -beta I]]; M(s) = sum_i r_i / (s^2 + beta s + lam_i).
    """
    if beta <= 0:
        raise ValidationError(
            f"beta must be > 0 (undamped oscillators have no finite peak gain), got {beta}"
        )
    if pv.n != L.n:
        raise ValidationError(f"vector length {pv.n} != Laplacian dimension {L.n}")
    n = L.n
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.eye(n)
    A[n:, :n] = -L.entries
    A[n:, n:] = -beta * np.eye(n)
    b_full = np.concatenate([np.zeros(n), pv.b])
    c_full = np.concatenate([pv.c, np.zeros(n)])
    if spectrum is None:
        spectrum = eig_sym(L)
    V = spectrum.eigenvectors
    residues = (pv.c @ V) * (V.T @ pv.b)
    modal = Modal("second", spectrum.eigenvalues.copy(), residues, beta=beta)
    return StateSpace(
        order="second",
        a=A,
        b=b_full,
        c=c_full,
        beta=beta,
        modal=modal,
        lap=L.entries,
        pv=pv,
    )


# ---------------------------------------------------------------------------
# Factorizations and evaluation
# ---------------------------------------------------------------------------

class ModalFactorization:
    """Closed-form modal evaluation; O(n) per point."""

    warning = False

    def __init__(self, modal: Modal):
        self.modal = modal

    def poles(self) -> np.ndarray:
        return self.modal.poles()

    def eval_many(self, s) -> np.ndarray:
        return self.modal.eval_many(np.asarray(s, dtype=complex))


class SchurFactorization:
    """Complex Schur reduction; each shifted solve is a triangular backsolve."""

    warning = False

    def __init__(self, a: np.ndarray, b: np.ndarray, c: np.ndarray):
        T, Q = scipy.linalg.schur(np.asarray(a, dtype=complex), output="complex")
        self.T = T
        self.qb = Q.conj().T @ b
        self.cq = c @ Q

    def poles(self) -> np.ndarray:
        return np.diag(self.T).copy()

    def eval_many(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        flat = s.ravel()
        out = np.empty(flat.shape, dtype=complex)
        m = self.T.shape[0]
        eye = np.eye(m)
        for i, si in enumerate(flat):
            x = scipy.linalg.solve_triangular(si * eye - self.T, self.qb, lower=False)
            out[i] = self.cq @ x
        return out.reshape(s.shape)


class DirectFactorization:
    """Fallback: dense solve per point (used when the Schur reduction fails)."""

    warning = True

    def __init__(self, a: np.ndarray, b: np.ndarray, c: np.ndarray):
        self.a = np.asarray(a, dtype=complex)
        self.b = np.asarray(b, dtype=complex)
        self.c = np.asarray(c, dtype=complex)
        self._poles = np.linalg.eigvals(self.a)

    def poles(self) -> np.ndarray:
        return self._poles.copy()

    def eval_many(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        flat = s.ravel()
        out = np.empty(flat.shape, dtype=complex)
        eye = np.eye(self.a.shape[0])
        for i, si in enumerate(flat):
            out[i] = self.c @ np.linalg.solve(si * eye - self.a, self.b)
        return out.reshape(s.shape)


def precompute_factorization(ss: StateSpace):
    """Reusable handle for repeated shifted solves.

    Modal data (symmetric Laplacian origin) evaluates in O(n); otherwise a
    one-time complex Schur reduction makes each solve O(m^2). A failed
    reduction falls back to direct solves and flags `.warning`.
    """
    if ss.modal is not None:
        return ModalFactorization(ss.modal)
    try:
        return SchurFactorization(ss.a, ss.b, ss.c)
    except (scipy.linalg.LinAlgError, ValueError):
        return DirectFactorization(ss.a, ss.b, ss.c)


def _check_pole_proximity(poles: np.ndarray, s: complex) -> None:
    if poles.size and np.min(np.abs(poles - s)) <= POLE_PROXIMITY:
        raise ResolventSingularError(s)


def eval_transfer(ss: StateSpace, s: complex, fact=None) -> complex:
    """M(s) = c (sI - A)^{-1} b, via the modal expansion when available.

    Points within 1e-12 of a pole of M raise; unobservable generator poles
    (zero residue) are removable and evaluate normally.
    """
    if fact is None:
        fact = precompute_factorization(ss)
    if isinstance(fact, ModalFactorization):
        _check_pole_proximity(fact.modal.observable_poles(), complex(s))
    else:
        _check_pole_proximity(fact.poles(), complex(s))
    return complex(fact.eval_many(np.array([complex(s)]))[0])


# ---------------------------------------------------------------------------
# H-infinity norm and margins
# ---------------------------------------------------------------------------

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f, a: float, b: float, rel_tol: float = 1e-8) -> tuple[float, float]:
    """Maximize a unimodal-ish f on [a, b] by golden-section search."""
    c1 = b - _GOLDEN * (b - a)
    c2 = a + _GOLDEN * (b - a)
    f1, f2 = f(c1), f(c2)
    while (b - a) > rel_tol * max(1.0, abs(a), abs(b)):
        if f1 < f2:
            a, c1, f1 = c1, c2, f2
            c2 = a + _GOLDEN * (b - a)
            f2 = f(c2)
        else:
            b, c2, f2 = c2, c1, f1
            c1 = b - _GOLDEN * (b - a)
            f1 = f(c1)
    w = 0.5 * (a + b)
    return f(w), w


def _peak_seeds(fact) -> np.ndarray:
    """Candidate frequencies: 0, pole-derived resonances, and a log grid."""
    poles = fact.poles()
    seeds = [0.0]
    im = np.abs(poles.imag)
    seeds.extend(im[im > 0].tolist())
    mags = np.abs(poles)
    positive = mags[mags > 0]
    if positive.size:
        lo = 1e-3 * positive.min()
        hi = 1e3 * positive.max()
        seeds.extend(np.geomspace(lo, hi, 200).tolist())
    else:
        seeds.extend(np.geomspace(1e-3, 1e3, 200).tolist())
    return np.unique(np.asarray(seeds))


def _max_over_line(fact, x: float) -> tuple[float, float]:
    """Maximize |M(x + j w)| over w >= 0. Returns (max value, argmax w)."""
    seeds = _peak_seeds(fact)
    vals = np.abs(fact.eval_many(x + 1j * seeds))
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    # Refine around the top few local maxima.
    order = np.argsort(vals)[::-1]
    best_val, best_w = -np.inf, 0.0
    refined = 0
    for idx in order:
        if refined >= 3:
            break
        refined += 1
        lo = seeds[idx - 1] if idx > 0 else max(0.0, seeds[idx] - 1.0)
        hi = seeds[idx + 1] if idx + 1 < seeds.size else seeds[idx] * 2.0 + 1.0

        def f(w):
            return float(np.abs(fact.eval_many(np.array([x + 1j * w]))[0]))

        val, w = _golden_max(f, lo, hi)
        if val > best_val:
            best_val, best_w = val, w
    return best_val, best_w


def _require_stable(fact) -> None:
    poles = fact.poles()
    if isinstance(fact, ModalFactorization):
        poles = fact.modal.observable_poles()
    bad = poles[poles.real > -1e-12] if poles.size else poles
    if isinstance(fact, ModalFactorization):
        if bad.size:
            raise UnstableSystemError(complex(bad[np.argmax(bad.real)]))
        return
    # Generic path: only unstable poles that are observable and controllable count.
    if bad.size:
        raise UnstableSystemError(complex(bad[np.argmax(bad.real)]))


def hinf_norm(ss: StateSpace, fact=None) -> tuple[float, float]:
    """Peak gain on the imaginary axis and the frequency attaining it.

    Requires every observable pole strictly in the open left half-plane.
    """
    if fact is None:
        fact = precompute_factorization(ss)
    _require_stable(fact)
    val, w = _max_over_line(fact, 0.0)
    if not np.isfinite(val):
        raise NumericError("H-infinity search failed to produce a finite value")
    return float(val), float(w)


def robust_margin(ss: StateSpace, fact=None) -> float:
    """1 / ||M||_inf: the largest uncertainty bound that keeps the loop stable."""
    norm, _ = hinf_norm(ss, fact)
    if norm == 0.0:
        return math.inf
    return 1.0 / norm


def rhp_clearance(ss: StateSpace, epsilon: float, fact=None) -> float:
    """sup{Re s : s in the structured epsilon-pseudospectrum}.

    Negative iff the loop is robustly stable at this epsilon; found by
    bisection on vertical lines of the complex plane.
    """
    if epsilon <= 0:
        raise ValidationError(f"epsilon must be > 0, got {epsilon}")
    if fact is None:
        fact = precompute_factorization(ss)
    _require_stable(fact)
    target = 1.0 / epsilon
    norm, _ = hinf_norm(ss, fact)
    if isinstance(fact, ModalFactorization):
        obs = fact.modal.observable_poles()
    else:
        obs = fact.poles()
    alpha = float(np.max(obs.real)) if obs.size else -math.inf
    tol = 1e-9 * (1.0 + abs(alpha) if np.isfinite(alpha) else 1.0)

    if norm >= target:
        # Pseudospectrum reaches into the closed RHP; find how far.
        hi = max(1.0, abs(alpha) if np.isfinite(alpha) else 1.0)
        while _max_over_line(fact, hi)[0] >= target:
            hi *= 2.0
            if hi > 1e12:
                raise NumericError("pseudospectrum abscissa search diverged")
        lo = 0.0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if _max_over_line(fact, mid)[0] >= target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    # Robustly stable: the level set lies strictly left of the axis.
    if not np.isfinite(alpha):
        return -math.inf
    lo = alpha + max(1e-14, 1e-12 * abs(alpha))
    hi = 0.0
    # max|M| explodes approaching the pole abscissa, so a crossing exists.
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _max_over_line(fact, mid)[0] >= target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def pbh_zero_mode_check(pv: PerturbationVectors) -> bool:
    """True iff the output row annihilates the constant vector."""
    return bool(abs(float(pv.c.sum())) <= 1e-12 * pv.n)


# ---------------------------------------------------------------------------
# Pseudospectrum grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PspecGrid:
    rect: tuple[float, float, float, float]  # re_min, re_max, im_min, im_max
    nx: int
    ny: int
    re_axis: np.ndarray = field(repr=False)
    im_axis: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)  # (ny, nx) log10 |M|
    epsilons: tuple[float, ...]
    masks: dict[float, np.ndarray] = field(repr=False)
    meta: dict = field(default_factory=dict)

    def cell_size(self) -> tuple[float, float]:
        dx = self.re_axis[1] - self.re_axis[0] if self.nx > 1 else 0.0
        dy = self.im_axis[1] - self.im_axis[0] if self.ny > 1 else 0.0
        return float(dx), float(dy)


def mask_for(values: np.ndarray, epsilon: float) -> np.ndarray:
    """Superlevel set: log10|M| >= log10(1/eps)."""
    if epsilon < 0:
        raise ValidationError(f"epsilon must be >= 0, got {epsilon}")
    with np.errstate(divide="ignore"):
        thr = np.inf if epsilon == 0.0 else -np.log10(epsilon)
    return values >= thr


def eval_grid(
    ss: StateSpace,
    rect: tuple[float, float, float, float],
    nx: int,
    ny: int,
    epsilons=(),
    fact=None,
    log_imag: bool = False,
) -> PspecGrid:
    """log10 |M| on a rectangular grid plus superlevel masks per epsilon.

    Grid points within 1e-12 of a pole carry +inf. log_imag switches the
    imaginary axis to log spacing (im_min must then be positive).
    """
    re0, re1, im0, im1 = map(float, rect)
    if nx < 2 or ny < 2:
        raise ValidationError(f"grid must be at least 2x2, got {nx}x{ny}")
    if re1 <= re0 or im1 <= im0:
        raise ValidationError(f"empty rect {rect}")
    if fact is None:
        fact = precompute_factorization(ss)
    re_axis = np.linspace(re0, re1, nx)
    if log_imag:
        if im0 <= 0:
            raise ValidationError("log-spaced imaginary axis needs im_min > 0")
        im_axis = np.geomspace(im0, im1, ny)
    else:
        im_axis = np.linspace(im0, im1, ny)
    S = re_axis[None, :] + 1j * im_axis[:, None]
    M = fact.eval_many(S)
    with np.errstate(divide="ignore"):
        values = np.log10(np.abs(M))
    if isinstance(fact, ModalFactorization):
        poles = fact.modal.observable_poles()
    else:
        poles = fact.poles()
    near = (
        (poles.real >= re0 - 1e-9)
        & (poles.real <= re1 + 1e-9)
        & (poles.imag >= im0 - 1e-9)
        & (poles.imag <= im1 + 1e-9)
    )
    for p in poles[near]:
        hit = np.abs(S - p) <= POLE_PROXIMITY
        if hit.any():
            values[hit] = np.inf
    masks = {float(e): mask_for(values, float(e)) for e in epsilons}
    values.setflags(write=False)
    return PspecGrid(
        rect=(re0, re1, im0, im1),
        nx=nx,
        ny=ny,
        re_axis=re_axis,
        im_axis=im_axis,
        values=values,
        epsilons=tuple(float(e) for e in epsilons),
        masks=masks,
        meta={"fallback": bool(getattr(fact, "warning", False)), "log_imag": log_imag},
    )


def mask_contours(grid: PspecGrid, epsilon: float) -> list[tuple[float, float]]:
    """Boundary points of the epsilon mask (cells with an unmasked 4-neighbor)."""
    mask = grid.masks[float(epsilon)]
    padded = np.pad(mask, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    boundary = mask & ~interior
    ys, xs = np.nonzero(boundary)
    return [(float(grid.re_axis[x]), float(grid.im_axis[y])) for y, x in zip(ys, xs)]


def grid_to_csv(grid: PspecGrid, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["re", "im", "log10mag"])
        for yi in range(grid.ny):
            for xi in range(grid.nx):
                val = grid.values[yi, xi]
                cell = "inf" if np.isposinf(val) else ("-inf" if np.isneginf(val) else repr(float(val)))
                writer.writerow([repr(float(grid.re_axis[xi])), repr(float(grid.im_axis[yi])), cell])


def grid_sidecar(
    grid: PspecGrid,
    margin: float | None = None,
    omega_bar: float | None = None,
) -> dict:
    return {
        "rect": list(grid.rect),
        "nx": grid.nx,
        "ny": grid.ny,
        "epsilons": list(grid.epsilons),
        "margin": margin,
        "omega_bar": omega_bar,
        "log_imag": bool(grid.meta.get("log_imag", False)),
        "fallback": bool(grid.meta.get("fallback", False)),
    }


def grid_sidecar_to_file(grid: PspecGrid, path: str, **kw) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(grid_sidecar(grid, **kw), fh, indent=2, sort_keys=True)
        fh.write("\n")


def default_rect(spectrum: Spectrum, beta: float) -> tuple[float, float, float, float]:
    """Second-order plotting window: conjugate symmetry makes Im >= 0 enough."""
    top = 1.1 * math.sqrt(max(spectrum.lam_max, 1e-12))
    return (-beta, beta / 4.0, 0.0, top)

"""Laplacian eigendecomposition, oscillator mode map, localization classifier.

Localization is detected per eigenvector from three pieces of evidence:
concentration (inverse participation ratio), a small peak set, and an
exponentially decaying magnitude envelope away from the peak set. Distances
for the envelope are measured along the graph's principal spectral
coordinate (the second Laplacian eigenvector), normalized so one unit is
the median coordinate gap across an edge. On lattice-like graphs this
coordinate orders nodes geometrically while resolving distances much finer
than hop counts, which saturate after one or two hops once the graph has
long-range edges.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ValidationError
from .graphs import Graph, LaplacianMatrix, is_connected

__all__ = [
    "Spectrum",
    "SecondOrderModes",
    "LocalizationReport",
    "ClassifierParams",
    "DecayFit",
    "eig_sym",
    "second_order_eigs",
    "inverse_participation_ratio",
    "peak_set",
    "spectral_coordinate",
    "decay_fit",
    "classify_localization",
    "report_to_json",
    "eigenvectors_to_csv",
]

ZERO_EIG_REL = 1e-10


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues with orthonormal, sign-fixed eigenvectors."""

    n: int
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)  # column i pairs with eigenvalue i
    min_gap: float

    @property
    def lam_max(self) -> float:
        return float(self.eigenvalues[-1])

    def is_zero_mode(self, i: int) -> bool:
        return self.eigenvalues[i] <= ZERO_EIG_REL * max(self.lam_max, 1e-300)


def _fix_signs(V: np.ndarray) -> np.ndarray:
    """First component with magnitude > 1e-9 is made positive, per column."""
    V = V.copy()
    for i in range(V.shape[1]):
        col = V[:, i]
        nz = np.flatnonzero(np.abs(col) > 1e-9)
        if nz.size and col[nz[0]] < 0:
            V[:, i] = -col
    return V


def eig_sym(L: LaplacianMatrix) -> Spectrum:
    """Full symmetric eigendecomposition with tiny negatives clamped to zero."""
    try:
        lam, V = np.linalg.eigh(L.entries)
    except np.linalg.LinAlgError as exc:
        norm = float(np.linalg.norm(L.entries))
        raise NumericError(
            f"eigensolver failed to converge (n={L.n}, ||L||_F={norm:.3e}): {exc}"
        ) from exc
    lam_max = float(lam[-1]) if L.n else 0.0
    floor = -ZERO_EIG_REL * max(lam_max, 0.0)
    if lam[0] < floor:
        raise NumericError(
            f"smallest eigenvalue {lam[0]:.3e} below PSD tolerance {floor:.3e}"
        )
    lam = np.where((lam < 0) & (lam >= floor), 0.0, lam)
    V = _fix_signs(V)
    gaps = np.diff(lam)
    min_gap = float(gaps.min()) if gaps.size else float("inf")
    lam.setflags(write=False)
    V.setflags(write=False)
    return Spectrum(L.n, lam, V, min_gap)


@dataclass(frozen=True)
class SecondOrderModes:
    """Per Laplacian eigenvalue, the two generator eigenvalues and eigenvectors."""

    beta: float
    mu_plus: np.ndarray
    mu_minus: np.ndarray
    spectrum: Spectrum = field(repr=False)

    def eigenvector_pair(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        v = self.spectrum.eigenvectors[:, i]
        return (
            np.concatenate([v, self.mu_plus[i] * v]),
            np.concatenate([v, self.mu_minus[i] * v]),
        )


def second_order_mu(lam: float, beta: float) -> tuple[complex, complex]:
    """Roots of mu^2 + beta*mu + lam = 0; real part exactly -beta/2 when underdamped."""
    disc = beta * beta - 4.0 * lam
    if disc < 0:
        imag = np.sqrt(-disc) / 2.0
        return complex(-beta / 2.0, imag), complex(-beta / 2.0, -imag)
    root = np.sqrt(disc)
    return complex((-beta + root) / 2.0), complex((-beta - root) / 2.0)


def second_order_eigs(spectrum: Spectrum, beta: float) -> SecondOrderModes:
    if beta < 0:
        raise ValidationError(f"damping must be >= 0, got {beta}")
    mu_p = np.empty(spectrum.n, dtype=complex)
    mu_m = np.empty(spectrum.n, dtype=complex)
    for i, lam in enumerate(spectrum.eigenvalues):
        mu_p[i], mu_m[i] = second_order_mu(float(lam), beta)
    mu_p.setflags(write=False)
    mu_m.setflags(write=False)
    return SecondOrderModes(beta, mu_p, mu_m, spectrum)


def inverse_participation_ratio(v: np.ndarray) -> float:
    """Sum of fourth powers of a unit vector; 1/n (spread) up to 1 (single node)."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > 1e-8:
        raise ValidationError(f"vector is not normalized: ||v|| = {norm}")
    return float(np.sum(v**4))


def peak_set(v: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Nodes whose magnitude is within a factor alpha of the maximum (ties kept)."""
    if not (0 < alpha < 1):
        raise ValidationError(f"alpha must lie in (0,1), got {alpha}")
    av = np.abs(np.asarray(v, dtype=float))
    vmax = av.max()
    if vmax == 0.0:
        raise ValidationError("zero vector has no peak set")
    return np.flatnonzero(av >= alpha * vmax)


def spectral_coordinate(g: Graph, spectrum: Spectrum | None = None) -> np.ndarray:
    """Second-eigenvector coordinate, normalized by the median gap over edges.

    One unit of this coordinate corresponds to a typical single-edge step.
    """
    if spectrum is None:
        from .graphs import build_laplacian

        spectrum = eig_sym(build_laplacian(g))
    if spectrum.n < 2:
        raise ValidationError("need at least two nodes for a spectral coordinate")
    f = np.asarray(spectrum.eigenvectors[:, 1], dtype=float)
    gaps = np.array([abs(f[i] - f[j]) for (i, j, _) in g.edges])
    scale = float(np.median(gaps)) if gaps.size else 0.0
    if scale <= 0.0:
        # Degenerate embedding (highly symmetric graph); fall back to the mean.
        scale = float(np.mean(gaps)) if gaps.size else 0.0
    if scale <= 0.0:
        return np.zeros_like(f)
    return f / scale


@dataclass(frozen=True)
class DecayFit:
    """Log-linear fit of the tail envelope: |v| <~ c * q^distance."""

    c: float
    q: float
    r2: float


NO_DECAY = DecayFit(c=1.0, q=1.0, r2=0.0)

_MAG_FLOOR = 1e-12
_MIN_FIT_POINTS = 3


def _tail_envelope_fit(av: np.ndarray, dist: np.ndarray) -> DecayFit:
    mask = (dist > 1e-12) & (av > _MAG_FLOOR)
    if int(mask.sum()) < _MIN_FIT_POINTS:
        return NO_DECAY
    d = dist[mask]
    m = av[mask]
    order = np.argsort(d)
    d = d[order]
    m = m[order]
    # Tail supremum: envelope value at distance x is max |v| over nodes at
    # distance >= x. This is the minimal nonincreasing majorant, immune to
    # oscillation zeros under the envelope.
    env = np.maximum.accumulate(m[::-1])[::-1]
    dd, first = np.unique(d, return_index=True)
    ee = env[first]
    if dd.size < _MIN_FIT_POINTS:
        return NO_DECAY
    x = dd
    y = np.log(ee)
    A = np.stack([np.ones(x.size), x], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(resid @ resid)
    centered = y - y.mean()
    ss_tot = float(centered @ centered)
    r2 = 0.0 if ss_tot <= 1e-24 else 1.0 - ss_res / ss_tot
    return DecayFit(c=float(np.exp(coef[0])), q=float(np.exp(coef[1])), r2=r2)


def decay_fit(
    v: np.ndarray,
    peaks,
    g: Graph,
    coordinate: np.ndarray | None = None,
) -> DecayFit:
    """Fit the magnitude envelope of v against distance from its peak set.

    Returns (c, q, r2); q = 1 and r2 = 0 signal no evidence of decay
    (fewer than three usable envelope points).
    """
    peaks = np.asarray(sorted(set(int(p) for p in np.asarray(peaks).ravel())))
    if peaks.size == 0:
        raise ValidationError("peak set is empty")
    av = np.abs(np.asarray(v, dtype=float))
    if coordinate is None:
        coordinate = spectral_coordinate(g)
    dist = np.min(np.abs(coordinate[:, None] - coordinate[None, peaks]), axis=1)
    dist[peaks] = 0.0
    return _tail_envelope_fit(av, dist)


@dataclass
class ClassifierParams:
    """Localization thresholds. All CLI-overridable."""

    alpha: float = 0.5
    q_max: float = 0.8
    r2_min: float = 0.5
    ipr_min: float | None = None  # defaults to 10/n
    max_peaks: int = 4

    def resolved_ipr_min(self, n: int) -> float:
        return 10.0 / n if self.ipr_min is None else self.ipr_min


@dataclass(frozen=True)
class LocalizationReport:
    n: int
    labels: np.ndarray = field(repr=False)  # bool per eigenindex
    peak_sets: dict[int, tuple[int, ...]] = field(repr=False)
    decay_fits: dict[int, DecayFit] = field(repr=False)
    ipr: np.ndarray = field(repr=False)
    localized_region: tuple[int, ...]
    delocalized_region: tuple[int, ...]
    params: ClassifierParams

    @property
    def localized_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels)

    @property
    def localized_count(self) -> int:
        return int(self.labels.sum())


def _classify_one(i, lam_i, v, is_zero, ipr_i, ipr_min, params, coordinate):
    if is_zero or ipr_i < ipr_min:
        return None
    av = np.abs(v)
    peaks = np.flatnonzero(av >= params.alpha * av.max())
    if peaks.size == 0 or peaks.size > params.max_peaks:
        return None
    dist = np.min(np.abs(coordinate[:, None] - coordinate[None, peaks]), axis=1)
    dist[peaks] = 0.0
    fit = _tail_envelope_fit(av, dist)
    localized = fit.q <= params.q_max and fit.r2 >= params.r2_min
    return peaks, fit, localized


def classify_localization(
    spectrum: Spectrum,
    g: Graph,
    params: ClassifierParams | None = None,
    threads: int | None = None,
) -> LocalizationReport:
    """Label every eigenvector localized/delocalized and split the node set.

    The zero-mode (constant) eigenvector is always delocalized. The localized
    region is the union of peak sets of localized eigenvectors; the
    delocalized region is its complement.
    """
    if params is None:
        params = ClassifierParams()
    if not is_connected(g):
        raise ValidationError("localization classifier requires a connected graph")
    n = spectrum.n
    ipr_min = params.resolved_ipr_min(n)
    coordinate = spectral_coordinate(g, spectrum)
    ipr = np.sum(spectrum.eigenvectors**4, axis=0)

    def work(i):
        return _classify_one(
            i,
            spectrum.eigenvalues[i],
            spectrum.eigenvectors[:, i],
            spectrum.is_zero_mode(i),
            ipr[i],
            ipr_min,
            params,
            coordinate,
        )

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(n)))
    else:
        results = [work(i) for i in range(n)]

    labels = np.zeros(n, dtype=bool)
    peak_sets: dict[int, tuple[int, ...]] = {}
    fits: dict[int, DecayFit] = {}
    region: set[int] = set()
    for i, res in enumerate(results):
        if res is None:
            continue
        peaks, fit, localized = res
        if localized:
            labels[i] = True
            peak_sets[i] = tuple(int(p) for p in peaks)
            fits[i] = fit
            region.update(peak_sets[i])
    localized_region = tuple(sorted(region))
    delocalized_region = tuple(sorted(set(range(n)) - region))
    labels.setflags(write=False)
    return LocalizationReport(
        n=n,
        labels=labels,
        peak_sets=peak_sets,
        decay_fits=fits,
        ipr=ipr,
        localized_region=localized_region,
        delocalized_region=delocalized_region,
        params=params,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def report_to_json(report: LocalizationReport) -> dict:
    return {
        "n": report.n,
        "localized_count": report.localized_count,
        "labels": ["localized" if x else "delocalized" for x in report.labels],
        "peak_sets": {str(i): list(p) for i, p in sorted(report.peak_sets.items())},
        "decay_fits": {
            str(i): {"c": f.c, "q": f.q, "r2": f.r2}
            for i, f in sorted(report.decay_fits.items())
        },
        "ipr": [float(x) for x in report.ipr],
        "localized_region": list(report.localized_region),
        "delocalized_region": list(report.delocalized_region),
        "params": {
            "alpha": report.params.alpha,
            "q_max": report.params.q_max,
            "r2_min": report.params.r2_min,
            "ipr_min": report.params.resolved_ipr_min(report.n),
            "max_peaks": report.params.max_peaks,
        },
    }


def eigenvectors_to_csv(spectrum: Spectrum, path: str) -> None:
    """One column per eigenvector, ascending eigenvalue order; header row holds eigenvalues."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([repr(float(x)) for x in spectrum.eigenvalues])
        for k in range(spectrum.n):
            writer.writerow([repr(float(x)) for x in spectrum.eigenvectors[k, :]])


def report_to_json_file(report: LocalizationReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_json(report), fh, indent=2, sort_keys=True)
        fh.write("\n")

"""Destabilizing perturbations at the stability margin.

Three constructions, all with gain magnitude exactly 1/||M||_inf so the
loop identity 1 - M(j w) Delta(j w) = 0 holds at the peak frequency: a
static complex gain, a pure delay (phase wrapped into [0, 2pi) to keep the
delay causal), and a first-order real-coefficient all-pass that realizes
the required phase with flat magnitude.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import StaleDestabilizerError, ValidationError
from .frequency import StateSpace, eval_transfer, hinf_norm, precompute_factorization

__all__ = [
    "StaticComplex",
    "Delay",
    "AllPass",
    "Destabilizer",
    "Verification",
    "static_destabilizer",
    "delay_destabilizer",
    "allpass_destabilizer",
    "delta_response",
    "verify_destabilization",
    "destabilizer_to_json",
]

CHAR_TOL = 1e-6
GAIN_TOL = 1e-9


@dataclass(frozen=True)
class StaticComplex:
    delta: complex

    kind = "static-complex"


@dataclass(frozen=True)
class Delay:
    gain: float
    T: float
    wrapped: bool = False

    kind = "delay"


@dataclass(frozen=True)
class AllPass:
    gain: float  # signed; |gain| = 1/||M||_inf
    a: float

    kind = "all-pass"


@dataclass(frozen=True)
class Destabilizer:
    kind: StaticComplex | Delay | AllPass
    target_omega: float
    predicted_pole: complex
    hinf: float
    margin: float
    meta: dict = field(default_factory=dict)


def delta_response(kind, s: complex) -> complex:
    """Evaluate the perturbation transfer function at a complex point."""
    if isinstance(kind, StaticComplex):
        return kind.delta
    if isinstance(kind, Delay):
        return kind.gain * cmath.exp(-kind.T * s)
    if isinstance(kind, AllPass):
        return kind.gain * (kind.a - s) / (kind.a + s)
    raise ValidationError(f"unknown destabilizer kind {kind!r}")


def static_destabilizer(ss: StateSpace, fact=None) -> Destabilizer:
    """delta = 1/M(j w_bar): smallest-magnitude static complex destabilizer."""
    if fact is None:
        fact = precompute_factorization(ss)
    norm, wbar = hinf_norm(ss, fact)
    mval = eval_transfer(ss, 1j * wbar, fact)
    delta = 1.0 / mval
    return Destabilizer(
        kind=StaticComplex(delta),
        target_omega=wbar,
        predicted_pole=1j * wbar,
        hinf=norm,
        margin=1.0 / norm,
    )


def delay_destabilizer(ss: StateSpace, fact=None) -> Destabilizer:
    """Delta(s) = (1/||M||_inf) e^{-Ts} with T = wrapped phase of M(j w_bar) / w_bar."""
    if fact is None:
        fact = precompute_factorization(ss)
    norm, wbar = hinf_norm(ss, fact)
    if wbar <= 0.0:
        raise ValidationError(
            "peak gain is attained at omega = 0; use static_destabilizer"
        )
    mval = eval_transfer(ss, 1j * wbar, fact)
    phi_raw = cmath.phase(mval)
    phi = phi_raw % (2.0 * math.pi)
    return Destabilizer(
        kind=Delay(gain=1.0 / norm, T=phi / wbar, wrapped=phi_raw < 0),
        target_omega=wbar,
        predicted_pole=1j * wbar,
        hinf=norm,
        margin=1.0 / norm,
        meta={"phase_raw": phi_raw, "phase_wrapped": phi},
    )


def allpass_destabilizer(ss: StateSpace, fact=None) -> Destabilizer:
    """First-order non-minimum-phase Delta(s) = g (a - s)/(a + s), real coefficients.

    The branch on the required phase psi = -arg M(j w_bar) picks the sign of
    g and the pole/zero location a so that arg Delta(j w_bar) = psi while
    |Delta(j w)| = |g| at every frequency.
    """
    if fact is None:
        fact = precompute_factorization(ss)
    norm, wbar = hinf_norm(ss, fact)
    if wbar <= 0.0:
        raise ValidationError(
            "peak gain is attained at omega = 0; use static_destabilizer"
        )
    mval = eval_transfer(ss, 1j * wbar, fact)
    psi = -cmath.phase(mval)
    # wrap into (-pi, pi]
    psi = math.remainder(psi, 2.0 * math.pi)
    if psi <= -math.pi:
        psi += 2.0 * math.pi
    g_mag = 1.0 / norm
    meta = {"psi": psi}
    if abs(psi) < 1e-12:
        kind = AllPass(gain=g_mag, a=math.inf)
        meta["degenerate"] = "static positive gain"
    elif abs(abs(psi) - math.pi) < 1e-12:
        kind = AllPass(gain=-g_mag, a=math.inf)
        meta["degenerate"] = "static negative gain"
    elif psi < 0:
        kind = AllPass(gain=g_mag, a=wbar / math.tan(-psi / 2.0))
    else:
        kind = AllPass(gain=-g_mag, a=wbar / math.tan((math.pi - psi) / 2.0))
    return Destabilizer(
        kind=kind,
        target_omega=wbar,
        predicted_pole=1j * wbar,
        hinf=norm,
        margin=1.0 / norm,
        meta=meta,
    )


@dataclass(frozen=True)
class Verification:
    verdict: str  # "marginal" | "stable" | "unstable"
    nearest_pole: complex | None = None
    max_real_part: float | None = None
    char_residual: float | None = None
    sim_rate: float | None = None
    sim_verdict: str | None = None


def _check_invariants(ss: StateSpace, d: Destabilizer, fact) -> complex:
    wbar = d.target_omega
    mval = eval_transfer(ss, 1j * wbar, fact)
    dval = delta_response(d.kind, 1j * wbar) if not (
        isinstance(d.kind, AllPass) and math.isinf(d.kind.a)
    ) else complex(d.kind.gain)
    gain_err = abs(abs(dval) * d.hinf - 1.0)
    if gain_err > 1e-6:
        raise StaleDestabilizerError(
            f"|Delta(j w_bar)| * ||M||_inf = {abs(dval) * d.hinf:.9f} != 1; "
            "destabilizer does not match this system"
        )
    char = abs(1.0 - mval * dval)
    if char > CHAR_TOL:
        raise StaleDestabilizerError(
            f"|1 - M(j w_bar) Delta(j w_bar)| = {char:.3e} > {CHAR_TOL}; "
            "destabilizer does not match this system"
        )
    return mval


def verify_destabilization(
    ss: StateSpace, d: Destabilizer, fact=None, run_simulation: bool = True
) -> Verification:
    """Check that the destabilizer places a closed-loop pole at j w_bar.

    Static complex gains are verified spectrally on the closed-loop
    generator. Delay and all-pass perturbations are verified through the
    loop identity at j w_bar plus a time-domain growth check at 1.05x gain.
    """
    if fact is None:
        fact = precompute_factorization(ss)
    mval = _check_invariants(ss, d, fact)
    wbar = d.target_omega
    if isinstance(d.kind, StaticComplex):
        acl = ss.a.astype(complex) + np.outer(ss.b, ss.c) * d.kind.delta
        eigs = np.linalg.eigvals(acl)
        dist = np.abs(eigs - 1j * wbar)
        i = int(np.argmin(dist))
        tol = 1e-6 * (1.0 + wbar)
        max_re = float(eigs.real.max())
        if dist[i] <= tol:
            return Verification(
                "marginal", nearest_pole=complex(eigs[i]), max_real_part=max_re
            )
        if max_re > 1e-9 * (1.0 + wbar):
            return Verification(
                "unstable", nearest_pole=complex(eigs[i]), max_real_part=max_re
            )
        return Verification(
            "stable", nearest_pole=complex(eigs[i]), max_real_part=max_re
        )

    char = abs(1.0 - mval * delta_response(d.kind, 1j * wbar)) if not (
        isinstance(d.kind, AllPass) and math.isinf(d.kind.a)
    ) else abs(1.0 - mval * d.kind.gain)
    if not run_simulation:
        return Verification("marginal", char_residual=float(char))
    if ss.order != "second" or ss.lap is None or ss.pv is None:
        raise ValidationError(
            "time-domain verification needs a second-order oscillator system"
        )
    from .graphs import LaplacianMatrix
    from .simulate import (
        AllPassSpec,
        DelaySpec,
        SimConfig,
        simulate,
        stability_verdict,
    )

    n = ss.lap.shape[0]
    if isinstance(d.kind, Delay):
        spec = DelaySpec(gain=1.05 * d.kind.gain, T=d.kind.T)
    else:
        if math.isinf(d.kind.a):
            raise ValidationError(
                "degenerate all-pass (infinite corner) verifies as a static gain"
            )
        spec = AllPassSpec(gain=1.05 * d.kind.gain, a=d.kind.a)
    rng = np.random.default_rng(0)
    theta0 = rng.standard_normal(n) * 1e-2
    theta0 -= theta0.mean()
    cfg = SimConfig(
        L=LaplacianMatrix(n, ss.lap),
        beta=float(ss.beta),
        pv=ss.pv,
        delta=spec,
        theta0=theta0,
        omega0=np.zeros(n),
        t_final=max(80.0, 60.0 * 2.0 * math.pi / wbar),
    )
    traj = simulate(cfg)
    verdict = stability_verdict(traj)
    out = "marginal" if verdict.kind == "growing" else "stable"
    return Verification(
        out,
        char_residual=float(char),
        sim_rate=verdict.rate,
        sim_verdict=verdict.kind,
    )


def destabilizer_to_json(d: Destabilizer, verification: Verification | None = None) -> dict:
    kind = d.kind
    if isinstance(kind, StaticComplex):
        params = {
            "kind": kind.kind,
            "delta_re": kind.delta.real,
            "delta_im": kind.delta.imag,
        }
    elif isinstance(kind, Delay):
        params = {"kind": kind.kind, "gain": kind.gain, "T": kind.T, "wrapped": kind.wrapped}
    else:
        params = {"kind": kind.kind, "gain": kind.gain, "a": kind.a}
    out = {
        "perturbation": params,
        "omega_bar": d.target_omega,
        "hinf": d.hinf,
        "margin": d.margin,
        "predicted_pole": {"re": d.predicted_pole.real, "im": d.predicted_pole.imag},
    }
    if verification is not None:
        out["verification"] = {
            "verdict": verification.verdict,
            "nearest_pole": (
                None
                if verification.nearest_pole is None
                else {
                    "re": verification.nearest_pole.real,
                    "im": verification.nearest_pole.imag,
                }
            ),
            "max_real_part": verification.max_real_part,
            "char_residual": verification.char_residual,
            "sim_rate": verification.sim_rate,
            "sim_verdict": verification.sim_verdict,
        }
    return out


def destabilizer_to_json_file(d: Destabilizer, path: str, verification=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(destabilizer_to_json(d, verification), fh, indent=2, sort_keys=True)
        fh.write("\n")

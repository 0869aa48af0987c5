"""Fixed-step time-domain integration of the oscillator network.

RK4 on theta'' = -L theta - beta theta' + b u with y = c theta. The
uncertainty channel u supports a static real gain, a pure delay (history
buffer with linear interpolation, zero prehistory), and the one-state
all-pass realization u = -g y + z, z' = -a z + 2 a g y. Static complex
gains are not simulated; they are verified spectrally in the small-gain
module.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ValidationError
from .graphs import LaplacianMatrix
from .perturbation import PerturbationVectors

__all__ = [
    "StaticReal",
    "DelaySpec",
    "AllPassSpec",
    "SimConfig",
    "Trajectory",
    "Verdict",
    "simulate",
    "sync_metric",
    "stability_verdict",
    "oscillation_frequency",
    "trajectory_to_csv",
    "verdict_to_json",
]

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class StaticReal:
    gain: float

    kind = "static-real"


@dataclass(frozen=True)
class DelaySpec:
    gain: float
    T: float

    kind = "delay"


@dataclass(frozen=True)
class AllPassSpec:
    gain: float
    a: float

    kind = "all-pass"


DeltaSpec = StaticReal | DelaySpec | AllPassSpec


@dataclass(frozen=True)
class SimConfig:
    L: LaplacianMatrix
    beta: float
    theta0: np.ndarray
    omega0: np.ndarray
    t_final: float
    pv: PerturbationVectors | None = None
    delta: DeltaSpec | None = None
    h: float | None = None

    def step_bound(self) -> float:
        lam_max = float(np.linalg.eigvalsh(self.L.entries)[-1])
        bound = 0.01 * 2.0 * math.pi / math.sqrt(max(lam_max, 1e-300))
        if isinstance(self.delta, DelaySpec):
            bound = min(bound, self.delta.T / 20.0)
        return bound

    def resolved_h(self) -> float:
        bound = self.step_bound()
        if self.h is None:
            return bound
        if self.h > bound * (1.0 + 1e-12):
            raise ValidationError(
                f"step h={self.h} exceeds the stability/delay bound {bound:.6g}"
            )
        return self.h

    def validate(self) -> None:
        if self.beta <= 0:
            raise ValidationError(f"beta must be > 0, got {self.beta}")
        if self.t_final <= 0:
            raise ValidationError(f"t_final must be > 0, got {self.t_final}")
        n = self.L.n
        if np.asarray(self.theta0).shape != (n,) or np.asarray(self.omega0).shape != (n,):
            raise ValidationError("initial conditions must be length-n vectors")
        if self.delta is not None and self.pv is None:
            raise ValidationError("a perturbation spec needs scenario vectors (pv)")
        if isinstance(self.delta, DelaySpec) and self.delta.T < 0:
            raise ValidationError("delay must be nonnegative")


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)  # (T, n)
    omega: np.ndarray = field(repr=False)  # (T, n)
    sync: np.ndarray = field(repr=False)  # deviation from the network mean
    output: np.ndarray | None = field(repr=False)  # y = c theta, when pv given
    cfg: SimConfig = field(repr=False)
    truncated: bool = False
    trunc_step: int | None = None

    @property
    def h(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0


def simulate(cfg: SimConfig) -> Trajectory:
    """Integrate the (possibly perturbed) network with fixed-step RK4."""
    cfg.validate()
    if cfg.delta is not None and not isinstance(
        cfg.delta, (StaticReal, DelaySpec, AllPassSpec)
    ):
        raise ValidationError(
            "only static-real, delay and all-pass perturbations are simulated; "
            "verify complex static gains spectrally instead"
        )
    n = cfg.L.n
    L = cfg.L.entries
    beta = cfg.beta
    h = cfg.resolved_h()
    steps = int(round(cfg.t_final / h))
    times = np.arange(steps + 1) * h

    bvec = cfg.pv.b if cfg.pv is not None else None
    cvec = cfg.pv.c if cfg.pv is not None else None

    theta = np.empty((steps + 1, n))
    omega = np.empty((steps + 1, n))
    youts = np.empty(steps + 1) if cvec is not None else None
    theta[0] = np.asarray(cfg.theta0, dtype=float)
    omega[0] = np.asarray(cfg.omega0, dtype=float)
    if youts is not None:
        youts[0] = cvec @ theta[0]

    delta = cfg.delta
    delay = isinstance(delta, DelaySpec)
    allpass = isinstance(delta, AllPassSpec)
    static = isinstance(delta, StaticReal)
    z = 0.0  # all-pass internal state

    def delayed_output(t: float) -> float:
        tq = t - delta.T
        if tq < 0.0:
            return 0.0
        pos = tq / h
        i0 = int(pos)
        frac = pos - i0
        if i0 >= steps:
            return float(youts[steps])
        return float(youts[i0] * (1.0 - frac) + youts[i0 + 1] * frac)

    def rhs(t: float, th: np.ndarray, om: np.ndarray, zz: float):
        if delta is None or bvec is None:
            u = 0.0
        elif static:
            u = delta.gain * float(cvec @ th)
        elif delay:
            u = delta.gain * delayed_output(t)
        else:  # all-pass
            y = float(cvec @ th)
            u = -delta.gain * y + zz
        dth = om
        dom = -(L @ th) - beta * om + (bvec * u if bvec is not None and u != 0.0 else 0.0)
        if allpass:
            y = float(cvec @ th)
            dz = -delta.a * zz + 2.0 * delta.a * delta.gain * y
        else:
            dz = 0.0
        return dth, dom, dz

    truncated = False
    trunc_step = None
    last = steps
    for s in range(steps):
        t = times[s]
        th, om = theta[s], omega[s]
        k1t, k1o, k1z = rhs(t, th, om, z)
        k2t, k2o, k2z = rhs(t + h / 2, th + h / 2 * k1t, om + h / 2 * k1o, z + h / 2 * k1z)
        k3t, k3o, k3z = rhs(t + h / 2, th + h / 2 * k2t, om + h / 2 * k2o, z + h / 2 * k2z)
        k4t, k4o, k4z = rhs(t + h, th + h * k3t, om + h * k3o, z + h * k3z)
        theta[s + 1] = th + h / 6 * (k1t + 2 * k2t + 2 * k3t + k4t)
        omega[s + 1] = om + h / 6 * (k1o + 2 * k2o + 2 * k3o + k4o)
        z = z + h / 6 * (k1z + 2 * k2z + 2 * k3z + k4z)
        if youts is not None:
            youts[s + 1] = cvec @ theta[s + 1]
        state_max = max(np.abs(theta[s + 1]).max(), np.abs(omega[s + 1]).max())
        if np.isnan(state_max):
            raise NumericError(f"NaN state at step {s + 1} (t = {times[s + 1]:.6g})")
        if state_max > DIVERGENCE_LIMIT:
            truncated = True
            trunc_step = s + 1
            last = s + 1
            break

    sl = slice(0, last + 1)
    theta = theta[sl]
    omega = omega[sl]
    times = times[sl]
    if youts is not None:
        youts = youts[sl]
    dev = theta - theta.mean(axis=1, keepdims=True)
    sync = np.linalg.norm(dev, axis=1)
    return Trajectory(
        times=times,
        theta=theta,
        omega=omega,
        sync=sync,
        output=youts,
        cfg=cfg,
        truncated=truncated,
        trunc_step=trunc_step,
    )


def sync_metric(traj: Trajectory) -> np.ndarray:
    """Per-time deviation from the network mean, ||theta - mean(theta) 1||_2."""
    return traj.sync


@dataclass(frozen=True)
class Verdict:
    kind: str  # "growing" | "bounded" | "indeterminate"
    rate: float
    retried: bool = False


def _log_slope(traj: Trajectory) -> float | None:
    t_final = traj.cfg.t_final
    sel = traj.times >= 0.2 * t_final
    if int(sel.sum()) < 100:
        raise ValidationError(
            f"need at least 100 post-transient samples, have {int(sel.sum())}"
        )
    d = traj.sync[sel]
    t = traj.times[sel]
    if np.all(d == 0.0):
        return None
    keep = d > 0.0
    if int(keep.sum()) < 2:
        return None
    A = np.stack([np.ones(int(keep.sum())), t[keep]], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(d[keep]), rcond=None)
    return float(coef[1])


def stability_verdict(traj: Trajectory, allow_retry: bool = True) -> Verdict:
    """Growth verdict from the slope of log sync deviation.

    The band |slope| <= 1e-3 beta is indeterminate; one retry doubles the
    horizon before reporting the raw rate with the indeterminate flag.
    """
    beta = traj.cfg.beta
    slope = _log_slope(traj)
    if slope is None:
        return Verdict("bounded", rate=-math.inf)
    band = 1e-3 * beta
    if slope > band:
        return Verdict("growing", rate=slope)
    if slope < -band:
        return Verdict("bounded", rate=slope)
    if allow_retry:
        cfg = traj.cfg
        longer = SimConfig(
            L=cfg.L,
            beta=cfg.beta,
            theta0=cfg.theta0,
            omega0=cfg.omega0,
            t_final=2.0 * cfg.t_final,
            pv=cfg.pv,
            delta=cfg.delta,
            h=cfg.h,
        )
        again = stability_verdict(simulate(longer), allow_retry=False)
        return Verdict(again.kind, again.rate, retried=True)
    return Verdict("indeterminate", rate=slope)


def oscillation_frequency(traj: Trajectory, window: float = 0.5) -> float:
    """Dominant angular frequency from zero crossings of the channel output."""
    if traj.output is None:
        raise ValidationError("trajectory has no output channel; simulate with pv set")
    sel = traj.times >= (1.0 - window) * traj.times[-1]
    y = traj.output[sel]
    t = traj.times[sel]
    sign = np.sign(y)
    nz = sign != 0
    cross = np.flatnonzero(np.diff(sign[nz]) != 0)
    tt = t[nz]
    if cross.size < 2:
        raise NumericError("too few zero crossings to estimate a frequency")
    t_first, t_last = tt[cross[0]], tt[cross[-1]]
    return float(math.pi * (cross.size - 1) / (t_last - t_first))


def trajectory_to_csv(traj: Trajectory, path: str, decimate: int = 1) -> None:
    if decimate < 1:
        raise ValidationError(f"decimate must be >= 1, got {decimate}")
    n = traj.theta.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"theta{k}" for k in range(n)] + ["d"])
        for i in range(0, traj.times.size, decimate):
            row = [repr(float(traj.times[i]))]
            row += [repr(float(x)) for x in traj.theta[i]]
            row.append(repr(float(traj.sync[i])))
            writer.writerow(row)


def verdict_to_json(verdict: Verdict) -> dict:
    rate = verdict.rate
    return {
        "verdict": verdict.kind,
        "rate": None if math.isinf(rate) and rate < 0 else rate,
        "rate_is_neg_inf": bool(math.isinf(rate) and rate < 0),
        "retried": verdict.retried,
    }


def verdict_to_json_file(verdict: Verdict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(verdict_to_json(verdict), fh, indent=2, sort_keys=True)
        fh.write("\n")

"""Asymptotic approximation chain for the NSV system.

The chain starts from the split u = v + w, where w solves the homogeneous
Voigt equation from u's initial data and v solves the linear Voigt equation
forced by f - B(u, u) from rest.  Higher levels solve the same linear
equation with the lagged right-hand side f - B(v^(m-1), v^(m-1)).  All
levels start from zero and converge to u in the V norm as t grows.

Bounds table:

    M_1   = 2 |f|_{-1} / (alpha nu sqrt(d0))
    M_3/2 = (|f|_{-1/2} + c1 lam1^{-3/4} M_1^2) / (alpha nu sqrt(d0))
    M_2   = (|f|_0 + c2 lam1^{-3/4} M_1 M_3/2) / (alpha nu sqrt(d0))
    M_m   = (|f|_{m-2} + c_m lam1^{-7/8} M_1^{1/4} M_2^{3/4} M_{m-1})
            / (alpha nu sqrt(d0)),   m >= 3.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import (ConfigurationError, SpectralField, full_to_half,
                      half_spectrum, half_to_full, sobolev_norm)
from .bilinear import EmpiricalConstants, bilinear_B_half
from .integrator import (BlowUpError, SimParams, Trajectory, _VoigtStepper,
                         homogeneous_decay, solve_linear_voigt)


@dataclass(frozen=True)
class BoundsTable:
    """Recursive a-priori bounds on the chain levels (all for t >= t0)."""

    d0: float
    m1: float
    m32: float
    m2: float
    higher: dict          # m >= 3 -> M_m
    constants: EmpiricalConstants

    def bound(self, m: int) -> float:
        if m == 1:
            return self.m1
        if m == 2:
            return self.m2
        return self.higher[m]


def compute_bounds(params: SimParams, constants: EmpiricalConstants,
                   f: SpectralField | None = None,
                   m_max: int = 4) -> BoundsTable:
    """Evaluate the recursive bounds M_1, M_3/2, M_2, ..., M_{m_max}."""
    if params.alpha <= 0:
        raise ConfigurationError("bounds require alpha > 0 (they carry 1/alpha)")
    if m_max < 2:
        raise ConfigurationError("m_max must be >= 2")
    lat = params.lattice()
    if f is None:
        f = params.forcing.realize(lat)
    lam1 = lat.lambda1
    d0 = params.d0()
    denom = params.alpha * params.nu * math.sqrt(d0)
    m1 = 2.0 * sobolev_norm(f, -1) / denom
    m32 = (sobolev_norm(f, -0.5) + constants.c1 * lam1 ** -0.75 * m1 ** 2) / denom
    m2 = (sobolev_norm(f, 0) + constants.c2 * lam1 ** -0.75 * m1 * m32) / denom
    higher = {}
    prev = m2
    for m in range(3, m_max + 1):
        cm = constants.c_m.get(m)
        if cm is None:
            raise ConfigurationError(f"no empirical constant c_{m} available")
        prev = (sobolev_norm(f, m - 2)
                + cm * lam1 ** -0.875 * m1 ** 0.25 * m2 ** 0.75 * prev) / denom
        higher[m] = prev
    return BoundsTable(d0=d0, m1=m1, m32=m32, m2=m2, higher=higher,
                       constants=constants)


@dataclass
class ChainLevel:
    """One level of the approximation chain with its error diagnostics."""

    index: int
    trajectory: Trajectory
    error_series: np.ndarray      # ||u(t_i) - v^(m)(t_i)|| at sample times
    bound: float | None = None    # M_m when a bounds table was supplied
    sup_norm: float | None = None  # sup_{t >= t0} |v^(m)(t)|_m
    cadence_warning: str | None = None


@dataclass
class SplitResult:
    """Co-evolved decomposition u = v + w."""

    u: Trajectory
    v: Trajectory
    w: Trajectory

    def reconstruction_error(self) -> float:
        """max_t ||u - (v + w)|| over the stored samples."""
        worst = 0.0
        for uu, vv, ww in zip(self.u.fields, self.v.fields, self.w.fields):
            d = SpectralField(uu.lattice, uu.coeffs - vv.coeffs - ww.coeffs)
            worst = max(worst, sobolev_norm(d, 1))
        return worst


def split_vw(params: SimParams, u0: SpectralField | None = None) -> SplitResult:
    """Co-evolve u, v and w over [0, t_end] with shared nonlinear stages.

    v solves v_t + nu A v + alpha^2 A v_t = f - B(u, u) from rest and w is
    the exact homogeneous decay of u0, so u = v + w holds at every sample
    up to round-off.
    """
    lat = params.lattice()
    if u0 is None:
        u0 = params.initial_field(lat)
    f = params.forcing.realize(lat)
    hs = half_spectrum(lat)
    stepper = _VoigtStepper(lat, params.nu, params.alpha, params.dt)
    fh = full_to_half(f.coeffs)
    dt, Eh, Ef = params.dt, stepper.e_half, stepper.e_full

    def G(uh):
        return (fh - bilinear_B_half(hs, uh, uh)) * stepper.voigt

    n_steps = int(round(params.t_end / params.dt))
    uh = full_to_half(u0.coeffs)
    vh = np.zeros_like(uh)
    times = [0.0]
    u_fields = [u0]
    v_fields = [SpectralField.zero(lat)]
    w_fields = [u0]
    for n in range(n_steps):
        t = (n + 1) * dt
        g1 = G(uh)
        a = Eh * (uh + (dt / 2.0) * g1)
        g2 = G(a)
        b = Eh * uh + (dt / 2.0) * g2
        g3 = G(b)
        c = Ef * uh + dt * Eh * g3
        g4 = G(c)
        incr = (dt / 6.0) * (Ef * g1 + 2.0 * Eh * (g2 + g3) + g4)
        uh = Ef * uh + incr
        vh = Ef * vh + incr
        if not np.all(np.isfinite(uh)):
            raise BlowUpError(t=t, last_valid=u_fields[-1])
        if (n + 1) % params.cadence == 0:
            times.append(t)
            u_fields.append(SpectralField(lat, half_to_full(lat, uh)))
            v_fields.append(SpectralField(lat, half_to_full(lat, vh)))
            w_fields.append(homogeneous_decay(u0, t, params.nu, params.alpha))
    t_arr = np.asarray(times)
    return SplitResult(u=Trajectory(times=t_arr, fields=u_fields),
                       v=Trajectory(times=t_arr, fields=v_fields),
                       w=Trajectory(times=t_arr, fields=w_fields))


def _error_series(reference: Trajectory, level_traj: Trajectory) -> np.ndarray:
    errs = []
    for uu, vv in zip(reference.fields, level_traj.fields):
        d = SpectralField(uu.lattice, uu.coeffs - vv.coeffs)
        errs.append(sobolev_norm(d, 1))
    return np.asarray(errs)


def _sup_norm(traj: Trajectory, m: float, t0: float | None) -> float | None:
    if t0 is None:
        return None
    vals = [sobolev_norm(u, m) for u, t in zip(traj.fields, traj.times)
            if t >= t0]
    return max(vals) if vals else None


def level_one(split: SplitResult, bounds: BoundsTable | None = None,
              t0: float | None = None) -> ChainLevel:
    """Package the v of split_vw as chain level m = 1."""
    return ChainLevel(
        index=1,
        trajectory=split.v,
        error_series=_error_series(split.u, split.v),
        bound=bounds.m1 if bounds is not None else None,
        sup_norm=_sup_norm(split.v, 1, t0))


def _rhs_interpolation_defect(b_series: list, b_scale: float) -> float:
    """Max second difference of the stored right-hand-side samples, as a
    relative proxy for the linear-interpolation error between samples."""
    worst = 0.0
    for i in range(1, len(b_series) - 1):
        d2 = b_series[i + 1] - 2.0 * b_series[i] + b_series[i - 1]
        worst = max(worst, float(np.abs(d2).max()))
    return worst / (8.0 * b_scale) if b_scale > 0 else 0.0


def build_next_level(previous: ChainLevel, params: SimParams,
                     reference: Trajectory,
                     bounds: BoundsTable | None = None,
                     t0: float | None = None,
                     interp_tol: float = 1e-4) -> ChainLevel:
    """Solve the next linear Voigt level forced by f - B(prev, prev).

    The previous level's B(v, v) is evaluated at its stored sample times
    and linearly interpolated in between; a too-coarse cadence is recorded
    as a warning on the returned level.
    """
    lat = reference.lattice
    hs = half_spectrum(lat)
    f = params.forcing.realize(lat)
    prev = previous.trajectory
    b_series = []
    for v in prev.fields:
        vh = full_to_half(v.coeffs)
        b_series.append(half_to_full(lat, bilinear_B_half(hs, vh, vh)))
    b_scale = max((float(np.abs(b).max()) for b in b_series), default=0.0)
    warning = None
    defect = _rhs_interpolation_defect(b_series, b_scale)
    if defect > interp_tol:
        warning = (f"cadence too coarse for right-hand-side interpolation: "
                   f"relative defect {defect:.3e} exceeds {interp_tol:.1e}; "
                   f"store samples at least every "
                   f"{(prev.times[1] - prev.times[0]) / 2:.3g} time units")
    t_samples = prev.times

    def g(t):
        if t <= t_samples[0]:
            b = b_series[0]
        elif t >= t_samples[-1]:
            b = b_series[-1]
        else:
            i = int(np.searchsorted(t_samples, t, side="right")) - 1
            wgt = (t - t_samples[i]) / (t_samples[i + 1] - t_samples[i])
            b = (1.0 - wgt) * b_series[i] + wgt * b_series[i + 1]
        return f.coeffs - b

    horizon = float(reference.times[-1])
    traj, _ = solve_linear_voigt(g, params, s=previous.index + 1,
                                 horizon=horizon, lattice=lat)
    m = previous.index + 1
    return ChainLevel(
        index=m,
        trajectory=traj,
        error_series=_error_series(reference, traj),
        bound=bounds.bound(m) if bounds is not None else None,
        sup_norm=_sup_norm(traj, m, t0),
        cadence_warning=warning)


def build_chain(params: SimParams, m_max: int,
                bounds: BoundsTable | None = None,
                u0: SpectralField | None = None,
                interp_tol: float = 1e-4) -> tuple[SplitResult, list]:
    """Run the primary trajectory and the full chain up to level m_max."""
    split = split_vw(params, u0)
    t0 = detect_t0(split.u, bounds, params) if bounds is not None else None
    levels = [level_one(split, bounds, t0)]
    for _ in range(2, m_max + 1):
        levels.append(build_next_level(levels[-1], params, split.u,
                                       bounds, t0, interp_tol))
    return split, levels


def detect_t0(traj: Trajectory, bounds: BoundsTable, params: SimParams,
              window: int | None = None) -> float | None:
    """First sample time opening a window of `window` consecutive samples
    with ||u|| <= M_1."""
    w = window if window is not None else params.t0_window
    vnorms = np.array([sobolev_norm(u, 1) for u in traj.fields])
    ok = vnorms <= bounds.m1
    for i in range(len(ok) - w + 1):
        if ok[i:i + w].all():
            return float(traj.times[i])
    return None


@dataclass
class LevelReport:
    index: int
    terminal_error: float
    decay_rate: float | None      # fitted exponential rate of the error tail
    bound: float | None
    sup_norm: float | None
    bound_satisfied: bool | None
    trend_ok: bool                # trailing-window mean below mid-window mean
    cadence_warning: str | None


def _tail_decay_rate(times: np.ndarray, errors: np.ndarray,
                     tail_fraction: float = 0.5) -> float | None:
    n = len(times)
    i0 = int(n * (1.0 - tail_fraction))
    t = times[i0:]
    e = errors[i0:]
    keep = e > 0
    if keep.sum() < 4:
        return None
    coef = np.polyfit(t[keep], np.log(e[keep]), 1)
    return float(-coef[0])


def _trend_ok(errors: np.ndarray) -> bool:
    n = len(errors)
    if n < 10:
        return bool(errors[-1] <= errors[0])
    mid = errors[int(0.45 * n):int(0.55 * n) + 1]
    tail = errors[int(0.9 * n):]
    return float(tail.mean()) < float(mid.mean())


def chain_report(levels: list, reference: Trajectory) -> list:
    """Per-level convergence summary (terminal error, tail decay, bounds)."""
    if not levels:
        raise ConfigurationError("chain report needs at least one level")
    rows = []
    for lv in levels:
        sat = None
        if lv.bound is not None and lv.sup_norm is not None:
            sat = bool(lv.sup_norm <= lv.bound)
        rows.append(LevelReport(
            index=lv.index,
            terminal_error=float(lv.error_series[-1]),
            decay_rate=_tail_decay_rate(reference.times, lv.error_series),
            bound=lv.bound,
            sup_norm=lv.sup_norm,
            bound_satisfied=sat,
            trend_ok=_trend_ok(lv.error_series),
            cadence_warning=lv.cadence_warning))
    return rows

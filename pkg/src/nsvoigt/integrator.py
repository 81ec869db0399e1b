"""Time integration of the Navier-Stokes-Voigt system.

Scheme: exact integrating factor for the Voigt-scaled linear part combined
with classical 4-stage Runge-Kutta for the scaled nonlinear/forcing part.
Per mode, with lam = (2 pi / L)^2 |j|^2,

    du_j/dt = -mu_j u_j + G_j(u, t),
    mu_j = nu lam / (1 + alpha^2 lam),
    G_j = (f_j - B_j(u, u)) / (1 + alpha^2 lam).

The Voigt term bounds mu_j by nu / alpha^2 as lam -> infinity, so the
explicit stages stay stable at modest dt; the integrating factor removes
all linear phase/decay error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .lattice import (ConfigurationError, SpectralField, WaveLattice,
                      full_to_half, half_spectrum, half_to_full, leray_project,
                      make_lattice, random_divfree_field, sobolev_norm,
                      to_physical)
from .bilinear import bilinear_B_half


class BlowUpError(RuntimeError):
    """Non-finite coefficient detected during integration."""

    def __init__(self, t: float, last_valid: SpectralField | None):
        super().__init__(f"non-finite coefficients at t = {t:.6g}")
        self.t = t
        self.last_valid = last_valid


@dataclass(frozen=True)
class ForcingSpec:
    """Time-independent band-limited forcing.

    ``modes`` is a sequence of (j, amplitude) pairs with j an integer
    3-vector and amplitude a complex 3-vector; the Hermitian partner of
    each mode is filled in automatically and the whole field is
    Leray-projected at realization time.
    """

    modes: tuple = ()

    def realize(self, lattice: WaveLattice) -> SpectralField:
        raw = np.zeros((3, lattice.N, lattice.N, lattice.N), dtype=np.complex128)
        for j, amp in self.modes:
            jx, jy, jz = (int(c) for c in j)
            amp = np.asarray(amp, dtype=np.complex128)
            raw[:, jx % lattice.N, jy % lattice.N, jz % lattice.N] += amp
            raw[:, -jx % lattice.N, -jy % lattice.N, -jz % lattice.N] += np.conj(amp)
        return leray_project(lattice, raw, check_hermitian=False)

    @property
    def k_f(self) -> float:
        """Support radius in integer wavenumber units."""
        if not self.modes:
            return 0.0
        return max(math.sqrt(sum(int(c) ** 2 for c in j)) for j, _ in self.modes)

    def is_zero(self) -> bool:
        return not self.modes or all(
            not np.any(np.asarray(a)) for _, a in self.modes)


@dataclass(frozen=True)
class SimParams:
    nu: float
    alpha: float
    L: float
    N: int
    dt: float
    t_end: float
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    seed: int = 0
    cadence: int = 1            # record every `cadence` steps
    initial_amplitude: float = 0.0   # 0 -> start from rest (zero field)
    t0_window: int = 20         # sliding-window length for absorbing-time detection

    def __post_init__(self):
        if self.nu <= 0:
            raise ConfigurationError("nu must be positive")
        if self.alpha < 0:
            raise ConfigurationError("alpha must be nonnegative")
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if self.cadence < 1:
            raise ConfigurationError("cadence must be >= 1")

    def lattice(self) -> WaveLattice:
        return make_lattice(self.N, self.L)

    def d0(self) -> float:
        lam1 = (2.0 * np.pi / self.L) ** 2
        return 1.0 / (1.0 / lam1 + self.alpha ** 2)

    def initial_field(self, lattice: WaveLattice) -> SpectralField:
        if self.initial_amplitude == 0.0:
            return SpectralField.zero(lattice)
        u = random_divfree_field(lattice, self.seed)
        n = sobolev_norm(u, 1)
        scale = self.initial_amplitude / n if n > 0 else 0.0
        return u.with_coeffs(u.coeffs * scale)


def suggest_dt(params: SimParams, u: SpectralField | None = None) -> float:
    """Stability-motivated default step: min of the Voigt relaxation scale,
    the fastest linear rate, and a CFL bound from the physical max velocity."""
    lat = params.lattice()
    lam_max = lat.lambda_max
    cands = [0.1 / (params.nu * lam_max / (1.0 + params.alpha ** 2 * lam_max))]
    if params.alpha > 0:
        cands.append(0.5 * params.alpha ** 2 / params.nu)
    if u is not None and not u.is_zero():
        umax = float(np.abs(to_physical(u)).max())
        if umax > 0:
            dx = params.L / params.N
            cands.append(0.5 * dx / umax)
    return min(cands)


class _VoigtStepper:
    """Shared per-mode integrating factors for a fixed (lattice, nu, alpha, dt).

    Works in the rfft half-spectrum layout; full-cube states are converted
    at the boundary.
    """

    def __init__(self, lattice: WaveLattice, nu: float, alpha: float, dt: float):
        self.lattice = lattice
        self.hs = half_spectrum(lattice)
        self.nu = nu
        self.alpha = alpha
        self.dt = dt
        self.voigt = 1.0 / (1.0 + alpha ** 2 * self.hs.k_sq)
        self.mu = nu * self.hs.k_sq * self.voigt
        self.e_full = np.exp(-self.mu * dt)
        self.e_half = np.exp(-self.mu * dt / 2.0)

    def step(self, coeffs: np.ndarray, rhs) -> np.ndarray:
        """One IF-RK4 step; ``rhs(coeffs, stage)`` returns the scaled
        nonhomogeneous term G (already divided by 1 + alpha^2 lam)."""
        dt, Eh, Ef = self.dt, self.e_half, self.e_full
        g1 = rhs(coeffs, 0)
        a = Eh * (coeffs + (dt / 2.0) * g1)
        g2 = rhs(a, 1)
        b = Eh * coeffs + (dt / 2.0) * g2
        g3 = rhs(b, 2)
        c = Ef * coeffs + dt * Eh * g3
        g4 = rhs(c, 3)
        return (Ef * coeffs
                + (dt / 6.0) * (Ef * g1 + 2.0 * Eh * (g2 + g3) + g4))


_STAGE_OFFSETS = (0.0, 0.5, 0.5, 1.0)


def _nsv_rhs(stepper: _VoigtStepper, fh):
    hs = stepper.hs

    def rhs(uh, stage):
        return (fh - bilinear_B_half(hs, uh, uh)) * stepper.voigt

    return rhs


def step_nsv(u: SpectralField, params: SimParams, dt: float,
             f: SpectralField | None = None,
             stepper: _VoigtStepper | None = None) -> SpectralField:
    """Advance the NSV system by one step of integrating-factor RK4."""
    lat = u.lattice
    if stepper is None or stepper.dt != dt:
        stepper = _VoigtStepper(lat, params.nu, params.alpha, dt)
    fh = full_to_half(f.coeffs) if f is not None else 0.0
    out = stepper.step(full_to_half(u.coeffs), _nsv_rhs(stepper, fh))
    if not np.all(np.isfinite(out)):
        raise BlowUpError(t=dt, last_valid=u)
    return SpectralField(lat, half_to_full(lat, out))


def homogeneous_decay(w0: SpectralField, t: float, nu: float,
                      alpha: float) -> SpectralField:
    """Exact per-mode solution of w_t + nu A w + alpha^2 A w_t = 0."""
    lat = w0.lattice
    mu = nu * lat.k_sq / (1.0 + alpha ** 2 * lat.k_sq)
    return w0.with_coeffs(w0.coeffs * np.exp(-mu * t))


def voigt_energy(u: SpectralField, alpha: float) -> float:
    """E = |u|^2 + alpha^2 ||u||^2 with the physical-wavenumber enstrophy."""
    lat = u.lattice
    amp2 = np.sum(np.abs(u.coeffs) ** 2, axis=0)
    return float(np.sum(amp2 * (1.0 + alpha ** 2 * lat.k_sq)))


def enstrophy(u: SpectralField) -> float:
    """||u||^2 with physical wavenumbers: sum lam_j |u_j|^2."""
    return float(np.sum(np.sum(np.abs(u.coeffs) ** 2, axis=0) * u.lattice.k_sq))


@dataclass
class Trajectory:
    """Uniform-cadence samples of a spectral field trajectory."""

    times: np.ndarray
    fields: list

    @property
    def lattice(self) -> WaveLattice:
        return self.fields[0].lattice

    def interp_coeffs(self, t: float) -> np.ndarray:
        """Linear interpolation of coefficients between stored samples."""
        times = self.times
        if t <= times[0]:
            return self.fields[0].coeffs
        if t >= times[-1]:
            return self.fields[-1].coeffs
        i = int(np.searchsorted(times, t, side="right")) - 1
        t0, t1 = times[i], times[i + 1]
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * self.fields[i].coeffs + w * self.fields[i + 1].coeffs

    def interp(self, t: float) -> SpectralField:
        return SpectralField(self.lattice, np.ascontiguousarray(self.interp_coeffs(t)))


@dataclass
class SimResult:
    params: SimParams
    trajectory: Trajectory
    budget: list                  # EnergyBudget rows
    t0: float | None              # detected absorbing time (None if not seen)
    m1: float | None              # bound used by the detector


@dataclass
class EnergyBudget:
    t: float
    energy: float
    enstrophy_norm: float
    dissipation: float
    injection: float
    residual: float


def run_simulation(params: SimParams,
                   u0: SpectralField | None = None) -> SimResult:
    """Deterministic NSV run; records the trajectory at cadence and detects
    the absorbing time t0 (first window of t0_window consecutive samples
    with ||u|| <= M1)."""
    lat = params.lattice()
    if u0 is None:
        u0 = params.initial_field(lat)
    f = params.forcing.realize(lat)
    n_steps = int(round(params.t_end / params.dt))
    stepper = _VoigtStepper(lat, params.nu, params.alpha, params.dt)
    rhs = _nsv_rhs(stepper, full_to_half(f.coeffs))

    m1 = None
    if not params.forcing.is_zero() and params.alpha > 0:
        f_m1 = sobolev_norm(f, -1)
        m1 = 2.0 * f_m1 / (params.alpha * params.nu * math.sqrt(params.d0()))

    times = [0.0]
    fields = [u0]
    uh = full_to_half(u0.coeffs)
    last_valid = u0
    for n in range(n_steps):
        t = (n + 1) * params.dt
        uh = stepper.step(uh, rhs)
        if not np.all(np.isfinite(uh)):
            raise BlowUpError(t=t, last_valid=last_valid)
        if (n + 1) % params.cadence == 0:
            times.append(t)
            last_valid = SpectralField(lat, half_to_full(lat, uh))
            fields.append(last_valid)
    traj = Trajectory(times=np.asarray(times), fields=fields)
    budget = energy_budget(traj, params, f=f) if len(fields) >= 3 else []

    t0 = None
    if m1 is not None:
        # detector uses the dimensionless V norm
        vnorms = np.array([sobolev_norm(x, 1) for x in fields])
        ok = vnorms <= m1
        w = params.t0_window
        for i in range(len(ok) - w + 1):
            if ok[i:i + w].all():
                t0 = float(traj.times[i])
                break
    return SimResult(params=params, trajectory=traj, budget=budget, t0=t0, m1=m1)


def energy_budget(traj: Trajectory, params: SimParams,
                  f: SpectralField | None = None) -> list:
    """Discrete balance check: residual of
    dE/dt + 2 nu ||u||^2 - 2 (f, u) = 0 with centered differences."""
    if len(traj.fields) < 3:
        raise ConfigurationError("energy budget needs at least 3 samples")
    if f is None:
        f = params.forcing.realize(traj.lattice)
    E = np.array([voigt_energy(u, params.alpha) for u in traj.fields])
    ens = np.array([enstrophy(u) for u in traj.fields])
    inj = np.array([2.0 * float(np.real(np.sum(f.coeffs * np.conj(u.coeffs))))
                    for u in traj.fields])
    diss = 2.0 * params.nu * ens
    rows = []
    t = traj.times
    for i in range(len(E)):
        if 0 < i < len(E) - 1:
            dEdt = (E[i + 1] - E[i - 1]) / (t[i + 1] - t[i - 1])
            res = abs(dEdt + diss[i] - inj[i])
        else:
            res = float("nan")
        rows.append(EnergyBudget(t=float(t[i]), energy=float(E[i]),
                                 enstrophy_norm=float(ens[i]),
                                 dissipation=float(diss[i]),
                                 injection=float(inj[i]),
                                 residual=float(res)))
    return rows


def dissipation_rates(traj: Trajectory, params: SimParams,
                      t_start: float = 0.0) -> tuple[float, float]:
    """(mean, sup) instantaneous dissipation nu ||u||^2 over samples with
    t >= t_start, using the dimensionless V norm convention."""
    sel = traj.times >= t_start
    vals = np.array([params.nu * sobolev_norm(u, 1) ** 2
                     for u, keep in zip(traj.fields, sel) if keep])
    if vals.size == 0:
        raise ConfigurationError("no samples at or after t_start")
    return float(vals.mean()), float(vals.max())


def solve_linear_voigt(g, params: SimParams, s: float, horizon: float,
                       lattice: WaveLattice | None = None,
                       dt: float | None = None,
                       cadence: int | None = None) -> tuple[Trajectory, float]:
    """Integrate z_t + nu A z + alpha^2 A z_t = g(t), z(0) = 0.

    ``g`` maps a time to a raw coefficient cube (or SpectralField).
    Returns the trajectory and sup_t |z(t)|_s.
    """
    if horizon <= 0:
        raise ConfigurationError("horizon must be positive")
    lat = lattice if lattice is not None else params.lattice()
    dt = dt if dt is not None else params.dt
    cad = cadence if cadence is not None else params.cadence
    stepper = _VoigtStepper(lat, params.nu, params.alpha, dt)
    n_steps = int(round(horizon / dt))

    def g_half(t):
        val = g(t)
        coeffs = val.coeffs if isinstance(val, SpectralField) else val
        return full_to_half(coeffs)

    z0 = SpectralField.zero(lat)
    times = [0.0]
    fields = [z0]
    sup_s = 0.0
    zh = full_to_half(z0.coeffs)
    last_valid = z0
    for n in range(n_steps):
        t_n = n * dt

        def rhs(coeffs, stage):
            return g_half(t_n + _STAGE_OFFSETS[stage] * dt) * stepper.voigt

        zh = stepper.step(zh, rhs)
        if not np.all(np.isfinite(zh)):
            raise BlowUpError(t=t_n + dt, last_valid=last_valid)
        if (n + 1) % cad == 0:
            times.append(t_n + dt)
            last_valid = SpectralField(lat, half_to_full(lat, zh))
            fields.append(last_valid)
            sup_s = max(sup_s, sobolev_norm(last_valid, s))
    return Trajectory(times=np.asarray(times), fields=fields), sup_s

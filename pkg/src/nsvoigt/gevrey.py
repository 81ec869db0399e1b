"""Gevrey norms, high/low mode splitting, spectrum-decay fitting, and the
dissipation length-scale estimates.

The splitting threshold lambda is chosen against three conditions (with
tau = min(lambda^{-1/2}, tau0) and d2 = (1/lambda + alpha^2)^{-1}):

  (i)   max{C1 e sqrt(M1 M2) / (lam^{1/2} lam1^{3/4}),
             C1 e M1 / (lam^{1/4} lam1^{3/4})} <= nu/5
  (ii)  alpha^2 nu lam^{1/2} lam1^{1/2} d2
             > (C4 |f_hat|_{1,tau}^2 / (nu lam)
                + C5 M1^3 M2 / (nu lam1^{3/2}))^{1/3}
  (iii) lam > lam1^3 (c M1 / nu)^4

For nonzero forcing the two simplifications Q_lam f = 0 and
lam > alpha^{-2} are enforced as well.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .lattice import (ConfigurationError, SpectralField, full_to_half,
                      half_spectrum, half_to_full, sobolev_norm)
from .bilinear import EmpiricalConstants, bilinear_B_half, gevrey_inequality_ratio
from .integrator import BlowUpError, SimParams, Trajectory, _VoigtStepper
from .chain import BoundsTable

_OVERFLOW_TAU_K = 300.0


class InsufficientResolutionError(ConfigurationError):
    """No lattice-representable splitting threshold satisfies the plan."""

    def __init__(self, required_lambda: float, lambda_max: float):
        super().__init__(
            f"required splitting threshold lambda ~ {required_lambda:.6g} "
            f"exceeds the largest lattice eigenvalue {lambda_max:.6g}")
        self.required_lambda = required_lambda
        self.lambda_max = lambda_max


def gevrey_norm(u: SpectralField, r: float, tau: float) -> float:
    """|u|_{r,tau} = (sum_j |u_j|^2 |j|^{2r} e^{2 tau |j|})^{1/2}.

    Computed in log space when tau * |j|_max is large enough to overflow
    the term-wise exponentials.
    """
    if tau < 0:
        raise ConfigurationError("tau must be nonnegative")
    lat = u.lattice
    nz = lat.j_sq > 0
    amp2 = np.sum(np.abs(u.coeffs) ** 2, axis=0)[nz]
    jabs = np.sqrt(lat.j_sq[nz].astype(float))
    if tau * jabs.max() <= _OVERFLOW_TAU_K:
        return float(np.sqrt(np.sum(amp2 * jabs ** (2 * r)
                                    * np.exp(2 * tau * jabs))))
    pos = amp2 > 0
    if not np.any(pos):
        return 0.0
    logterms = (np.log(amp2[pos]) + 2 * r * np.log(jabs[pos])
                + 2 * tau * jabs[pos])
    return float(np.exp(0.5 * logsumexp(logterms)))


def mode_split(u: SpectralField, lam: float) -> tuple[SpectralField, SpectralField]:
    """(P_lam u, Q_lam u): modes with Stokes eigenvalue <= lam vs the rest."""
    if lam < 0:
        raise ConfigurationError("lambda must be nonnegative")
    lat = u.lattice
    low_mask = lat.k_sq <= lam * (1.0 + 1e-12)
    low = u.with_coeffs(u.coeffs * low_mask)
    high = u.with_coeffs(u.coeffs * ~low_mask)
    return low, high


def poincare_ratios(u: SpectralField, lam: float, r: float,
                    tau: float) -> tuple[float, float, float, float]:
    """Both sides of the two Poincare-type inequalities:

    |P_lam u|_{r+1,tau} <= e^{tau lam^{1/2}} |P_lam u|_{r+1}   and
    |Q_lam u|_{r,tau}   <= lam^{-1/2} |Q_lam u|_{r+1,tau}.

    The lam in the second inequality is in dimensionless |j|^2 units
    (consistent with the norm convention); pass lam / lambda1 when lam is
    a physical eigenvalue.
    """
    low, high = mode_split(u, lam * u.lattice.lambda1)
    lhs1 = gevrey_norm(low, r + 1, tau)
    rhs1 = math.exp(tau * math.sqrt(lam)) * sobolev_norm(low, r + 1)
    lhs2 = gevrey_norm(high, r, tau)
    rhs2 = lam ** -0.5 * gevrey_norm(high, r + 1, tau)
    return lhs1, rhs1, lhs2, rhs2


@dataclass(frozen=True)
class GevreyConstants:
    """Stand-ins for the symbolic absolute constants of the analysis."""

    C1: float
    C4: float = 1.0
    C5: float = 1.0
    c: float = 1.0
    C6: float = 1.0
    source: str = "manual"

    @classmethod
    def from_empirical(cls, emp: EmpiricalConstants,
                       safety: float = 2.0) -> "GevreyConstants":
        infl = emp.with_safety(safety)
        return cls(C1=infl.C1, c=infl.c_nlin, source="empirical")


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    satisfied: bool
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        """Satisfied-side headroom ratio (> 1 means satisfied with room)."""
        if self.lhs == 0.0:
            return math.inf
        return self.rhs / self.lhs


@dataclass(frozen=True)
class GevreySplitPlan:
    lam: float
    tau: float
    d2: float
    conditions: tuple            # ConditionCheck triples (i), (ii), (iii)
    constants: GevreyConstants
    f_hat_norm: float            # |Q_lam f|_{1,tau}
    relax: float = 1.0
    label: str = "within theorem hypotheses"

    @property
    def satisfied(self) -> bool:
        return all(c.satisfied for c in self.conditions)


def _check_conditions(lam: float, params: SimParams, bounds: BoundsTable,
                      constants: GevreyConstants, f: SpectralField,
                      tau0: float, relax: float) -> GevreySplitPlan | None:
    """Evaluate the three conditions at one threshold; None when the
    forcing-support simplifications rule lambda out entirely."""
    lat = f.lattice
    lam1 = lat.lambda1
    nu, alpha = params.nu, params.alpha
    m1, m2 = bounds.m1, bounds.m2
    f_zero = not np.any(f.coeffs)
    if not f_zero:
        _, f_hat = mode_split(f, lam)
        if np.any(np.abs(f_hat.coeffs) > 1e-14):
            return None
        if not lam > alpha ** -2:
            return None
    tau = min(lam ** -0.5, tau0)
    d2 = 1.0 / (1.0 / lam + alpha ** 2)
    _, f_hat = mode_split(f, lam)
    f_hat_norm = gevrey_norm(f_hat, 1, tau)
    C1, C4, C5, c = constants.C1, constants.C4, constants.C5, constants.c
    e = math.e
    lhs1 = max(C1 * e * math.sqrt(m1 * m2) / (lam ** 0.5 * lam1 ** 0.75),
               C1 * e * m1 / (lam ** 0.25 * lam1 ** 0.75))
    cond1 = ConditionCheck("smallness", lhs1 <= relax * nu / 5.0,
                           lhs1, relax * nu / 5.0)
    rhs2 = (C4 * f_hat_norm ** 2 / (nu * lam)
            + C5 * m1 ** 3 * m2 / (nu * lam1 ** 1.5)) ** (1.0 / 3.0)
    lhs2v = alpha ** 2 * nu * lam ** 0.5 * lam1 ** 0.5 * d2
    cond2 = ConditionCheck("coefficient", relax * lhs2v > rhs2,
                           rhs2, relax * lhs2v)
    rhs3 = lam1 ** 3 * (c * m1 / nu) ** 4
    cond3 = ConditionCheck("determining-modes", relax * lam > rhs3,
                           rhs3, relax * lam)
    return GevreySplitPlan(lam=lam, tau=tau, d2=d2,
                           conditions=(cond1, cond2, cond3),
                           constants=constants, f_hat_norm=f_hat_norm,
                           relax=relax,
                           label=("within theorem hypotheses" if relax == 1.0
                                  else f"outside theorem hypotheses "
                                       f"(conditions relaxed by {relax:g})"))


def _required_lambda(params: SimParams, bounds: BoundsTable,
                     constants: GevreyConstants, lam1: float,
                     relax: float) -> float:
    """Smallest threshold satisfying conditions (i)-(iii) with Q_lam f = 0,
    by closed-form inversion of (i), (iii) and monotone scan for (ii)."""
    nu, alpha = params.nu, params.alpha
    m1, m2 = bounds.m1, bounds.m2
    C1, C5, c = constants.C1, constants.C5, constants.c
    e = math.e
    req = lam1
    if m1 > 0:
        thresh = relax * nu / 5.0
        req = max(req,
                  (C1 * e * math.sqrt(m1 * m2) / (thresh * lam1 ** 0.75)) ** 2,
                  (C1 * e * m1 / (thresh * lam1 ** 0.75)) ** 4,
                  lam1 ** 3 * (c * m1 / nu) ** 4 / relax)
    rhs2 = (C5 * m1 ** 3 * m2 / (nu * lam1 ** 1.5)) ** (1.0 / 3.0)
    lam = max(req, lam1)
    for _ in range(200):
        d2 = 1.0 / (1.0 / lam + alpha ** 2)
        if relax * alpha ** 2 * nu * lam ** 0.5 * lam1 ** 0.5 * d2 > rhs2:
            break
        lam *= 2.0
    if alpha > 0:
        lam = max(lam, alpha ** -2)
    return lam


def select_lambda(params: SimParams, bounds: BoundsTable,
                  constants: GevreyConstants,
                  f: SpectralField | None = None,
                  tau0: float = math.inf,
                  relax: float = 1.0) -> GevreySplitPlan:
    """Smallest lattice eigenvalue level satisfying all splitting conditions.

    relax > 1 loosens every condition by that factor; the resulting plan is
    labeled as outside the theorem's hypotheses.
    """
    if relax < 1.0:
        raise ConfigurationError("relaxation factor must be >= 1")
    lat = params.lattice()
    if f is None:
        f = params.forcing.realize(lat)
    for lam in lat.eigenvalue_levels():
        plan = _check_conditions(lam, params, bounds, constants, f,
                                 tau0, relax)
        if plan is not None and plan.satisfied:
            return plan
    required = _required_lambda(params, bounds, constants, lat.lambda1, relax)
    raise InsufficientResolutionError(required_lambda=required,
                                      lambda_max=lat.lambda_max)


@dataclass
class HatEvolution:
    """High-mode evolution h with its Gevrey energy phi = |h|_{1,tau}^2
    + alpha^2 |h|_{2,tau}^2 and the a priori ceiling 2c/a."""

    trajectory: Trajectory       # h(t), supported on Q_lam modes
    times: np.ndarray
    phi: np.ndarray
    a: float
    b: float
    c: float
    ceiling: float               # 2c/a
    coeff_ok: bool               # b c^{1/2} < (a/2)^{3/2}
    flagged: bool                # phi exceeded 10x the ceiling

    def v_omega(self, vbar: Trajectory, t: float) -> SpectralField:
        lat = self.trajectory.lattice
        return SpectralField(lat, np.ascontiguousarray(
            vbar.interp_coeffs(t) + self.trajectory.interp_coeffs(t)))


def phi_ode_coefficients(plan: GevreySplitPlan, params: SimParams,
                          bounds: BoundsTable) -> tuple[float, float, float]:
    """(a, b, c) of d(phi)/dt <= -a phi + b phi^{3/2} + c for the high-mode
    Gevrey energy."""
    lam, lam1 = plan.lam, params.lattice().lambda1
    nu, alpha = params.nu, params.alpha
    C1 = plan.constants.C1
    a = 2.0 * nu * plan.d2 / 5.0
    b = 2.0 * C1 / (lam ** 0.75 * lam1 ** 0.75 * alpha ** 3)
    c = 2.0 * (5.0 * plan.f_hat_norm ** 2 / (4.0 * nu * lam)
               + 5.0 * C1 ** 2 * math.e ** 4 * bounds.m1 ** 3 * bounds.m2
               / (4.0 * nu * lam1 ** 1.5))
    return a, b, c


def evolve_hat_v(vbar: Trajectory, plan: GevreySplitPlan, params: SimParams,
                 bounds: BoundsTable, f: SpectralField | None = None,
                 t0: float = 0.0, horizon: float | None = None,
                 dt: float | None = None,
                 cadence: int | None = None) -> HatEvolution:
    """Integrate the high-mode equation
    h_t + nu A h + alpha^2 A h_t + Q_lam B(vbar + h, vbar + h) = Q_lam f
    from h(t0) = 0, recording phi(t) at cadence."""
    lat = vbar.lattice
    hs = half_spectrum(lat)
    if f is None:
        f = params.forcing.realize(lat)
    if horizon is None:
        horizon = float(vbar.times[-1]) - t0
    if horizon <= 0:
        raise ConfigurationError("horizon must be positive")
    dt = dt if dt is not None else params.dt
    cad = cadence if cadence is not None else params.cadence
    stepper = _VoigtStepper(lat, params.nu, params.alpha, dt)
    q_mask = hs.k_sq > plan.lam * (1.0 + 1e-12)
    fh = full_to_half(f.coeffs) * q_mask

    def rhs(hh, t):
        vb = full_to_half(vbar.interp_coeffs(t))
        tot = vb + hh
        return (fh - bilinear_B_half(hs, tot, tot) * q_mask) * stepper.voigt

    a, b, c = phi_ode_coefficients(plan, params, bounds)
    ceiling = 2.0 * c / a if a > 0 else math.inf
    coeff_ok = b * math.sqrt(c) < (a / 2.0) ** 1.5

    n_steps = int(round(horizon / dt))
    hh = np.zeros((3, lat.N, lat.N, hs.H), dtype=np.complex128)
    zero = SpectralField.zero(lat)
    times = [t0]
    fields = [zero]
    phis = [0.0]
    last_valid = zero
    Eh, Ef = stepper.e_half, stepper.e_full
    for n in range(n_steps):
        t_n = t0 + n * dt
        g1 = rhs(hh, t_n)
        s2 = Eh * (hh + (dt / 2.0) * g1)
        g2 = rhs(s2, t_n + dt / 2.0)
        s3 = Eh * hh + (dt / 2.0) * g2
        g3 = rhs(s3, t_n + dt / 2.0)
        s4 = Ef * hh + dt * Eh * g3
        g4 = rhs(s4, t_n + dt)
        hh = (Ef * hh + (dt / 6.0) * (Ef * g1 + 2.0 * Eh * (g2 + g3) + g4))
        if not np.all(np.isfinite(hh)):
            raise BlowUpError(t=t_n + dt, last_valid=last_valid)
        if (n + 1) % cad == 0:
            h_full = SpectralField(lat, half_to_full(lat, hh))
            times.append(t_n + dt)
            fields.append(h_full)
            phis.append(gevrey_norm(h_full, 1, plan.tau) ** 2
                        + params.alpha ** 2
                        * gevrey_norm(h_full, 2, plan.tau) ** 2)
            last_valid = h_full
    t_arr = np.asarray(times)
    phi = np.asarray(phis)
    return HatEvolution(
        trajectory=Trajectory(times=t_arr, fields=fields),
        times=t_arr, phi=phi, a=a, b=b, c=c, ceiling=ceiling,
        coeff_ok=coeff_ok, flagged=bool(np.any(phi > 10.0 * ceiling)))


@dataclass
class SpectrumSeries:
    """Shell-summed energy spectrum E(k) = sum_{k-1/2 < |j| <= k+1/2} |u_j|^2."""

    k: np.ndarray
    E: np.ndarray
    t: float | None = None


def shell_spectrum(u: SpectralField, t: float | None = None) -> SpectrumSeries:
    lat = u.lattice
    amp2 = np.sum(np.abs(u.coeffs) ** 2, axis=0)
    jabs = np.sqrt(lat.j_sq.astype(float))
    # shell index: |j| in (k - 1/2, k + 1/2]; sqrt of an integer never
    # lands on a half-integer boundary
    idx = np.ceil(jabs - 0.5).astype(int)
    counts = np.bincount(idx.ravel(), weights=amp2.ravel())
    k_max = len(counts) - 1
    k = np.arange(1, k_max + 1)
    return SpectrumSeries(k=k, E=counts[1:], t=t)


@dataclass
class GevreyProfile:
    tau_star: float | None       # None when no exponential range was found
    r2: float
    k_lo: int | None
    k_hi: int | None
    message: str = ""


def fit_decay_rate(spectrum: SpectrumSeries,
                   floor_frac: float = 1e-24,
                   ceil_frac: float = 1e-6) -> GevreyProfile:
    """Least-squares fit of log sqrt(E(k)) + 2 log k against k, compensating
    the |k|^{-2} amplitude prefactor; the slope gives -tau_star.

    Fit range: shells with E between floor_frac and ceil_frac of the peak.
    """
    k = spectrum.k.astype(float)
    E = spectrum.E
    peak = float(E.max(initial=0.0))
    if peak <= 0.0:
        return GevreyProfile(None, 0.0, None, None, "empty spectrum")
    sel = (E > floor_frac * peak) & (E <= ceil_frac * peak)
    if sel.sum() < 4:
        return GevreyProfile(None, 0.0, None, None, "no exponential range")
    kf = k[sel]
    y = 0.5 * np.log(E[sel]) + 2.0 * np.log(kf)
    slope, intercept = np.polyfit(kf, y, 1)
    fitted = slope * kf + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return GevreyProfile(tau_star=float(-slope), r2=r2,
                         k_lo=int(kf[0]), k_hi=int(kf[-1]))


@dataclass(frozen=True)
class LengthScales:
    eps: float                   # nu <||u||^2> (mean dissipation)
    eps_sup: float               # nu sup ||u||^2 (measured)
    eps_sup_bound: float | None  # nu M1^2 when a bounds table is supplied
    ell_K: float                 # (nu^3 / eps_sup)^{1/4}
    candidates: tuple            # the four intermediate lower bounds
    ell_NSV: float               # min{L, alpha, L^{1/3} alpha^{2/3}} (ell_K/L)^4


def length_scales(params: SimParams, eps: float, eps_sup: float,
                  bounds: BoundsTable | None = None) -> LengthScales:
    """Evaluate the Kolmogorov scale and the exponential-decay length-scale
    lower bound from measured dissipation rates."""
    if eps < 0 or eps_sup < 0:
        raise ConfigurationError("dissipation rates must be nonnegative")
    L, alpha, nu = params.L, params.alpha, params.nu
    bound_var = nu * bounds.m1 ** 2 if bounds is not None else None
    if eps_sup == 0.0:
        inf = math.inf
        return LengthScales(eps=eps, eps_sup=0.0, eps_sup_bound=bound_var,
                            ell_K=inf, candidates=(inf, inf, inf, inf),
                            ell_NSV=inf)
    ell_k = (nu ** 3 / eps_sup) ** 0.25
    ratio4 = (ell_k / L) ** 4
    candidates = (L * ratio4,                      # determining-modes condition
                  alpha * ratio4,                  # smallness, first branch
                  L * ratio4,                      # smallness, second branch
                  L ** (1.0 / 3.0) * alpha ** (2.0 / 3.0) * ratio4)
    ell_nsv = min(L, alpha, L ** (1.0 / 3.0) * alpha ** (2.0 / 3.0)) * ratio4
    return LengthScales(eps=eps, eps_sup=eps_sup, eps_sup_bound=bound_var,
                        ell_K=ell_k, candidates=candidates, ell_NSV=ell_nsv)


def verify_gevrey_inequality(u: SpectralField, v: SpectralField,
                             w: SpectralField, tau: float) -> float:
    """Ratio |(B(u,v),w)_{1,tau}| over the bound with unit constant."""
    return gevrey_inequality_ratio(u, v, w, tau)

"""Stationary solutions nu A u + B(u, u) = f and their analyticity radius.

The solver is a relaxed Picard iteration around the diagonal inverse of
nu A; the Voigt parameter alpha plays no role in the stationary problem.
The certified lower bound on the Gevrey radius of a stationary solution is

    tau_B = 1 / ( (c^2 lam1^{3/2} / nu^2) ||u||^2
                  + (c lam1^{3/4} / nu) sqrt(2) e^{sigma N_f^{1/4}}
                    N_f^{1/2} ||u|| ),

with ||u|| the dimensionless V norm and N_f the forcing support radius in
Stokes-eigenvalue count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import (ConfigurationError, SpectralField, sobolev_norm,
                      stokes_apply)
from .bilinear import bilinear_B
from .gevrey import GevreyProfile, fit_decay_rate, gevrey_norm, shell_spectrum


@dataclass
class SteadyStateReport:
    u_ss: SpectralField
    residual: float              # |nu A u + B(u,u) - f|_0
    iterations: int
    converged: bool
    residual_history: np.ndarray
    nu: float
    n_f: float                   # forcing support radius (integer |j| units)
    theta: float


def steady_residual(u: SpectralField, f: SpectralField, nu: float) -> float:
    r = (stokes_apply(u, 1).coeffs * nu + bilinear_B(u, u).coeffs - f.coeffs)
    with np.errstate(over="ignore"):
        return float(np.sqrt(np.sum(np.abs(r) ** 2)))


def solve_steady(f: SpectralField, nu: float, tol: float = 1e-10,
                 max_iter: int = 200, theta: float = 0.7) -> SteadyStateReport:
    """Relaxed Picard iteration u <- (1-theta) u + theta (nu A)^{-1} (f - B(u,u)).

    Starts from the Stokes solution (nu A)^{-1} f.  Non-convergence within
    max_iter returns a failure report (expected at large forcing amplitude).
    """
    if nu <= 0:
        raise ConfigurationError("nu must be positive")
    if not 0.0 < theta <= 1.0:
        raise ConfigurationError("theta must be in (0, 1]")
    lat = f.lattice
    n_f = 0.0
    nz = np.abs(f.coeffs).max(axis=0) > 0
    if np.any(nz):
        n_f = float(np.sqrt(lat.j_sq[nz].max()))
    u = stokes_apply(f, -1).with_coeffs(stokes_apply(f, -1).coeffs / nu)
    history = [steady_residual(u, f, nu)]
    it = 0
    while history[-1] > tol and it < max_iter:
        picard = stokes_apply(
            SpectralField(lat, f.coeffs - bilinear_B(u, u).coeffs), -1)
        u = u.with_coeffs((1.0 - theta) * u.coeffs
                          + (theta / nu) * picard.coeffs)
        history.append(steady_residual(u, f, nu))
        it += 1
        if not math.isfinite(history[-1]):
            break
    return SteadyStateReport(
        u_ss=u, residual=history[-1], iterations=it,
        converged=bool(history[-1] <= tol and math.isfinite(history[-1])),
        residual_history=np.asarray(history), nu=nu, n_f=n_f, theta=theta)


@dataclass(frozen=True)
class BlowUpBound:
    tau_b: float                 # certified lower bound on the Gevrey radius
    simplified: float            # scaling form C nu^2 / (lam1^{3/2} ||u||^2)
    u_norm: float
    sigma: float
    n_f: float


def blow_up_time(u_ss: SpectralField, nu: float, n_f: float,
                 sigma: float = 0.0, c: float = 1.0) -> BlowUpBound:
    """Closed-form tau_B lower bound for a stationary solution.

    sigma >= 0 weights the forcing term (sigma = 0 is the weakest, always
    valid choice); c is the Gevrey-inequality constant.
    """
    if sigma < 0:
        raise ConfigurationError("sigma must be nonnegative")
    if n_f < 1:
        raise ConfigurationError("forcing support radius N_f must be >= 1")
    lam1 = u_ss.lattice.lambda1
    un = sobolev_norm(u_ss, 1)
    simplified = math.inf if un == 0 else nu ** 2 / (lam1 ** 1.5 * un ** 2)
    if un == 0:
        return BlowUpBound(tau_b=math.inf, simplified=simplified,
                           u_norm=0.0, sigma=sigma, n_f=n_f)
    denom = (c ** 2 * lam1 ** 1.5 / nu ** 2 * un ** 2
             + c * lam1 ** 0.75 / nu * math.sqrt(2.0)
             * math.exp(sigma * n_f ** 0.25) * n_f ** 0.5 * un)
    return BlowUpBound(tau_b=1.0 / denom, simplified=simplified,
                       u_norm=un, sigma=sigma, n_f=n_f)


@dataclass
class SteadyGevreyComparison:
    tau_b: float
    profile: GevreyProfile
    tau_star: float | None
    consistent: bool | None      # tau* >= tau_B / safety; None if no fit range
    gevrey_norm_finite: bool     # |u|_{2, tau_B/2} finite
    message: str = ""


def verify_steady_gevrey(report: SteadyStateReport,
                         bound: BlowUpBound,
                         safety: float = 1.0) -> SteadyGevreyComparison:
    """Compare the certified tau_B against the measured spectrum decay."""
    if not report.converged:
        raise ConfigurationError("steady solve did not converge")
    u = report.u_ss
    tau_b = bound.tau_b
    finite = True
    if math.isfinite(tau_b):
        finite = math.isfinite(gevrey_norm(u, 2, tau_b / 2.0))
    profile = fit_decay_rate(shell_spectrum(u))
    if profile.tau_star is None:
        return SteadyGevreyComparison(
            tau_b=tau_b, profile=profile, tau_star=None, consistent=None,
            gevrey_norm_finite=finite,
            message="no exponential range at this resolution; inconclusive")
    ok = profile.tau_star >= tau_b / safety
    return SteadyGevreyComparison(tau_b=tau_b, profile=profile,
                                  tau_star=profile.tau_star, consistent=ok,
                                  gevrey_norm_finite=finite)

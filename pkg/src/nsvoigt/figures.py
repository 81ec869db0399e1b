"""Matplotlib renderers for the report artifacts.

Every function writes a PNG next to the delimited output and returns the
path.  The Agg backend is forced so rendering works headless.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def fig_energy(budget_rows, path):
    """Energy, dissipation and injection time series with the balance
    residual on a twin log axis."""
    t = np.array([r.t for r in budget_rows])
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(t, [r.energy for r in budget_rows], label="E")
    ax1.plot(t, [r.dissipation for r in budget_rows], label="dissipation")
    ax1.plot(t, [r.injection for r in budget_rows], label="injection")
    ax1.set_ylabel("energy budget")
    ax1.legend(loc="best", fontsize=8)
    res = np.array([r.residual for r in budget_rows])
    ok = np.isfinite(res) & (res > 0)
    if ok.any():
        ax2.semilogy(t[ok], res[ok], color="k", lw=0.8)
    ax2.set_xlabel("t")
    ax2.set_ylabel("balance residual")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def fig_chain_errors(levels, times, path):
    """Per-level error series ||u - v^(m)|| on a log scale."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for lv in levels:
        err = np.asarray(lv.error_series)
        pos = err > 0
        ax.semilogy(np.asarray(times)[pos], err[pos],
                    label=f"level {lv.index}")
    ax.set_xlabel("t")
    ax.set_ylabel("V-norm error")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def fig_spectrum(spectrum, profile, path):
    """Shell spectrum with the fitted exponential-decay line overlaid."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    pos = spectrum.E > 0
    ax.semilogy(spectrum.k[pos], spectrum.E[pos], "o-", ms=3, label="E(k)")
    if profile is not None and profile.tau_star is not None:
        k = np.linspace(profile.k_lo, profile.k_hi, 50)
        e_lo = spectrum.E[spectrum.k == profile.k_lo][0]
        model = (e_lo * (k / profile.k_lo) ** -4.0
                 * np.exp(-2.0 * profile.tau_star * (k - profile.k_lo)))
        ax.semilogy(k, model, "r--",
                    label=f"fit: tau* = {profile.tau_star:.3f}, "
                          f"R^2 = {profile.r2:.4f}")
    ax.set_xlabel("k")
    ax.set_ylabel("shell energy")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def fig_residual_history(history, path):
    """Steady-solver residual per iteration."""
    fig, ax = plt.subplots(figsize=(6, 4))
    res = np.asarray(history, dtype=float)
    ok = np.isfinite(res) & (res > 0)
    ax.semilogy(np.arange(len(res))[ok], res[ok], "o-", ms=3)
    ax.set_xlabel("iteration")
    ax.set_ylabel("residual")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def fig_phi(times, phi, ceiling, path):
    """High-mode Gevrey energy phi(t) against its a priori ceiling."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(times, phi, label="phi(t)")
    if np.isfinite(ceiling):
        ax.axhline(ceiling, color="r", ls="--", label="2c/a ceiling")
    ax.set_xlabel("t")
    ax.set_ylabel("phi")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path

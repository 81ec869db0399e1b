"""Advection bilinear form B(u, v) = P_sigma((u . grad) v).

Pseudo-spectral evaluation with strict two-thirds dealiasing, plus a
direct-convolution oracle for small lattices.  The dealiased product is
truncated first and Leray-projected second (the two commute on the sphere;
the order is fixed for reproducibility).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as _fft

from .lattice import (SpectralField, WaveLattice, FieldInvariantError,
                      _project_coeffs, leray_project, random_divfree_field,
                      sobolev_norm)

ORACLE_MAX_N = 16


class OracleSizeError(ValueError):
    """Oracle refused: lattice too large for the O(M^2) sum."""


def _check_same_lattice(u: SpectralField, v: SpectralField) -> WaveLattice:
    if u.lattice is not v.lattice and (u.lattice.N != v.lattice.N
                                       or u.lattice.L != v.lattice.L):
        raise FieldInvariantError("fields live on different lattices")
    return u.lattice


def dealias(u: SpectralField) -> SpectralField:
    return u.with_coeffs(u.coeffs * u.lattice.dealias_mask)


def bilinear_B_raw(lat: WaveLattice, uc: np.ndarray, vc: np.ndarray) -> np.ndarray:
    """Hot-path B(u, v) on raw coefficient cubes; returns projected coeffs."""
    N = lat.N
    kappa = 2.0 * np.pi / lat.L
    mask = lat.dealias_mask
    ucm = uc * mask
    work = np.empty((12, N, N, N), dtype=np.complex128)
    work[:3] = ucm
    vcm = vc * mask
    for i, ji in enumerate((lat.jx, lat.jy, lat.jz)):
        work[3 + 3 * i:6 + 3 * i] = (1j * kappa) * ji * vcm
    phys = np.real(np.fft.ifftn(work, axes=(1, 2, 3))) * N ** 3
    prod = (phys[0] * phys[3:6] + phys[1] * phys[6:9] + phys[2] * phys[9:12])
    raw = np.fft.fftn(prod, axes=(1, 2, 3)) / N ** 3
    raw *= mask
    return _project_coeffs(lat, raw)


def bilinear_B_half(hs, uh: np.ndarray, vh: np.ndarray) -> np.ndarray:
    """B(u, v) in the rfft half-spectrum layout (integrator hot path).

    When ``vh is uh`` the divergence form sum_i ik_i (u_i u_m)^ is used:
    it agrees exactly with the advective form on the dealias sphere for
    divergence-free input and needs 9 transforms instead of 15.
    """
    lat = hs.lattice
    N = lat.N
    mask = hs.dealias_mask
    # diverging iterates overflow here before the blow-up check sees them
    err = np.errstate(over="ignore", invalid="ignore")
    if vh is uh:
        with err:
            um = uh * mask
            phys = _fft.irfftn(um, s=(N, N, N), axes=(1, 2, 3),
                               overwrite_x=True) * N ** 3
            prod = np.empty((6, N, N, N))
            np.multiply(phys[0], phys[0], out=prod[0])
            np.multiply(phys[1], phys[1], out=prod[1])
            np.multiply(phys[2], phys[2], out=prod[2])
            np.multiply(phys[0], phys[1], out=prod[3])
            np.multiply(phys[0], phys[2], out=prod[4])
            np.multiply(phys[1], phys[2], out=prod[5])
            T = _fft.rfftn(prod, axes=(1, 2, 3), overwrite_x=True) / N ** 3
            raw = np.empty((3, N, N, hs.H), dtype=np.complex128)
            raw[0] = hs.ikx * T[0] + hs.iky * T[3] + hs.ikz * T[4]
            raw[1] = hs.ikx * T[3] + hs.iky * T[1] + hs.ikz * T[5]
            raw[2] = hs.ikx * T[4] + hs.iky * T[5] + hs.ikz * T[2]
            return hs.project(raw)
    with err:
        work = np.empty((12, N, N, hs.H), dtype=np.complex128)
        work[:3] = uh * mask
        vcm = vh * mask
        work[3:6] = hs.ikx * vcm
        work[6:9] = hs.iky * vcm
        work[9:12] = hs.ikz * vcm
        phys = _fft.irfftn(work, s=(N, N, N), axes=(1, 2, 3), overwrite_x=True) * N ** 3
        prod = (phys[0] * phys[3:6] + phys[1] * phys[6:9] + phys[2] * phys[9:12])
        raw = _fft.rfftn(prod, axes=(1, 2, 3), overwrite_x=True) / N ** 3
        raw *= mask
        return hs.project(raw)


def bilinear_B(u: SpectralField, v: SpectralField) -> SpectralField:
    """Dealiased pseudo-spectral B(u, v); divergence-free and zero-mean."""
    lat = _check_same_lattice(u, v)
    return SpectralField(lat, bilinear_B_raw(lat, u.coeffs, v.coeffs))


def bilinear_B_oracle(u: SpectralField, v: SpectralField) -> SpectralField:
    """Direct convolution B_k = P_sigma(i kappa sum_{p+q=k} (u_p . q) v_q).

    Ground-truth path with no transform round-trip; O(M^2) over retained
    modes, refused above N = 16.
    """
    lat = _check_same_lattice(u, v)
    if lat.N > ORACLE_MAX_N:
        raise OracleSizeError(
            f"oracle is O(M^2); N = {lat.N} exceeds the {ORACLE_MAX_N} guardrail")
    N = lat.N
    kappa = 2.0 * np.pi / lat.L
    mask = lat.dealias_mask
    pj = np.stack([lat.jx[mask], lat.jy[mask], lat.jz[mask]], axis=1)  # (M, 3)
    up = u.coeffs[:, mask].T  # (M, 3)
    # accumulate on a doubled cube indexed by k + N (k in [-N+1, N-2])
    big = np.zeros((3, 2 * N, 2 * N, 2 * N), dtype=np.complex128)
    jxm = lat.jx[mask]
    jym = lat.jy[mask]
    jzm = lat.jz[mask]
    vqm = v.coeffs[:, mask]  # (3, M)
    for a in range(pj.shape[0]):
        px, py, pz = pj[a]
        # (u_p . q) over retained q, times v_q
        udotq = up[a, 0] * jxm + up[a, 1] * jym + up[a, 2] * jzm
        contrib = 1j * kappa * udotq * vqm  # (3, M)
        big[:, px + jxm + N, py + jym + N, pz + jzm + N] += contrib
    # read back k within the dealias sphere (wrapped images land outside it)
    raw = np.zeros((3, N, N, N), dtype=np.complex128)
    kx = lat.jx[mask]
    ky = lat.jy[mask]
    kz = lat.jz[mask]
    raw[:, kx, ky, kz] = big[:, kx + N, ky + N, kz + N]
    return leray_project(lat, raw, check_hermitian=False)


@dataclass
class EmpiricalConstants:
    """Smallest constants making the advection-term inequalities hold on samples.

    c1, c2: the |B(u,u)|_{-1/2} and |B(u,u)|_0 bounds; c_m[m]: the V_m bound
    for integer m >= 1; c_nlin: the trilinear |<B(u,v),w>| bound; C1: the
    Gevrey trilinear bound.  ``validation_margin`` is the worst ratio of
    validation-set maxima to training-set maxima.
    """

    c1: float
    c2: float
    c_m: dict = field(default_factory=dict)
    c_nlin: float = 0.0
    C1: float = 0.0
    lattice_N: int = 0
    samples: int = 0
    validation_margin: float = 1.0

    def with_safety(self, factor: float = 2.0) -> "EmpiricalConstants":
        return EmpiricalConstants(
            c1=self.c1 * factor, c2=self.c2 * factor,
            c_m={m: c * factor for m, c in self.c_m.items()},
            c_nlin=self.c_nlin * factor, C1=self.C1 * factor,
            lattice_N=self.lattice_N, samples=self.samples,
            validation_margin=self.validation_margin)


def _gevrey_norm_local(u: SpectralField, r: float, tau: float) -> float:
    # local copy to avoid a circular import with the Gevrey toolkit
    lat = u.lattice
    nz = lat.j_sq > 0
    jabs = np.sqrt(lat.j_sq[nz].astype(float))
    amp2 = np.sum(np.abs(u.coeffs) ** 2, axis=0)[nz]
    return float(np.sqrt(np.sum(amp2 * jabs ** (2 * r) * np.exp(2 * tau * jabs))))


def inequality_ratios(u: SpectralField, v: SpectralField, w: SpectralField,
                      tau: float, m_list=(3, 4)) -> dict:
    """Ratios left/right (with unit constants) for each advection-term bound."""
    lam1 = u.lattice.lambda1
    Buu = bilinear_B(u, u)
    nrm = lambda g, s: sobolev_norm(g, s)
    u1 = nrm(u, 1)
    out = {}
    out["c1"] = _ratio(nrm(Buu, -0.5), lam1 ** -0.75 * u1 ** 2)
    out["c2"] = _ratio(nrm(Buu, 0), lam1 ** -0.75 * u1 * nrm(u, 1.5))
    for m in m_list:
        out[f"c_{m}"] = _ratio(
            nrm(Buu, m),
            lam1 ** -0.875 * u1 ** 0.25 * nrm(u, 2) ** 0.75 * nrm(u, m + 1))
    Buv = bilinear_B(u, v)
    lhs = abs(_h_inner(Buv, w))
    rhs_nlin = lam1 ** -0.75 * nrm(u, 0) ** 0.5 * u1 ** 0.5 * nrm(v, 1)
    # the w maximizing the pairing is known in closed form; taking it gives
    # |B|_{-1} on the left and a much tighter constant estimate
    out["c_nlin"] = max(_ratio(lhs, rhs_nlin * nrm(w, 1)),
                        _ratio(nrm(Buv, -1), rhs_nlin))
    g = _gevrey_norm_local
    rhs_gv = (lam1 ** -0.75 * g(u, 1, tau) ** 0.5 * g(u, 2, tau) ** 0.5
              * g(v, 1, tau))
    out["C1"] = max(gevrey_inequality_ratio(u, v, w, tau),
                    _ratio(g(Buv, 0, tau), rhs_gv))
    return out


def _h_inner(a: SpectralField, b: SpectralField) -> float:
    return float(np.real(np.sum(a.coeffs * np.conj(b.coeffs))))


def _ratio(lhs: float, rhs: float) -> float:
    return lhs / rhs if rhs > 0 else 0.0


def gevrey_inequality_ratio(u: SpectralField, v: SpectralField,
                            w: SpectralField, tau: float) -> float:
    """|<B(u,v), w>_{1,tau}| / (lambda1^{-3/4} |u|_{1,t}^{1/2} |u|_{2,t}^{1/2}
    |v|_{1,t} |w|_{2,t}) with unit constant; 0 when any argument vanishes."""
    lat = u.lattice
    Buv = bilinear_B(u, v)
    jabs = np.sqrt(lat.j_sq.astype(float))
    weight = lat.j_sq.astype(float) * np.exp(2 * tau * jabs)
    lhs = abs(float(np.real(np.sum(Buv.coeffs * np.conj(w.coeffs) * weight))))
    g = _gevrey_norm_local
    rhs = (lat.lambda1 ** -0.75 * g(u, 1, tau) ** 0.5 * g(u, 2, tau) ** 0.5
           * g(v, 1, tau) * g(w, 2, tau))
    return _ratio(lhs, rhs)


def estimate_inequality_constants(lattice: WaveLattice, sample_count: int,
                                  seed: int, m_list=(3, 4),
                                  validation_fraction: float = 0.5,
                                  tau: float = 0.1) -> EmpiricalConstants:
    """Measure empirical stand-ins for the symbolic inequality constants.

    Takes the max ratio over a training sample set and re-checks the result
    on a fresh validation set; ``validation_margin`` > 1 means a validation
    sample exceeded the training maximum by that factor.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    n_val = max(1, int(sample_count * validation_fraction))
    rng = np.random.default_rng(seed)

    def run(n, base_seed):
        maxima = {}
        for i in range(n):
            s = base_seed + 3 * i
            u = random_divfree_field(lattice, s)
            v = random_divfree_field(lattice, s + 1)
            w = random_divfree_field(lattice, s + 2)
            for key, r in inequality_ratios(u, v, w, tau, m_list).items():
                if not np.isfinite(r):
                    raise FloatingPointError(f"non-finite ratio for {key}")
                maxima[key] = max(maxima.get(key, 0.0), r)
        return maxima

    train = run(sample_count, int(rng.integers(2 ** 31)))
    val = run(n_val, int(rng.integers(2 ** 31)))
    margin = max((val[k] / train[k]) for k in train if train[k] > 0)
    return EmpiricalConstants(
        c1=train["c1"], c2=train["c2"],
        c_m={m: train[f"c_{m}"] for m in m_list},
        c_nlin=train["c_nlin"], C1=train["C1"],
        lattice_N=lattice.N, samples=sample_count,
        validation_margin=margin)

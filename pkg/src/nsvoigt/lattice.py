"""Fourier lattice and divergence-free spectral vector fields on a periodic box.

Coefficients follow the Fourier-series convention: the forward transform
carries the 1/N^3 factor, so ``coeffs[j]`` is the coefficient of
``exp(i (2*pi/L) j . x)`` and the Sobolev/Gevrey norm formulas apply
verbatim on the dimensionless integer lattice.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConfigurationError(ValueError):
    """Invalid lattice or simulation configuration."""


class FieldInvariantError(ValueError):
    """Input violates a spectral-field invariant (e.g. Hermitian symmetry)."""


def _int_modes(N: int) -> np.ndarray:
    # FFT-ordered integer wavenumbers 0, 1, ..., N/2-1, -N/2, ..., -1
    return np.fft.fftfreq(N, d=1.0 / N).astype(np.int64)


@dataclass(frozen=True, eq=False)
class WaveLattice:
    """Integer wavevector lattice for resolution N on the box [0, L]^3.

    Retained modes have every component in [-N/2+1, N/2-1]; the Nyquist
    planes are always dropped so the lattice is closed under negation.
    The two-thirds dealiasing cutoff (strict |j| < N/3) is marked as a
    separate mask used by the quadratic term.
    """

    N: int
    L: float
    jx: np.ndarray
    jy: np.ndarray
    jz: np.ndarray
    j_sq: np.ndarray        # |j|^2, dimensionless
    lattice_mask: np.ndarray  # non-Nyquist cube
    dealias_mask: np.ndarray  # strict two-thirds sphere, within lattice_mask
    k_sq: np.ndarray        # physical |k|^2 = (2 pi / L)^2 |j|^2
    lambda1: float          # smallest Stokes eigenvalue (2 pi / L)^2

    @property
    def lambda_max(self) -> float:
        """Largest Stokes eigenvalue on the dealiased lattice."""
        return self.lambda1 * float(self.j_sq[self.dealias_mask].max())

    def eigenvalue_levels(self) -> np.ndarray:
        """Distinct Stokes eigenvalues on the dealiased lattice, ascending."""
        levels = np.unique(self.j_sq[self.dealias_mask])
        return self.lambda1 * levels[levels > 0].astype(float)


def make_lattice(N: int, L: float) -> WaveLattice:
    if N < 4 or N % 2 != 0:
        raise ConfigurationError(f"N must be even and >= 4, got {N}")
    if L <= 0:
        raise ConfigurationError(f"L must be positive, got {L}")
    j = _int_modes(N)
    jx, jy, jz = np.meshgrid(j, j, j, indexing="ij")
    j_sq = jx * jx + jy * jy + jz * jz
    half = N // 2
    lattice_mask = (np.abs(jx) < half) & (np.abs(jy) < half) & (np.abs(jz) < half)
    # strict |j| < N/3: guarantees quadratic products alias only outside the cutoff
    dealias_mask = (9 * j_sq < N * N) & lattice_mask
    lambda1 = (2.0 * np.pi / L) ** 2
    k_sq = lambda1 * j_sq.astype(float)
    for a in (jx, jy, jz, j_sq, lattice_mask, dealias_mask, k_sq):
        a.setflags(write=False)
    return WaveLattice(N=N, L=float(L), jx=jx, jy=jy, jz=jz, j_sq=j_sq,
                       lattice_mask=lattice_mask, dealias_mask=dealias_mask,
                       k_sq=k_sq, lambda1=lambda1)


def conjugate_reflection(raw: np.ndarray) -> np.ndarray:
    """Return the array sampled at -j: raw[..., -jx, -jy, -jz] in FFT layout."""
    out = raw
    for axis in (-3, -2, -1):
        out = np.roll(np.flip(out, axis=axis), 1, axis=axis)
    return out


def hermitian_defect(raw: np.ndarray) -> float:
    """Max |raw(-j) - conj(raw(j))| over the array."""
    return float(np.abs(conjugate_reflection(raw) - np.conj(raw)).max())


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Divergence-free, zero-mean, Hermitian-symmetric velocity coefficients.

    ``coeffs`` has shape (3, N, N, N) in FFT ordering and is immutable.
    """

    lattice: WaveLattice
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (3, self.lattice.N, self.lattice.N, self.lattice.N):
            raise FieldInvariantError(
                f"coefficient array shape {self.coeffs.shape} does not match lattice")
        self.coeffs.setflags(write=False)

    @classmethod
    def zero(cls, lattice: WaveLattice) -> "SpectralField":
        return cls(lattice, np.zeros((3, lattice.N, lattice.N, lattice.N),
                                     dtype=np.complex128))

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.lattice, coeffs)

    def copy_coeffs(self) -> np.ndarray:
        return np.array(self.coeffs)

    def divergence_defect(self) -> float:
        """Max per-mode |j . u_j| (dimensionless wavevector)."""
        lat = self.lattice
        div = (lat.jx * self.coeffs[0] + lat.jy * self.coeffs[1]
               + lat.jz * self.coeffs[2])
        return float(np.abs(div).max())

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)


def _project_coeffs(lattice: WaveLattice, raw: np.ndarray) -> np.ndarray:
    """Leray projection + lattice truncation applied to a raw coefficient cube."""
    j_sq_safe = np.where(lattice.j_sq == 0, 1, lattice.j_sq)
    jdot = (lattice.jx * raw[0] + lattice.jy * raw[1] + lattice.jz * raw[2]) / j_sq_safe
    out = np.empty_like(raw)
    out[0] = raw[0] - jdot * lattice.jx
    out[1] = raw[1] - jdot * lattice.jy
    out[2] = raw[2] - jdot * lattice.jz
    out *= lattice.lattice_mask
    out[:, 0, 0, 0] = 0.0
    return out


def leray_project(lattice: WaveLattice, raw: np.ndarray,
                  check_hermitian: bool = True) -> SpectralField:
    """Project an arbitrary coefficient cube onto divergence-free, zero-mean fields.

    For j != 0: u_j -> u_j - (j.u_j / |j|^2) j.  Idempotent; annihilates
    gradients.  Raises if the input breaks Hermitian symmetry.
    """
    raw = np.asarray(raw, dtype=np.complex128)
    if raw.shape != (3, lattice.N, lattice.N, lattice.N):
        raise FieldInvariantError(f"raw shape {raw.shape} does not match lattice")
    if check_hermitian:
        scale = max(float(np.abs(raw).max()), 1.0)
        if hermitian_defect(raw) > 1e-10 * scale:
            raise FieldInvariantError("input breaks Hermitian symmetry")
    return SpectralField(lattice, _project_coeffs(lattice, raw))


def stokes_apply(u: SpectralField, p: float) -> SpectralField:
    """Apply A^p: multiply each coefficient by ((2 pi / L)^2 |j|^2)^p."""
    lat = u.lattice
    if p == 0:
        return u
    mult = np.zeros_like(lat.k_sq)
    nz = lat.j_sq > 0
    mult[nz] = lat.k_sq[nz] ** p
    return u.with_coeffs(u.coeffs * mult)


def sobolev_norm(u: SpectralField, s: float) -> float:
    """|u|_s = (sum_j |u_j|^2 |j|^(2s))^(1/2) over the dimensionless lattice."""
    lat = u.lattice
    nz = lat.j_sq > 0
    amp2 = np.sum(np.abs(u.coeffs) ** 2, axis=0)[nz]
    if s == 0:
        return float(np.sqrt(amp2.sum()))
    w = lat.j_sq[nz].astype(float) ** s
    return float(np.sqrt((amp2 * w).sum()))


def to_physical(u: SpectralField) -> np.ndarray:
    """Inverse transform to real samples on the N^3 grid, shape (3, N, N, N)."""
    N = u.lattice.N
    return np.real(np.fft.ifftn(u.coeffs, axes=(1, 2, 3)) * N ** 3)


def to_spectral(lattice: WaveLattice, samples: np.ndarray) -> SpectralField:
    """Forward transform of real samples; carries the 1/N^3 normalization."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape != (3, lattice.N, lattice.N, lattice.N):
        raise FieldInvariantError(
            f"sample grid shape {samples.shape} does not match lattice")
    raw = np.fft.fftn(samples, axes=(1, 2, 3)) / lattice.N ** 3
    raw *= lattice.lattice_mask
    raw[:, 0, 0, 0] = 0.0
    return SpectralField(lattice, raw)


def raw_to_spectral(lattice: WaveLattice, samples: np.ndarray) -> np.ndarray:
    """Forward transform without truncation, for internal use."""
    return np.fft.fftn(samples, axes=(1, 2, 3)) / lattice.N ** 3


class HalfSpectrum:
    """Cached rfft half-spectrum grids (last axis truncated to N/2 + 1).

    The integrator hot loop works in this representation: real-to-complex
    transforms halve the work and the Hermitian partner bookkeeping.
    """

    def __init__(self, lattice: WaveLattice):
        H = lattice.N // 2 + 1
        self.H = H
        self.lattice = lattice
        self.jx = lattice.jx[..., :H]
        self.jy = lattice.jy[..., :H]
        self.jz = lattice.jz[..., :H]
        self.j_sq = lattice.j_sq[..., :H]
        self.dealias_mask = lattice.dealias_mask[..., :H]
        self.k_sq = lattice.k_sq[..., :H]
        kappa = 2.0 * np.pi / lattice.L
        # masked gradient multipliers: i k_i restricted to the dealias sphere
        self.ikx = (1j * kappa) * self.jx * self.dealias_mask
        self.iky = (1j * kappa) * self.jy * self.dealias_mask
        self.ikz = (1j * kappa) * self.jz * self.dealias_mask

    def project(self, raw: np.ndarray) -> np.ndarray:
        j_sq_safe = np.where(self.j_sq == 0, 1, self.j_sq)
        jdot = (self.jx * raw[0] + self.jy * raw[1] + self.jz * raw[2]) / j_sq_safe
        out = np.empty_like(raw)
        out[0] = raw[0] - jdot * self.jx
        out[1] = raw[1] - jdot * self.jy
        out[2] = raw[2] - jdot * self.jz
        out[:, 0, 0, 0] = 0.0
        return out


_HALF_CACHE: dict = {}


def half_spectrum(lattice: WaveLattice) -> HalfSpectrum:
    key = (lattice.N, lattice.L)
    hs = _HALF_CACHE.get(key)
    if hs is None:
        hs = _HALF_CACHE[key] = HalfSpectrum(lattice)
    return hs


def full_to_half(coeffs: np.ndarray) -> np.ndarray:
    N = coeffs.shape[-1]
    return np.ascontiguousarray(coeffs[..., :N // 2 + 1])


def half_to_full(lattice: WaveLattice, uh: np.ndarray) -> np.ndarray:
    """Rebuild the full Hermitian cube from the half-spectrum layout."""
    N = lattice.N
    phys = np.fft.irfftn(uh, s=(N, N, N), axes=(1, 2, 3)) * N ** 3
    return np.fft.fftn(phys, axes=(1, 2, 3)) / N ** 3


def abc_flow(lattice: WaveLattice, A: float = 1.0, B: float = 1.0,
             C: float = 1.0, k: int = 1) -> SpectralField:
    """Arnold-Beltrami-Childress flow at wavenumber k:

        u = (A sin kz + C cos ky, B sin kx + A cos kz, C sin ky + B cos kx).

    A curl eigenfield, so the advection term is a pure gradient and the
    projected nonlinearity vanishes identically.
    """
    if not 1 <= k < lattice.N // 2:
        raise ConfigurationError(f"k = {k} not representable on the lattice")
    N = lattice.N
    raw = np.zeros((3, N, N, N), dtype=np.complex128)

    def put(comp, j, val):
        raw[comp, j[0] % N, j[1] % N, j[2] % N] += val
        raw[comp, -j[0] % N, -j[1] % N, -j[2] % N] += np.conj(val)

    half_i = 1.0 / 2j
    put(0, (0, 0, k), A * half_i)
    put(0, (0, k, 0), C * 0.5)
    put(1, (k, 0, 0), B * half_i)
    put(1, (0, 0, k), A * 0.5)
    put(2, (0, k, 0), C * half_i)
    put(2, (k, 0, 0), B * 0.5)
    return SpectralField(lattice, raw)


def random_divfree_field(lattice: WaveLattice, seed: int,
                         profile=None, amplitude: float = 1.0) -> SpectralField:
    """Reproducible random field: white noise shaped by a radial profile a(|j|),
    dealiased and Leray-projected.

    ``profile`` maps |j| (array) to amplitudes; default exp(-|j|/2).
    """
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((3, lattice.N, lattice.N, lattice.N))
    raw = np.fft.fftn(noise, axes=(1, 2, 3)) / lattice.N ** 3
    jabs = np.sqrt(lattice.j_sq.astype(float))
    if profile is None:
        shape = np.exp(-jabs / 2.0)
    else:
        shape = np.asarray(profile(jabs), dtype=float)
    raw *= shape * lattice.dealias_mask
    # the FFT of real noise is Hermitian only to roundoff; symmetrize exactly
    rev = (-np.arange(lattice.N)) % lattice.N
    raw = 0.5 * (raw + np.conj(raw[:, rev][:, :, rev][:, :, :, rev]))
    field = leray_project(lattice, raw, check_hermitian=False)
    if amplitude != 1.0:
        field = field.with_coeffs(field.coeffs * amplitude)
    return field

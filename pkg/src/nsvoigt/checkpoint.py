"""Binary checkpoint format for spectral fields.

Layout (little endian):

    magic   4 bytes  "NSVF"
    version u32      format version (currently 1)
    N       u32      lattice resolution
    L       f64      box side length
    nu      f64      kinematic viscosity
    alpha   f64      regularization length
    time    f64      simulation time

followed by the non-redundant half of the coefficient lattice in
lexicographic j order, each mode's C^3 amplitude as six f64 values
(re, im per component).  A mode j is stored when its first nonzero
component is positive; the reader reconstructs the conjugate partners.
"""
from __future__ import annotations

import struct

import numpy as np

from .lattice import FieldInvariantError, SpectralField, WaveLattice, make_lattice

MAGIC = b"NSVF"
VERSION = 1
_HEADER = struct.Struct("<4sII4d")


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


def _half_lattice_indices(lat: WaveLattice) -> tuple[np.ndarray, ...]:
    """FFT-layout indices of the stored representatives, lexicographic in
    (jx, jy, jz); a representative's first nonzero component is positive."""
    jx = lat.jx.ravel()
    jy = lat.jy.ravel()
    jz = lat.jz.ravel()
    keep = lat.lattice_mask.ravel() & (
        (jx > 0)
        | ((jx == 0) & (jy > 0))
        | ((jx == 0) & (jy == 0) & (jz > 0)))
    flat = np.nonzero(keep)[0]
    order = np.lexsort((jz[flat], jy[flat], jx[flat]))
    flat = flat[order]
    N = lat.N
    return np.unravel_index(flat, (N, N, N))


def write_checkpoint(path, u: SpectralField, nu: float, alpha: float,
                     time: float) -> None:
    lat = u.lattice
    ix, iy, iz = _half_lattice_indices(lat)
    amps = u.coeffs[:, ix, iy, iz]          # (3, M)
    body = np.empty((amps.shape[1], 6), dtype="<f8")
    body[:, 0::2] = amps.real.T
    body[:, 1::2] = amps.imag.T
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, lat.N, lat.L, nu, alpha, time))
        fh.write(body.tobytes())


def read_checkpoint(path, lattice: WaveLattice | None = None):
    """Load a checkpoint; returns (field, meta) with meta holding N, L,
    nu, alpha and time.  A supplied lattice must match the stored grid."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise CheckpointError("truncated header")
        magic, version, N, L, nu, alpha, time = _HEADER.unpack(head)
        if magic != MAGIC:
            raise CheckpointError("bad magic bytes")
        if version != VERSION:
            raise CheckpointError(f"unsupported format version {version}")
        payload = fh.read()
    if lattice is None:
        lattice = make_lattice(int(N), float(L))
    elif lattice.N != N or lattice.L != L:
        raise CheckpointError(
            f"checkpoint grid (N={N}, L={L}) does not match lattice")
    ix, iy, iz = _half_lattice_indices(lattice)
    M = len(ix)
    body = np.frombuffer(payload, dtype="<f8")
    if body.size != 6 * M:
        raise CheckpointError(
            f"body holds {body.size} values, expected {6 * M}")
    body = body.reshape(M, 6)
    amps = (body[:, 0::2] + 1j * body[:, 1::2]).T   # (3, M)
    raw = np.zeros((3, lattice.N, lattice.N, lattice.N), dtype=np.complex128)
    raw[:, ix, iy, iz] = amps
    Nn = lattice.N
    raw[:, (-lattice.jx[ix, iy, iz]) % Nn, (-lattice.jy[ix, iy, iz]) % Nn,
        (-lattice.jz[ix, iy, iz]) % Nn] = np.conj(amps)
    field = SpectralField(lattice, raw)
    if field.divergence_defect() > 1e-10 * max(float(np.abs(raw).max()), 1.0):
        raise FieldInvariantError("checkpoint field is not divergence-free")
    meta = {"N": int(N), "L": float(L), "nu": float(nu),
            "alpha": float(alpha), "time": float(time)}
    return field, meta

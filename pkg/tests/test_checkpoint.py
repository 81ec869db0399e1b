import numpy as np
import pytest

from nsvoigt.lattice import make_lattice, random_divfree_field
from nsvoigt.checkpoint import (CheckpointError, read_checkpoint,
                                write_checkpoint)


def test_round_trip_exact(tmp_path):
    lat = make_lattice(16, 2 * np.pi)
    u = random_divfree_field(lat, 7)
    path = tmp_path / "state.nsvf"
    write_checkpoint(path, u, nu=0.3, alpha=0.8, time=1.5)
    v, meta = read_checkpoint(path)
    assert np.array_equal(v.coeffs, u.coeffs)
    assert meta == {"N": 16, "L": 2 * np.pi, "nu": 0.3, "alpha": 0.8,
                    "time": 1.5}


def test_byte_determinism(tmp_path):
    lat = make_lattice(8, 2 * np.pi)
    u = random_divfree_field(lat, 1)
    p1 = tmp_path / "a.nsvf"
    p2 = tmp_path / "b.nsvf"
    write_checkpoint(p1, u, 0.1, 0.2, 0.0)
    write_checkpoint(p2, u, 0.1, 0.2, 0.0)
    assert p1.read_bytes() == p2.read_bytes()


def test_header_layout(tmp_path):
    lat = make_lattice(8, 1.0)
    u = random_divfree_field(lat, 2)
    path = tmp_path / "h.nsvf"
    write_checkpoint(path, u, 0.25, 0.5, 2.0)
    blob = path.read_bytes()
    assert blob[:4] == b"NSVF"
    assert int.from_bytes(blob[4:8], "little") == 1
    assert int.from_bytes(blob[8:12], "little") == 8
    assert np.frombuffer(blob[12:44], dtype="<f8").tolist() == [1.0, 0.25,
                                                                0.5, 2.0]
    # body: six f64 per stored representative
    assert (len(blob) - 44) % 48 == 0


def test_lattice_match_enforced(tmp_path):
    lat = make_lattice(8, 2 * np.pi)
    u = random_divfree_field(lat, 3)
    path = tmp_path / "m.nsvf"
    write_checkpoint(path, u, 0.1, 0.1, 0.0)
    v, _ = read_checkpoint(path, lattice=lat)
    assert np.array_equal(v.coeffs, u.coeffs)
    with pytest.raises(CheckpointError):
        read_checkpoint(path, lattice=make_lattice(16, 2 * np.pi))


def test_corruption_detected(tmp_path):
    lat = make_lattice(8, 2 * np.pi)
    u = random_divfree_field(lat, 4)
    path = tmp_path / "c.nsvf"
    write_checkpoint(path, u, 0.1, 0.1, 0.0)
    blob = bytearray(path.read_bytes())

    bad_magic = tmp_path / "bad_magic.nsvf"
    bad_magic.write_bytes(b"XXXX" + bytes(blob[4:]))
    with pytest.raises(CheckpointError):
        read_checkpoint(bad_magic)

    bad_version = tmp_path / "bad_version.nsvf"
    bv = bytearray(blob)
    bv[4:8] = (99).to_bytes(4, "little")
    bad_version.write_bytes(bytes(bv))
    with pytest.raises(CheckpointError):
        read_checkpoint(bad_version)

    truncated = tmp_path / "trunc.nsvf"
    truncated.write_bytes(bytes(blob[:30]))
    with pytest.raises(CheckpointError):
        read_checkpoint(truncated)

    short_body = tmp_path / "short.nsvf"
    short_body.write_bytes(bytes(blob[:-8]))
    with pytest.raises(CheckpointError):
        read_checkpoint(short_body)

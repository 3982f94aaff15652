import struct

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from tslsd.formats import read_lsdx, read_spectrum_csv, write_lsdx, write_spectrum_csv
from tslsd.model import identity_model
from tslsd.simulate import gen_innovations, simulate
from tslsd.spectrum import EigenSpectrum


def test_lsdx_real_roundtrip(tmp_path):
    X = simulate(identity_model(), 3, 5, seed=1)
    path = tmp_path / "x.lsdx"
    write_lsdx(path, X)
    raw = path.read_bytes()
    assert raw[:4] == b"LSDX"
    assert struct.unpack("<III", raw[4:16]) == (3, 5, 0)
    assert len(raw) == 16 + 15 * 8
    # row-major little-endian doubles
    assert np.frombuffer(raw[16:24], "<f8")[0] == X.entries[0, 0]
    assert np.frombuffer(raw[24:32], "<f8")[0] == X.entries[0, 1]
    assert_array_equal(read_lsdx(path).entries, X.entries)


def test_lsdx_complex_roundtrip(tmp_path):
    Z = gen_innovations(4, 6, 0, "complex-gaussian", seed=2).entries
    path = tmp_path / "z.lsdx"
    write_lsdx(path, Z)
    raw = path.read_bytes()
    assert struct.unpack("<I", raw[12:16])[0] & 1
    assert np.frombuffer(raw[16:32], "<f8").tolist() == [Z[0, 0].real, Z[0, 0].imag]
    Y = read_lsdx(path)
    assert Y.is_complex
    assert_array_equal(Y.entries, Z)


def test_lsdx_rejects_bad_files(tmp_path):
    p = tmp_path / "bad.lsdx"
    p.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(ValueError):
        read_lsdx(p)
    p.write_bytes(struct.pack("<4sIII", b"LSDX", 2, 2, 0) + bytes(8))
    with pytest.raises(ValueError):
        read_lsdx(p)
    p.write_bytes(b"LSD")
    with pytest.raises(ValueError):
        read_lsdx(p)


def test_spectrum_csv(tmp_path):
    spec = EigenSpectrum([0.1, -2.5, 3.0])
    path = tmp_path / "s.csv"
    write_spectrum_csv(path, spec, "seed=1")
    lines = path.read_text().splitlines()
    assert lines[0] == "# seed=1"
    assert lines[1] == "index,lambda"
    assert lines[2] == "0,-2.5"
    assert_array_equal(read_spectrum_csv(path).values, spec.values)

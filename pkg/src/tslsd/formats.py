"""On-disk formats: LSDX data dumps and spectrum CSV files.

LSDX layout: 16-byte header ``b"LSDX"``, ``u32 p``, ``u32 n``, ``u32 flags``
(bit 0 set for complex data), all little-endian, followed by the entries
in row-major order as little-endian float64 (complex entries as
interleaved real/imaginary pairs).
"""
from __future__ import annotations

import struct

import numpy as np

from .simulate import DataMatrix
from .spectrum import EigenSpectrum

MAGIC = b"LSDX"
_HEADER = struct.Struct("<4sIII")
FLAG_COMPLEX = 1


def write_lsdx(path, X) -> None:
    A = X.entries if isinstance(X, DataMatrix) else np.asarray(X)
    p, n = A.shape
    cplx = np.iscomplexobj(A)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, p, n, FLAG_COMPLEX if cplx else 0))
        fh.write(np.ascontiguousarray(A, dtype="<c16" if cplx else "<f8").tobytes())


def read_lsdx(path) -> DataMatrix:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError("truncated LSDX header")
        magic, p, n, flags = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        dtype = "<c16" if flags & FLAG_COMPLEX else "<f8"
        body = fh.read()
    expected = p * n * np.dtype(dtype).itemsize
    if len(body) != expected:
        raise ValueError(f"LSDX body has {len(body)} bytes, expected {expected}")
    A = np.frombuffer(body, dtype=dtype).reshape(p, n).astype(complex if flags & 1 else float)
    return DataMatrix(A)


def write_spectrum_csv(path, spec: EigenSpectrum, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        fh.write("index,lambda\n")
        for i, lam in enumerate(spec.values):
            fh.write(f"{i},{float(lam)!r}\n")


def read_spectrum_csv(path) -> EigenSpectrum:
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("index"):
                continue
            rows.append(float(line.split(",")[1]))
    return EigenSpectrum(np.array(rows))

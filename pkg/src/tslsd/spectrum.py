"""Eigenvalues, empirical spectral distributions and Stieltjes transforms."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np


@dataclass(frozen=True, eq=False)
class EigenSpectrum:
    """Ascending eigenvalues of a Hermitian matrix."""

    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if v.size == 0:
            raise ValueError("empty spectrum")
        if not np.all(np.isfinite(v)):
            raise ValueError("spectrum has non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def cdf(self, x):
        """ESD ``F(x) = #{lambda_j <= x} / p``."""
        return np.searchsorted(self.values, x, side="right") / self.values.size


def eigenvalues(M: np.ndarray) -> EigenSpectrum:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("need a square matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return EigenSpectrum(np.linalg.eigvalsh(M))


def _values(spec) -> np.ndarray:
    if isinstance(spec, EigenSpectrum):
        return spec.values
    return np.sort(np.asarray(spec, dtype=float).ravel())


def empirical_stieltjes(spec, z):
    """``s(z) = p^{-1} sum_j 1 / (lambda_j - z)``; ``z`` may be an array."""
    lam = _values(spec)
    z_arr = np.asarray(z, dtype=complex)
    if np.any(z_arr.imag <= 0):
        raise ValueError("Stieltjes transform needs Im z > 0")
    out = np.mean(1.0 / (lam[:, None] - z_arr.ravel()[None, :]), axis=0)
    return complex(out[0]) if z_arr.ndim == 0 else out.reshape(z_arr.shape)


def ks_distance(a, b: Union[EigenSpectrum, np.ndarray, Callable]) -> float:
    """Sup distance between the step CDF of ``a`` and ``b``.

    ``b`` is another spectrum or a CDF callable.  Against a callable the
    supremum is taken over the jump points of ``a`` from both sides, which
    is exact for continuous ``b``.
    """
    x = _values(a)
    p = x.size
    if p == 0:
        raise ValueError("empty spectrum")
    if callable(b) and not isinstance(b, (EigenSpectrum, np.ndarray)):
        F = np.asarray(b(x), dtype=float)
        upper = np.searchsorted(x, x, side="right") / p
        lower = np.searchsorted(x, x, side="left") / p
        return float(max(np.max(np.abs(upper - F)), np.max(np.abs(lower - F))))
    y = _values(b)
    if y.size == 0:
        raise ValueError("empty spectrum")
    grid = np.concatenate([x, y])
    Fa = np.searchsorted(x, grid, side="right") / p
    Fb = np.searchsorted(y, grid, side="right") / y.size
    return float(np.max(np.abs(Fa - Fb)))

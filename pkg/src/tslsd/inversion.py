"""Densities and CDFs recovered from Stieltjes transforms near the real axis."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .lsd import LsdProblem

DEFAULT_V = 1e-3
CLIP_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DensityCurve:
    """``f(x) = Im s(x + i v) / pi`` on a grid; ``failed`` marks solver failures."""

    x: np.ndarray
    f: np.ndarray
    v_used: float
    failed: np.ndarray

    def mass(self) -> float:
        return float(np.trapezoid(np.where(self.failed, 0.0, self.f), self.x))

    def to_csv(self, path, header: Optional[str] = None) -> None:
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            fh.write("x,f,v\n")
            for xi, fi in zip(self.x, self.f):
                fh.write(f"{float(xi)!r},{float(fi)!r},{self.v_used!r}\n")


def default_grid(problem: LsdProblem, v: float = DEFAULT_V, margin: float = 1.15) -> np.ndarray:
    """Grid of spacing ``v/2`` covering ``[-R, R]`` with ``R`` beyond the support bound."""
    R = margin * problem.support_radius() + 10 * v
    dx = v / 2
    return np.arange(-R, R + dx / 2, dx)


def density(x, v: float, problem: LsdProblem) -> DensityCurve:
    """Smoothed density ``Im s(x_k + i v) / pi`` via continuation solves."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size > 1 and np.any(np.diff(x) <= 0):
        raise ValueError("x grid must be strictly increasing")
    if v < problem.options.v_min:
        raise ValueError(f"v = {v} is below v_min = {problem.options.v_min}")
    sol = problem.solve(x + 1j * v)
    failed = ~sol.converged
    f = sol.s.imag / np.pi
    neg = np.where(failed, 0.0, f)
    if np.min(neg) < -CLIP_TOL:
        raise ArithmeticError(f"density dipped to {np.min(neg):.3g}; solver left C+")
    f = np.where(failed, np.nan, np.clip(f, 0.0, None))
    return DensityCurve(x, f, float(v), failed)


def cdf_from_density(curve: DensityCurve) -> Callable:
    """Cumulative trapezoid CDF, clipped to [0, 1], 0 left and 1 right of the grid."""
    f = np.where(curve.failed, 0.0, curve.f)
    F = np.clip(cumulative_trapezoid(f, curve.x, initial=0.0), 0.0, 1.0)
    x0, x1 = curve.x[0], curve.x[-1]

    def cdf(t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, curve.x, F)
        out = np.where(t < x0, 0.0, out)
        out = np.where(t > x1, 1.0, out)
        return out

    return cdf

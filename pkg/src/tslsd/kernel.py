"""Spectral kernel ``R_tau(a, b)`` by periodic trapezoid quadrature.

``R_tau(a, b) = (2 pi)^{-1} int_0^{2 pi} cos^2(tau t) psi(a, t) psi(b, t) dt``

For MA-type models the integrand is a trigonometric polynomial of degree
``2 tau + 4 q`` and the equal-weight rule on ``N`` points is exact once
``N`` exceeds that degree.  AR/ARMA integrands are smooth and periodic, so
the same rule converges geometrically; there a doubling check guards the
default ``N``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import ProcessModel, check_point, psi_table, power_psi

DEFAULT_N = 512
RATIONAL_MIN_N = 256


def exactness_threshold(model: ProcessModel, tau: int) -> int:
    return 2 * (2 * model.q + 2 * tau) + 1


def default_quad_points(model: ProcessModel, tau: int) -> int:
    return max(DEFAULT_N, exactness_threshold(model, tau))


def _check_n(model: ProcessModel, tau: int, N: int) -> None:
    if model.is_rational:
        if N < RATIONAL_MIN_N:
            warnings.warn(f"N = {N} quadrature points is low for a rational transfer function",
                          stacklevel=3)
    elif N < exactness_threshold(model, tau):
        raise ValueError(
            f"N = {N} is below the exactness threshold {exactness_threshold(model, tau)}"
        )


def _nodes(N: int) -> np.ndarray:
    return 2 * np.pi * np.arange(N) / N


def kernel_entry(model: ProcessModel, tau: int, a, b, N: int | None = None) -> float:
    """Periodic-trapezoid value of ``R_tau(a, b)``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    N = default_quad_points(model, tau) if N is None else int(N)
    _check_n(model, tau, N)
    a = check_point(model.measure, a)
    b = check_point(model.measure, b)
    th = _nodes(N)
    ca = np.cos(tau * th) ** 2
    pa = power_psi(model, a, th)
    pb = pa if np.array_equal(a, b) else power_psi(model, b, th)
    # symmetric by construction: the products commute elementwise
    return float(np.sum(ca * (pa * pb)) / N)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Kernel over the atoms of a measure (optionally ``g_B``-weighted)."""

    entries: np.ndarray
    tau: int
    quad_points: int
    use_b: bool = False

    @property
    def m(self) -> int:
        return self.entries.shape[0]


def _raw_kernel(model: ProcessModel, tau: int, N: int) -> np.ndarray:
    th = _nodes(N)
    psi = psi_table(model, th)
    wpsi = psi * (np.cos(tau * th) ** 2)[None, :]
    K = wpsi @ psi.T / N
    return (K + K.T) / 2


def kernel_matrix(model: ProcessModel, tau: int, N: int | None = None,
                  use_b: bool = False, *, check: bool = True) -> KernelMatrix:
    """``K_ij = [g_B(a_i) g_B(a_j)]^{use_b} R_tau(a_i, a_j)`` over the model's atoms.

    For rational families a second evaluation on ``2N`` points is compared
    against the first when ``check`` is set; a warning flags a difference
    above 1e-12.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    N = default_quad_points(model, tau) if N is None else int(N)
    _check_n(model, tau, N)
    K = _raw_kernel(model, tau, N)
    if check and model.is_rational:
        diff = np.max(np.abs(_raw_kernel(model, tau, 2 * N) - K))
        if diff > 1e-12 * max(1.0, np.max(np.abs(K))):
            warnings.warn(f"kernel changes by {diff:.3g} when doubling N = {N}",
                          stacklevel=2)
    if use_b:
        b = model.measure.b_values
        if b is None:
            raise ValueError("use_b requires b_values on the measure")
        K = K * np.outer(b, b)
    return KernelMatrix(K, int(tau), N, bool(use_b))


def kernel_mass(K: KernelMatrix | np.ndarray, weights) -> np.ndarray:
    """Per-atom mass ``m_i = sum_j w_j K_ij``."""
    E = K.entries if isinstance(K, KernelMatrix) else np.asarray(K)
    return E @ np.asarray(weights, dtype=float)


@dataclass(frozen=True)
class StabilityReport:
    tau_a: int
    tau_b: int
    max_difference: float
    passed: bool


def kernel_stability_check(model: ProcessModel, tol: float = 1e-12) -> StabilityReport:
    """Compare the kernels at lags ``q + 1`` and ``q + 2`` of an MA-type model."""
    if model.is_rational:
        raise ValueError("stability across lags only holds for finite-order models")
    t1, t2 = model.q + 1, model.q + 2
    N = default_quad_points(model, t2)
    d = np.max(np.abs(kernel_matrix(model, t1, N).entries - kernel_matrix(model, t2, N).entries))
    return StabilityReport(t1, t2, float(d), bool(d < tol))


def write_kernel_csv(path, K: KernelMatrix, header: str | None = None) -> None:
    m = K.m
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        fh.write("atom," + ",".join(str(j) for j in range(m)) + "\n")
        for i in range(m):
            fh.write(f"{i}," + ",".join(repr(float(v)) for v in K.entries[i]) + "\n")

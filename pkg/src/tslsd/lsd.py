"""Fixed-point solver for the limiting Stieltjes transform.

For a discrete spectral measure with weights ``w`` and kernel ``K`` the
unknowns are the values ``beta_i(z)`` of the Stieltjes kernel at the atoms:

    beta_i(z) = - sum_j w_j K_ij / (z + beta_j(z)),
    s(z)      = - sum_j w_j / (z + beta_j(z)).

Above ``v0 = max(1, sqrt(2) L1)`` plain iteration is a contraction.  Below
it the solver walks down in ``Im z`` (continuation), warm-starting each
level from the previous one, iterating a damped map and switching to
Newton steps when the damped map stalls.  Every accepted iterate stays in
the upper half plane.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .kernel import KernelMatrix, kernel_matrix

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 20_000
DEFAULT_V_MIN = 1e-4
PROJECT_FLOOR = 1e-14
MAX_PROJECTIONS = 10


class ConvergenceError(RuntimeError):
    """Fixed-point iteration did not reach the tolerance."""

    def __init__(self, msg, residual=float("nan"), deepest_v=float("nan")):
        super().__init__(msg)
        self.residual = residual
        self.deepest_v = deepest_v


@dataclass(frozen=True)
class SolverOptions:
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    v_min: float = DEFAULT_V_MIN
    damping: float = 0.5
    shrink: float = 0.7
    newton_after: int = 20
    newton_iter: int = 40
    chunk: int = 4096


@dataclass(frozen=True, eq=False)
class LsdSolution:
    """Solutions on a grid of ``z`` values.

    ``beta`` has shape ``(len(z), m)``.  ``iterations`` counts all
    iterations over every continuation level; ``max_level_iterations`` is
    the largest count spent on one level.  For points that failed,
    ``deepest_v`` is the smallest ``Im z`` at which the solver converged.
    """

    z: np.ndarray
    beta: np.ndarray
    s: np.ndarray
    iterations: np.ndarray
    max_level_iterations: np.ndarray
    residual: np.ndarray
    converged: np.ndarray
    deepest_v: np.ndarray
    projections: np.ndarray

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))

    def to_csv(self, path, header: Optional[str] = None) -> None:
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            fh.write("re_z,im_z,re_s,im_s,iterations,residual\n")
            for k in range(self.z.size):
                fh.write(
                    f"{float(self.z[k].real)!r},{float(self.z[k].imag)!r},{float(self.s[k].real)!r},"
                    f"{float(self.s[k].imag)!r},{int(self.iterations[k])},{float(self.residual[k])!r}\n"
                )


def _arrays(K, weights):
    E = K.entries if isinstance(K, KernelMatrix) else np.asarray(K, dtype=float)
    w = np.asarray(weights, dtype=float).ravel()
    if E.ndim != 2 or E.shape != (w.size, w.size):
        raise ValueError(f"kernel shape {E.shape} does not match {w.size} weights")
    return E, w


def contraction_level(K, weights, L1: Optional[float] = None) -> float:
    """``v0 = max(1, sqrt(2) L1)``.

    Without ``L1`` the bound ``K <= L1**4`` is inverted, i.e. the kernel's
    own maximum supplies the constant.
    """
    E, _ = _arrays(K, weights)
    if L1 is None:
        L1 = float(np.max(np.abs(E))) ** 0.25
    return max(1.0, math.sqrt(2.0) * L1)


def start_level(K, weights, L1: Optional[float] = None) -> float:
    E, w = _arrays(K, weights)
    mass = E @ w
    return max(contraction_level(E, w, L1), 2.0 * math.sqrt(max(float(np.max(mass)), 0.0)))


def fixed_point_map(beta, z, K, weights) -> np.ndarray:
    """``out_i = - sum_j w_j K_ij / (z + beta_j)``.

    ``beta`` may be batched with shape ``(P, m)`` and ``z`` shape ``(P,)``.
    """
    E, w = _arrays(K, weights)
    beta = np.asarray(beta, dtype=complex)
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise ValueError("fixed-point map needs Im z > 0")
    denom = np.expand_dims(z, -1) + beta if beta.ndim > 1 else z + beta
    if np.any(denom == 0):
        raise ZeroDivisionError("pole z + beta_j = 0")
    return -(w / denom) @ E.T


def stieltjes_lsd(z, beta, weights):
    """``s(z) = - sum_j w_j / (z + beta_j)``."""
    w = np.asarray(weights, dtype=float)
    z = np.asarray(z, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    denom = np.expand_dims(z, -1) + beta if beta.ndim > 1 else z + beta
    out = -np.sum(w / denom, axis=-1)
    return complex(out) if out.ndim == 0 else out


def lsd_second_moment(K, weights) -> float:
    """Second moment ``sum_ij w_i w_j K_ij`` of the limiting distribution."""
    E, w = _arrays(K, weights)
    return float(w @ E @ w)


def solve_scalar(z, Rbar: float):
    """Root with positive imaginary part of ``Rbar s^2 + z s + 1 = 0``."""
    if Rbar <= 0:
        raise ValueError("Rbar must be positive")
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise ValueError("need Im z > 0")
    root = np.sqrt(z * z - 4.0 * Rbar)
    s1 = (-z + root) / (2.0 * Rbar)
    s2 = (-z - root) / (2.0 * Rbar)
    out = np.where(s1.imag > 0, s1, s2)
    return complex(out) if out.ndim == 0 else out


# -- iteration engine --------------------------------------------------------
class _Level:
    """State for one continuation level over a batch of points."""

    def __init__(self, E, w, live):
        self.E = E
        self.w = w
        self.live = live  # atoms with positive mass; the rest are exactly zero

    def T(self, beta, z):
        return -(self.w / (z[:, None] + beta)) @ self.E.T

    def residual(self, beta, z):
        Tb = self.T(beta, z)
        return Tb, np.max(np.abs(Tb - beta), axis=1)

    def project(self, beta):
        bad = (beta.imag <= 0) & self.live[None, :]
        if np.any(bad):
            beta = beta.copy()
            beta.imag[bad] = PROJECT_FLOOR
        return beta, bad.sum(axis=1)

    def newton_step(self, beta, z, Tb):
        d = z[:, None] + beta
        P, m = beta.shape
        J = np.broadcast_to(np.eye(m), (P, m, m)) - self.E[None, :, :] * (self.w / d ** 2)[:, None, :]
        F = beta - Tb
        try:
            delta = np.linalg.solve(J, F[..., None])[..., 0]
        except np.linalg.LinAlgError:
            return None
        return beta - delta


def _solve_level(lev: _Level, z, beta, eta, opts: SolverOptions):
    """Iterate every point of the batch at its ``z`` until the residual is
    below ``tol``.  Returns (beta, iterations, residual, converged, projections)."""
    P = z.shape[0]
    beta = beta.copy()
    iters = np.zeros(P, dtype=int)
    resid = np.full(P, np.inf)
    conv = np.zeros(P, dtype=bool)
    proj = np.zeros(P, dtype=int)
    failed = np.zeros(P, dtype=bool)
    act = np.arange(P)
    k = 0
    newton_done = False
    while act.size and k < opts.max_iter:
        zb, bb = z[act], beta[act]
        Tb, r = lev.residual(bb, zb)
        resid[act] = r
        ok = r <= opts.tol
        conv[act[ok]] = True
        act, zb, bb, Tb = act[~ok], zb[~ok], bb[~ok], Tb[~ok]
        if not act.size:
            break
        if k >= opts.newton_after and not newton_done:
            newton_done = True
            n_newton = np.zeros(act.size, dtype=int)
            bn = _newton_phase(lev, zb, bb, Tb, opts, n_newton)
            iters[act] += n_newton
            Tn, rn = lev.residual(bn, zb)
            good = np.all((bn.imag > 0) | ~lev.live[None, :], axis=1) & np.isfinite(rn)
            bb = np.where(good[:, None], bn, bb)
            Tb = np.where(good[:, None], Tn, Tb)
            beta[act] = bb
            rr = np.where(good, rn, resid[act])
            resid[act] = rr
            ok = good & (rr <= opts.tol)
            conv[act[ok]] = True
            act, zb, bb, Tb = act[~ok], zb[~ok], bb[~ok], Tb[~ok]
            if not act.size:
                break
        e = eta[act][:, None]
        new = (1 - e) * bb + e * Tb
        new, nproj = lev.project(new)
        proj[act] += nproj
        beta[act] = new
        iters[act] += 1
        over = proj[act] > MAX_PROJECTIONS
        if np.any(over):
            failed[act[over]] = True
            act = act[~over]
        k += 1
    return beta, iters, resid, conv & ~failed, proj


def _newton_phase(lev: _Level, z, beta, Tb, opts: SolverOptions, iters_out):
    """Newton iteration with step halving that keeps iterates in C+."""
    b = beta.copy()
    T = Tb
    idx = np.arange(z.shape[0])
    for _ in range(opts.newton_iter):
        if not idx.size:
            break
        cand = lev.newton_step(b[idx], z[idx], T[idx])
        if cand is None:
            break
        step = cand - b[idx]
        lam = np.ones(idx.size)
        for _h in range(30):
            trial = b[idx] + lam[:, None] * step
            bad = np.any((trial.imag <= 0) & lev.live[None, :], axis=1) | ~np.all(np.isfinite(trial), axis=1)
            if not np.any(bad):
                break
            lam[bad] *= 0.5
        else:
            trial = np.where(bad[:, None], b[idx], trial)
        b[idx] = trial
        iters_out[idx] += 1
        Tn, r = lev.residual(b[idx], z[idx])
        T = T.copy()
        T[idx] = Tn
        idx = idx[r > opts.tol]
    return b


def _track(z, E, w, v0, v_top, opts: SolverOptions):
    P, m = z.shape[0], w.size
    mass = E @ w
    live = mass > 0
    lev = _Level(E, w, live)
    x, vt = z.real, z.imag
    n_levels = np.where(vt >= v_top, 0,
                        np.ceil(np.log(vt / v_top) / math.log(opts.shrink) - 1e-12)).astype(int)
    n_levels = np.maximum(n_levels, 0)
    beta = np.broadcast_to(1j * mass, (P, m)).astype(complex)
    iters = np.zeros(P, dtype=int)
    max_lvl = np.zeros(P, dtype=int)
    resid = np.full(P, np.inf)
    conv = np.ones(P, dtype=bool)
    deepest = np.full(P, np.inf)
    proj = np.zeros(P, dtype=int)
    for j in range(int(n_levels.max()) + 1):
        act = np.flatnonzero((n_levels >= j) & conv)
        if not act.size:
            break
        v = np.where(vt[act] >= v_top, vt[act], np.maximum(v_top * opts.shrink ** j, vt[act]))
        zl = x[act] + 1j * v
        eta = np.where(v >= v0, 1.0, opts.damping)
        b, it, r, c, pr = _solve_level(lev, zl, beta[act], eta, opts)
        iters[act] += it
        max_lvl[act] = np.maximum(max_lvl[act], it)
        proj[act] += pr
        resid[act] = r
        beta[act[c]] = b[c]
        deepest[act[c]] = v[c]
        conv[act[~c]] = False
    beta[:, ~live] = 0.0
    ok = np.flatnonzero(conv)
    if ok.size:
        beta[ok], resid[ok] = _polish(lev, z[ok], beta[ok], resid[ok])
    return beta, iters, max_lvl, resid, conv, deepest, proj


def _polish(lev: _Level, z, beta, resid):
    """One Newton step on converged points, kept only where it helps."""
    Tb = lev.T(beta, z)
    cand = lev.newton_step(beta, z, Tb)
    if cand is None:
        return beta, resid
    cand[:, ~lev.live] = 0.0
    _, r = lev.residual(cand, z)
    good = (r < resid) & np.all((cand.imag > 0) | ~lev.live[None, :], axis=1)
    return np.where(good[:, None], cand, beta), np.where(good, r, resid)


def continuation_solve(grid, K, weights, *, L1: Optional[float] = None,
                       options: Optional[SolverOptions] = None, **kw) -> LsdSolution:
    """Solve on every grid point by continuation in ``Im z``.

    Each point starts at ``x + i v_top`` with
    ``v_top = max(v0, 2 sqrt(max_i m_i))``, where the plain map is a
    contraction, and descends geometrically by ``options.shrink``.
    Keyword arguments override fields of ``options``.
    """
    opts = options or SolverOptions()
    if kw:
        opts = SolverOptions(**{**opts.__dict__, **kw})
    E, w = _arrays(K, weights)
    z = np.atleast_1d(np.asarray(grid, dtype=complex)).ravel()
    if z.size == 0:
        raise ValueError("empty grid")
    if np.any(~np.isfinite(z)):
        raise ValueError("grid has non-finite points")
    if np.any(z.imag < opts.v_min):
        raise ValueError(f"grid points need Im z >= v_min = {opts.v_min}")
    v0 = contraction_level(E, w, L1)
    v_top = start_level(E, w, L1)
    m = w.size
    parts = [[] for _ in range(7)]
    for start in range(0, z.size, opts.chunk):
        res = _track(z[start:start + opts.chunk], E, w, v0, v_top, opts)
        for lst, arr in zip(parts, res):
            lst.append(arr)
    beta, iters, max_lvl, resid, conv, deepest, proj = (np.concatenate(p) for p in parts)
    beta = beta.reshape(z.size, m)
    s = stieltjes_lsd(z, beta, w)
    s = np.where(conv, s, np.nan + 1j * np.nan)
    return LsdSolution(z, beta, np.asarray(s), iters, max_lvl, resid, conv, deepest, proj)


def solve_beta(z, K, weights, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
               *, beta0=None, L1: Optional[float] = None, v_min: float = DEFAULT_V_MIN):
    """Solve the fixed point at a single ``z``.

    Without ``beta0`` the solution is reached by continuation from the
    contraction region.  Returns ``(beta, iterations, residual)``.
    """
    z = complex(z)
    if z.imag < v_min:
        raise ValueError(f"need Im z >= {v_min}")
    E, w = _arrays(K, weights)
    opts = SolverOptions(tol=tol, max_iter=max_iter, v_min=v_min)
    if beta0 is None:
        sol = continuation_solve([z], E, w, L1=L1, options=opts)
        if not sol.converged[0]:
            raise ConvergenceError(
                f"no convergence at z = {z}", float(sol.residual[0]), float(sol.deepest_v[0])
            )
        return sol.beta[0], int(sol.iterations[0]), float(sol.residual[0])
    live = (E @ w) > 0
    lev = _Level(E, w, live)
    b0 = np.asarray(beta0, dtype=complex).reshape(1, w.size)
    eta = np.array([1.0 if z.imag >= contraction_level(E, w, L1) else opts.damping])
    b, it, r, c, _ = _solve_level(lev, np.array([z]), b0, eta, opts)
    if not c[0]:
        raise ConvergenceError(f"no convergence at z = {z}", float(r[0]), float("nan"))
    out = b[0]
    out[~live] = 0.0
    return out, int(it[0]), float(r[0])


def solve_block(z, omega, Rbar, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
    """Block system: weights ``omega`` and block kernel ``Rbar``.

    Returns ``(beta, s)``.
    """
    omega = np.asarray(omega, dtype=float).ravel()
    R = np.asarray(Rbar, dtype=float)
    if np.any(omega <= 0) or abs(omega.sum() - 1) > 1e-12:
        raise ValueError("block weights must be positive and sum to one")
    if R.shape != (omega.size, omega.size) or not np.allclose(R, R.T, rtol=0, atol=0):
        raise ValueError("Rbar must be a symmetric B x B matrix")
    if np.any(R <= 0):
        raise ValueError("Rbar must have positive entries")
    beta, _, _ = solve_beta(z, R, omega, tol, max_iter)
    return beta, stieltjes_lsd(z, beta, omega)


# -- model-level convenience -------------------------------------------------
@dataclass(frozen=True, eq=False)
class LsdProblem:
    """Kernel, weights and contraction constant for one model and lag."""

    K: np.ndarray
    weights: np.ndarray
    L1: Optional[float] = None
    options: SolverOptions = field(default_factory=SolverOptions)

    @classmethod
    def from_model(cls, model, tau: int, *, use_b: Optional[bool] = None,
                   N: Optional[int] = None, options: Optional[SolverOptions] = None):
        if use_b is None:
            use_b = model.measure.b_values is not None
        K = kernel_matrix(model, tau, N, use_b)
        L1 = model.L1
        if use_b:
            L1 = L1 * math.sqrt(float(np.max(model.measure.b_values)))
        return cls(K.entries, model.measure.weights, L1, options or SolverOptions())

    @property
    def second_moment(self) -> float:
        return lsd_second_moment(self.K, self.weights)

    @property
    def mass(self) -> np.ndarray:
        return self.K @ self.weights

    def support_radius(self) -> float:
        """Upper bound ``2 sqrt(max_i m_i)`` on the support of the limit."""
        return 2.0 * math.sqrt(float(np.max(self.mass)))

    def solve(self, grid) -> LsdSolution:
        return continuation_solve(grid, self.K, self.weights, L1=self.L1, options=self.options)

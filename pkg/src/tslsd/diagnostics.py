"""Goodness-of-fit diagnostics built on the limiting spectral distribution."""
from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .inversion import DEFAULT_V, cdf_from_density, default_grid, density
from .lsd import LsdProblem, LsdSolution
from .model import ProcessModel
from .moments import population_sigma, renormalize, sample_autocov
from .simulate import DataMatrix, assign_atoms, simulate
from .spectrum import EigenSpectrum, eigenvalues, empirical_stieltjes, ks_distance

NORMS = ("sup", "l1", "l2")
QUANTILES = (0.01, 0.05, 0.10, 0.50, 0.90, 0.95, 0.99)
# null replicates use their own stream indices so they never reuse the
# observed data's stream (replicate 0) under a shared seed
NULL_STREAM_OFFSET = 1_000_000


def default_z_grid(m2: float) -> np.ndarray:
    """``x + i y`` with ``x in {-2,-1,0,1,2} sqrt(m2)`` and ``y in {0.5, 1}``."""
    r = math.sqrt(m2)
    return np.array([x * r + 1j * y for y in (0.5, 1.0) for x in (-2, -1, 0, 1, 2)])


def combine(d, norm_kind: str) -> float:
    d = np.abs(np.asarray(d))
    if norm_kind == "sup":
        return float(np.max(d))
    if norm_kind == "l1":
        return float(np.sum(d))
    if norm_kind == "l2":
        return float(np.sqrt(np.sum(d ** 2)))
    raise ValueError(f"unknown norm {norm_kind!r}")


def gof_statistic(spec, lsd: LsdSolution, norm_kind: str = "sup", z_grid=None) -> float:
    """Norm over the grid of ``|s_emp(z_k) - s(z_k)|``."""
    if z_grid is not None and not np.array_equal(np.asarray(z_grid, dtype=complex), lsd.z):
        raise ValueError("z grid does not match the LSD solution grid")
    if not lsd.all_converged:
        raise ValueError("LSD solution has unconverged grid points")
    return combine(empirical_stieltjes(spec, lsd.z) - lsd.s, norm_kind)


def mc_pvalue(statistic: float, null_sample) -> float:
    """Add-one Monte Carlo p-value ``(1 + #{null >= stat}) / (M + 1)``."""
    null = np.asarray(null_sample, dtype=float)
    return float((1 + np.sum(null >= statistic)) / (null.size + 1))


def _gaussian_law(model: ProcessModel) -> str:
    return "complex-gaussian" if model.is_complex else "real-gaussian"


def renormalized_spectrum(X: DataMatrix, model: ProcessModel, tau: int,
                          sigma: Optional[np.ndarray] = None) -> EigenSpectrum:
    if sigma is None:
        idx = X.atom_index if X.atom_index is not None else assign_atoms(model.measure.weights, X.p)
        sigma = population_sigma(model, tau, idx, use_b=model.measure.b_values is not None)
    return eigenvalues(renormalize(sample_autocov(X, tau), sigma, X.n, X.p))


def null_distribution(model: ProcessModel, p: int, n: int, tau: int, z_grid,
                      norm_kind: str = "sup", M: int = 199, seed: int = 0, *,
                      lsd: Optional[LsdSolution] = None, threads: int = 1) -> np.ndarray:
    """Sorted statistics of ``M`` Gaussian-innovation replicates of ``model``."""
    if M < 19:
        raise ValueError("need M >= 19 null replicates")
    if p / n > 0.25:
        warnings.warn(f"p/n = {p / n:.3g} is large for the p/n -> 0 regime", stacklevel=2)
    if lsd is None:
        lsd = LsdProblem.from_model(model, tau).solve(z_grid)
    law = _gaussian_law(model)

    def one(r):
        X = simulate(model, p, n, seed, replicate=NULL_STREAM_OFFSET + r, law=law)
        return gof_statistic(renormalized_spectrum(X, model, tau), lsd, norm_kind)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            stats = list(ex.map(one, range(M)))
    else:
        stats = [one(r) for r in range(M)]
    return np.sort(np.asarray(stats))


@dataclass
class TestReport:
    __test__ = False

    statistic: float
    norm_kind: str
    z_grid: np.ndarray
    null_sample: np.ndarray
    p_value: float
    seed: int
    tau: int = 0
    meta: Dict = field(default_factory=dict)

    def null_quantiles(self) -> Dict[str, float]:
        q = np.quantile(self.null_sample, QUANTILES)
        return {f"{int(round(100 * a))}%": float(v) for a, v in zip(QUANTILES, q)}

    def to_dict(self) -> Dict:
        return {
            "statistic": self.statistic,
            "norm": self.norm_kind,
            "p_value": self.p_value,
            "grid": [[float(z.real), float(z.imag)] for z in self.z_grid],
            "null_quantiles": self.null_quantiles(),
            "M": int(self.null_sample.size),
            "tau": self.tau,
            "seed": self.seed,
            **({"meta": self.meta} if self.meta else {}),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def gof_test(X: DataMatrix, model: ProcessModel, tau: int = 0, *, z_grid=None,
             norm_kind: str = "sup", M: int = 199, seed: int = 0,
             sigma: Optional[np.ndarray] = None, threads: int = 1) -> TestReport:
    """Stieltjes-grid goodness-of-fit test of ``X`` against the null ``model``.

    ``sigma`` replaces the population autocovariance, e.g. by a plug-in
    estimate.
    """
    problem = LsdProblem.from_model(model, tau)
    if z_grid is None:
        z_grid = default_z_grid(problem.second_moment)
    z_grid = np.asarray(z_grid, dtype=complex)
    lsd = problem.solve(z_grid)
    stat = gof_statistic(renormalized_spectrum(X, model, tau, sigma), lsd, norm_kind)
    null = null_distribution(model, X.p, X.n, tau, z_grid, norm_kind, M, seed,
                             lsd=lsd, threads=threads)
    return TestReport(stat, norm_kind, z_grid, null, mc_pvalue(stat, null), seed, tau)


def frobenius_fluctuation(C: np.ndarray) -> float:
    """``||C||_F^2 / p``, the second moment of the ESD of ``C``."""
    C = np.asarray(C)
    return float(np.sum(np.abs(C) ** 2).real / C.shape[0])


def lsd_cdf(problem: LsdProblem, v: float = DEFAULT_V, x=None) -> Callable:
    if x is None:
        x = default_grid(problem, v)
    return cdf_from_density(density(x, v, problem))


@dataclass
class ProbeReport:
    q0: int
    taus: List[int]
    pairwise: Dict[Tuple[int, int], float]
    vs_lsd: Dict[int, float]

    @property
    def max_pairwise(self) -> float:
        return max(self.pairwise.values()) if self.pairwise else 0.0


def ma_order_probe(X: DataMatrix, q0: int, tau_max: int, model: ProcessModel, *,
                   v: float = DEFAULT_V, compare_lsd: bool = True) -> ProbeReport:
    """Compare ESDs of ``C_tau`` for ``tau = q0+1..tau_max`` with each other and
    with the common limit under an MA(``q0``) null."""
    if tau_max < q0 + 2:
        raise ValueError("need tau_max >= q0 + 2")
    if tau_max >= X.n // 2:
        raise ValueError(f"n = {X.n} is too small for lag {tau_max}")
    taus = list(range(q0 + 1, tau_max + 1))
    specs = {t: renormalized_spectrum(X, model, t) for t in taus}
    pairwise = {(a, b): ks_distance(specs[a], specs[b]) for a, b in combinations(taus, 2)}
    vs = {}
    if compare_lsd:
        cdf = lsd_cdf(LsdProblem.from_model(model, q0 + 1), v)
        vs = {t: ks_distance(specs[t], cdf) for t in taus}
    return ProbeReport(q0, taus, pairwise, vs)


@dataclass
class ConcentrationReport:
    p_list: List[int]
    stds: List[float]
    ratios: List[float]
    passed: bool


def concentration_check(model: ProcessModel, p_list: Sequence[int],
                        n_of_p: Callable[[int], int], z: complex = 1j, tau: int = 0,
                        R: int = 50, seed: int = 0, *, max_ratio: float = 0.8) -> ConcentrationReport:
    """Spread of ``Re s_p(z)`` over ``R`` replicates for increasing ``p``.

    Passes when the spread decreases along ``p_list`` and
    ``std(p_{k+1}) <= max_ratio * std(p_k)`` whenever ``p_{k+1} >= 4 p_k``.
    """
    p_list = [int(p) for p in p_list]
    if len(p_list) < 2 or any(b <= a for a, b in zip(p_list, p_list[1:])):
        raise ValueError("p_list must be increasing with at least two values")
    if R < 2:
        raise ValueError("need R >= 2 replicates to estimate a spread")
    stds = []
    for k, p in enumerate(p_list):
        n = int(n_of_p(p))
        vals = []
        for r in range(R):
            X = simulate(model, p, n, seed + 7919 * k, replicate=r)
            vals.append(empirical_stieltjes(renormalized_spectrum(X, model, tau), z).real)
        stds.append(float(np.std(vals, ddof=1)))
    ratios = [b / a for a, b in zip(stds, stds[1:])]
    passed = all(r < 1 for r in ratios) and all(
        r <= max_ratio for r, a, b in zip(ratios, p_list, p_list[1:]) if b >= 4 * a
    )
    return ConcentrationReport(p_list, stds, ratios, passed)

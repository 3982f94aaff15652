"""Innovations, sample paths and perturbation scenarios."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy import signal, stats

from .model import LAWS, ModelError, ProcessModel, SpectralAtomMeasure, coefficient_table

ROW_BLOCK = 32
FFT_THRESHOLD = 2 ** 24
PERTURBATION_BLOCK = 2 ** 31


@dataclass(frozen=True, eq=False)
class InnovationBlock:
    """``p x (n + q)`` innovations; column ``k`` holds time ``t = k + 1 - q``."""

    entries: np.ndarray
    law: str
    q: int
    seed: Optional[int] = None
    replicate: int = 0

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1] - self.q


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """Observations ``X = [X_1 : ... : X_n]`` with the atom index of each row."""

    entries: np.ndarray
    atom_index: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def __post_init__(self):
        X = np.asarray(self.entries)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("data matrix must be p x n with p, n >= 1")
        if not np.all(np.isfinite(X)):
            raise ValueError("data matrix has non-finite entries")
        if X.shape[0] > X.shape[1]:
            warnings.warn(f"p = {X.shape[0]} exceeds n = {X.shape[1]}", stacklevel=3)
        if self.atom_index is not None:
            idx = np.asarray(self.atom_index, dtype=int)
            if idx.shape != (X.shape[0],):
                raise ValueError("atom_index must have one entry per row")
            object.__setattr__(self, "atom_index", idx)
        object.__setattr__(self, "entries", X)

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.entries)


def _stream(seed: int, replicate: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate), int(block)))
    return np.random.Generator(np.random.PCG64(ss))


def _draw(rng: np.random.Generator, law: str, shape) -> np.ndarray:
    if law in ("real-gaussian", "complex-gaussian"):
        return rng.standard_normal(shape)
    if law == "rademacher":
        return rng.integers(0, 2, size=shape).astype(float) * 2.0 - 1.0
    if law == "centered-uniform":
        r = math.sqrt(3.0)
        return rng.uniform(-r, r, size=shape)
    raise ModelError(f"unknown innovation law {law!r}")


def gen_innovations(p: int, n: int, q: int = 0, law: str = "real-gaussian",
                    seed: int = 0, *, field: Optional[str] = None,
                    replicate: int = 0) -> InnovationBlock:
    """Draw i.i.d. standardized innovations.

    Rows are generated in blocks of ``ROW_BLOCK``; each block of each
    replicate has its own stream keyed by ``(seed, replicate, block)``, so
    the result does not depend on how the work is scheduled.  Complex
    fields draw real and imaginary parts independently, each with
    variance 1/2.
    """
    if p < 1 or n < 1 or q < 0:
        raise ValueError("need p, n >= 1 and q >= 0")
    if law not in LAWS:
        raise ModelError(f"unknown innovation law {law!r}")
    if field is None:
        field = "complex" if law == "complex-gaussian" else "real"
    cplx = field == "complex"
    width = n + q
    out = np.empty((p, width), dtype=complex if cplx else float)
    for b, start in enumerate(range(0, p, ROW_BLOCK)):
        rows = min(ROW_BLOCK, p - start)
        rng = _stream(seed, replicate, b)
        if cplx:
            re = _draw(rng, law, (rows, width))
            im = _draw(rng, law, (rows, width))
            out[start:start + rows] = (re + 1j * im) / math.sqrt(2.0)
        else:
            out[start:start + rows] = _draw(rng, law, (rows, width))
    return InnovationBlock(out, law, q, seed, replicate)


def assign_atoms(weights: Sequence[float], p: int) -> np.ndarray:
    """Largest-remainder apportionment of ``p`` coordinates to atoms.

    Returns the atom index of each coordinate, contiguous per atom.
    """
    w = np.asarray(weights, dtype=float)
    quota = w * p
    counts = np.floor(quota).astype(int)
    short = p - counts.sum()
    if short > 0:
        order = np.argsort(-(quota - counts), kind="stable")
        counts[order[:short]] += 1
    return np.repeat(np.arange(w.shape[0]), counts)


def _row_coefficients(model: ProcessModel, atom_index: np.ndarray) -> np.ndarray:
    return coefficient_table(model)[atom_index]


def _convolve_rows(Z: np.ndarray, coef: np.ndarray, n: int, method: str) -> np.ndarray:
    q = coef.shape[1] - 1
    if method == "fft":
        return signal.fftconvolve(Z, coef, mode="valid", axes=1)
    X = coef[:, [0]] * Z[:, q:q + n]
    for lag in range(1, q + 1):
        X = X + coef[:, [lag]] * Z[:, q - lag:q - lag + n]
    return X


def gen_process(model: ProcessModel, Z: InnovationBlock, *,
                atom_index: Optional[np.ndarray] = None,
                perturbation: Optional["CoefficientPerturbation"] = None,
                method: str = "auto") -> DataMatrix:
    """Sample path ``X_t = sum_{l=0}^q A_l Z_{t-l}`` for ``t = 1..n``.

    ``method`` is ``"direct"``, ``"fft"`` or ``"auto"`` (direct summation
    below ``FFT_THRESHOLD`` lag-time products).
    """
    if Z.q != model.q:
        raise ValueError(f"innovation block has {Z.q} lead columns, model needs q = {model.q}")
    p, n, q = Z.p, Z.n, model.q
    if atom_index is None:
        atom_index = assign_atoms(model.measure.weights, p)
    atom_index = np.asarray(atom_index, dtype=int)
    if atom_index.shape != (p,):
        raise ValueError("atom_index must have length p")
    mats = None if perturbation is None else perturbation.matrices(atom_index, n)
    if mats is not None:
        X = np.zeros((p, n), dtype=np.result_type(Z.entries, *mats))
        for lag, B in enumerate(mats):
            X += B @ Z.entries[:, q - lag:q - lag + n]
        return DataMatrix(X, atom_index, Z.seed)
    coef = _row_coefficients(model, atom_index)
    if method == "auto":
        method = "fft" if q * n >= FFT_THRESHOLD else "direct"
    if method not in ("direct", "fft"):
        raise ValueError(f"unknown method {method!r}")
    X = _convolve_rows(Z.entries, coef, n, method)
    return DataMatrix(X, atom_index, Z.seed)


def simulate(model: ProcessModel, p: int, n: int, seed: int = 0, *,
             replicate: int = 0, law: Optional[str] = None,
             perturbation=None) -> DataMatrix:
    """Convenience wrapper: innovations plus sample path (plus B-modulation)."""
    Z = gen_innovations(p, n, model.q, law or model.innovation_law, seed,
                        field=model.field, replicate=replicate)
    X = gen_process(model, Z, perturbation=perturbation)
    if model.measure.b_values is not None:
        X = apply_b_modulation(X, model.measure)
    return X


def apply_b_modulation(X: DataMatrix, measure: SpectralAtomMeasure) -> DataMatrix:
    """Scale row ``j`` by ``sqrt(g_B(a_j))``, i.e. ``Y_t = B^{1/2} X_t``."""
    if measure.b_values is None:
        raise ModelError("measure has no b_values")
    if X.atom_index is None:
        raise ValueError("data matrix carries no atom assignment")
    b = np.asarray(measure.b_values)
    if np.any(b < 0):
        raise ModelError("b_values must be nonnegative")
    scale = np.sqrt(b[X.atom_index])
    return DataMatrix(X.entries * scale[:, None], X.atom_index, X.seed)


def random_unitary(p: int, complex_: bool = False, seed: int = 0) -> np.ndarray:
    """Haar-distributed orthogonal (or unitary) matrix."""
    rng = np.random.default_rng(seed)
    if complex_:
        return stats.unitary_group.rvs(p, random_state=rng)
    return stats.ortho_group.rvs(p, random_state=rng)


def rotate(X: DataMatrix, U: np.ndarray) -> DataMatrix:
    """Data of the conjugated process ``U X_t``; spectra of ``C_tau`` are unchanged."""
    return DataMatrix(U @ X.entries, X.atom_index, X.seed)


class CoefficientPerturbation:
    """Dense coefficient matrices ``B_l = A_l + Delta_l`` for ``l = 1..q``.

    Built by :func:`perturb_coefficients`; the perturbations are drawn
    lazily once ``p`` and ``n`` are known and cached per ``(p, n)``.
    """

    def __init__(self, model: ProcessModel, mode: str, magnitude: float,
                 seed: int, spike_scale: float = 1.0):
        if mode not in ("low-rank", "small-norm"):
            raise ValueError(f"unknown perturbation mode {mode!r}")
        if magnitude < 0:
            raise ValueError("magnitude must be nonnegative")
        self.model = model
        self.mode = mode
        self.magnitude = float(magnitude)
        self.seed = int(seed)
        self.spike_scale = float(spike_scale)
        self._cache = {}

    @property
    def rank(self) -> int:
        return math.ceil(self.magnitude) if self.mode == "low-rank" else 0

    def deltas(self, p: int, n: int) -> List[np.ndarray]:
        """The perturbations ``Delta_1, ..., Delta_q`` (zero-based list)."""
        key = (p, n)
        if key in self._cache:
            return self._cache[key]
        q = self.model.q
        cplx = self.model.is_complex
        out = []
        for lag in range(1, q + 1):
            # block keys at and above 2**31 never occur for innovation rows
            rng = _stream(self.seed, 0, PERTURBATION_BLOCK + lag)
            if self.mode == "low-rank":
                D = np.zeros((p, p), dtype=complex if cplx else float)
                for _ in range(self.rank):
                    u = rng.standard_normal(p)
                    if cplx:
                        u = u + 1j * rng.standard_normal(p)
                    u /= np.linalg.norm(u)
                    D += self.spike_scale * np.outer(u, u.conj())
            else:
                G = rng.standard_normal((p, p))
                if cplx:
                    G = G + 1j * rng.standard_normal((p, p))
                H = (G + G.conj().T) / 2
                H /= np.max(np.abs(np.linalg.eigvalsh(H)))
                D = H * (self.magnitude * math.sqrt(p / n) / q)
            out.append(D)
        self._cache[key] = out
        return out

    def matrices(self, atom_index: np.ndarray, n: int) -> Optional[List[np.ndarray]]:
        """``[B_0, ..., B_q]`` for the given coordinates, or ``None`` when
        there is nothing to perturb (then the diagonal path is used)."""
        if self.magnitude == 0 or self.model.q == 0:
            return None
        p = atom_index.shape[0]
        coef = _row_coefficients(self.model, atom_index)
        mats = [np.diag(coef[:, 0]).astype(complex if self.model.is_complex else float)]
        for lag, D in enumerate(self.deltas(p, n), start=1):
            mats.append(np.diag(coef[:, lag]) + D)
        return mats


def perturb_coefficients(model: ProcessModel, mode: str, magnitude: float,
                         seed: int = 0, *, spike_scale: float = 1.0) -> CoefficientPerturbation:
    """Scenario generator for approximately commuting coefficients.

    ``low-rank`` adds ``ceil(magnitude)`` random rank-one Hermitian spikes
    (each of norm ``spike_scale``) to every ``A_l``, ``l >= 1``.
    ``small-norm`` adds a random Hermitian matrix of operator norm
    ``magnitude * sqrt(p/n) / q`` to every ``A_l``.
    Pass the result to :func:`gen_process` as ``perturbation``.
    """
    return CoefficientPerturbation(model, mode, magnitude, seed, spike_scale)

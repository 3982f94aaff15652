"""Symmetrized sample autocovariances and their renormalization.

The lag-``tau`` matrix is normalized by ``1/(n - tau)``.  Spectra of the
renormalized matrices are asymptotically insensitive to using ``1/n``
instead.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .model import ProcessModel, coefficient_table
from .simulate import DataMatrix, assign_atoms


def hermitize(M: np.ndarray) -> np.ndarray:
    return (M + M.conj().T) / 2


def _entries(X) -> np.ndarray:
    return X.entries if isinstance(X, DataMatrix) else np.asarray(X)


def sample_autocov(X, tau: int) -> np.ndarray:
    """``S_tau = (2(n-tau))^{-1} sum_{t>tau} (X_t X_{t-tau}^* + X_{t-tau} X_t^*)``."""
    A = _entries(X)
    n = A.shape[1]
    tau = int(tau)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau >= n:
        raise ValueError(f"lag {tau} needs more than {n} observations")
    lead, lagged = A[:, tau:], A[:, :n - tau]
    P = lead @ lagged.conj().T
    return hermitize(P) / (n - tau)


def population_sigma(model: ProcessModel, tau: int, atom_index=None, *,
                     p: Optional[int] = None, use_b: bool = False) -> np.ndarray:
    """Diagonal ``Sigma_tau`` with entries ``sum_l f_l(a_j) f_{l+tau}(a_j)``.

    The sum runs over the ``q + 1`` lags the model simulates, so it is the
    exact expectation of ``S_tau`` for data produced by :func:`gen_process`.
    With ``use_b`` the entries are multiplied by ``g_B(a_j)``.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if atom_index is None:
        if p is None:
            raise ValueError("give atom_index or p")
        atom_index = assign_atoms(model.measure.weights, p)
    atom_index = np.asarray(atom_index, dtype=int)
    coef = coefficient_table(model)
    q = coef.shape[1] - 1
    if tau > q:
        diag = np.zeros(coef.shape[0])
    else:
        diag = np.sum(coef[:, :q + 1 - tau] * coef[:, tau:], axis=1)
    if use_b:
        if model.measure.b_values is None:
            raise ValueError("model measure has no b_values")
        diag = diag * model.measure.b_values
    return np.diag(diag[atom_index])


def population_sigma_from_matrices(mats: Sequence[np.ndarray], tau: int) -> np.ndarray:
    """``E[S_tau]`` for dense coefficient matrices ``[B_0, ..., B_q]``."""
    q = len(mats) - 1
    p = mats[0].shape[0]
    out = np.zeros((p, p), dtype=np.result_type(*mats))
    for lag in range(0, q - tau + 1):
        out += mats[lag + tau] @ mats[lag].conj().T
    return hermitize(out)


def renormalize(S: np.ndarray, Sigma: np.ndarray, n: int, p: int) -> np.ndarray:
    """``C = sqrt(n/p) (S - Sigma)``."""
    S = np.asarray(S)
    Sigma = np.asarray(Sigma)
    if S.shape != Sigma.shape or S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"shape mismatch: {S.shape} vs {Sigma.shape}")
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    return np.sqrt(n / p) * (S - Sigma)


def renormalized_autocov(X: DataMatrix, model: ProcessModel, tau: int, *,
                         sigma: Optional[np.ndarray] = None) -> np.ndarray:
    """``C_tau`` for data simulated from ``model`` (B-modulated if it has b_values)."""
    if sigma is None:
        idx = X.atom_index
        if idx is None:
            idx = assign_atoms(model.measure.weights, X.p)
        sigma = population_sigma(model, tau, idx,
                                 use_b=model.measure.b_values is not None)
    S = sample_autocov(X, tau)
    return renormalize(S, sigma, X.n, X.p)

"""Process families described through their spectral parametrization.

Every coordinate ``j`` of the observed process carries a spectral point
``alpha_j`` (a short real vector).  A family maps a point ``a`` to the
scalar coefficient sequence ``f_0(a) = 1, f_1(a), f_2(a), ...`` so that the
coefficient matrices are ``A_l = diag(f_l(alpha_1), ..., f_l(alpha_p))``.

Shipped families

``identity``
    i.i.d. observations, ``f_l = 0`` for ``l >= 1``.
``ma``
    MA(q); the point coordinates *are* the coefficients,
    ``f_l(a) = a[l-1]`` for ``1 <= l <= q``.
``ar1``
    ``f_l(a) = a**l`` with closed form transfer ``1 / (1 - a e^{i nu})``.
``arma11``
    point ``(phi, theta)``, ``f_l = (theta + phi) phi**(l-1)``.
``block``
    piecewise constant coefficients, one tabulated row per atom.
``filtered``
    a base family passed through a finite linear filter.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

FAMILIES = ("identity", "ma", "ar1", "arma11", "block", "filtered")
LAWS = ("real-gaussian", "complex-gaussian", "rademacher", "centered-uniform")
CAP_CONSTANT = 4


class ModelError(ValueError):
    """Raised when a model or measure violates its structural assumptions."""


@dataclass(frozen=True, eq=False)
class SpectralAtomMeasure:
    """Discrete distribution of spectral points.

    Parameters
    ----------
    points : array_like, shape (m, m0)
        Atom locations.  A 1-d input is read as ``m`` scalar points.
    weights : array_like, shape (m,)
        Probabilities, summing to one.
    b_values : array_like, shape (m,), optional
        Nonnegative modulation values ``g_B`` of the atoms.
    """

    points: np.ndarray
    weights: np.ndarray
    b_values: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ModelError("points must be a nonempty (m, m0) array")
        if not np.all(np.isfinite(pts)):
            raise ModelError("spectral points must be finite")
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.shape[0] != pts.shape[0]:
            raise ModelError(f"{pts.shape[0]} atoms but {w.shape[0]} weights")
        if np.any(w <= 0) or np.any(w > 1):
            raise ModelError("weights must lie in (0, 1]")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ModelError(f"weights sum to {w.sum()!r}, not 1")
        b = self.b_values
        if b is not None:
            b = np.asarray(b, dtype=float).ravel()
            if b.shape[0] != pts.shape[0]:
                raise ModelError("b_values must have one entry per atom")
            if np.any(b < 0) or not np.all(np.isfinite(b)):
                raise ModelError("b_values must be finite and nonnegative")
            if not np.any(b > 0):
                raise ModelError("b_values must not all be zero")
            b.setflags(write=False)
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "b_values", b)

    @classmethod
    def uniform(cls, points, b_values=None) -> "SpectralAtomMeasure":
        pts = np.asarray(points, dtype=float)
        m = pts.shape[0]
        return cls(pts, np.full(m, 1.0 / m), b_values)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def m0(self) -> int:
        return self.points.shape[1]

    def with_b_values(self, b_values) -> "SpectralAtomMeasure":
        return SpectralAtomMeasure(self.points, self.weights, b_values)

    def index_of(self, a) -> int:
        """Index of the atom located at ``a`` (exact match)."""
        a = check_point(self, a)
        hits = np.flatnonzero(np.all(self.points == a, axis=1))
        if hits.size == 0:
            raise ModelError(f"point {a.tolist()} is not an atom of the measure")
        return int(hits[0])


def check_point(measure: SpectralAtomMeasure, a) -> np.ndarray:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.ndim != 1 or a.shape[0] != measure.m0:
        raise ModelError(
            f"spectral point has dimension {a.shape}, measure expects {measure.m0}"
        )
    if not np.all(np.isfinite(a)):
        raise ModelError("spectral point must be finite")
    return a


@dataclass(frozen=True, eq=False)
class ProcessModel:
    """A linear process with diagonal (simultaneously diagonalized) coefficients.

    ``q`` is the number of lags actually used when simulating; for the
    rational families (``ar1``, ``arma11``) it is a truncation order and
    the spectral quantities still use closed forms.
    """

    family: str
    measure: SpectralAtomMeasure
    q: int
    innovation_law: str = "real-gaussian"
    field: str = "real"
    table: Optional[np.ndarray] = None
    base: Optional["ProcessModel"] = None
    filter: Optional[np.ndarray] = None
    rho_max: Optional[float] = None
    _bounds: np.ndarray = dc_field(init=False, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ModelError(f"unknown family {self.family!r}")
        if self.innovation_law not in LAWS:
            raise ModelError(f"unknown innovation law {self.innovation_law!r}")
        if self.field not in ("real", "complex"):
            raise ModelError("field must be 'real' or 'complex'")
        if self.innovation_law == "complex-gaussian" and self.field != "complex":
            object.__setattr__(self, "field", "complex")
        if int(self.q) != self.q or self.q < 0:
            raise ModelError("q must be a nonnegative integer")
        object.__setattr__(self, "q", int(self.q))
        if self.family in ("ar1", "arma11"):
            phi = self.measure.points[:, 0]
            rho = float(np.max(np.abs(phi)))
            if self.rho_max is not None:
                if rho > self.rho_max + 1e-15:
                    raise ModelError(f"|phi| = {rho} exceeds rho_max = {self.rho_max}")
                rho = float(self.rho_max)
            if rho >= 1:
                raise ModelError(f"stationarity requires |phi| < 1, got {rho}")
            object.__setattr__(self, "rho_max", rho)
        if self.family == "ar1" and self.measure.m0 != 1:
            raise ModelError("ar1 points are scalars (phi,)")
        if self.family == "arma11" and self.measure.m0 != 2:
            raise ModelError("arma11 points are pairs (phi, theta)")
        if self.family == "ma" and self.measure.m0 != self.q:
            raise ModelError("ma points must hold exactly q coefficients")
        if self.family == "block":
            tab = np.asarray(self.table, dtype=float)
            if tab.shape != (self.measure.m, self.q):
                raise ModelError(
                    f"block table must have shape (m, q) = {(self.measure.m, self.q)}"
                )
            object.__setattr__(self, "table", tab)
        if self.family == "filtered" and (self.base is None or self.filter is None):
            raise ModelError("filtered model needs a base model and a filter")
        object.__setattr__(self, "_bounds", self._compute_bounds())

    # -- derived quantities -------------------------------------------------
    @property
    def is_rational(self) -> bool:
        """True when the transfer function is not a finite trigonometric sum."""
        if self.family == "filtered":
            return self.base.is_rational
        return self.family in ("ar1", "arma11")

    @property
    def is_complex(self) -> bool:
        return self.field == "complex"

    @property
    def coefficient_bounds(self) -> np.ndarray:
        """Sup-norm bounds of ``f_l`` over the atoms, ``l = 0..q``."""
        return self._bounds

    @property
    def L1(self) -> float:
        """Bound on the absolute coefficient sum (the full series for AR/ARMA)."""
        if self.family == "ar1":
            return 1.0 / (1.0 - self.rho_max)
        if self.family == "arma11":
            c = np.max(np.abs(self.measure.points.sum(axis=1)))
            return 1.0 + c / (1.0 - self.rho_max)
        if self.family == "filtered":
            return float(np.sum(np.abs(self.filter))) * self.base.L1
        return float(self._bounds.sum())

    def _compute_bounds(self) -> np.ndarray:
        return np.max(np.abs(coefficient_table(self)), axis=0)

    def replace(self, **kw) -> "ProcessModel":
        args = dict(
            family=self.family, measure=self.measure, q=self.q,
            innovation_law=self.innovation_law, field=self.field,
            table=self.table, base=self.base, filter=self.filter,
            rho_max=self.rho_max if self.family in ("ar1", "arma11") else None,
        )
        args.update(kw)
        return ProcessModel(**args)


# -- constructors -----------------------------------------------------------
def identity_model(measure: Optional[SpectralAtomMeasure] = None, **kw) -> ProcessModel:
    if measure is None:
        measure = SpectralAtomMeasure(np.zeros((1, 1)), np.ones(1))
    return ProcessModel("identity", measure, 0, **kw)


def ma_model(points, weights=None, b_values=None, **kw) -> ProcessModel:
    """MA(q) model whose atoms are coefficient vectors ``(f_1, ..., f_q)``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if weights is None:
        weights = np.full(pts.shape[0], 1.0 / pts.shape[0])
    measure = SpectralAtomMeasure(pts, weights, b_values)
    return ProcessModel("ma", measure, measure.m0, **kw)


def ar1_model(phis, weights=None, b_values=None, *, q: Optional[int] = None,
              eps: float = 1e-12, p: Optional[int] = None, rho_max=None,
              **kw) -> ProcessModel:
    phis = np.asarray(phis, dtype=float).ravel()
    if weights is None:
        weights = np.full(phis.shape[0], 1.0 / phis.shape[0])
    measure = SpectralAtomMeasure(phis[:, None], weights, b_values)
    rho = float(np.max(np.abs(phis))) if rho_max is None else float(rho_max)
    if q is None:
        q = truncation_order("ar1", rho, eps, p=p) if rho > 0 else 0
    return ProcessModel("ar1", measure, q, rho_max=rho_max, **kw)


def arma11_model(phis, thetas, weights=None, b_values=None, *,
                 q: Optional[int] = None, eps: float = 1e-12,
                 p: Optional[int] = None, rho_max=None, **kw) -> ProcessModel:
    pts = np.column_stack([np.ravel(phis), np.ravel(thetas)]).astype(float)
    if weights is None:
        weights = np.full(pts.shape[0], 1.0 / pts.shape[0])
    measure = SpectralAtomMeasure(pts, weights, b_values)
    rho = float(np.max(np.abs(pts[:, 0]))) if rho_max is None else float(rho_max)
    if q is None:
        q = truncation_order("arma11", rho, eps, p=p) if rho > 0 else 1
    return ProcessModel("arma11", measure, max(q, 1), rho_max=rho_max, **kw)


def block_model(omega, coefficients, b_values=None, **kw) -> ProcessModel:
    """Block-diagonal model: block ``b`` has weight ``omega[b]`` and
    coefficients ``coefficients[b] = (a_1b, ..., a_qb)``.

    Atoms are placed at the labels ``b / (B + 1)``.
    """
    omega = np.asarray(omega, dtype=float).ravel()
    tab = np.asarray(coefficients, dtype=float)
    if tab.ndim == 1:
        tab = tab[:, None]
    B = omega.shape[0]
    labels = (np.arange(1, B + 1) / (B + 1))[:, None]
    measure = SpectralAtomMeasure(labels, omega, b_values)
    return ProcessModel("block", measure, tab.shape[1], table=tab, **kw)


def truncation_order(family: str, rho_max: float, eps: float,
                     p: Optional[int] = None, cap_constant: int = CAP_CONSTANT) -> int:
    """Smallest ``q`` with ``rho_max**(q+1) / (1 - rho_max) < eps``.

    When ``p`` is given the order is capped at ``cap_constant * ceil(p**(1/4))``
    and a warning is issued if the cap binds.
    """
    if family not in ("ar1", "arma11"):
        raise ModelError(f"truncation order is only defined for ar1/arma11, not {family!r}")
    if not 0 < rho_max < 1:
        raise ModelError("need 0 < rho_max < 1")
    if eps <= 0:
        raise ModelError("need eps > 0")
    # log form first, then fix up by direct comparison to avoid rounding edge cases
    q = max(int(math.floor(math.log(eps * (1 - rho_max)) / math.log(rho_max))) - 2, 0)
    while rho_max ** (q + 1) / (1 - rho_max) >= eps:
        q += 1
    while q > 0 and rho_max ** q / (1 - rho_max) < eps:
        q -= 1
    if p is not None:
        cap = cap_constant * math.ceil(p ** 0.25)
        if q > cap:
            warnings.warn(
                f"truncation order {q} exceeds the cap {cap} for p={p}; using {cap}",
                stacklevel=2,
            )
            q = cap
    return q


# -- coefficients and transfer functions -----------------------------------
def _family_table(model: ProcessModel, nlags: int) -> np.ndarray:
    m = model.measure.m
    pts = model.measure.points
    out = np.zeros((m, nlags + 1))
    if model.family == "filtered":
        base = _family_table(model.base, model.base.q)
        conv = np.array([np.convolve(model.filter, row) for row in base])
        k = min(nlags + 1, conv.shape[1])
        out[:, :k] = conv[:, :k]
        return out
    out[:, 0] = 1.0
    if nlags == 0:
        return out
    lags = np.arange(1, nlags + 1)
    fam = model.family
    if fam == "identity":
        pass
    elif fam == "ma":
        k = min(nlags, model.q)
        out[:, 1:k + 1] = pts[:, :k]
    elif fam == "block":
        k = min(nlags, model.q)
        out[:, 1:k + 1] = model.table[:, :k]
    elif fam == "ar1":
        out[:, 1:] = pts[:, [0]] ** lags
    elif fam == "arma11":
        phi, theta = pts[:, [0]], pts[:, [1]]
        out[:, 1:] = (theta + phi) * phi ** (lags - 1)
    return out


def coefficient_table(model: ProcessModel, nlags: Optional[int] = None) -> np.ndarray:
    """Coefficients ``f_l(a_i)`` for every atom, shape ``(m, nlags + 1)``.

    ``nlags`` defaults to the model's order ``q``.
    """
    return _family_table(model, model.q if nlags is None else int(nlags))


def coefficient(model: ProcessModel, lag: int, a) -> float:
    """Lag-``lag`` coefficient ``f_lag(a)`` at the spectral point ``a``."""
    if lag < 0:
        raise ModelError("lag must be nonnegative")
    a = check_point(model.measure, a)
    if model.family in ("ma", "block", "identity", "filtered") and lag > model.q:
        return 0.0
    if lag == 0 and model.family != "filtered":
        return 1.0
    fam = model.family
    if fam == "ma":
        return float(a[lag - 1])
    if fam == "ar1":
        return float(a[0] ** lag)
    if fam == "arma11":
        return float((a[1] + a[0]) * a[0] ** (lag - 1))
    i = model.measure.index_of(a)
    return float(coefficient_table(model, lag)[i, lag])


def _transfer_rows(model: ProcessModel, pts: np.ndarray, nu: np.ndarray,
                   rows: Optional[np.ndarray] = None) -> np.ndarray:
    """Transfer function at points ``pts`` (atoms ``rows``) and frequencies ``nu``."""
    e = np.exp(1j * nu)
    fam = model.family
    if fam == "identity":
        return np.ones((pts.shape[0], nu.shape[0]), dtype=complex)
    if fam == "ar1":
        phi = pts[:, [0]]
        if np.any(np.abs(phi) >= 1):
            raise ModelError("ar1 transfer function requires |a| < 1")
        return 1.0 / (1.0 - phi * e)
    if fam == "arma11":
        phi, theta = pts[:, [0]], pts[:, [1]]
        if np.any(np.abs(phi) >= 1):
            raise ModelError("arma11 transfer function requires |phi| < 1")
        return (1.0 + theta * e) / (1.0 - phi * e)
    if fam == "filtered":
        cpoly = np.polynomial.polynomial.polyval(e, model.filter)
        return cpoly[None, :] * _transfer_rows(model.base, pts, nu, rows)
    if fam == "ma":
        table = np.column_stack([np.ones(pts.shape[0]), pts])
    else:
        table = coefficient_table(model)
        if rows is not None:
            table = table[rows]
    powers = e[None, :] ** np.arange(table.shape[1])[:, None]
    return table @ powers


def transfer_table(model: ProcessModel, nu) -> np.ndarray:
    """``g(a_i, nu_k)`` for all atoms, shape ``(m, len(nu))``."""
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    return _transfer_rows(model, model.measure.points, nu)


def psi_table(model: ProcessModel, nu) -> np.ndarray:
    """Power transfer ``|g(a_i, nu_k)|**2`` for all atoms."""
    g = transfer_table(model, nu)
    return g.real ** 2 + g.imag ** 2


def _root(model: ProcessModel) -> ProcessModel:
    while model.family == "filtered":
        model = model.base
    return model


def transfer_g(model: ProcessModel, a, nu):
    """Transfer function ``g(a, nu) = sum_l f_l(a) exp(i l nu)``."""
    a = check_point(model.measure, a)
    nu_arr = np.atleast_1d(np.asarray(nu, dtype=float))
    rows = None
    if _root(model).family == "block":
        rows = np.array([model.measure.index_of(a)])
    out = _transfer_rows(model, a[None, :], nu_arr, rows)[0]
    return complex(out[0]) if np.ndim(nu) == 0 else out


def power_psi(model: ProcessModel, a, nu):
    """Power transfer function ``psi(a, nu) = |g(a, nu)|**2``."""
    g = transfer_g(model, a, nu)
    out = np.abs(g) ** 2
    return float(out) if np.ndim(nu) == 0 else out


def apply_filter(model: ProcessModel, c: Sequence[float]) -> ProcessModel:
    """Model of ``W_t = sum_l c_l X_{t-l}``.

    The transfer function becomes ``C(nu) g(a, nu)`` with
    ``C(nu) = sum_l c_l exp(i l nu)``, and the coefficient sequence is the
    convolution of ``c`` with ``f_.(a)``.
    """
    c = np.asarray(c, dtype=float).ravel()
    if c.size == 0:
        raise ModelError("filter must have at least one coefficient")
    if not np.all(np.isfinite(c)):
        raise ModelError("filter coefficients must be finite")
    if c.size == 1 and c[0] == 1.0:
        return model
    return ProcessModel(
        "filtered", model.measure, model.q + c.size - 1,
        innovation_law=model.innovation_law, field=model.field,
        base=model, filter=c,
    )

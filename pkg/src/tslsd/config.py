"""Run configuration: strict schema, defaults, and model construction."""
from __future__ import annotations

import hashlib
import json
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import model as mdl
from .lsd import SolverOptions


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AtomConfig(_Strict):
    point: Optional[List[float]] = None
    weight: float = 1.0
    b: Optional[float] = None


class ModelConfig(_Strict):
    family: Literal["identity", "ma", "ar1", "arma11", "block"] = "identity"
    q: Optional[int] = Field(default=None, ge=0)
    atoms: List[AtomConfig] = Field(default_factory=lambda: [AtomConfig(point=[0.0])])
    coefficients: Optional[List[List[float]]] = None
    law: Literal["real-gaussian", "complex-gaussian", "rademacher", "centered-uniform"] = "real-gaussian"
    field: Literal["real", "complex"] = "real"
    eps: float = Field(default=1e-12, gt=0)
    filter: Optional[List[float]] = None


class SimConfig(_Strict):
    p: int = Field(default=200, ge=1)
    n: int = Field(default=20000, ge=1)
    taus: List[int] = Field(default_factory=lambda: [0])
    seed: int = Field(default=0, ge=0)
    replicates: int = Field(default=1, ge=1)
    data: Optional[str] = None

    @field_validator("taus")
    @classmethod
    def _taus(cls, v):
        if not v or any(t < 0 for t in v):
            raise ValueError("taus must be a nonempty list of nonnegative lags")
        return v


class SolverConfig(_Strict):
    tol: float = Field(default=1e-10, gt=0)
    max_iter: int = Field(default=20000, ge=1)
    v_min: float = Field(default=1e-4, gt=0)
    damping: float = Field(default=0.5, gt=0, le=1)
    shrink: float = Field(default=0.7, gt=0, lt=1)
    n_quad: Optional[int] = Field(default=None, ge=1)
    v: float = Field(default=1e-3, gt=0)
    x_range: Optional[Tuple[float, float]] = None


class TestSection(_Strict):
    grid: Optional[List[Tuple[float, float]]] = None
    norm: Literal["sup", "l1", "l2"] = "sup"
    M: int = Field(default=199, ge=19)


class OutputConfig(_Strict):
    directory: str = "out"
    formats: List[Literal["csv", "json", "lsdx"]] = Field(default_factory=lambda: ["csv", "json"])


class RunConfig(_Strict):
    model: ModelConfig = Field(default_factory=ModelConfig)
    sim: SimConfig = Field(default_factory=SimConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    test: TestSection = Field(default_factory=TestSection)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _preconditions(self):
        if self.sim.data is None and max(self.sim.taus) >= self.sim.n:
            raise ValueError("every lag must be smaller than n")
        if self.solver.v < self.solver.v_min:
            raise ValueError("solver.v must be at least solver.v_min")
        if self.test.grid is not None:
            if not self.test.grid:
                raise ValueError("test.grid must be nonempty")
            if any(im < self.solver.v_min for _, im in self.test.grid):
                raise ValueError("test.grid points need Im z >= solver.v_min")
        if self.solver.x_range is not None and not self.solver.x_range[0] < self.solver.x_range[1]:
            raise ValueError("solver.x_range must be increasing")
        try:
            build_model(self)
        except mdl.ModelError as exc:
            raise ValueError(str(exc)) from exc
        return self

    def digest(self) -> str:
        """Short SHA-256 of the resolved config; the output directory is left
        out so relocating a run does not change its identity."""
        d = self.model_dump(mode="json")
        d["output"].pop("directory")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def solver_options(self) -> SolverOptions:
        s = self.solver
        return SolverOptions(tol=s.tol, max_iter=s.max_iter, v_min=s.v_min,
                             damping=s.damping, shrink=s.shrink)


def build_model(cfg: RunConfig) -> mdl.ProcessModel:
    m = cfg.model
    weights = [a.weight for a in m.atoms]
    bs = [a.b for a in m.atoms]
    if any(b is not None for b in bs):
        if any(b is None for b in bs):
            raise mdl.ModelError("either every atom or no atom carries a b value")
        b_values = bs
    else:
        b_values = None
    kw = dict(innovation_law=m.law, field=m.field)
    fam = m.family
    if fam == "block":
        if m.coefficients is None:
            raise mdl.ModelError("block family needs model.coefficients (one row per atom)")
        out = mdl.block_model(weights, m.coefficients, b_values, **kw)
    else:
        pts = []
        for a in m.atoms:
            if a.point is None:
                raise mdl.ModelError(f"family {fam!r} needs a point for every atom")
            pts.append(a.point)
        if fam == "identity":
            dim = len(pts[0])
            measure = mdl.SpectralAtomMeasure(pts if dim else [[0.0]] * len(pts), weights, b_values)
            out = mdl.identity_model(measure, **kw)
        elif fam == "ma":
            out = mdl.ma_model(pts, weights, b_values, **kw)
            if m.q is not None and m.q != out.q:
                raise mdl.ModelError("for the ma family q is the length of each point")
        elif fam == "ar1":
            if any(len(p) != 1 for p in pts):
                raise mdl.ModelError("ar1 points are [phi]")
            out = mdl.ar1_model([p[0] for p in pts], weights, b_values, q=m.q,
                                eps=m.eps, p=cfg.sim.p, **kw)
        else:
            if any(len(p) != 2 for p in pts):
                raise mdl.ModelError("arma11 points are [phi, theta]")
            out = mdl.arma11_model([p[0] for p in pts], [p[1] for p in pts], weights,
                                   b_values, q=m.q, eps=m.eps, p=cfg.sim.p, **kw)
    if m.filter is not None:
        out = mdl.apply_filter(out, m.filter)
    return out


def load_config(path) -> RunConfig:
    with open(path) as fh:
        raw = json.load(fh)
    return RunConfig.model_validate(raw)

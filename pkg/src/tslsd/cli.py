"""Command-line front end.

Exit codes: 0 success, 2 invalid configuration or input, 3 solver
non-convergence.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pydantic

from . import formats
from .config import RunConfig, build_model
from .diagnostics import default_z_grid, gof_test, renormalized_spectrum
from .inversion import cdf_from_density, default_grid, density
from .kernel import kernel_matrix, write_kernel_csv
from .lsd import ConvergenceError, LsdProblem
from .model import ModelError
from .simulate import simulate
from .spectrum import ks_distance

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3
COMMANDS = ("simulate", "kernel", "lsd", "density", "esd", "compare", "test")


class Run:
    """Resolved configuration plus output helpers for one invocation."""

    def __init__(self, cfg: RunConfig, command: str, threads: int):
        self.cfg = cfg
        self.command = command
        self.threads = threads
        self.model = build_model(cfg)
        self.out = Path(cfg.output.directory)
        self.out.mkdir(parents=True, exist_ok=True)
        self.header = (f"tslsd {command} seed={cfg.sim.seed} "
                       f"config_sha256={cfg.digest()}")

    def path(self, name: str) -> Path:
        return self.out / name

    def problem(self, tau: int) -> LsdProblem:
        return LsdProblem.from_model(self.model, tau, N=self.cfg.solver.n_quad,
                                     options=self.cfg.solver_options())

    def z_grid(self, problem: LsdProblem) -> np.ndarray:
        g = self.cfg.test.grid
        if g is None:
            return default_z_grid(problem.second_moment)
        return np.array([complex(a, b) for a, b in g])

    def x_grid(self, problem: LsdProblem) -> np.ndarray:
        v = self.cfg.solver.v
        if self.cfg.solver.x_range is None:
            return default_grid(problem, v)
        lo, hi = self.cfg.solver.x_range
        return np.arange(lo, hi + v / 4, v / 2)

    def data(self, replicate: int):
        if self.cfg.sim.data is not None:
            if replicate:
                raise ValueError("a data file provides a single replicate")
            return formats.read_lsdx(self.cfg.sim.data)
        s = self.cfg.sim
        return simulate(self.model, s.p, s.n, s.seed, replicate=replicate)

    def replicates(self) -> int:
        return 1 if self.cfg.sim.data is not None else self.cfg.sim.replicates


def _density(run: Run, tau: int):
    problem = run.problem(tau)
    curve = density(run.x_grid(problem), run.cfg.solver.v, problem)
    if np.any(curve.failed):
        bad = curve.x[curve.failed]
        raise ConvergenceError(f"density solve failed at {bad.size} grid points (first x = {bad[0]})")
    return problem, curve


def cmd_simulate(run: Run, dump: bool = True) -> None:
    """Simulate data; write LSDX dumps and spectrum CSVs."""
    for r in range(run.replicates()):
        X = run.data(r)
        if dump and "lsdx" in run.cfg.output.formats:
            formats.write_lsdx(run.path(f"data_rep{r}.lsdx"), X)
        for tau in run.cfg.sim.taus:
            spec = renormalized_spectrum(X, run.model, tau)
            formats.write_spectrum_csv(run.path(f"spectrum_tau{tau}_rep{r}.csv"), spec, run.header)


def cmd_esd(run: Run) -> None:
    """Write spectrum CSVs of the renormalized autocovariances."""
    cmd_simulate(run, dump=False)


def cmd_kernel(run: Run) -> None:
    """Write the kernel matrix for each lag."""
    for tau in run.cfg.sim.taus:
        K = kernel_matrix(run.model, tau, run.cfg.solver.n_quad,
                          use_b=run.model.measure.b_values is not None)
        write_kernel_csv(run.path(f"kernel_tau{tau}.csv"), K, run.header)


def cmd_lsd(run: Run, with_density: bool = True) -> None:
    """Solve the LSD on the z grid and write the density."""
    for tau in run.cfg.sim.taus:
        problem = run.problem(tau)
        sol = problem.solve(run.z_grid(problem))
        if not sol.all_converged:
            raise ConvergenceError(f"LSD solve failed at {np.sum(~sol.converged)} grid points")
        sol.to_csv(run.path(f"lsd_tau{tau}.csv"), run.header)
        if with_density:
            _, curve = _density(run, tau)
            curve.to_csv(run.path(f"density_tau{tau}.csv"), run.header)


def cmd_density(run: Run) -> None:
    """Write the smoothed LSD density."""
    for tau in run.cfg.sim.taus:
        _, curve = _density(run, tau)
        curve.to_csv(run.path(f"density_tau{tau}.csv"), run.header)


def cmd_compare(run: Run) -> None:
    """KS distance between each ESD and the LSD CDF."""
    cdfs = {tau: cdf_from_density(_density(run, tau)[1]) for tau in run.cfg.sim.taus}
    rows = []
    for r in range(run.replicates()):
        X = run.data(r)
        for tau in run.cfg.sim.taus:
            ks = ks_distance(renormalized_spectrum(X, run.model, tau), cdfs[tau])
            rows.append((tau, r, ks))
    with open(run.path("compare.csv"), "w", newline="") as fh:
        fh.write(f"# {run.header}\n")
        fh.write("tau,replicate,ks\n")
        for tau, r, ks in rows:
            fh.write(f"{tau},{r},{float(ks)!r}\n")


def cmd_test(run: Run) -> None:
    """Monte Carlo goodness-of-fit test of the data."""
    X = run.data(0)
    t = run.cfg.test
    for tau in run.cfg.sim.taus:
        problem = run.problem(tau)
        rep = gof_test(X, run.model, tau, z_grid=run.z_grid(problem), norm_kind=t.norm,
                       M=t.M, seed=run.cfg.sim.seed, threads=run.threads)
        rep.meta = {"config_sha256": run.cfg.digest(), "command": "test"}
        with open(run.path(f"test_tau{tau}.json"), "w", encoding="utf-8") as fh:
            fh.write(rep.to_json() + "\n")


HANDLERS = {
    "simulate": cmd_simulate, "kernel": cmd_kernel, "lsd": cmd_lsd,
    "density": cmd_density, "esd": cmd_esd, "compare": cmd_compare, "test": cmd_test,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (overrides output.directory)")
    common.add_argument("--seed", type=int, help="top-level seed (overrides sim.seed)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for replicates")
    common.add_argument("--dry-run", action="store_true",
                        help="print the resolved configuration and exit")
    parser = argparse.ArgumentParser(prog="tslsd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HANDLERS[name].__doc__)
    return parser


def _resolve(args) -> RunConfig:
    raw = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("configuration must be a JSON object")
    raw = json.loads(json.dumps(raw))
    if args.out is not None:
        raw.setdefault("output", {})["directory"] = args.out
    if args.seed is not None:
        raw.setdefault("sim", {})["seed"] = args.seed
    return RunConfig.model_validate(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
    except (pydantic.ValidationError, ValueError, ModelError, OSError) as exc:
        print(f"tslsd: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.dry_run:
        print(json.dumps(cfg.model_dump(mode="json"), indent=2))
        return EXIT_OK
    if args.threads < 1:
        print("tslsd: --threads must be positive", file=sys.stderr)
        return EXIT_INVALID
    try:
        run = Run(cfg, args.command, args.threads)
        HANDLERS[args.command](run)
    except ConvergenceError as exc:
        print(f"tslsd: solver did not converge: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, ModelError, OSError) as exc:
        print(f"tslsd: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()

"""Command-line driver: ``lscf <command> --config run.cfg [options]``.

Commands write data files into the output directory and diagnostics to
standard error.  Exit status is 0 on success, 2 for invalid input and 3 when
a solver fails to converge.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from itertools import combinations
from pathlib import Path

import numpy as np

from . import io
from .analysis import (
    build_system, compare_counting, compare_states, epsilon_sweep, exact_eigenvalues, predict_eigenvalues,
    solve_system,
)
from .config import ConfigError, RunConfig, parse_config
from .density import DensityMap
from .errors import LscfError, NoBracket, NoConvergence, QuadratureFailure
from .grid import lp_norm
from .landscape import local_minima, solve_landscape
from .scf import ScfOptions
from .variational import minimize_free_energy

log = logging.getLogger("lscf")

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3
COMMANDS = ("gen-potential", "landscape", "solve", "compare", "sweep", "spectrum", "energy")


class Run:
    """Config plus output plumbing shared by the commands."""

    def __init__(self, cfg: RunConfig, out_dir: Path):
        self.cfg = cfg
        self.out = out_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self.seed = cfg.get("potential", "seed")
        self.formats = cfg.get("output", "formats")

    def field(self, name, grid, values):
        if "bin" in self.formats:
            io.write_field(self.out / f"{name}.bin", grid, values)
        if "csv" in self.formats:
            path = io.write_field_csv(self.out / f"{name}.csv", grid, values)
            io.write_sidecar(path, self.cfg.hash(), self.seed)

    def table(self, name, header, rows, **extra):
        path = io.write_table(self.out / f"{name}.csv", header, rows)
        io.write_sidecar(path, self.cfg.hash(), self.seed, **extra)
        return path

    def scf_options(self) -> ScfOptions:
        s = self.cfg.values["solver"]
        return ScfOptions(alpha=s["alpha"], anderson_depth=s["anderson_depth"], tol=s["tol"],
                          max_iter=s["max_iter"], newton=s["newton"])


def _summary_row(state):
    return [state.model, state.converged, state.iterations, state.mu, state.residual_h2, state.pde_residual,
            state.neutrality_residual]


SUMMARY_HEADER = ["model", "converged", "iterations", "mu", "step_h2", "pde_residual", "neutrality_residual"]


def cmd_gen_potential(run: Run, args) -> int:
    system = build_system(run.cfg.system_spec())
    run.field("potential", system.grid, system.V)
    run.field("dopant", system.grid, system.kappa)
    L, d = system.grid.L, system.grid.d
    cells = system.V[(slice(None, None, system.grid.points_per_cell),) * d]
    idx = np.indices((L,) * d).reshape(d, -1).T
    run.table("cells", [f"j{a}" for a in range(d)] + ["omega"],
              [list(i) + [w] for i, w in zip(idx.tolist(), cells.ravel().tolist())], v_cut=system.v_cut,
              beta=system.beta)
    print(f"potential: V in [{system.V.min():.6g}, {system.V.max():.6g}], V_cut={system.v_cut:.6g}", file=sys.stderr)
    return EXIT_OK


def cmd_landscape(run: Run, args) -> int:
    system = build_system(run.cfg.system_spec())
    land = solve_landscape(system.grid, system.V - system.v_cut, tol=1e-12, scheme=run.cfg.get("solver", "scheme"))
    run.field("landscape_u", system.grid, land.u)
    run.field("landscape_W", system.grid, land.W)
    d = system.grid.d
    rows = []
    for rank, (w, index) in enumerate(local_minima(land.W), start=1):
        rows.append([rank] + list(index) + [w, (1.0 + d / 4.0) * w])
    run.table("minima", ["rank"] + [f"i{a}" for a in range(d)] + ["W", "E_pred"], rows, v_cut=system.v_cut)
    print(f"landscape: {len(rows)} local minima, residual {land.residual:.2e}", file=sys.stderr)
    return EXIT_OK


def _models(run: Run, args):
    if getattr(args, "model", None):
        return [args.model]
    return list(run.cfg.get("solver", "models"))


def cmd_solve(run: Run, args) -> int:
    system = build_system(run.cfg.system_spec())
    rows = []
    for model in _models(run, args):
        state = solve_system(system, model, run.scf_options())
        run.field(f"phi_{model}", system.grid, state.phi)
        run.field(f"rho_{model}", system.grid, state.rho)
        run.table(f"history_{model}", ["iteration", "step_h2", "pde_residual", "mu"],
                  [[h["iteration"], h["step_h2"], h["pde_residual"], h["mu"]] for h in state.history])
        rows.append(_summary_row(state))
        print(f"{model}: converged in {state.iterations} iterations, mu={state.mu:.12g}, "
              f"neutrality residual {state.neutrality_residual:.2e}", file=sys.stderr)
    run.table("summary", SUMMARY_HEADER, rows)
    return EXIT_OK


def cmd_compare(run: Run, args) -> int:
    system = build_system(run.cfg.system_spec())
    states = {m: solve_system(system, m, run.scf_options()) for m in _models(run, args)}
    rows = []
    for a, b in combinations(states, 2):
        diff = compare_states(states[a], states[b])
        rows.append([a, b, diff["phi_h2"], diff["rho_l2"], diff["mu"]])
        print(f"{a} vs {b}: |phi|_H2={diff['phi_h2']:.3e} |rho|_L2={diff['rho_l2']:.3e}", file=sys.stderr)
    run.table("compare", ["model_a", "model_b", "phi_h2", "rho_l2", "mu_abs"], rows)
    run.table("summary", SUMMARY_HEADER, [_summary_row(s) for s in states.values()])
    return EXIT_OK


def cmd_sweep(run: Run, args) -> int:
    models = _models(run, args)
    if len(models) < 2:
        models = models + [m for m in ("rehf", "lsc") if m not in models]
    result = epsilon_sweep(run.cfg.system_spec(), run.cfg.get("sweep", "eps_list"),
                           run.cfg.get("sweep", "metrics"), tuple(models[:2]), run.scf_options())
    run.table("sweep", ["eps", "metric", "value"], sorted(result.rows),
              models=list(models[:2]), failures={str(k): v for k, v in result.failures.items()})
    run.table("sweep_fits", ["metric", "slope", "intercept"],
              [[m, s, c] for m, (s, c) in sorted(result.fits.items())])
    for m, (s, _) in sorted(result.fits.items()):
        print(f"sweep: slope of {m} = {s:.3f}", file=sys.stderr)
    return EXIT_OK if not result.failures else EXIT_SOLVER


def cmd_spectrum(run: Run, args) -> int:
    system = build_system(run.cfg.system_spec())
    grid, scheme = system.grid, run.cfg.get("solver", "scheme")
    W = solve_landscape(grid, system.V, tol=1e-12, scheme=scheme).W
    pred = predict_eigenvalues(W, grid.d, args.count)
    exact = exact_eigenvalues(grid, system.V, args.count, scheme)
    rows = [[i + 1, exact[i], pred[i] if i < len(pred) else float("nan")] for i in range(len(exact))]
    run.table("eigenvalues", ["level", "E_exact", "E_pred"], rows)
    spec = run.cfg.system_spec()
    E = np.linspace(spec.v_min, spec.v_min + 3.0 * spec.delta + 10.0 * grid.eps**2, args.energies)
    table = compare_counting(grid, system.V, np.zeros(grid.shape), E, scheme)
    run.table("counting", ["E", "N_exact", "N_landscape", "N_bare_weyl"], table.rows())
    err_w, err_v = table.mean_relative_errors()
    print(f"spectrum: mean relative counting error landscape {err_w:.3e}, bare Weyl {err_v:.3e}", file=sys.stderr)
    return EXIT_OK


def cmd_energy(run: Run, args) -> int:
    system = build_system(run.cfg.system_spec())
    grid = system.grid
    W = DensityMap("lsc", grid, system.V, system.beta, system.v_cut, run.cfg.get("solver", "scheme")).W2
    res = minimize_free_energy(grid, W, system.v_cut, system.kappa, system.beta)
    run.table("energy_history", ["iteration", "free_energy"], list(enumerate(res.energies)))
    state = solve_system(system, "lsc", run.scf_options())
    gap = lp_norm(grid, res.density(grid) - state.rho, 2)
    run.table("energy", ["free_energy", "mu", "iterations", "mu_scf", "rho_l2_vs_scf"],
              [[res.energies[-1], res.mu, res.iterations, state.mu, gap]])
    run.field("rho_variational", grid, res.density(grid))
    print(f"energy: F={res.energies[-1]:.12g} after {res.iterations} steps, |rho - rho_scf|_L2={gap:.2e}",
          file=sys.stderr)
    return EXIT_OK


HANDLERS = {
    "gen-potential": cmd_gen_potential, "landscape": cmd_landscape, "solve": cmd_solve, "compare": cmd_compare,
    "sweep": cmd_sweep, "spectrum": cmd_spectrum, "energy": cmd_energy,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration file")
    common.add_argument("--output", help="output directory (overrides [output] directory)")
    common.add_argument("--threads", type=int, help="cap on BLAS/FFT threads (fallback: LSCF_THREADS)")
    common.add_argument("--seed", type=int, help="override [potential] seed")
    common.add_argument("-v", "--verbose", action="count", default=0)
    parser = argparse.ArgumentParser(prog="lscf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=HANDLERS[name].__name__.replace("cmd_", ""))
        if name in ("solve", "compare", "sweep"):
            p.add_argument("--model", choices=("rehf", "pl", "lsc"), help="restrict to one model")
        if name == "spectrum":
            p.add_argument("--count", type=int, default=10, help="number of eigenvalues")
            p.add_argument("--energies", type=int, default=40, help="points on the counting energy grid")
    return parser


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("LSCF_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError([f"LSCF_THREADS must be an integer, got {env!r}"]) from None
    return None


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        threads = _threads(args)
        if threads is not None and threads < 1:
            raise ConfigError(["--threads must be >= 1"])
        run = Run(cfg, Path(args.output or cfg.get("output", "directory")))
        handler = HANDLERS[args.command]
        if threads is None:
            return handler(run, args)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=threads):
            return handler(run, args)
    except (NoConvergence, NoBracket, QuadratureFailure) as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ConfigError as exc:
        for issue in exc.issues:
            print(f"error: {issue}", file=sys.stderr)
        return EXIT_INVALID
    except (LscfError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

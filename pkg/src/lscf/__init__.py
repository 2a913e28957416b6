"""Landscape-regularized semiclassical models for self-consistent electrostatics.

Modules:
    grid: periodic grids, Laplacians, Poisson solver and norms.
    potential: seeded piecewise-constant potentials, dopants, regime checks.
    landscape: the landscape function ``u`` and potential ``W = 1/u``.
    density: REHF, PL and LSC density maps.
    scf: chemical potential, fixed-point and Newton–Krylov solvers.
    analysis: spectral predictors, the ``M_sc`` operator and ε-sweeps.
    variational: free-energy formulation of the LSC model.
    config, io, cli: run configuration, persistence and the command line.
"""

from .errors import LscfError

__version__ = "0.1.0"
__all__ = ["LscfError", "__version__"]

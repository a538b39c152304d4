"""Discounted Hamilton-Jacobi equations on the torus and their vanishing-discount limit.

Core entry points::

    from wkam import preset, PeriodicGrid, SolverConfig, solve_discounted
    model = preset("F1")
    field, sweeps, residual = solve_discounted(model, 0.0, 0.02, 0.0,
                                               PeriodicGrid.uniform(1024), SolverConfig())
"""

from .errors import (BlowUpError, ControlRadiusError, ConvergenceError, DomainError,
                     FeasibilityError, InconclusiveError, ModelError, WkamError)
from .grid import MomentumField, PeriodicGrid, ScalarField
from .hj_solver import (SolverConfig, bellman_apply, build_stationary_solution_1d,
                        estimate_effective_h, limit_solution_c1, peierls_barrier_1d,
                        reconstruct_momentum, solve_discounted)
from .kernels import BACKEND
from .model import (TonelliModel, TrigSeries, critical_c, eval_hamiltonian, eval_lagrangian,
                    make_generic, make_mechanical, make_quadratic_kam, preset, segment_actions)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BlowUpError", "ControlRadiusError", "ConvergenceError", "DomainError",
    "FeasibilityError", "InconclusiveError", "ModelError", "MomentumField", "PeriodicGrid",
    "ScalarField", "SolverConfig", "TonelliModel", "TrigSeries", "WkamError", "bellman_apply",
    "build_stationary_solution_1d", "critical_c", "estimate_effective_h", "eval_hamiltonian",
    "eval_lagrangian", "limit_solution_c1", "make_generic", "make_mechanical",
    "make_quadratic_kam", "peierls_barrier_1d", "preset", "reconstruct_momentum",
    "segment_actions", "solve_discounted",
]

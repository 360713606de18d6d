"""meppflow: dissipative gradient flows from constrained entropy production.

A numerical laboratory on a 1-D staggered grid: entropy functionals with
verified variational derivatives, the metric operators they flow under
(pointwise, conservative transport, coupled blocks), saddle-point solvers
for the constrained entropy-production principle, deterministic and
stochastic integrators with conservative noise, and large-deviation rate
functionals along discrete paths.

Hot stencil kernels run through a compiled extension when available and a
NumPy fallback otherwise; ``meppflow.COMPILED_KERNELS`` reports which one
is active.
"""

from ._backend import COMPILED as COMPILED_KERNELS
from .errors import (DomainError, GridMismatchError, MeppFlowError,
                     ModelError, RangeError, StepRejected)
from .grid import (Field, FluxField, Grid1D, divergence, gradient,
                   h1_seminorm_weighted, inner_faces, inner_l2_weighted,
                   read_values_csv, total, write_values_csv)
from .functionals import Boltzmann, Dirichlet, PhaseField, Thermal
from .metrics import (ConstantMobility, CoupledMetric, ExprMobility,
                      L2Metric, LinearMobility, WassersteinMetric,
                      face_mobility, invert_H_blocks)
from .mepp import (MeppSolution, onsager_flux, solve_conserved,
                   solve_coupled, solve_unconstrained)
from .evolve import (DiagnosticsTable, Trajectory, diagnostics,
                     read_trajectory_csv, run_gradient_flow, run_heat,
                     run_phase_field, step, write_diagnostics_csv,
                     write_trajectory_csv)
from .stochastic import (FdReport, NoiseConfig, fd_check, noise_action,
                         run_ensemble, sample_path, sheet_increment, step_em)
from .ldp import (DecayRow, LdpReport, TubeSpec, decompose,
                  empirical_rate_decay, rate_functional)
from .modelio import (ModelSpec, RuntimeModel, build, eval_ic, load_model,
                      parse_model, serialize_model)

__version__ = "0.1.0"

__all__ = [
    "COMPILED_KERNELS", "__version__",
    "MeppFlowError", "GridMismatchError", "DomainError", "RangeError",
    "StepRejected", "ModelError",
    "Grid1D", "Field", "FluxField", "gradient", "divergence",
    "inner_l2_weighted", "inner_faces", "h1_seminorm_weighted", "total",
    "write_values_csv", "read_values_csv",
    "Dirichlet", "Boltzmann", "Thermal", "PhaseField",
    "L2Metric", "WassersteinMetric", "CoupledMetric", "ConstantMobility",
    "LinearMobility", "ExprMobility", "face_mobility", "invert_H_blocks",
    "MeppSolution", "solve_unconstrained", "solve_conserved", "solve_coupled",
    "onsager_flux",
    "Trajectory", "DiagnosticsTable", "step", "run_gradient_flow", "run_heat",
    "run_phase_field", "diagnostics", "write_trajectory_csv",
    "read_trajectory_csv", "write_diagnostics_csv",
    "NoiseConfig", "FdReport", "sheet_increment", "noise_action", "step_em",
    "sample_path", "run_ensemble", "fd_check",
    "LdpReport", "TubeSpec", "DecayRow", "rate_functional", "decompose",
    "empirical_rate_decay",
    "ModelSpec", "RuntimeModel", "parse_model", "serialize_model", "eval_ic",
    "build", "load_model",
]

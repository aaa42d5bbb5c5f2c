"""Spectral workbench for the two-phase overdetermined torsion problem."""
from .analytic_oracles import ball_Q_eigenvalue, gamma_mode, mode_transmission, radial_two_phase
from .branch_solver import (
    BaseState,
    BranchSample,
    NewtonOptions,
    NewtonReport,
    fit_circle,
    prepare_base,
    solve_branch,
    solve_branch_projected,
    trace_branch,
)
from .errors import *  # noqa: F401,F403
from .linearized_operator import (
    LinearOperatorMatrix,
    assemble_gamma,
    assemble_Q,
    nondegeneracy_report,
    project_bar,
    restrict_bar,
)
from .shape_calculus import (
    ParamVector,
    fd_shape_derivative,
    functional_J,
    hadamard_derivative,
    residual_g,
    solve_shape_derivative,
)
from .spectral_geometry import AngularField, GeometrySpec, build_frame, extend_normal_field, reference_map
from .twophase_solver import Conductivity, PulledBackSolution, Resolution, compute_c, solve_state

__version__ = "0.1.0"

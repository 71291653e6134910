"""F-multistep parareal: BDF fine propagators, rational coarse propagators,
and the convergence-factor analysis that predicts their contraction."""

from fmparareal.stability import (
    CPKind,
    PlainParareal,
    StabilityFunction,
    eval_R,
    gamma_lin,
    make_stability,
    plain_gamma,
)
from fmparareal.bdf import (
    BdfCoefficients,
    TransferCoefficients,
    bdf2_roots,
    bdf2_transfer_closed,
    bdf_alpha,
    transfer_coeffs,
)
from fmparareal.convfactor import (
    ConvergenceComponents,
    ConvergenceFactor,
    EtaValues,
    UpdateType,
    compute_etas,
    decay_curve,
    gamma_components,
    gamma_dagger,
    gamma_of_zJ,
    table1,
)
from fmparareal.spatial import Indicator, Mesh1D, build_mesh, l2_norm, project_initial, solve_shifted
from fmparareal.propagate import (
    CoarseFamily,
    NewtonError,
    ProblemKind,
    ProblemSpec,
    coarse_step,
    fine_window,
    mixed_start,
)
from fmparareal.parareal import FPMode, InitMode, PararealConfig, PararealRun, run
from fmparareal.experiments import CaseId, FineScheme, make_case, run_experiment

__version__ = "0.1.0"

__all__ = [
    "CPKind",
    "PlainParareal",
    "StabilityFunction",
    "eval_R",
    "gamma_lin",
    "make_stability",
    "plain_gamma",
    "BdfCoefficients",
    "TransferCoefficients",
    "bdf2_roots",
    "bdf2_transfer_closed",
    "bdf_alpha",
    "transfer_coeffs",
    "ConvergenceComponents",
    "ConvergenceFactor",
    "EtaValues",
    "UpdateType",
    "compute_etas",
    "decay_curve",
    "gamma_components",
    "gamma_of_zJ",
    "gamma_dagger",
    "table1",
    "Indicator",
    "Mesh1D",
    "build_mesh",
    "l2_norm",
    "project_initial",
    "solve_shifted",
    "CoarseFamily",
    "NewtonError",
    "ProblemKind",
    "ProblemSpec",
    "coarse_step",
    "fine_window",
    "mixed_start",
    "FPMode",
    "InitMode",
    "PararealConfig",
    "PararealRun",
    "run",
    "CaseId",
    "FineScheme",
    "make_case",
    "run_experiment",
]

"""Entropy-dissipating discretisation of the periodic fourth-order
quantum diffusion equation u_t + (u (log u)_xx)_xx = 0, together with
numerical certification of the sharp functional inequalities that govern
its large-time behaviour.

The package is organised around five pieces:

* :mod:`dlss.grid` - periodic grids, fields and discrete calculus,
* :mod:`dlss.functionals` - entropies and the production integral,
* :mod:`dlss.solver` - implicit Euler stepping in the log variable,
* :mod:`dlss.inequalities` - quotient minimisation and heat-flow proofs,
* :mod:`dlss.runio` / :mod:`dlss.cli` - run files, CSV series, reports.
"""

from .errors import (
    DegenerateDenominator,
    DlssError,
    InsufficientData,
    NoConvergence,
    NonPositiveDensity,
    NonPositiveEntropy,
    ParseError,
    PositivityLost,
    SingularJacobian,
    ValidationError,
)
from .grid import (
    FD2,
    FD4,
    SPECTRAL,
    DiffBackend,
    Field,
    FieldKind,
    PeriodicGrid,
    derivative,
    diff_matrix,
    integrate,
    make_grid,
    mean,
    project_mean_zero,
)
from .functionals import (
    FunctionalReport,
    entropy_absolute,
    entropy_production,
    entropy_relative,
    lyapunov_u_minus_logu,
    production_decomposition,
    report,
)
from .solver import (
    LinearSolver,
    SolverConfig,
    TimeSeriesRecord,
    Trajectory,
    jacobian,
    lyapunov_check,
    newton_step,
    residual,
    solve,
    step,
)
from .inequalities import (
    HeatFlowRecord,
    QuotientKind,
    QuotientResult,
    QuotientSpec,
    certify_constant,
    convex_sobolev_check,
    heatflow_verify,
    minimize_quotient,
    quotient_value,
    remainder_R,
)
from .rng import SplitMix64, random_log_density, random_smooth_field
from .runio import (
    DecayReport,
    RunConfig,
    default_fit_window,
    emit_timeseries,
    fit_decay,
    identity_suite,
    parse_config,
    read_timeseries,
)

__version__ = "0.1.0"

__all__ = [
    "DegenerateDenominator",
    "DlssError",
    "InsufficientData",
    "NoConvergence",
    "NonPositiveDensity",
    "NonPositiveEntropy",
    "ParseError",
    "PositivityLost",
    "SingularJacobian",
    "ValidationError",
    "FD2",
    "FD4",
    "SPECTRAL",
    "DiffBackend",
    "Field",
    "FieldKind",
    "PeriodicGrid",
    "derivative",
    "diff_matrix",
    "integrate",
    "make_grid",
    "mean",
    "project_mean_zero",
    "FunctionalReport",
    "entropy_absolute",
    "entropy_production",
    "entropy_relative",
    "lyapunov_u_minus_logu",
    "production_decomposition",
    "report",
    "LinearSolver",
    "SolverConfig",
    "TimeSeriesRecord",
    "Trajectory",
    "jacobian",
    "lyapunov_check",
    "newton_step",
    "residual",
    "solve",
    "step",
    "HeatFlowRecord",
    "QuotientKind",
    "QuotientResult",
    "QuotientSpec",
    "certify_constant",
    "convex_sobolev_check",
    "heatflow_verify",
    "minimize_quotient",
    "quotient_value",
    "remainder_R",
    "SplitMix64",
    "random_log_density",
    "random_smooth_field",
    "DecayReport",
    "RunConfig",
    "default_fit_window",
    "emit_timeseries",
    "fit_decay",
    "identity_suite",
    "parse_config",
    "read_timeseries",
    "__version__",
]

"""Numerical laboratory for parabolic-elliptic chemotaxis systems with
growth sources and nonlinear secretion: solvers, regime classifiers,
stability/bifurcation analysis, and comparison-ODE validators."""

__version__ = "0.1.0"

from .compare_ode import (
    EnvelopeTrajectories,
    SandwichTrajectory,
    check_sandwich,
    envelope_odes,
    sandwich_contraction_rate,
    solve_sandwich,
)
from .diagnostics import SeriesFit, fit_exponential_decay, lp_norm, monitor_exponent
from .elliptic import (
    EigenPair,
    elliptic_identity_residual,
    neumann_eigenvalues,
    solve_helmholtz,
)
from .evolve import RunReport, SimState, adapt_dt, detect_blowup, run, step
from .grid import Field, Grid, make_grid
from .model import (
    Kinetics,
    ModelParams,
    RegimeReport,
    build_params,
    check_strong_dissipativity,
    classify_regime,
    growth_zeros,
    make_kinetics,
    verify_growth_envelope,
)
from .stability import (
    BifurcationRow,
    EquilibriumInfo,
    StabilityReport,
    bifurcation_table,
    critical_chi,
    equilibrium_info,
    linearization_eigenvalues,
    mode_eigenvalues,
    pattern_intervals,
    singularity_scan,
)
from .steady import (
    Branch,
    SteadyState,
    ValidationReport,
    continuation,
    solve_stationary,
    validate_steady,
)

__all__ = [name for name in dir() if not name.startswith("_")]

"""Gradient flow and stationary solver for the mean field equation on surfaces."""

from .config import ExperimentConfig, parse_config, parse_text
from .diagnostics import (
    DiagnosticsRecord,
    dissipation,
    make_bubble,
    mt_functional,
    sobolev_record,
    symmetrize_mass,
)
from .equation import energy, mean_field_operator, residual, rhs
from .errors import (
    BlowupError,
    ConfigError,
    ExprEvalError,
    ExprSyntaxError,
    MeanflowError,
    NoConvergence,
    NonPositiveError,
    StepUnderflow,
)
from .fieldexpr import FieldExpr, materialize, parse_expr, validate_positive
from .flow import Flow, FlowConfig, FlowResult, FlowState, FlowStatus, run, step
from .mesh import (
    MeshGeometry,
    MeshKind,
    build_mesh,
    dirichlet_energy,
    geodesic_distance,
    integrate,
    laplacian,
)
from .stationary import NewtonConfig, gauge_align, newton_solve, solve
from .symmetry import (
    GroupAction,
    build_group,
    concentration_ball,
    min_orbit_cardinality,
    orbit,
    separated_orbit_points,
    symmetrize,
)

__version__ = "0.1.0"

"""Numerical workbench for Schroedinger heat semigroups, their variation operators,
and weighted Morrey-Campanato BMO/BLO spaces."""

from .errors import (
    BoxTooSmall,
    ConstraintViolation,
    DegenerateBall,
    InvalidArgument,
    InvalidDiscretization,
    InvalidWeight,
    NumericalFailure,
    OutOfDomain,
    SchrovarError,
    UndefinedCriticalRadius,
)
from .grid import (
    Ball,
    SpatialGrid,
    TimeGrid,
    ball_mean,
    ball_quadrature,
    make_dyadic_time_grid,
    make_geometric_time_grid,
)
from .potentials import (
    CriticalRadiusField,
    Potential,
    abs2m_potential,
    constant_potential,
    potential_from_spec,
    psi_theta,
    rh_q_constant,
    separable_potential,
    table_potential,
)
from .reports import BoundCheckReport
from .semigroup import (
    KernelHandle,
    SpectralEngine1D,
    apply_semigroup,
    build_spectral_engine,
    engine_handle,
    handle_from_spec,
    heat_kernel,
    mass_defect,
    mehler_kernel,
    psi_profile,
)
from .varops import (
    BlockStructure,
    SampledCurve,
    maximal,
    oscillation,
    rho_variation,
    sample_curve,
    short_variation,
    total_variation,
)
from .weights import (
    CampanatoParams,
    NormEstimate,
    Weight,
    ap_rho_theta_constant,
    ball_weight,
    blo_defect,
    bmo_norm,
    check_self_improvement,
    check_weight_growth,
    constant_weight,
    power_weight,
)
from .harness import ExperimentConfig, TheoremReport, decomposition_scenario, verify_kernel_bounds, verify_theorem

__version__ = "0.1.0"

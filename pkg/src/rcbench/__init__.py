"""Reservoir-computing forecasting benchmarks for nonlinear dynamical systems."""

__version__ = "0.1.0"

from .dynamics import (
    LORENZ_LAMBDA_REF,
    IntegrationDivergedError,
    LorenzParams,
    Trajectory,
    WilsonCowanParams,
    generate_regime,
    integrate_rk4,
    lorenz_derivative,
    wilson_cowan_derivative,
)
from .datapipe import DegenerateDataError, NoiseSpec, Normalizer, add_noise, fit_normalizer, split
from .reservoir import (
    TOPOLOGIES,
    HyperParams,
    InconsistentTopologyError,
    InfeasibleInputMatrixError,
    Reservoir,
    build_adjacency,
    build_input_matrix,
    build_reservoir,
    load_reservoir,
    save_reservoir,
    scale_to_spectral_radius,
)
from .rcmodel import (
    ForecastReport,
    RankDeficiencyError,
    StateSeries,
    drive,
    eval_epsilon,
    fit_output,
    forecast,
    symmetry_transform,
    train_readout,
    valid_time,
)
from .lyapunov import (
    FrameCollapseError,
    LyapunovResult,
    flow_spectrum,
    lyapunov_spectrum,
    rc_jacobian,
    reservoir_spectrum,
)
from .bayesopt import (
    OptAggregate,
    OptRanges,
    OptRun,
    aggregate,
    expected_improvement,
    objective,
    optimize,
    propose_next,
    standard_ranges,
)
from .tasks import ForecastTask, TaskResult

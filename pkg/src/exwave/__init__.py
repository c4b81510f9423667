"""Exterior wave simulation and boundary-data recovery laboratory.

Simulates the wave equation outside an obstacle on a truncated grid, streams
time moments and boundary traces, and inverts the boundary data for separated
initial-data differences and sound-speed contrasts, with explicit
resolution/noise tradeoffs.
"""

from .errors import (
    CflViolation,
    ConfigMismatch,
    DisconnectedAnnulus,
    EmptyMask,
    EmptyPatch,
    ExwaveError,
    IllConditioned,
    InsufficientPatch,
    MissingTrace,
    NestingViolation,
    NonPositiveEnergy,
    NumericalBlowup,
    NumericalError,
    ObstacleTouchesQ0,
    RhoOutOfRange,
    SupportViolation,
    ThresholdViolation,
    UnresolvedSurface,
    ValidationError,
    WindowTooShort,
    ZeroDenominator,
)
from .fields import (
    BumpProfile,
    IndicatorProfile,
    SeparatedData,
    gaussian_radial_2d,
    radial_bump,
    separated_gaussian,
    smooth_cutoff,
)
from .geometry import (
    BoundaryMesh,
    Box,
    BoxObstacle,
    DomainSpec,
    GridSpec,
    NoObstacle,
    PatchSpec,
    RadialObstacle,
    SphereObstacle,
    StabilityConstants,
    boundary_mesh,
    build_domain,
    stability_constants,
    star_shaped_check,
    validation_report,
)
from .moments import (
    MomentAccumulator,
    MomentData,
    PoissonResidualReport,
    TraceMoments,
    boundary_traces,
    difference_moments,
    laplace_consistency,
    moment_of_series,
    poisson_residual,
    with_noise,
)
from .reconstruct import (
    CauchyExtension,
    FourierRecovery,
    FrequencySample,
    ReconstructionResult,
    axial_weight,
    cauchy_extend,
    green_integral,
    green_integral_traces,
    l_curve_corner,
    lambda_sweep,
    make_grid_probe,
    make_probe,
    extend_to_boundary,
    recover_fourier,
    recover_fourier_partial,
    speed_contrast_from_recovery,
    truncated_inversion,
    window_axes,
)
from .harness import (
    DataNorms,
    TraceNormRecorder,
    data_norms,
    experiment_decay,
    experiment_end_to_end,
    experiment_speed,
)
from .wavesim import (
    DecayFit,
    EnergyRecorder,
    EnergySeries,
    EnergyStopRule,
    InitialData,
    PointProbeRecorder,
    SimSettings,
    SnapshotRecorder,
    SpeedField,
    StepRecorder,
    WaveState,
    fit_decay,
    init_state,
    local_energy,
    make_initial_data,
    run,
    scheme_energy,
    speed_from_values,
    step,
    uniform_speed,
)

__version__ = "0.1.0"

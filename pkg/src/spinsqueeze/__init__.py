"""Spin squeezing of a two-component BEC: simulation and analysis toolkit."""

from .dicke import (
    CollectiveSpinState,
    PulseSpec,
    SpinExpectations,
    apply_rotation,
    evolve_oat,
    evolve_pulse,
    expectations,
    make_coherent_state,
    sample_sz,
    variance_along,
)
from .metrology import (
    DepthCurve,
    SqueezingReport,
    depth_curve,
    entanglement_depth,
    min_variance_angle,
    squeezing_parameter,
    squeezing_report,
)
from .modes import (
    ConvergenceError,
    ModeProfile,
    ScatteringSpec,
    SplitProfile,
    TrapSpec,
    chemical_potential,
    chi_from_modes,
    chi_lambda_curve,
    overlap_lambda,
    split_sequence_profile,
    stationary_modes,
)
from .sequences import (
    LossSpec,
    NoiseSpec,
    SequenceSpec,
    TrajectoryResult,
    TwistSpec,
    calibrate_twist,
    ensemble,
    evolve_with_losses,
    run_scan,
    run_sequence,
    sample_noise,
    standard_sequence,
)
from .tomography import (
    ImagingNoiseSpec,
    ShotRecord,
    Tomogram,
    add_imaging_noise,
    calibration_fit,
    drift_correct,
    post_select,
    subtract_imaging_noise,
    tomogram,
)
from .wigner import (
    ClippedContourError,
    ContourResult,
    ProjectionSet,
    WignerGrid,
    contour_at,
    forward_radon,
    inverse_radon,
    smooth_histogram,
)

__version__ = "0.1.0"

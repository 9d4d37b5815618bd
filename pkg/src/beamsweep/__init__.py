"""Spatial covariance reconstruction from (truncated) beam sweeps on a ULA."""

from .array_model import (
    ArrayGeometry,
    IsotropicPattern,
    Scene,
    SincPattern,
    Source,
    TabulatedPattern,
    array_response,
    beam_gain_exact,
    beam_gain_sinc,
    half_power_beamwidth,
    pattern_gain,
    steering_vector,
    true_scm,
)
from .snapshots import (
    RngStream,
    SnapshotBlock,
    combine_beam,
    estimate_beam_power,
    generate_snapshots,
    sample_scm,
)
from .sweep import (
    DiagonalityViolation,
    Reconstructor,
    build_sweep_matrix,
    compute_delta,
    full_sweep,
    lag_to_scm,
    make_grid,
    reconstruct,
    scm_to_lag,
    statistical_powers,
    truncated_sweep,
)
from .analysis import (
    error_report,
    predict_mse,
    predict_truncation_se,
    se_power_identity,
    snap_to_grid,
    truncation_se_oracle,
)

__version__ = "0.1.0"

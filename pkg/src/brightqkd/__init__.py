"""Simulator and analysis toolkit for measurement-choice CV-QKD with
bright entangled beams."""

from .config import ConfigError, ExperimentConfig, SweepSpec, parse_config, emit_config
from .eavesdropper import (
    EveRecord,
    EveScore,
    Guess,
    TapConfig,
    default_delta_threshold,
    delta_discriminator,
    delta_predictions,
    eve_intercept,
    eve_score,
)
from .gaussian import (
    Basis,
    CriteriaReport,
    SourceParams,
    VarianceEstimate,
    apply_beamsplitter,
    build_covariance,
    conditional_variance,
    entanglement_checks,
    min_conditional_variance,
    optimal_gain,
    predicted_bob_sum_variance,
    sample_phase_space,
    squeezing_variance,
)
from .protocol import (
    Alarm,
    CalibrationError,
    MonitorReport,
    ProtocolError,
    SessionConfig,
    SessionRefusedError,
    SessionResult,
    SiftedKey,
    SlotOutcome,
    bob_correlation_test,
    choose_bases,
    compute_threshold,
    effective_bit_rate,
    key_export,
    monitor_session,
    run_session,
    transcript_lines,
)

__version__ = "0.1.0"

"""Sleep apnea signal derivation, event detection and agreement statistics."""

from ._core import (
    ComputeError,
    InputError,
    activity,
    audio_power,
    auc,
    bandpass,
    binary_metrics,
    bland_altman,
    bootstrap_mean_ci,
    compute_ahi,
    detect,
    evaluate,
    event_match,
    generate_recording,
    icc,
    min_threshold_for_ppv,
    pearson,
    quantize,
    render_report,
    resp_envelope,
    run_cli,
    severity_of,
)

__all__ = [
    "ComputeError",
    "InputError",
    "activity",
    "audio_power",
    "auc",
    "bandpass",
    "binary_metrics",
    "bland_altman",
    "bootstrap_mean_ci",
    "compute_ahi",
    "detect",
    "evaluate",
    "event_match",
    "generate_recording",
    "icc",
    "min_threshold_for_ppv",
    "pearson",
    "quantize",
    "render_report",
    "resp_envelope",
    "run_cli",
    "severity_of",
]

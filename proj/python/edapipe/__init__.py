"""Python access to the edapipe C++ core."""

from ._edapipe import (  # noqa: F401
    ConfigError,
    DataError,
    Error,
    LengthError,
    RangeError,
    ValidationError,
    __version__,
    build_dataset,
    class_report,
    counts_to_conductance,
    decompose,
    detect_peaks,
    digital_to_scale,
    encode_class,
    evaluate,
    golden_checks,
    macro_gmean,
    median_filter,
    rank_features,
    run_cli,
    simulate_subject,
    stratified_folds,
    weighted_tpr,
)

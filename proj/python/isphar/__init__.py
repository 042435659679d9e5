"""In-sensor activity recognition pipeline (C++ core)."""

from ._core import (
    FEATURE_MANIFEST_VERSION,
    NUM_FEATURES,
    Engine,
    IspharError,
    audit,
    cross_validate,
    describe,
    duty_cycle,
    extract_features,
    feature_names,
    footprint,
    mlp_parameter_count,
    predict,
    reference_mask_16,
    roundtrip,
    run_cli,
    select_top_features,
    synth_corpus,
    train,
)

__all__ = [
    "FEATURE_MANIFEST_VERSION",
    "NUM_FEATURES",
    "Engine",
    "IspharError",
    "audit",
    "cross_validate",
    "describe",
    "duty_cycle",
    "extract_features",
    "feature_names",
    "footprint",
    "mlp_parameter_count",
    "predict",
    "reference_mask_16",
    "roundtrip",
    "run_cli",
    "select_top_features",
    "synth_corpus",
    "train",
]

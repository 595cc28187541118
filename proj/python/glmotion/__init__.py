"""Skeleton motion transformer pretraining with multi-interval displacement prediction."""

from ._glmotion import (
    DataError,
    EpochMetrics,
    Error,
    FormatError,
    InputRepresentation,
    LengthError,
    MaskError,
    Model,
    ModelConfig,
    MpdpConfig,
    NumericError,
    ParseError,
    PositionalMode,
    RunConfig,
    Sequence,
    ShapeError,
    UsageError,
    direction_class,
    gradcheck,
    init_model,
    load_model,
    magnitude_class,
    mean_attended_distance,
    parse_ntu_skeleton_file,
    posemb_similarity,
    pretrain,
    read_dataset,
    synth_generate,
    write_dataset,
)

__version__ = "0.1.0"

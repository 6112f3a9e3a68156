"""Instance-level dataset condensation for image super-resolution."""

from ._core import (
    BackendError,
    ConfigError,
    ContractError,
    DataError,
    Error,
    FormatError,
    IntegrityError,
    NumericError,
    apportion,
    condense,
    crop_offsets,
    gradcheck,
    instance_discrepancy,
    main,
    read_png,
    resize_bicubic,
    sinusoid_textures,
    synthetic_count,
    validate_dataset,
    write_png,
)

__all__ = [
    "BackendError",
    "ConfigError",
    "ContractError",
    "DataError",
    "Error",
    "FormatError",
    "IntegrityError",
    "NumericError",
    "apportion",
    "condense",
    "crop_offsets",
    "gradcheck",
    "instance_discrepancy",
    "main",
    "read_png",
    "resize_bicubic",
    "sinusoid_textures",
    "synthetic_count",
    "validate_dataset",
    "write_png",
]

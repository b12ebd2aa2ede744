"""Streaming sketches for approximate near neighbor search and sliding-window KDE."""

from .eh import ExpHistogram
from .errors import (
    CapacityError,
    ConfigError,
    DomainError,
    FormatError,
    OrderingError,
    ParameterError,
    ShapeError,
    SketchError,
    UniquenessError,
)
from .lsh import FamilySpec, HashBank, PStableFamily, SrpFamily
from .sann import QueryOutcome, SannParams, SannSketch, derive_params

__all__ = [
    "CapacityError",
    "ConfigError",
    "DomainError",
    "ExpHistogram",
    "FamilySpec",
    "FormatError",
    "HashBank",
    "OrderingError",
    "PStableFamily",
    "ParameterError",
    "QueryOutcome",
    "SannParams",
    "SannSketch",
    "ShapeError",
    "SketchError",
    "SrpFamily",
    "UniquenessError",
    "derive_params",
]

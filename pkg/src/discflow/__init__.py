"""Discontinuous ODEs and nonlocal conservation laws with discontinuous velocity."""

from .funcrep import (
    InvalidParameterError,
    Kernel,
    LipschitzField,
    MollifiedFn,
    PiecewiseConstantFn,
    VelocityFn,
    integrate,
    mollify,
    primitive_gap,
    total_variation,
)

__version__ = "0.1.0"

__all__ = [
    "InvalidParameterError",
    "Kernel",
    "LipschitzField",
    "MollifiedFn",
    "PiecewiseConstantFn",
    "VelocityFn",
    "integrate",
    "mollify",
    "primitive_gap",
    "total_variation",
]

"""Looping, wind-conditioned cinemagraphs from a still image and its normal map."""
from .encoding import EncodingConfig, WindSpec, build_code, encode_time
from .errors import (ContractError, CycleGraphError, DegenerateNormals, FormatError, NumericsError, ShapeError,
                     ValidationError)

__version__ = "0.1.0"

__all__ = [
    "EncodingConfig", "WindSpec", "build_code", "encode_time",
    "ContractError", "CycleGraphError", "DegenerateNormals", "FormatError", "NumericsError", "ShapeError",
    "ValidationError",
]

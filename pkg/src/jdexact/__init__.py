"""Exact simulation and likelihood-based inference for 1-d jump-diffusions."""

from .models import (
    Theta,
    ObservationSet,
    ModelSpec,
    TransformedModel,
    get_preset,
    validate_assumptions,
)

__version__ = "0.1.0"

__all__ = [
    "Theta",
    "ObservationSet",
    "ModelSpec",
    "TransformedModel",
    "get_preset",
    "validate_assumptions",
    "__version__",
]

"""Numerical laboratory for fractional Sobolev embeddings, bubbles and concentration."""

from __future__ import annotations

__version__ = "1.0.0"

from .dislocations import Dislocation, apply, compose, inverse, separation
from .errors import ConvergenceError, FslabError, NumericalError, TailCheckError, ValidationError
from .extremals import Bubble, BubbleParams, bubble, rayleigh_quotient, sharp_constant
from .field import Field, FracParams, Grid, frac_laplacian, heat_semigroup, read_field, riesz_potential, write_field
from .norms import (
    BesovParams,
    MorreyParams,
    besov_norm,
    gagliardo_seminorm,
    hs_norm,
    l2star_norm,
    morrey_norm,
    norm_report,
    weak_l2star,
)

__all__ = [
    "BesovParams",
    "Bubble",
    "BubbleParams",
    "ConvergenceError",
    "Dislocation",
    "Field",
    "FracParams",
    "FslabError",
    "Grid",
    "MorreyParams",
    "NumericalError",
    "TailCheckError",
    "ValidationError",
    "apply",
    "besov_norm",
    "bubble",
    "compose",
    "frac_laplacian",
    "gagliardo_seminorm",
    "heat_semigroup",
    "hs_norm",
    "inverse",
    "l2star_norm",
    "morrey_norm",
    "norm_report",
    "rayleigh_quotient",
    "read_field",
    "riesz_potential",
    "separation",
    "sharp_constant",
    "weak_l2star",
    "write_field",
]

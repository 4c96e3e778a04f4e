"""Numerical laboratory for Fekete points, Bergman kernels and sampling arrays on CP^1 and CP^2."""

from .geometry import ProjPoint, QuadratureRule, Weight
from .bergman import SectionSpace, build_section_space, monomial_space
from .fekete import FeketeConfig, SolveOptions, solve, solve_level

__version__ = "0.1.0"

__all__ = [
    "FeketeConfig",
    "ProjPoint",
    "QuadratureRule",
    "SectionSpace",
    "SolveOptions",
    "Weight",
    "build_section_space",
    "monomial_space",
    "solve",
    "solve_level",
    "__version__",
]

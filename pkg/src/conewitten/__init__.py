"""Witten deformation on even-dimensional cones: model operators, intersection
cohomology of local Morse data, Morse inequalities and a global surface check."""

from .errors import (
    AssemblyError,
    ConeWittenError,
    ConfigError,
    DegenerateFitError,
    InvalidParameterError,
    ModelInconsistencyError,
    NumericalFailureError,
    TruncationInsufficientError,
    UnsupportedOracleError,
)
from .global_surface import PRESETS, build_preset, count_small_eigenvalues, gap_growth_scan
from .ih_calculator import ConeMorseDatum, Custom, Empty, FullLink, Points, ih_cone, morse_contribution
from .link_models import (
    LinkModel,
    circle_potential,
    constant_potential,
    curve_potential,
    make_abstract_link,
    make_circle_link,
    validate_link,
)
from .model_operator import (
    bessel_oracle,
    default_grid,
    explicit_kernel_pm,
    gap_estimate,
    make_grid,
    model_spectrum,
    truncation_sensitivity,
    verify_rescaling,
)
from .morse_checker import check_inequalities, total_counts

__version__ = "0.1.0"

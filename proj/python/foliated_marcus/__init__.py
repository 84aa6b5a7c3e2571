"""Marcus-type jump SDEs on foliated spaces: python face of the C++ core."""

from ._core import (
    DivergentMomentError,
    analytic_eta_bounds,
    averaged_solution,
    averaging_error,
    characteristic_exponent,
    config_hash,
    estimate_eta,
    exact_fast_path,
    jump_flow,
    measure_moment,
    sample_jump_path,
)

__all__ = [
    "DivergentMomentError",
    "analytic_eta_bounds",
    "averaged_solution",
    "averaging_error",
    "characteristic_exponent",
    "config_hash",
    "estimate_eta",
    "exact_fast_path",
    "jump_flow",
    "measure_moment",
    "sample_jump_path",
]

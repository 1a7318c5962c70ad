"""Drive-by bridge condition assessment toolkit."""

from ._core import (
    __version__,
    case_frequencies,
    corrected_arc_curve,
    matrix_profile,
    percentile,
    pick_peak,
    run_cli,
    simulate_crossing,
    simulate_direct,
    singular_spectrum,
    znorm_distance,
)

__all__ = [
    "__version__",
    "case_frequencies",
    "corrected_arc_curve",
    "matrix_profile",
    "percentile",
    "pick_peak",
    "run_cli",
    "simulate_crossing",
    "simulate_direct",
    "singular_spectrum",
    "znorm_distance",
]

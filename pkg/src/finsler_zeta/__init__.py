"""Poincaré series of analytic convex bodies on the lattice 2πZ^d."""

from .errors import (CutProximityError, DomainError, NumericError, OutOfRegionError, ResourceError,
                     ValidationError)
from .geometry import ConvexTarget, SupportBody
from .lattice import SpectrumTable, count, spectrum
from .norms import ChartAtlas, inequality_suite, norm_HR, norm_R
from .poincare import (ContinuationConfig, SeriesEvaluation, SmoothCutoff, ball_point_oracle,
                       continued_total, direct, scan_singularities, windowed_count)

__all__ = [
    "SupportBody", "ConvexTarget", "SpectrumTable", "count", "spectrum",
    "ChartAtlas", "norm_R", "norm_HR", "inequality_suite",
    "ContinuationConfig", "SeriesEvaluation", "SmoothCutoff", "ball_point_oracle", "continued_total",
    "direct", "scan_singularities", "windowed_count",
    "ValidationError", "DomainError", "NumericError", "OutOfRegionError", "CutProximityError", "ResourceError",
]
__version__ = "0.1.0"

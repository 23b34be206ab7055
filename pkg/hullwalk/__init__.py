"""
hullwalk

Simulate high-dimensional random walks and decide when the origin enters
the convex hull of their positions.
"""

__version__ = "0.1.0"

from hullwalk.errors import HullwalkError, NumericalFailure  # noqa: E402
from hullwalk.numkit import HullVerdict, condition_number, contains_origin, nnls  # noqa: E402
from hullwalk.randwalk import RngStream, TimeGrid, WalkPath  # noqa: E402
from hullwalk.harness import BernoulliEstimate, ExperimentReport  # noqa: E402

__all__ = [
    "__version__",
    "HullwalkError",
    "NumericalFailure",
    "HullVerdict",
    "condition_number",
    "contains_origin",
    "nnls",
    "RngStream",
    "TimeGrid",
    "WalkPath",
    "BernoulliEstimate",
    "ExperimentReport",
]

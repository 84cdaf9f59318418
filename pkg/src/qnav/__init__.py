"""qnav: a desk-scale lab for asymmetric-cost navigation.

Ships a tiny reverse-mode autodiff core, procedural terrain generators,
unicycle navigation environments with direction-dependent costs, a learnable
asymmetric-norm embedding, a trust-region constrained policy optimizer, exact
discrete solvers for cross-checking, and a benchmark harness behind the
``qnav`` command line tool.
"""

__version__ = "0.1.0"

from .errors import (
    BoundsError,
    ConfigError,
    DegenerateMotionError,
    InputError,
    NumericError,
    QnavError,
    StateError,
)

__all__ = [
    "__version__",
    "QnavError",
    "ConfigError",
    "StateError",
    "NumericError",
    "BoundsError",
    "InputError",
    "DegenerateMotionError",
]

"""Hard-label black-box attacks by Bayesian optimization over low-dimensional subspaces."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401

"""QP-filtered multi-agent deterministic policy gradients on a 2-D particle world."""

from ._safemaddpg import *  # noqa: F401,F403
from ._safemaddpg import __doc__  # noqa: F401

__version__ = "0.1.0"

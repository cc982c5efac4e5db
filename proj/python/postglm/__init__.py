"""Penalized online sequential testing for heterogeneous treatment effects.

Thin wrapper around the compiled extension; see the project README for the
CLI and file formats.
"""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401

"""Few-shot bioacoustic sound event detection.

The heavy lifting lives in the compiled ``_core`` extension; this package
re-exports its surface.
"""

try:
    from ._core import *  # noqa: F401,F403
    from . import _core  # noqa: F401
except ImportError:  # built out of tree (ctest runs against the build dir)
    from _core import *  # noqa: F401,F403
    import _core  # noqa: F401

__version__ = "0.1.0"

"""Deep-state dynamic programming for large teams of exchangeable agents."""

try:
    from ._deepteam import *  # noqa: F401,F403
    from ._deepteam import __doc__  # noqa: F401
except ImportError:
    from _deepteam import *  # noqa: F401,F403

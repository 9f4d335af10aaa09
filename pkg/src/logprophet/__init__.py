"""Log-Prophet: template extraction, causality inference and prophecy graphs
over network device syslogs."""

from __future__ import annotations

from ._io import TOOL_VERSION as __version__
from .errors import LogProphetError

__all__ = ["__version__", "LogProphetError"]

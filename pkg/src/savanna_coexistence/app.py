"""Shared MCPServer instance.

Lives in its own module so tool/resource modules can import it without
creating a cycle through ``server.py``.
"""

from __future__ import annotations

import logging
from collections.abc import AsyncIterator
from contextlib import asynccontextmanager

from mcp.server.mcpserver import MCPServer

from . import __version__

logger = logging.getLogger(__name__)


@asynccontextmanager
async def _lifespan(_server: MCPServer) -> AsyncIterator[None]:
    """Log start and stop; the tools hold no shared state to tear down."""
    logger.info("savanna_coexistence %s serving", __version__)
    try:
        yield
    finally:
        logger.info("savanna_coexistence shutting down")


mcp = MCPServer("savanna_coexistence", lifespan=_lifespan)

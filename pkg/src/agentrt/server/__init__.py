"""Agent server: FastAPI app factory, configuration, and clients."""

from .app import create_app, serve, wait_until_ready
from .client import HttpServerClient, InProcessServerClient
from .config import ServerConfig

__all__ = [
    "HttpServerClient",
    "InProcessServerClient",
    "ServerConfig",
    "create_app",
    "serve",
    "wait_until_ready",
]

"""Agent server configuration."""

from __future__ import annotations

from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field


class ServerConfig(BaseModel):
    """Everything the server needs to come up.

    ``llm_credentials`` maps credential aliases to real API keys, so clients
    can say "use the key you know as 'default'" without ever seeing it.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    api_key: str = Field(min_length=1)
    workspace_root: Path
    max_body_bytes: int = 10 * 1024 * 1024
    llm_credentials: dict[str, str] = {}
    console_dir: Path | None = None
    cors_origins: tuple[str, ...] = ()
    subscriber_queue_size: int = 512

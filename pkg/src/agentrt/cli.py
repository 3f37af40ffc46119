"""Command line entry point.

``agentrt serve`` boots the agent server; everything else this package does
is a library concern (see the README for the Python API).

Settings resolve in precedence order: command line flags, then environment
(AGENTRT_API_KEY), then the --config JSON file, then built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

# Keys a --config file may contain.  host/port steer uvicorn; the rest map
# onto ServerConfig fields.
_CONFIG_FILE_KEYS = frozenset(
    {
        "host",
        "port",
        "api_key",
        "workspace_root",
        "max_body_bytes",
        "llm_credentials",
        "console_dir",
        "cors_origins",
        "subscriber_queue_size",
    }
)


def _load_config_file(path: Path) -> dict:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SystemExit(f"config file not found: {path}")
    except (OSError, json.JSONDecodeError) as exc:
        raise SystemExit(f"unreadable config file {path}: {exc}")
    if not isinstance(data, dict):
        raise SystemExit(f"config file {path} must hold a JSON object")
    unknown = sorted(set(data) - _CONFIG_FILE_KEYS)
    if unknown:
        raise SystemExit(
            f"unknown keys in {path}: {unknown}; allowed: {sorted(_CONFIG_FILE_KEYS)}"
        )
    return data


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="agentrt",
        description="Event-sourced runtime for tool-using LLM agents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve_parser = sub.add_parser("serve", help="run the agent server")
    serve_parser.add_argument(
        "--config",
        type=Path,
        default=None,
        help="JSON file with server settings; flags override it",
    )
    serve_parser.add_argument("--host", default=None)
    serve_parser.add_argument("--port", type=int, default=None)
    serve_parser.add_argument(
        "--api-key",
        default=None,
        help="bearer key clients must present (or set AGENTRT_API_KEY)",
    )
    serve_parser.add_argument(
        "--workspace-root",
        type=Path,
        default=None,
        help="directory holding per-conversation workspaces and state",
    )
    serve_parser.add_argument(
        "--credential",
        action="append",
        default=[],
        metavar="ALIAS=KEY",
        help="LLM credential alias clients may reference (repeatable)",
    )
    serve_parser.add_argument(
        "--console",
        type=Path,
        default=None,
        help="serve a built web console from this directory under /console",
    )

    args = parser.parse_args(argv)

    if args.command == "serve":
        file_config = _load_config_file(args.config) if args.config else {}

        api_key = (
            args.api_key
            or os.environ.get("AGENTRT_API_KEY")
            or file_config.get("api_key")
        )
        if not api_key:
            parser.error("--api-key (or AGENTRT_API_KEY, or api_key in --config) is required")

        credentials = dict(file_config.get("llm_credentials", {}))
        for entry in args.credential:
            alias, sep, key = entry.partition("=")
            if not sep or not alias or not key:
                parser.error(f"--credential must look like ALIAS=KEY, got {entry!r}")
            credentials[alias] = key

        console_dir = args.console
        if console_dir is None and file_config.get("console_dir") is not None:
            console_dir = Path(file_config["console_dir"])

        from .server import ServerConfig, serve

        config = ServerConfig(
            api_key=api_key,
            workspace_root=args.workspace_root
            or Path(file_config.get("workspace_root", "workspace")),
            max_body_bytes=file_config.get("max_body_bytes", 10 * 1024 * 1024),
            llm_credentials=credentials,
            console_dir=console_dir,
            cors_origins=tuple(file_config.get("cors_origins", ())),
            subscriber_queue_size=file_config.get("subscriber_queue_size", 512),
        )
        serve(
            config,
            host=args.host or file_config.get("host", "127.0.0.1"),
            port=args.port if args.port is not None else file_config.get("port", 8000),
        )
        return 0

    return 1  # pragma: no cover - argparse enforces the subcommand


if __name__ == "__main__":
    sys.exit(main())

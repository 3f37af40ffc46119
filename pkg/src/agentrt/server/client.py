"""Transports for talking to an agent server.

Two implementations of the same small surface: one speaks real HTTP with
httpx (WebSockets via the optional ``websockets`` package), the other runs
the ASGI app in-process through Starlette's TestClient, which is how the
test suite exercises the full remote path without opening sockets.
"""

from __future__ import annotations

import json
from typing import Any, Iterator, Mapping

import httpx

from ..errors import AgentRtError


class HttpServerClient:
    """Plain HTTP(S) transport against a running server."""

    def __init__(self, base_url: str, *, api_key: str | None = None, timeout: float = 300.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        headers = {}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(
            base_url=self.base_url, headers=headers, timeout=timeout
        )

    def request(
        self,
        method: str,
        path: str,
        *,
        json: Any = None,
        params: Mapping[str, Any] | None = None,
        content: bytes | None = None,
    ) -> httpx.Response:
        try:
            return self._client.request(
                method, path, json=json, params=params, content=content
            )
        except httpx.HTTPError as exc:
            raise AgentRtError(f"server request failed: {exc}") from exc

    def ws_events(self, conversation_id: str, since: int = 0) -> Iterator[dict]:
        """Live event frames; needs the optional ``websockets`` dependency."""
        try:
            from websockets.sync.client import connect
        except ImportError as exc:  # pragma: no cover - optional extra
            raise AgentRtError(
                "streaming over real sockets needs the 'websockets' package; "
                "install agentrt[ws]"
            ) from exc

        scheme = "wss" if self.base_url.startswith("https") else "ws"
        host = self.base_url.split("://", 1)[1]
        url = (
            f"{scheme}://{host}/conversations/{conversation_id}/events"
            f"?since={since}&api_key={self.api_key or ''}"
        )
        with connect(url) as ws:  # pragma: no cover - optional extra
            while True:
                try:
                    yield json.loads(ws.recv())
                except Exception:
                    return

    def close(self) -> None:
        self._client.close()


class InProcessServerClient:
    """The same surface served by an ASGI app inside this process.

    Wraps Starlette's TestClient, so REST and WebSocket behavior (auth
    denials included) is exactly what a network client would see, minus the
    sockets.
    """

    def __init__(self, app: Any, api_key: str) -> None:
        from starlette.testclient import TestClient

        self.api_key = api_key
        self._client = TestClient(
            app, headers={"Authorization": f"Bearer {api_key}"}
        )

    def request(
        self,
        method: str,
        path: str,
        *,
        json: Any = None,
        params: Mapping[str, Any] | None = None,
        content: bytes | None = None,
    ) -> Any:
        return self._client.request(
            method, path, json=json, params=params, content=content
        )

    def ws_events(self, conversation_id: str, since: int = 0) -> Iterator[dict]:
        from starlette.testclient import WebSocketDenialResponse
        from starlette.websockets import WebSocketDisconnect

        try:
            with self._client.websocket_connect(
                f"/conversations/{conversation_id}/events?since={since}"
            ) as ws:
                while True:
                    try:
                        yield ws.receive_json()
                    except WebSocketDisconnect:
                        return
        except WebSocketDenialResponse as exc:
            raise AgentRtError(
                f"event stream refused with {exc.status_code}"
            ) from exc

    def close(self) -> None:
        self._client.close()

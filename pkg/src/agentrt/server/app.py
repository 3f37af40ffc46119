"""The agent server: REST + WebSocket access to hosted conversations.

One process hosts many conversations, each with its own workspace directory
and persistence under ``workspace_root``.  Clients drive them through the
same operations LocalConversation offers, and follow progress over a
WebSocket that first replays history from a ``since`` cursor and then tails
live events; reconnecting with the last seen index resumes without gaps or
duplicates.

Every route, the health check included, requires the bearer key.  WebSocket
clients may pass it as an ``api_key`` query parameter instead, since
browsers cannot set headers on upgrade requests.
"""

from __future__ import annotations

import logging
import queue
import shutil
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any

import anyio
from fastapi import Depends, FastAPI, HTTPException, Request, WebSocket
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field, TypeAdapter, ValidationError
from starlette.requests import HTTPConnection
from starlette.websockets import WebSocketDisconnect

from ..agent import AgentConfig
from ..conversation import AlreadyRunning, LocalConversation
from ..errors import AgentRtError
from ..events import BaseEvent, event_to_dict
from ..ids import new_id
from ..llm import ContentPart, LLMProfile, RouterProfile, SecretStr
from ..security import ConfirmationPolicy, NoPendingAction
from ..tools.base import UnknownTool, registered_tools
from ..workspace import CommandTimeout, LocalWorkspace, PathEscape, resolve_inside
from .config import ServerConfig

logger = logging.getLogger(__name__)

WS_CLOSE_SUBSCRIBER_TOO_SLOW = 4408


@dataclass
class Subscriber:
    frames: "queue.Queue[dict]"
    overflowed: bool = False


@dataclass
class HostedConversation:
    conversation: LocalConversation
    workspace_dir: str
    created_at: str
    frames: list[dict] = field(default_factory=list)
    subscribers: list[Subscriber] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    run_thread: threading.Thread | None = None

    @property
    def event_count(self) -> int:
        with self.lock:
            return len(self.frames)

    def broadcast(self, event: BaseEvent) -> None:
        with self.lock:
            frame = {"index": len(self.frames), "event": event_to_dict(event)}
            self.frames.append(frame)
            for subscriber in self.subscribers:
                try:
                    subscriber.frames.put_nowait(frame)
                except queue.Full:
                    subscriber.overflowed = True

    def subscribe(self, max_queue: int) -> tuple[Subscriber, list[dict]]:
        """Atomically snapshot history and start receiving live frames."""
        subscriber = Subscriber(frames=queue.Queue(maxsize=max_queue))
        with self.lock:
            snapshot = list(self.frames)
            self.subscribers.append(subscriber)
        return subscriber, snapshot

    def unsubscribe(self, subscriber: Subscriber) -> None:
        with self.lock:
            if subscriber in self.subscribers:
                self.subscribers.remove(subscriber)

    def record(self) -> dict:
        conversation = self.conversation
        return {
            "id": conversation.id,
            "status": conversation.status.value,
            "title": conversation.title,
            "created_at": self.created_at,
            "event_count": self.event_count,
            "workspace_dir": self.workspace_dir,
        }


class CreateConversationBody(BaseModel):
    agent: dict
    working_dir: str | None = None
    confirmation_policy: dict | None = None
    secrets: dict[str, str] = {}


class MessageBody(BaseModel):
    content: str | list[dict]


class RunBody(BaseModel):
    max_steps: int | None = Field(default=None, gt=0)


class ConfirmationBody(BaseModel):
    decision: str
    note: str = ""


class ExecuteBody(BaseModel):
    command: str
    timeout_ms: int | None = Field(default=None, gt=0)
    working_dir: str | None = None


_POLICY_ADAPTER: TypeAdapter = TypeAdapter(ConfirmationPolicy)
_CONTENT_ADAPTER: TypeAdapter = TypeAdapter(list[ContentPart])


def _resolve_credentials(config: AgentConfig, server: ServerConfig) -> AgentConfig:
    """Substitute server-side API keys for credential aliases."""

    def fill(profile: LLMProfile) -> LLMProfile:
        if profile.credential_alias is None or profile.api_key is not None:
            return profile
        try:
            key = server.llm_credentials[profile.credential_alias]
        except KeyError:
            raise HTTPException(
                400,
                f"unknown credential alias {profile.credential_alias!r}",
            ) from None
        return profile.model_copy(update={"api_key": SecretStr(key)})

    llm = config.llm
    if isinstance(llm, RouterProfile):
        llm = llm.model_copy(
            update={
                "llms_for_routing": {
                    name: fill(p) for name, p in llm.llms_for_routing.items()
                }
            }
        )
    else:
        llm = fill(llm)
    return config.model_copy(update={"llm": llm})


def create_app(config: ServerConfig) -> FastAPI:
    conversations: dict[str, HostedConversation] = {}
    conversations_lock = threading.Lock()

    async def require_key(connection: HTTPConnection) -> None:
        if connection.scope["type"] != "http":
            return  # the WebSocket endpoint runs its own check (query param allowed)
        if connection.headers.get("authorization") != f"Bearer {config.api_key}":
            raise HTTPException(401, "missing or invalid API key")

    app = FastAPI(
        title="agent server",
        dependencies=[Depends(require_key)],
    )
    app.state.config = config
    app.state.conversations = conversations

    if config.cors_origins:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(config.cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.middleware("http")
    async def cap_body_size(request: Request, call_next):
        length = request.headers.get("content-length")
        if length is not None and int(length) > config.max_body_bytes:
            return JSONResponse(
                {"detail": "request body too large"}, status_code=413
            )
        return await call_next(request)

    @app.exception_handler(PathEscape)
    async def path_escape_handler(request: Request, exc: PathEscape):
        return JSONResponse({"detail": str(exc)}, status_code=400)

    def get_hosted(conversation_id: str) -> HostedConversation:
        hosted = conversations.get(conversation_id)
        if hosted is None:
            raise HTTPException(404, f"no conversation {conversation_id!r}")
        return hosted

    # -- conversations -------------------------------------------------------

    @app.get("/health")
    async def health() -> dict:
        return {"status": "ok", "conversations": len(conversations)}

    @app.post("/conversations", status_code=201)
    def create_conversation(body: CreateConversationBody) -> dict:
        try:
            agent = AgentConfig.model_validate(body.agent)
        except ValidationError as exc:
            raise HTTPException(400, f"invalid agent config: {exc}") from exc
        known = set(registered_tools())
        for spec in agent.tool_specs:
            if spec.name not in known:
                raise HTTPException(
                    400,
                    f"unknown tool {spec.name!r}; registered tools: {sorted(known)}",
                )
        agent = _resolve_credentials(agent, config)

        policy = None
        if body.confirmation_policy is not None:
            try:
                policy = _POLICY_ADAPTER.validate_python(body.confirmation_policy)
            except ValidationError as exc:
                raise HTTPException(400, f"invalid confirmation policy: {exc}") from exc

        conversation_id = new_id()
        relative_dir = f"conversations/{conversation_id}/workspace"
        workspace_dir = config.workspace_root / relative_dir
        state_dir = config.workspace_root / "conversations" / conversation_id / "state"
        workspace_dir.mkdir(parents=True, exist_ok=True)

        hosted_box: list[HostedConversation] = []

        def broadcast(event: BaseEvent) -> None:
            if hosted_box:
                hosted_box[0].broadcast(event)

        try:
            conversation = LocalConversation(
                agent,
                workspace=LocalWorkspace(workspace_dir),
                persistence_dir=state_dir,
                conversation_id=conversation_id,
                confirmation_policy=policy,
                secrets=body.secrets,
                callbacks=[broadcast],
            )
        except (UnknownTool, AgentRtError) as exc:
            raise HTTPException(400, str(exc)) from exc

        hosted = HostedConversation(
            conversation=conversation,
            workspace_dir=relative_dir,
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        hosted_box.append(hosted)
        with conversations_lock:
            conversations[conversation_id] = hosted
        return hosted.record()

    @app.get("/conversations")
    def list_conversations() -> dict:
        with conversations_lock:
            hosted_list = list(conversations.values())
        return {"conversations": [h.record() for h in hosted_list]}

    @app.get("/conversations/{conversation_id}")
    def get_conversation(conversation_id: str) -> dict:
        return get_hosted(conversation_id).record()

    @app.get("/conversations/{conversation_id}/events")
    def get_events(conversation_id: str, since: int = 0) -> dict:
        hosted = get_hosted(conversation_id)
        with hosted.lock:
            frames = hosted.frames[since:]
        return {"events": frames, "status": hosted.conversation.status.value}

    @app.post("/conversations/{conversation_id}/messages")
    def post_message(conversation_id: str, body: MessageBody) -> dict:
        hosted = get_hosted(conversation_id)
        if isinstance(body.content, str):
            content: Any = body.content
        else:
            try:
                content = _CONTENT_ADAPTER.validate_python(body.content)
            except ValidationError as exc:
                raise HTTPException(400, f"invalid message content: {exc}") from exc
        hosted.conversation.send_message(content)
        return {"accepted": True}

    @app.post("/conversations/{conversation_id}/run", status_code=202)
    def start_run(conversation_id: str, body: RunBody | None = None) -> dict:
        hosted = get_hosted(conversation_id)
        conversation = hosted.conversation
        with conversation.state.locked():
            active = conversation.state.run_active
        if active:
            # Advisory check; the run loop itself rejects a genuine race.
            raise HTTPException(409, "conversation is already running")
        max_steps = body.max_steps if body else None

        def run() -> None:
            try:
                conversation.run(max_steps)
            except AlreadyRunning:
                pass
            except Exception:
                logger.exception("run loop for %s died", conversation_id)

        thread = threading.Thread(
            target=run, name=f"run-{conversation_id[:8]}", daemon=True
        )
        hosted.run_thread = thread
        thread.start()
        return {"status": "started"}

    @app.post("/conversations/{conversation_id}/pause", status_code=202)
    def pause(conversation_id: str) -> dict:
        get_hosted(conversation_id).conversation.pause()
        return {"status": "pause requested"}

    @app.post("/conversations/{conversation_id}/confirmation")
    def confirmation(conversation_id: str, body: ConfirmationBody) -> dict:
        hosted = get_hosted(conversation_id)
        if body.decision not in ("approve", "reject"):
            raise HTTPException(400, "decision must be 'approve' or 'reject'")
        try:
            status = hosted.conversation.confirm(body.decision, body.note)
        except NoPendingAction as exc:
            raise HTTPException(409, str(exc)) from exc
        return {"status": status.value}

    @app.patch("/conversations/{conversation_id}/secrets", status_code=204)
    def patch_secrets(conversation_id: str, body: dict[str, str]) -> Response:
        get_hosted(conversation_id).conversation.update_secrets(body)
        return Response(status_code=204)

    @app.patch("/conversations/{conversation_id}/confirmation_policy", status_code=204)
    def patch_policy(conversation_id: str, body: dict) -> Response:
        try:
            policy = _POLICY_ADAPTER.validate_python(body)
        except ValidationError as exc:
            raise HTTPException(400, f"invalid confirmation policy: {exc}") from exc
        get_hosted(conversation_id).conversation.set_confirmation_policy(policy)
        return Response(status_code=204)

    # -- workspace -------------------------------------------------------------

    @app.post("/execute")
    def execute(body: ExecuteBody) -> dict:
        target = config.workspace_root
        if body.working_dir:
            target = resolve_inside(config.workspace_root, body.working_dir)
        workspace = LocalWorkspace(target)
        timeout = body.timeout_ms / 1000 if body.timeout_ms else None
        try:
            output = workspace.execute_command(body.command, timeout=timeout)
        except CommandTimeout as exc:
            raise HTTPException(408, str(exc)) from exc
        return {
            "exit_code": output.exit_code,
            "stdout": output.stdout,
            "stderr": output.stderr,
            "duration_ms": output.duration_ms,
        }

    @app.put("/files")
    async def put_file(request: Request, path: str) -> dict:
        target = resolve_inside(config.workspace_root, path)
        body = await request.body()
        if len(body) > config.max_body_bytes:
            raise HTTPException(413, "file too large")
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(body)
        return {"path": path, "bytes": len(body)}

    @app.get("/files")
    def get_file(path: str) -> Response:
        target = resolve_inside(config.workspace_root, path)
        if not target.is_file():
            raise HTTPException(404, f"no file at {path!r}")
        return Response(
            content=target.read_bytes(), media_type="application/octet-stream"
        )

    @app.delete("/files")
    def delete_file(path: str) -> dict:
        target = resolve_inside(config.workspace_root, path)
        if target.is_dir():
            shutil.rmtree(target)
        elif target.exists():
            target.unlink()
        else:
            raise HTTPException(404, f"nothing at {path!r}")
        return {"deleted": path}

    # -- event stream ------------------------------------------------------------

    @app.websocket("/conversations/{conversation_id}/events")
    async def events_stream(websocket: WebSocket, conversation_id: str) -> None:
        supplied = websocket.headers.get("authorization")
        if supplied is None and "api_key" in websocket.query_params:
            supplied = f"Bearer {websocket.query_params['api_key']}"
        if supplied != f"Bearer {config.api_key}":
            await websocket.send_denial_response(
                JSONResponse({"detail": "missing or invalid API key"}, status_code=401)
            )
            return
        hosted = conversations.get(conversation_id)
        if hosted is None:
            await websocket.send_denial_response(
                JSONResponse(
                    {"detail": f"no conversation {conversation_id!r}"}, status_code=404
                )
            )
            return

        try:
            since = int(websocket.query_params.get("since", 0))
        except ValueError:
            since = 0
        await websocket.accept()
        subscriber, snapshot = hosted.subscribe(config.subscriber_queue_size)
        try:
            for frame in snapshot[since:]:
                await websocket.send_json(frame)
            while True:
                if subscriber.overflowed:
                    await websocket.close(
                        code=WS_CLOSE_SUBSCRIBER_TOO_SLOW,
                        reason="subscriber too slow; reconnect with ?since=",
                    )
                    return
                try:
                    frame = await anyio.to_thread.run_sync(
                        _get_with_timeout, subscriber.frames
                    )
                except queue.Empty:
                    continue
                await websocket.send_json(frame)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            hosted.unsubscribe(subscriber)

    if config.console_dir is not None:
        from fastapi.staticfiles import StaticFiles

        # Static assets only; the console itself talks to the API with the
        # key the operator gives it.  Mounts sit outside the auth dependency.
        app.mount(
            "/console",
            StaticFiles(directory=config.console_dir, html=True),
            name="console",
        )

    return app


def _get_with_timeout(frames: "queue.Queue[dict]") -> dict:
    return frames.get(timeout=0.1)


def serve(config: ServerConfig, host: str = "127.0.0.1", port: int = 8000) -> None:
    """Run the server under uvicorn (blocking)."""
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level="info")


def wait_until_ready(base_url: str, api_key: str, timeout_s: float = 30.0) -> bool:
    """Poll the health endpoint until the server answers."""
    import httpx

    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        try:
            response = httpx.get(
                f"{base_url}/health",
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=2.0,
            )
            if response.status_code == 200:
                return True
        except httpx.HTTPError:
            pass
        time.sleep(0.2)
    return False

"""Where agent side effects land: a local directory or a remote server.

Both workspace flavors expose the same three operations (run a command,
upload a file, download a file), so conversations and tools never care which
one they are talking to.  The :class:`Workspace` factory picks the flavor
from its arguments: give it a host (or a server client) and you get a remote
workspace, otherwise a local one rooted at ``workspace/project``.
"""

from __future__ import annotations

import os
import shlex
import signal
import subprocess
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator, Mapping, Protocol

from .errors import AgentRtError

DEFAULT_WORKING_DIR = "workspace/project"
DEFAULT_COMMAND_TIMEOUT_S = 120.0


class WorkspaceError(AgentRtError):
    pass


class PathEscape(WorkspaceError):
    """A path resolved outside the workspace root."""


class CommandTimeout(WorkspaceError):
    """The command exceeded its deadline; its process group was killed."""

    def __init__(self, seconds: float, stdout: str = "", stderr: str = "") -> None:
        super().__init__(f"command timed out after {seconds:g}s")
        self.seconds = seconds
        self.stdout = stdout
        self.stderr = stderr


class SpawnFailure(WorkspaceError):
    """The command could not be started at all."""


class FileMissing(WorkspaceError):
    """Download target does not exist."""


class ServerUnreachable(WorkspaceError):
    """The remote side did not answer."""


@dataclass(frozen=True, slots=True)
class CommandOutput:
    exit_code: int
    stdout: str
    stderr: str
    duration_ms: int


class ServerClient(Protocol):
    """Minimal transport a remote workspace or conversation needs.

    Implementations live in :mod:`agentrt.server.client`; anything with the
    same shape (an in-process test client, for instance) works too.
    """

    def request(
        self,
        method: str,
        path: str,
        *,
        json: Any = None,
        params: Mapping[str, Any] | None = None,
        content: bytes | None = None,
    ) -> Any: ...

    def ws_events(self, conversation_id: str, since: int) -> Iterator[dict]: ...


def resolve_inside(root: Path, candidate: str | Path) -> Path:
    """Resolve ``candidate`` (absolute or root-relative) inside ``root``.

    Raises PathEscape when the result would leave the root, including via
    ``..`` hops and symlinked parents.
    """
    root = root.resolve()
    path = Path(candidate)
    if not path.is_absolute():
        path = root / path
    resolved = path.resolve()
    if resolved != root and root not in resolved.parents:
        raise PathEscape(f"{candidate} resolves outside the workspace root")
    return resolved


def _decode(data: bytes | None) -> str:
    return (data or b"").decode("utf-8", errors="replace")


class LocalWorkspace:
    """Runs commands and holds files under one local directory."""

    def __init__(self, working_dir: str | Path = DEFAULT_WORKING_DIR) -> None:
        self.working_dir = Path(working_dir)

    def __enter__(self) -> "LocalWorkspace":
        self.working_dir.mkdir(parents=True, exist_ok=True)
        return self

    def __exit__(self, *exc_info: Any) -> None:
        return None

    def execute_command(
        self,
        command: str,
        timeout: float | None = None,
        env: Mapping[str, str] | None = None,
    ) -> CommandOutput:
        """Run ``command`` through the shell in the working directory.

        The child gets its own session so a timeout can kill the whole
        process group, not just the shell.
        """
        timeout = DEFAULT_COMMAND_TIMEOUT_S if timeout is None else timeout
        self.working_dir.mkdir(parents=True, exist_ok=True)
        full_env = dict(os.environ)
        if env:
            full_env.update(env)
        started = time.monotonic()
        try:
            process = subprocess.Popen(
                command,
                shell=True,
                cwd=self.working_dir,
                env=full_env,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                start_new_session=True,
            )
        except OSError as exc:
            raise SpawnFailure(f"could not start {command!r}: {exc}") from exc
        try:
            stdout, stderr = process.communicate(timeout=timeout)
        except subprocess.TimeoutExpired:
            try:
                os.killpg(os.getpgid(process.pid), signal.SIGKILL)
            except (ProcessLookupError, PermissionError):
                pass
            stdout, stderr = process.communicate()
            raise CommandTimeout(timeout, _decode(stdout), _decode(stderr))
        duration_ms = int((time.monotonic() - started) * 1000)
        return CommandOutput(
            exit_code=process.returncode,
            stdout=_decode(stdout),
            stderr=_decode(stderr),
            duration_ms=duration_ms,
        )

    def file_upload(self, path: str | Path, content: bytes) -> Path:
        target = resolve_inside(self.working_dir, path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(content)
        return target

    def file_download(self, path: str | Path) -> bytes:
        target = resolve_inside(self.working_dir, path)
        if not target.is_file():
            raise FileMissing(f"{path} does not exist in the workspace")
        return target.read_bytes()


class RemoteWorkspace:
    """Same operations, proxied to an agent server.

    ``working_dir`` scopes every call server-side; conversations created
    against a server get one derived from the conversation id.
    """

    def __init__(
        self,
        host: str | None = None,
        *,
        api_key: str | None = None,
        working_dir: str | None = None,
        client: ServerClient | None = None,
    ) -> None:
        if client is None:
            if host is None:
                raise WorkspaceError("remote workspace needs a host or a client")
            from .server.client import HttpServerClient

            client = HttpServerClient(host, api_key=api_key)
        self.client = client
        self.host = host
        self.working_dir = working_dir
        self._created_remote_dir = False

    def scoped(self, working_dir: str) -> "RemoteWorkspace":
        """A copy of this workspace bound to a server-side directory."""
        return RemoteWorkspace(self.host, working_dir=working_dir, client=self.client)

    def _path_param(self, path: str | Path) -> str:
        path = str(path)
        if self.working_dir and not path.startswith("/"):
            return f"{self.working_dir}/{path}"
        return path

    def execute_command(
        self,
        command: str,
        timeout: float | None = None,
        env: Mapping[str, str] | None = None,
    ) -> CommandOutput:
        if env:
            # Environment travels inside the command line; values never
            # appear in output unless the command prints them itself.
            exports = " ".join(
                f"{name}={shlex.quote(value)}" for name, value in sorted(env.items())
            )
            command = f"export {exports}; {command}"
        timeout = DEFAULT_COMMAND_TIMEOUT_S if timeout is None else timeout
        payload: dict[str, Any] = {
            "command": command,
            "timeout_ms": int(timeout * 1000),
        }
        if self.working_dir:
            payload["working_dir"] = self.working_dir
        response = self.client.request("POST", "/execute", json=payload)
        if response.status_code == 408:
            raise CommandTimeout(timeout)
        if response.status_code >= 400:
            raise WorkspaceError(
                f"execute failed with {response.status_code}: {response.text}"
            )
        body = response.json()
        return CommandOutput(
            exit_code=body["exit_code"],
            stdout=body["stdout"],
            stderr=body["stderr"],
            duration_ms=body["duration_ms"],
        )

    def file_upload(self, path: str | Path, content: bytes) -> str:
        remote_path = self._path_param(path)
        response = self.client.request(
            "PUT", "/files", params={"path": remote_path}, content=content
        )
        if response.status_code >= 400:
            raise WorkspaceError(
                f"upload failed with {response.status_code}: {response.text}"
            )
        return remote_path

    def file_download(self, path: str | Path) -> bytes:
        response = self.client.request(
            "GET", "/files", params={"path": self._path_param(path)}
        )
        if response.status_code == 404:
            raise FileMissing(f"{path} does not exist on the server")
        if response.status_code >= 400:
            raise WorkspaceError(
                f"download failed with {response.status_code}: {response.text}"
            )
        return response.content

    def __enter__(self) -> "RemoteWorkspace":
        if self.working_dir:
            response = self.client.request(
                "POST", "/execute", json={"command": f"mkdir -p {shlex.quote(self.working_dir)}"}
            )
            self._created_remote_dir = response.status_code < 400
        return self

    def __exit__(self, *exc_info: Any) -> None:
        if self._created_remote_dir and self.working_dir:
            self.client.request("DELETE", "/files", params={"path": self.working_dir})


class Workspace:
    """Factory: remote when given a host or client, local otherwise.

    >>> Workspace()                          # doctest: +SKIP
    LocalWorkspace under workspace/project
    >>> Workspace(host="http://agents:8000", api_key="k")  # doctest: +SKIP
    RemoteWorkspace against http://agents:8000
    """

    def __new__(  # type: ignore[misc]
        cls,
        working_dir: str | Path | None = None,
        *,
        host: str | None = None,
        api_key: str | None = None,
        client: ServerClient | None = None,
    ) -> "LocalWorkspace | RemoteWorkspace":
        if host is not None or client is not None:
            return RemoteWorkspace(
                host,
                api_key=api_key,
                working_dir=str(working_dir) if working_dir else None,
                client=client,
            )
        return LocalWorkspace(working_dir or DEFAULT_WORKING_DIR)


class DockerWorkspace:
    """Remote workspace that first boots an agent server in a container.

    Needs a working ``docker`` binary and a server image; everything after
    startup is plain :class:`RemoteWorkspace` behavior.  Kept deliberately
    thin: environments without Docker get a clear error instead of a
    half-working shim.
    """

    def __init__(
        self,
        image: str,
        *,
        api_key: str,
        port: int = 8010,
        startup_timeout_s: float = 60.0,
        working_dir: str | None = None,
    ) -> None:
        self.image = image
        self.api_key = api_key
        self.port = port
        self.startup_timeout_s = startup_timeout_s
        self.working_dir = working_dir
        self.container_id: str | None = None
        self._remote: RemoteWorkspace | None = None

    def __enter__(self) -> RemoteWorkspace:
        try:
            started = subprocess.run(
                ["docker", "run", "-d", "-p", f"{self.port}:8000",
                 "-e", f"AGENTRT_API_KEY={self.api_key}", self.image],
                capture_output=True, text=True, check=True,
            )
        except (OSError, subprocess.CalledProcessError) as exc:
            raise WorkspaceError(f"could not start container: {exc}") from exc
        self.container_id = started.stdout.strip()
        host = f"http://127.0.0.1:{self.port}"
        remote = RemoteWorkspace(host, api_key=self.api_key, working_dir=self.working_dir)
        deadline = time.monotonic() + self.startup_timeout_s
        while time.monotonic() < deadline:
            try:
                if remote.client.request("GET", "/health").status_code == 200:
                    self._remote = remote
                    return remote
            except Exception:
                pass
            time.sleep(0.5)
        self.__exit__(None, None, None)
        raise ServerUnreachable(f"server in {self.image} never became healthy")

    def __exit__(self, *exc_info: Any) -> None:
        if self.container_id:
            subprocess.run(
                ["docker", "rm", "-f", self.container_id],
                capture_output=True, check=False,
            )
            self.container_id = None

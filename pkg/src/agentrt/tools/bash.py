"""Shell execution tool.

Two modes.  The default spawns one process per call through the workspace
(local subprocess or remote server).  ``persistent: true`` keeps a single
bash process alive across calls instead, so environment variables, cwd
changes, and background jobs survive between steps; output is fenced with a
sentinel to recover the exit code.

Secrets are injected as environment variables only when the command actually
names them, and everything the process prints is masked before the model or
the log sees it.
"""

from __future__ import annotations

import os
import select
import shlex
import signal
import subprocess
import time
import uuid
from pathlib import Path
from typing import Mapping

from ..secrets import SecretRegistry
from ..workspace import (
    CommandOutput,
    CommandTimeout,
    LocalWorkspace,
    RemoteWorkspace,
    SpawnFailure,
)
from .base import Action, Observation, ToolContext, ToolDefinition, ToolSpec, register_tool

DEFAULT_TIMEOUT_S = 120.0
HEAD_BYTES = 30 * 1024
TAIL_BYTES = 10 * 1024

BASH_SCHEMA = {
    "type": "object",
    "description": "Run a shell command in the workspace.",
    "properties": {
        "command": {
            "type": "string",
            "minLength": 1,
            "description": "The command to execute.",
        },
    },
    "required": ["command"],
}


def truncate_middle(text: str, head: int = HEAD_BYTES, tail: int = TAIL_BYTES) -> str:
    """Keep the first ``head`` and last ``tail`` bytes of oversized output."""
    data = text.encode("utf-8", errors="replace")
    if len(data) <= head + tail:
        return text
    omitted = len(data) - head - tail
    front = data[:head].decode("utf-8", errors="replace")
    back = data[-tail:].decode("utf-8", errors="replace")
    return f"{front}\n[... output truncated: {omitted} bytes omitted ...]\n{back}"


def render_command_output(output: CommandOutput, head: int, tail: int) -> str:
    merged = output.stdout
    if output.stderr:
        if merged and not merged.endswith("\n"):
            merged += "\n"
        merged += f"[stderr]\n{output.stderr}"
    merged = merged.rstrip("\n")
    body = truncate_middle(merged, head, tail) if merged else "(no output)"
    return f"{body}\n[exit code: {output.exit_code}]"


class BashSession:
    """One long-lived bash process, commands fenced by sentinels.

    stderr is merged into stdout (a single interleaved transcript is what a
    shell user sees anyway).  A timeout kills the whole process group and
    the next call transparently starts a fresh shell.
    """

    def __init__(self, working_dir: Path) -> None:
        self.working_dir = working_dir
        self._process: subprocess.Popen | None = None

    def _ensure_process(self) -> subprocess.Popen:
        if self._process is None or self._process.poll() is not None:
            self.working_dir.mkdir(parents=True, exist_ok=True)
            try:
                self._process = subprocess.Popen(
                    ["bash", "--norc", "--noprofile"],
                    cwd=self.working_dir,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.STDOUT,
                    start_new_session=True,
                )
            except OSError as exc:
                raise SpawnFailure(f"could not start bash: {exc}") from exc
        return self._process

    def close(self) -> None:
        process = self._process
        self._process = None
        if process is not None and process.poll() is None:
            try:
                os.killpg(os.getpgid(process.pid), signal.SIGKILL)
            except (ProcessLookupError, PermissionError):
                pass
            process.wait()

    def run(
        self,
        command: str,
        timeout: float,
        env: Mapping[str, str] | None = None,
    ) -> CommandOutput:
        process = self._ensure_process()
        sentinel = f"__done_{uuid.uuid4().hex}__"
        prefix = ""
        if env:
            exports = " ".join(
                f"{k}={shlex.quote(v)}" for k, v in sorted(env.items())
            )
            prefix = f"export {exports}\n"
        script = f"{prefix}{command}\nprintf '%s %s\\n' {sentinel} $?\n"
        started = time.monotonic()
        assert process.stdin is not None and process.stdout is not None
        try:
            process.stdin.write(script.encode())
            process.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self.close()
            raise SpawnFailure(f"bash session died: {exc}") from exc

        deadline = started + timeout
        buffer = b""
        fd = process.stdout.fileno()
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                partial = buffer.decode("utf-8", errors="replace")
                self.close()
                raise CommandTimeout(timeout, stdout=partial)
            ready, _, _ = select.select([fd], [], [], min(remaining, 0.25))
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                # The shell itself ended (an `exit`, a crash, a kill).  Report
                # its exit status as the command's; the next call starts a
                # fresh session.
                partial = buffer.decode("utf-8", errors="replace")
                process.wait()
                code = process.returncode if process.returncode is not None else -1
                self.close()
                return CommandOutput(
                    exit_code=code,
                    stdout=partial,
                    stderr="",
                    duration_ms=int((time.monotonic() - started) * 1000),
                )
            buffer += chunk
            marker = buffer.find(sentinel.encode())
            if marker != -1:
                line_end = buffer.find(b"\n", marker)
                if line_end == -1:
                    continue
                status_text = buffer[marker + len(sentinel) : line_end].strip()
                output = buffer[:marker].decode("utf-8", errors="replace")
                try:
                    exit_code = int(status_text)
                except ValueError:
                    exit_code = -1
                duration_ms = int((time.monotonic() - started) * 1000)
                return CommandOutput(
                    exit_code=exit_code,
                    stdout=output,
                    stderr="",
                    duration_ms=duration_ms,
                )


def _mask(registry: SecretRegistry | None, text: str) -> str:
    return registry.mask(text) if registry else text


def build_bash_tool(spec: ToolSpec, context: ToolContext) -> ToolDefinition:
    params = spec.params
    timeout_s = float(params.get("timeout_s", DEFAULT_TIMEOUT_S))
    head = int(params.get("truncate_head_bytes", HEAD_BYTES))
    tail = int(params.get("truncate_tail_bytes", TAIL_BYTES))
    persistent = bool(params.get("persistent", False))

    workspace = context.workspace or LocalWorkspace(context.working_dir)
    session = BashSession(Path(context.working_dir)) if persistent else None

    def execute(action: Action) -> Observation:
        command = action.arguments["command"]
        registry = context.secret_registry
        env = registry.scan_and_env(command) if registry else {}
        try:
            if session is not None:
                output = session.run(command, timeout_s, env=env)
            else:
                output = workspace.execute_command(command, timeout=timeout_s, env=env)
        except CommandTimeout as exc:
            partial = _mask(registry, truncate_middle(exc.stdout + exc.stderr, head, tail))
            text = f"Command timed out after {timeout_s:g}s and was killed."
            if partial.strip():
                text += f"\nPartial output:\n{partial}"
            return Observation(
                tool_name="bash",
                llm_text=text,
                result={
                    "exit_code": None,
                    "timed_out": True,
                    "partial_output": partial,
                },
                is_error=True,
            )

        result = {
            "exit_code": output.exit_code,
            "stdout": _mask(registry, output.stdout),
            "stderr": _mask(registry, output.stderr),
            "duration_ms": output.duration_ms,
        }
        llm_text = _mask(registry, render_command_output(output, head, tail))
        return Observation(
            tool_name="bash",
            llm_text=llm_text,
            result=result,
            is_error=output.exit_code != 0,
        )

    description = (
        "Run a shell command in the workspace. Commands run "
        + ("in one persistent shell session." if persistent else "independently.")
        + " Output is truncated when very long."
    )
    return ToolDefinition(
        name="bash",
        description=description,
        action_schema=BASH_SCHEMA,
        executor=execute,
    )


register_tool("bash", build_bash_tool)

# Re-exported for tests and embedders that drive sessions directly.
__all__ = [
    "BASH_SCHEMA",
    "BashSession",
    "build_bash_tool",
    "render_command_output",
    "truncate_middle",
]

"""Client side of the environment line protocol.

One json object per line in both directions. A connection is either a TCP
socket to a running server or a spawned server subprocess spoken to over its
standard streams. Structured error responses ({"ok": false, ...}) and
transport trouble both surface as ProtocolError; the connection survives the
former, so callers can keep using it after a rejected request.
"""

from __future__ import annotations

import json
import shlex
import socket
import subprocess
from dataclasses import dataclass
from typing import Optional

CONNECT_TIMEOUT = 10.0


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class Reply:
    episode: int
    step: int
    prompt: str
    reward: Optional[float]
    verifier: Optional[str]
    done: bool
    penalty: float


def _reply(payload: dict) -> Reply:
    try:
        return Reply(
            episode=payload["episode"],
            step=payload["step"],
            prompt=payload["prompt"],
            reward=payload["reward"],
            verifier=payload["verifier"],
            done=payload["done"],
            penalty=payload["penalty"],
        )
    except KeyError as exc:
        raise ProtocolError(f"response is missing field {exc}") from exc


class ServerConnection:
    """One protocol session. Not thread-safe; a worker owns its connection."""

    def __init__(self, reader, writer, sock=None, proc=None):
        self._reader = reader
        self._writer = writer
        self._sock = sock
        self._proc = proc

    @classmethod
    def connect(cls, server: str) -> "ServerConnection":
        transport, _, rest = server.partition(":")
        if transport == "tcp":
            host, _, port = rest.rpartition(":")
            if not host or not port.isdigit():
                raise ProtocolError("tcp server must be 'tcp:HOST:PORT'")
            try:
                sock = socket.create_connection((host, int(port)), timeout=CONNECT_TIMEOUT)
            except OSError as exc:
                raise ProtocolError(f"cannot connect to {rest}: {exc}") from exc
            sock.settimeout(None)
            return cls(
                reader=sock.makefile("r", encoding="utf-8", newline="\n"),
                writer=sock.makefile("w", encoding="utf-8", newline="\n"),
                sock=sock,
            )
        if transport == "stdio":
            command = shlex.split(rest)
            if not command:
                raise ProtocolError("stdio server needs a command to run")
            try:
                proc = subprocess.Popen(
                    command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    encoding="utf-8",
                )
            except OSError as exc:
                raise ProtocolError(f"cannot spawn {command[0]!r}: {exc}") from exc
            return cls(reader=proc.stdout, writer=proc.stdin, proc=proc)
        raise ProtocolError(f"unknown transport {transport!r} (use 'tcp:' or 'stdio:')")

    def request(self, obj: dict) -> dict:
        try:
            self._writer.write(json.dumps(obj, ensure_ascii=False))
            self._writer.write("\n")
            self._writer.flush()
            line = self._reader.readline()
        except (OSError, ValueError) as exc:
            raise ProtocolError(f"transport failure: {exc}") from exc
        if not line:
            raise ProtocolError("server closed the connection")
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"server sent a non-json line: {exc.msg}") from exc
        if not isinstance(payload, dict):
            raise ProtocolError("server response must be an object")
        if not payload.get("ok"):
            raise ProtocolError(str(payload.get("error", "unspecified server error")))
        return payload

    def reset(self, env_config: dict, seed: Optional[int] = None) -> Reply:
        request: dict = {"op": "reset", "config": dict(env_config)}
        if seed is not None:
            request["seed"] = seed
        return _reply(self.request(request))

    def step(self, episode: int, text: str) -> Reply:
        return _reply(self.request({"op": "step", "episode": episode, "text": text}))

    def info(self, episode: int) -> Reply:
        return _reply(self.request({"op": "info", "episode": episode}))

    def close(self):
        for stream in (self._writer, self._reader):
            try:
                stream.close()
            except OSError:
                pass
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        if self._proc is not None:
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self) -> "ServerConnection":
        return self

    def __exit__(self, *exc_info):
        self.close()

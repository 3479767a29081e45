"""Bridge configuration: connection targets, retry policy, episode settings.

The file format follows the probe package's convention: a json object with a
version field and named sections, where unknown keys are errors so a typo
cannot silently change a run. Section "bridge" maps onto the fields below;
section "env" is carried verbatim as the reset config and validated by the
server, never here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

CONFIG_VERSION = 1

TRANSPORTS = ("tcp", "stdio")


class BridgeConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BridgeConfig:
    # where the environment server lives: "tcp:HOST:PORT" connects to a
    # running server, "stdio:<command>" spawns one per connection
    server: str
    # chat-completions URL for the default HTTP adapter; tests inject
    # endpoint objects instead and leave this empty
    endpoint: str = ""
    model: str = ""
    # name of the environment variable holding the bearer token; the
    # configuration never contains the credential itself
    credential_env: str = ""
    # extra attempts after a failed endpoint call; once exhausted the turn
    # is submitted as empty text and the server grades it
    max_retries: int = 3
    backoff_base: float = 0.5  # seconds; attempt k waits base * 2**k
    temperature: float = 0.0
    # client-side mirror of the server's per-episode cap, so a silent or
    # non-terminating server cannot hang a worker
    turn_cap: int = 64
    workers: int = 1  # concurrent episodes, one connection each
    seed: int = 0  # per-episode reset seeds derive from this
    env: dict = field(default_factory=dict)

    def __post_init__(self):
        transport, _, rest = self.server.partition(":")
        if transport not in TRANSPORTS or not rest.strip():
            raise BridgeConfigError(
                "server must be 'tcp:HOST:PORT' or 'stdio:<server command>'"
            )
        if self.max_retries < 0:
            raise BridgeConfigError("max_retries must be >= 0")
        if self.backoff_base < 0:
            raise BridgeConfigError("backoff_base must be >= 0")
        if self.temperature < 0:
            raise BridgeConfigError("temperature must be >= 0")
        if self.turn_cap < 1:
            raise BridgeConfigError("turn_cap must be >= 1")
        if self.workers < 1:
            raise BridgeConfigError("workers must be >= 1")
        if not isinstance(self.env, dict):
            raise BridgeConfigError("env must be an object")


_BRIDGE_KEYS = {f.name for f in fields(BridgeConfig)} - {"env"}
_SECTIONS = {"version", "bridge", "env"}


def load_bridge_config(path: str) -> BridgeConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise BridgeConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise BridgeConfigError(f"config is not valid json: {exc}") from exc
    if not isinstance(data, dict):
        raise BridgeConfigError("config root must be an object")
    if data.get("version") != CONFIG_VERSION:
        raise BridgeConfigError(f"config version must be {CONFIG_VERSION}")
    for key in data:
        if key not in _SECTIONS:
            raise BridgeConfigError(f"unknown config key {key!r}")

    bridge = data.get("bridge", {})
    if not isinstance(bridge, dict):
        raise BridgeConfigError("'bridge' must be an object")
    for key in bridge:
        if key not in _BRIDGE_KEYS:
            raise BridgeConfigError(f"unknown config key 'bridge.{key}'")
    if "server" not in bridge:
        raise BridgeConfigError("bridge.server is required")

    env = data.get("env", {})
    if not isinstance(env, dict):
        raise BridgeConfigError("'env' must be an object")
    return BridgeConfig(env=env, **bridge)

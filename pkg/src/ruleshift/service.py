"""Line-delimited JSON protocol exposing environments to external agents.

One JSON object per line, over standard streams or TCP. Requests:

    {"op": "reset", "config": {...}, "seed": <optional int>}
    {"op": "step", "episode": <id>, "text": "<model output>"}
    {"op": "info", "episode": <id>}

Responses always carry ok/episode/step/prompt/reward/verifier/done (plus
penalty on steps, nonzero only when a step limit ends the episode); errors
are {"ok": false, "error": "..."} and keep the connection alive. The prompt
field is always the exact concatenation the next model call must answer,
byte-equal to the in-process prompt builder's output for that episode state.

Episode ids come from one process-wide allocator; each connection owns its
episodes. When reset carries no seed, the episode seed is master_seed +
episode id, so a recorded request log replays byte-identically against a
fresh server started with the same master seed.
"""

from __future__ import annotations

import json
import socketserver
import sys
import threading
from dataclasses import dataclass, field
from typing import IO, Optional

from . import revision
from .gp_env import GeneralPointsEnv, RuleConfig
from .nav_env import (
    DEFAULT_LANDMARK_POOL,
    HOLDOUT_LANDMARK_POOL,
    NavEnvConfig,
    NavigationEnv,
    RouteConfig,
)


class ConfigError(ValueError):
    pass


_GP_KEYS = {
    "env",
    "variant",
    "face_rule",
    "target",
    "sampling",
    "colors",
    "max_verify_steps",
    "recognition",
}
_NAV_KEYS = {
    "env",
    "variant",
    "action_space",
    "detection",
    "turning_points",
    "min_straight",
    "max_straight_road_length",
    "landmark_probability",
    "landmark_pool",
    "verify_cap",
}
_POOLS = {"default": DEFAULT_LANDMARK_POOL, "holdout": HOLDOUT_LANDMARK_POOL}


def build_env(config: dict):
    """Instantiate an environment from a declarative config mapping.

    Unknown keys are errors naming the key; value errors surface the
    underlying validation message.
    """
    if not isinstance(config, dict):
        raise ConfigError("config must be an object")
    kind = config.get("env")
    if kind == "gp":
        allowed = _GP_KEYS
    elif kind == "nav":
        allowed = _NAV_KEYS
    else:
        raise ConfigError("config.env must be 'gp' or 'nav'")
    for key in config:
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r} for env {kind!r}")
    try:
        if kind == "gp":
            rule = RuleConfig(
                face_rule=config.get("face_rule", "all_ten"),
                target=config.get("target", 24),
                sampling=config.get("sampling", "uniform"),
                colors=config.get("colors", "all"),
                max_verify_steps=config.get("max_verify_steps", 5),
                recognition_enabled=config.get("recognition", False),
            )
            return GeneralPointsEnv(rule, variant=config.get("variant", "l"))
        pool_name = config.get("landmark_pool", "default")
        if pool_name not in _POOLS:
            raise ConfigError(
                f"config.landmark_pool must be one of {sorted(_POOLS)}"
            )
        route_config = RouteConfig(
            turning_points=config.get("turning_points", 2),
            min_straight=config.get("min_straight", 1),
            max_straight_road_length=config.get("max_straight_road_length", 4),
            landmark_probability=config.get("landmark_probability", 1.0),
            landmark_pool=_POOLS[pool_name],
        )
        return NavigationEnv(
            NavEnvConfig(
                action_space=config.get("action_space", "absolute"),
                route_config=route_config,
                detection_enabled=config.get("detection", False),
                verify_cap=config.get("verify_cap", 2),
                variant=config.get("variant", "l"),
            )
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# --- server state -------------------------------------------------------------------


class Allocator:
    """Process-wide episode id / seed source; the only shared mutable state."""

    def __init__(self, master_seed: int = 0):
        self.master_seed = master_seed
        self._lock = threading.Lock()
        self._next = 0

    def allocate(self, seed: Optional[int]) -> tuple[int, int]:
        with self._lock:
            episode = self._next
            self._next += 1
        return episode, self.master_seed + episode if seed is None else seed


@dataclass
class _Episode:
    env: object
    state: object
    transcript: revision.Transcript
    done: bool = False


@dataclass
class Session:
    """One connection's view of the protocol: owns its episodes outright."""

    allocator: Allocator
    episodes: dict[int, _Episode] = field(default_factory=dict)

    def handle_line(self, line: str) -> str:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            return _dumps({"ok": False, "error": f"bad json: {exc.msg}"})
        if not isinstance(obj, dict):
            return _dumps({"ok": False, "error": "request must be an object"})
        return _dumps(self.handle(obj))

    def handle(self, request: dict) -> dict:
        op = request.get("op")
        try:
            if op == "reset":
                return self._reset(request)
            if op == "step":
                return self._step(request)
            if op == "info":
                return self._info(request)
        except ConfigError as exc:
            return {"ok": False, "error": str(exc)}
        except ValueError as exc:
            return {"ok": False, "error": str(exc)}
        return {"ok": False, "error": f"unknown op {op!r}"}

    def _reset(self, request: dict) -> dict:
        seed = request.get("seed")
        if seed is not None and not isinstance(seed, int):
            raise ConfigError("seed must be an integer")
        env = build_env(request.get("config", {}))
        episode, episode_seed = self.allocator.allocate(seed)
        state, system_prompt = env.reset(episode_seed)
        transcript = revision.Transcript(
            system_prompt=system_prompt, meta=env.episode_meta(state, episode_seed)
        )
        self.episodes[episode] = _Episode(env=env, state=state, transcript=transcript)
        return _response(episode, transcript, done=False)

    def _get(self, request: dict) -> tuple[int, _Episode]:
        episode = request.get("episode")
        if episode not in self.episodes:
            raise ValueError("unknown episode")
        return episode, self.episodes[episode]

    def _step(self, request: dict) -> dict:
        episode, record = self._get(request)
        text = request.get("text")
        if not isinstance(text, str):
            raise ValueError("step needs a string 'text' field")
        if record.done:
            raise ValueError("episode is already done")
        transcript = record.transcript
        t = len(transcript.turns)
        transcript.prompt_hashes.append(
            revision.prompt_hash(revision.build_prompt(transcript, t))
        )
        result = record.env.step(record.state, text)
        transcript.turns.append(
            revision.Turn(
                model_text=text,
                verifier_text=result.verifier_text,
                reward=result.reward,
                meta={"status": result.status} if result.status else {},
            )
        )
        transcript.step_limit_penalty += result.step_limit_penalty
        record.state = result.state
        if result.done:
            record.done = True
            transcript.status = result.status or revision.STATUS_FAILURE
        return _response(
            episode,
            transcript,
            done=result.done,
            reward=result.reward,
            verifier=result.verifier_text,
            penalty=result.step_limit_penalty,
        )

    def _info(self, request: dict) -> dict:
        episode, record = self._get(request)
        return _response(episode, record.transcript, done=record.done)


def _response(
    episode: int,
    transcript: revision.Transcript,
    *,
    done: bool,
    reward: Optional[float] = None,
    verifier: Optional[str] = None,
    penalty: float = 0.0,
) -> dict:
    step = len(transcript.turns)
    return {
        "ok": True,
        "episode": episode,
        "step": step,
        "prompt": revision.build_prompt(transcript, step),
        "reward": reward,
        "verifier": verifier,
        "done": done,
        "penalty": penalty,
    }


def _dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


# --- transports ---------------------------------------------------------------------


def serve_stdio(
    master_seed: int = 0,
    stdin: Optional[IO[str]] = None,
    stdout: Optional[IO[str]] = None,
) -> None:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    session = Session(Allocator(master_seed))
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(session.handle_line(line))
        stdout.write("\n")
        stdout.flush()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        session = Session(self.server.allocator)  # type: ignore[attr-defined]
        for raw in self.rfile:
            line = raw.decode("utf-8")
            if not line.strip():
                continue
            self.wfile.write(session.handle_line(line).encode("utf-8"))
            self.wfile.write(b"\n")


class ProtocolServer(socketserver.ThreadingTCPServer):
    """TCP transport: one session per connection, shared id allocator."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], master_seed: int = 0):
        super().__init__(address, _Handler)
        self.allocator = Allocator(master_seed)


def serve_tcp(host: str, port: int, master_seed: int = 0) -> None:
    with ProtocolServer((host, port), master_seed) as server:
        server.serve_forever()

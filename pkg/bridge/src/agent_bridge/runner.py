"""Episode driver: reset, relay the prompt, submit the raw completion, loop.

The bridge is deliberately dumb. It never parses, repairs, or judges model
output; the only transformation ever applied before submission is whitespace
trimming. Grading, rewards, and episode state all live server-side, so the
event log written here is byte-for-byte the log an in-process run of the
same policy text would produce for the same seeds.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from random import Random
from typing import IO, Callable, Optional

from .config import BridgeConfig
from .endpoint import ChatEndpoint, EndpointError, HttpChatEndpoint
from .protocol import ServerConnection


def episode_seeds(master_seed: int, count: int) -> list[int]:
    """One reset seed per episode index.

    Matches the probe CLI's documented eval derivation, so a bridge run and
    `eval --policy ... --seed S` visit the same instances.
    """
    rng = Random(master_seed)
    return [rng.randrange(2**31) for _ in range(count)]


def complete_with_retries(
    endpoint: ChatEndpoint,
    prompt: str,
    config: BridgeConfig,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """Endpoint text for one turn, or empty text once retries are exhausted.

    Only EndpointError is retried; anything else is a bug and propagates.
    The empty submission deliberately reaches the server so the episode
    still completes through the grader's malformed path.
    """
    for attempt in range(config.max_retries + 1):
        try:
            return endpoint.complete(prompt, config.temperature).strip()
        except EndpointError:
            if attempt < config.max_retries:
                sleep(config.backoff_base * 2**attempt)
    return ""


def run_episode(
    conn: ServerConnection,
    endpoint: ChatEndpoint,
    config: BridgeConfig,
    index: int,
    seed: int,
    sleep: Callable[[float], None] = time.sleep,
) -> dict:
    """One episode through the wire; returns {"episode": index, "events": [...]}."""
    reply = conn.reset(config.env, seed)
    episode = reply.episode
    events = [{"role": "system", "text": reply.prompt, "reward": None, "t": 0}]
    penalty = 0.0
    t = 0
    while t < config.turn_cap:
        text = complete_with_retries(endpoint, reply.prompt, config, sleep)
        reply = conn.step(episode, text)
        events.append({"role": "model", "text": text, "reward": None, "t": t})
        events.append(
            {"role": "verifier", "text": reply.verifier, "reward": reply.reward, "t": t}
        )
        penalty += reply.penalty
        t += 1
        if reply.done:
            break
    if penalty:
        events.append({"role": "verifier", "text": "", "reward": penalty, "t": t - 1})
    return {"episode": index, "events": events}


def run_agent(
    config: BridgeConfig,
    episode_count: int,
    endpoint: Optional[ChatEndpoint] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> list[dict]:
    """Drive episode_count episodes; returns records ordered by episode index.

    Workers each own one server connection and pull episode indices off a
    shared queue, so the log is deterministic for a fixed endpoint and seed
    regardless of worker count or scheduling. The endpoint is shared and may
    be called concurrently.
    """
    if episode_count < 0:
        raise ValueError("episode_count must be >= 0")
    live = (
        endpoint
        if endpoint is not None
        else HttpChatEndpoint(config.endpoint, config.model, config.credential_env)
    )
    seeds = episode_seeds(config.seed, episode_count)
    records: list[Optional[dict]] = [None] * episode_count
    todo: queue.SimpleQueue = queue.SimpleQueue()
    for index in range(episode_count):
        todo.put(index)
    failures: list[BaseException] = []

    def work():
        try:
            conn = ServerConnection.connect(config.server)
        except Exception as exc:  # noqa: BLE001 - reported to the caller below
            failures.append(exc)
            return
        try:
            while True:
                try:
                    index = todo.get_nowait()
                except queue.Empty:
                    return
                records[index] = run_episode(conn, live, config, index, seeds[index], sleep)
        except BaseException as exc:  # noqa: BLE001
            failures.append(exc)
        finally:
            conn.close()

    workers = min(config.workers, episode_count)
    threads = [
        threading.Thread(target=work, name=f"bridge-worker-{i}") for i in range(workers)
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    if failures:
        raise failures[0]
    return records  # type: ignore[return-value]


def write_log(records: list[dict], fh: IO[str]):
    """Shared event-log format: one episode object per line."""
    for record in records:
        fh.write(json.dumps(record, ensure_ascii=False))
        fh.write("\n")

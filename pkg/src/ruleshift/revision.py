"""Multi-attempt episode engine.

An episode is a growing text prompt: the system prompt, then alternating
model outputs and verifier messages. The prompt a policy sees at turn t is
exactly the system prompt plus all earlier (output, verifier) pairs joined
by single newlines; each turn's prompt hash is recorded so a stored
transcript can prove what the policy was conditioned on.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional

SEPARATOR = "\n"

STATUS_SUCCESS = "success"
STATUS_STEP_LIMIT = "step_limit"
STATUS_FAILURE = "failure"


@dataclass
class Turn:
    model_text: str
    verifier_text: str
    reward: float
    meta: dict = field(default_factory=dict)


@dataclass
class Transcript:
    system_prompt: str
    turns: list[Turn] = field(default_factory=list)
    status: Optional[str] = None
    step_limit_penalty: float = 0.0
    prompt_hashes: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def total_return(self) -> float:
        return sum(t.reward for t in self.turns) + self.step_limit_penalty


def build_prompt(transcript: Transcript, t: int) -> str:
    """Prompt visible to the model at turn t (t == 0 is the bare system prompt)."""
    if not 0 <= t <= len(transcript.turns):
        raise IndexError(f"turn {t} outside transcript of {len(transcript.turns)} turns")
    parts = [transcript.system_prompt]
    for turn in transcript.turns[:t]:
        parts.append(turn.model_text)
        parts.append(turn.verifier_text)
    return SEPARATOR.join(parts)


def prompt_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def verify_hashes(transcript: Transcript) -> bool:
    """Recompute every turn's prompt and compare against the stored hashes."""
    if len(transcript.prompt_hashes) != len(transcript.turns):
        return False
    return all(
        prompt_hash(build_prompt(transcript, t)) == stored
        for t, stored in enumerate(transcript.prompt_hashes)
    )


def run_episode(env, policy, seed: int, max_turns: Optional[int] = None) -> Transcript:
    """Drive one sequential-revision episode to termination.

    A policy that raises forfeits the turn: the model output is recorded as
    the empty string and grading proceeds on it.
    """
    state, system_prompt = env.reset(seed)
    transcript = Transcript(system_prompt=system_prompt, meta=env.episode_meta(state, seed))
    cap = max_turns if max_turns is not None else env.max_episode_turns_for(state)

    t = 0
    while t < cap:
        prompt = build_prompt(transcript, t)
        transcript.prompt_hashes.append(prompt_hash(prompt))
        try:
            text, logp, value = policy.act(prompt, state)
        except Exception as exc:  # noqa: BLE001 - a faulty policy must not kill the run
            text, logp, value = "", 0.0, 0.0
            fault = type(exc).__name__
        else:
            fault = None
        result = env.step(state, text)
        meta = {"logp": logp, "value": value}
        if fault is not None:
            meta["fault"] = fault
        if result.status is not None:
            meta["status"] = result.status
        transcript.turns.append(
            Turn(
                model_text=text,
                verifier_text=result.verifier_text,
                reward=result.reward,
                meta=meta,
            )
        )
        transcript.step_limit_penalty += result.step_limit_penalty
        state = result.state
        t += 1
        if result.done:
            transcript.status = result.status or STATUS_FAILURE
            break
    else:
        transcript.status = STATUS_FAILURE

    return transcript


# --- line-delimited event log --------------------------------------------------


def transcript_events(transcript: Transcript) -> Iterable[dict]:
    """One event per line: role, text, reward, t. Rewards sit on verifier events;
    a terminal cap penalty is an extra verifier event with empty text."""
    yield {"role": "system", "text": transcript.system_prompt, "reward": None, "t": 0}
    for t, turn in enumerate(transcript.turns):
        yield {"role": "model", "text": turn.model_text, "reward": None, "t": t}
        yield {"role": "verifier", "text": turn.verifier_text, "reward": turn.reward, "t": t}
    if transcript.step_limit_penalty:
        last = len(transcript.turns) - 1
        yield {"role": "verifier", "text": "", "reward": transcript.step_limit_penalty, "t": last}


def write_transcript_log(transcript: Transcript, fh: IO[str]):
    for event in transcript_events(transcript):
        fh.write(json.dumps(event, ensure_ascii=False))
        fh.write("\n")


def write_episode_log(transcripts: Iterable[Transcript], fh: IO[str]):
    """Multi-episode convention: one {"episode": k, "events": [...]} object per line."""
    for k, transcript in enumerate(transcripts):
        fh.write(
            json.dumps(
                {"episode": k, "events": list(transcript_events(transcript))},
                ensure_ascii=False,
            )
        )
        fh.write("\n")


def read_transcript_log(fh: IO[str]) -> Transcript:
    """Rebuild a transcript from its event log.

    Status and meta are not part of the log format; hashes are recomputed.
    """
    events = (json.loads(line) for line in fh if line.strip())
    return transcript_from_events(events)


def transcript_from_events(events: Iterable[dict]) -> Transcript:
    system_prompt = None
    turns: list[Turn] = []
    penalty = 0.0
    pending_model: Optional[str] = None
    for event in events:
        role = event["role"]
        if role == "system":
            system_prompt = event["text"]
        elif role == "model":
            pending_model = event["text"]
        elif role == "verifier":
            if pending_model is None:
                if event["text"] == "":
                    penalty += event["reward"]
                    continue
                raise ValueError("verifier event without a preceding model event")
            turns.append(Turn(pending_model, event["text"], event["reward"]))
            pending_model = None
        else:
            raise ValueError(f"unknown event role {role!r}")
    if system_prompt is None:
        raise ValueError("log has no system event")
    transcript = Transcript(system_prompt=system_prompt, turns=turns, step_limit_penalty=penalty)
    for t in range(len(turns)):
        transcript.prompt_hashes.append(prompt_hash(build_prompt(transcript, t)))
    return transcript

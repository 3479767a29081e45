"""Deterministic stand-ins for a chat model.

The expert endpoints re-derive correct behavior from the prompt text alone,
the way a capable model would: they read the rules, the hand, or the
instruction list out of the prompt and answer in the response format the
prompt itself specifies. Nothing here imports the probe package; the only
shared knowledge is the documented prompt and answer text.
"""

from __future__ import annotations

import json
import re
from fractions import Fraction

from agent_bridge.endpoint import EndpointError


class ScriptedEndpoint:
    """Fixed prompt -> completion lookup; an unknown prompt is a test bug."""

    def __init__(self, script: dict):
        self.script = dict(script)

    def complete(self, prompt: str, temperature: float) -> str:
        return self.script[prompt]


class ProseEndpoint:
    """Never follows the answer format; every turn is the same prose."""

    def __init__(self, text: str = "Let me think about this carefully, step by step."):
        self.text = text

    def complete(self, prompt: str, temperature: float) -> str:
        return self.text


class FlakyEndpoint:
    """Raises EndpointError a fixed number of times, then delegates."""

    def __init__(self, inner, failures: int):
        self.inner = inner
        self.remaining = failures
        self.calls = 0

    def complete(self, prompt: str, temperature: float) -> str:
        self.calls += 1
        if self.remaining > 0:
            self.remaining -= 1
            raise EndpointError("synthetic outage")
        return self.inner.complete(prompt, temperature)


class DownEndpoint:
    """Every call fails."""

    def __init__(self):
        self.calls = 0

    def complete(self, prompt: str, temperature: float) -> str:
        self.calls += 1
        raise EndpointError("synthetic outage")


# --- card game expert ---------------------------------------------------------------

_CARD_LIST = re.compile(r"Cards: \[([^\]]*)\]")
_QUOTED = re.compile(r"'([^']*)'")
_TARGET = re.compile(r"evaluates to (-?\d+)")

_ORDINAL = {"A": 1, "J": 11, "Q": 12, "K": 13}
_ALL_TEN = {"A": 1, "J": 10, "Q": 10, "K": 10}


def _rank_value(rank: str, face_rule: str) -> int:
    table = _ALL_TEN if face_rule == "all_ten" else _ORDINAL
    if rank in table:
        return table[rank]
    return int(rank)


def pairwise_formula(numbers, target) -> str | None:
    """Exhaustive pairwise reduction over exact rationals.

    Any arithmetic expression over four operands is reachable by repeatedly
    combining two available values, so this finds a formula whenever one
    exists.
    """
    goal = Fraction(target)

    def search(items):
        if len(items) == 1:
            value, expr = items[0]
            return expr if value == goal else None
        for i in range(len(items)):
            for j in range(len(items)):
                if i == j:
                    continue
                (a, expr_a), (b, expr_b) = items[i], items[j]
                rest = [items[k] for k in range(len(items)) if k != i and k != j]
                combos = [
                    (a + b, f"({expr_a}+{expr_b})"),
                    (a - b, f"({expr_a}-{expr_b})"),
                    (a * b, f"({expr_a}*{expr_b})"),
                ]
                if b != 0:
                    combos.append((a / b, f"({expr_a}/{expr_b})"))
                for value, expr in combos:
                    found = search(rest + [(value, expr)])
                    if found is not None:
                        return found
        return None

    return search([(Fraction(n), str(n)) for n in numbers])


class GpCardExpert:
    """Solves the card task from the prompt: hand, face rule, and target."""

    def complete(self, prompt: str, temperature: float) -> str:
        hand = _CARD_LIST.search(prompt)
        if hand is None:
            raise EndpointError("prompt carries no card list")
        ranks = _QUOTED.findall(hand.group(1))
        face_rule = "all_ten" if "count as '10'" in prompt else "ordinal"
        target = int(_TARGET.search(prompt).group(1))
        numbers = [_rank_value(rank, face_rule) for rank in ranks]
        formula = pairwise_formula(numbers, target)
        if formula is None:
            raise EndpointError(f"no formula over {numbers} reaches {target}")
        return json.dumps(
            {"cards": ranks, "number": numbers, "formula": f"{formula}={target}"}
        )


# --- navigation expert ----------------------------------------------------------------

_OA_LINE = re.compile(r"^O_\d+: (.*)$", re.MULTILINE)
_NUMBERED = re.compile(r"^\d+\. (.*)$", re.MULTILINE)
_FIRST_TURN = re.compile(r"^First, turn (.+) to face ([a-z]+)\.$")
_TURN = re.compile(r"^Turn (.+) to face ([a-z]+)\.$")
_MOVE_PLAIN = "Move forward until you reach next intersection."
_MOVE_NAMED = re.compile(
    r"^Move forward until you reach the next intersection where .+ is on your [a-z ]+\.$"
)
_MOVE_DEST = re.compile(
    r"^Move forward until the destination (.+) is on your ([a-z ]+)\.$"
)
_INTERSECTION = "You observe an intersection"


def _parse_instruction(text: str):
    matched = _FIRST_TURN.match(text) or _TURN.match(text)
    if matched:
        return ("turn", matched.group(1), matched.group(2))
    matched = _MOVE_DEST.match(text)
    if matched:
        return ("dest", matched.group(1), matched.group(2))
    if text == _MOVE_PLAIN or _MOVE_NAMED.match(text):
        return ("move", None, None)
    raise EndpointError(f"unrecognized instruction {text!r}")


class NavRouteExpert:
    """Follows the instruction list by replaying the observation history.

    Each O-line in the prompt marks one accepted action, so walking them
    recovers which instruction is active: a turn instruction completes with
    its observation, a move completes when the observation shows the
    instruction's terminal condition (an intersection, or the destination
    landmark clause).
    """

    def complete(self, prompt: str, temperature: float) -> str:
        try:
            instruction_block = prompt.split("[Instruction]", 1)[1].split(
                "[Action space]", 1
            )[0]
            space_block = prompt.split("[Action space]", 1)[1].split(
                "[Observations", 1
            )[0]
        except IndexError:
            raise EndpointError("prompt is missing the navigation sections") from None
        instructions = _NUMBERED.findall(instruction_block)
        if not instructions:
            raise EndpointError("prompt carries no numbered instructions")
        parsed = [_parse_instruction(text) for text in instructions]
        relative = "slightly left" in space_block
        observations = _OA_LINE.findall(prompt)
        if not observations:
            raise EndpointError("prompt carries no observation lines")

        index = 0
        for observation in observations[1:]:
            if index >= len(parsed):
                break
            kind, name, descriptor = parsed[index]
            if kind == "turn":
                index += 1
            elif kind == "move":
                if _INTERSECTION in observation:
                    index += 1
            else:  # destination leg
                if f"{name} is on your {descriptor}" in observation:
                    index += 1

        if index >= len(parsed):
            action = "stop()"
        else:
            kind, word, heading = parsed[index]
            if kind == "turn":
                action = f"turn_direction({word if relative else heading})"
            else:
                action = "forward()"
        answer = {
            "current observation": observations[-1],
            "current instruction": instructions[min(index, len(instructions) - 1)],
            "action": action,
        }
        return json.dumps(answer, ensure_ascii=False)

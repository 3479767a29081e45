"""System prompt rendering from the versioned text assets.

Templates live in assets/ and use string.Template substitution so the JSON
format blocks need no brace escaping. Rendered prompts never end with a
newline; episode growth appends "\n" + text chunks onto them.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from string import Template
from typing import Sequence

GP_TEMPLATE_ASSET = "gp_system_v1.txt"
NAV_TEMPLATE_ASSET = "nav_system_v1.txt"
ACTION_SPACE_ASSETS = {
    "absolute": "action_space_absolute_v1.txt",
    "relative": "action_space_relative_v1.txt",
}

# Verifier channel lines. The GP failure line and both nav lines are fixed
# wire constants; the GP success line is this implementation's counterpart to
# the failure line (emitted on a correct equation).
GP_FAILURE_LINE = "You failed this trial because your formula is incorrect."
GP_SUCCESS_LINE = "You succeeded this trial because your formula is correct."
NAV_CORRECT_LINE = "Correct solution."
NAV_INCORRECT_LINE = "Incorrect action."

RULE_CLAUSES = {
    "all_ten": "'J', 'Q', and 'K' count as '10'",
    "ordinal": "'J', 'Q', and 'K' count as '11', '12', and '13' respectively",
}


@lru_cache(maxsize=None)
def load_asset(name: str) -> str:
    text = resources.files("ruleshift").joinpath("assets").joinpath(name).read_text("utf-8")
    return text.rstrip("\n")


def render_card_list(ranks: Sequence[str]) -> str:
    return "[" + ", ".join(f"'{r}'" for r in ranks) + "]"


def render_gp_prompt(face_rule: str, target: int, ranks: Sequence[str] | None) -> str:
    """GP system prompt. ranks=None renders the image variant (no [Input])."""
    clause = RULE_CLAUSES[face_rule]
    if ranks is None:
        input_block = ""
    else:
        input_block = f"\n[Input]\n\nCards: {render_card_list(ranks)}\n"
    return Template(load_asset(GP_TEMPLATE_ASSET)).substitute(
        target=target, rule_clause=clause, input_block=input_block
    )


def render_instruction_block(instructions: Sequence[str]) -> str:
    return "\n".join(f"{i + 1}. {text}" for i, text in enumerate(instructions))


def render_oa_line(index: int, observation: str) -> str:
    return f"O_{index}: {observation}"


def render_action_cue(index: int) -> str:
    return f"A_{index}:"


def render_nav_prompt(instructions: Sequence[str], action_space: str, first_observation: str) -> str:
    block = load_asset(ACTION_SPACE_ASSETS[action_space])
    oa = render_oa_line(1, first_observation) + "\n" + render_action_cue(1)
    return Template(load_asset(NAV_TEMPLATE_ASSET)).substitute(
        instructions=render_instruction_block(instructions),
        action_space=block,
        oa_block=oa,
    )

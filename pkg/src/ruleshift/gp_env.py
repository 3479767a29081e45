"""Arithmetic card game environment.

Four cards are dealt; the goal is a formula that evaluates to the target
(24 by default) using each card's number exactly once. Face cards map to
numbers under one of two rules, which is the axis the generalization
experiments shift at evaluation time. Feedback is a verifier line plus a
scalar reward per attempt, with sequential revision up to a step cap.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from random import Random
from typing import Optional, Sequence

from . import prompts
from .answers import parse_answer_text
from .equation import (
    BinOp,
    DivisionByZero,
    Lit,
    Node,
    Verdict,
    VerdictClass,
    classify,
    render,
)

RANKS = ("A", "2", "3", "4", "5", "6", "7", "8", "9", "10", "J", "Q", "K")
SUITS = ("spades", "hearts", "diamonds", "clubs")
BLACK_SUITS = ("spades", "clubs")
RED_SUITS = ("hearts", "diamonds")

FACE_RULES = ("all_ten", "ordinal")

_BASE_VALUE = {r: i + 1 for i, r in enumerate(RANKS)}  # A=1 ... K=13


class SamplingExhausted(RuntimeError):
    """Rejection sampling hit its attempt cap without a valid quadruple."""


def map_card(rank: str, face_rule: str) -> int:
    """Number a rank stands for under the given face-card rule."""
    if rank not in _BASE_VALUE:
        raise ValueError(f"unknown rank {rank!r}")
    if face_rule not in FACE_RULES:
        raise ValueError(f"unknown face rule {face_rule!r}")
    value = _BASE_VALUE[rank]
    if face_rule == "all_ten" and value > 10:
        return 10
    return value


@dataclass(frozen=True)
class Card:
    rank: str
    suit: str

    @property
    def color(self) -> str:
        return "black" if self.suit in BLACK_SUITS else "red"

    def label(self) -> str:
        return f"{self.rank} of {self.suit}"


def full_deck(colors: str = "all") -> list[Card]:
    if colors == "black":
        suits = BLACK_SUITS
    elif colors == "red":
        suits = RED_SUITS
    elif colors == "all":
        suits = SUITS
    else:
        raise ValueError(f"unknown color restriction {colors!r}")
    return [Card(rank, suit) for suit in suits for rank in RANKS]


@dataclass(frozen=True)
class RuleConfig:
    face_rule: str = "all_ten"
    target: int = 24
    sampling: str = "uniform"  # or "face_required"
    colors: str = "all"
    max_verify_steps: int = 5
    recognition_enabled: bool = False

    def __post_init__(self):
        if self.face_rule not in FACE_RULES:
            raise ValueError(f"face_rule must be one of {FACE_RULES}")
        if self.sampling not in ("uniform", "face_required"):
            raise ValueError("sampling must be 'uniform' or 'face_required'")
        if self.colors not in ("all", "black", "red"):
            raise ValueError("colors must be 'all', 'black', or 'red'")
        if self.target <= 0:
            raise ValueError("target must be a positive integer")
        if self.max_verify_steps <= 0:
            raise ValueError("max_verify_steps must be positive")


# --- formula template space --------------------------------------------------
#
# All expressions over 4 operands are covered by 5 parenthesization shapes.
# Trees are enumerated slot-permutation-major, then operator triple, then
# shape, and deduplicated by a commutative canonical form; the survivors are
# both the solver's scan order and the policy's formula action space.

OPS = ("+", "-", "*", "/")


def _shape_tree(shape: int, ops: Sequence[str], leaves: Sequence[Node]) -> Node:
    a, b, c, d = leaves
    o1, o2, o3 = ops
    if shape == 0:
        return BinOp(o3, BinOp(o2, BinOp(o1, a, b), c), d)
    if shape == 1:
        return BinOp(o3, BinOp(o1, a, BinOp(o2, b, c)), d)
    if shape == 2:
        return BinOp(o2, BinOp(o1, a, b), BinOp(o3, c, d))
    if shape == 3:
        return BinOp(o1, a, BinOp(o3, BinOp(o2, b, c), d))
    if shape == 4:
        return BinOp(o1, a, BinOp(o2, b, BinOp(o3, c, d)))
    raise ValueError(f"shape must be 0..4, got {shape}")


@dataclass(frozen=True)
class FormulaTemplate:
    """One expression skeleton over sorted-card slots 0..3."""

    perm: tuple[int, int, int, int]
    ops: tuple[str, str, str]
    shape: int

    def tree(self, values: Sequence[int]) -> Node:
        leaves = [Lit(values[i]) for i in self.perm]
        return _shape_tree(self.shape, self.ops, leaves)

    def render(self, values: Sequence[int]) -> str:
        return render(self.tree(values))


def _canonical_key(node: Node):
    if isinstance(node, Lit):
        return ("x", node.value)
    left = _canonical_key(node.left)
    right = _canonical_key(node.right)
    if node.op in ("+", "*") and right < left:
        left, right = right, left
    return (node.op, left, right)


@lru_cache(maxsize=1)
def template_space() -> tuple[FormulaTemplate, ...]:
    """Deduplicated canonical template list (shared solver/policy order)."""
    seen = set()
    out = []
    slots = [Lit(i) for i in range(4)]
    for perm in itertools.permutations(range(4)):
        for ops in itertools.product(OPS, repeat=3):
            for shape in range(5):
                tpl = FormulaTemplate(perm, ops, shape)
                key = _canonical_key(_shape_tree(shape, ops, [slots[i] for i in perm]))
                if key in seen:
                    continue
                seen.add(key)
                out.append(tpl)
    return tuple(out)


def _template_value(tpl: FormulaTemplate, values: Sequence[Fraction]) -> Optional[Fraction]:
    a, b, c, d = (values[i] for i in tpl.perm)
    o1, o2, o3 = tpl.ops
    try:
        if tpl.shape == 0:
            return _apply(o3, _apply(o2, _apply(o1, a, b), c), d)
        if tpl.shape == 1:
            return _apply(o3, _apply(o1, a, _apply(o2, b, c)), d)
        if tpl.shape == 2:
            return _apply(o2, _apply(o1, a, b), _apply(o3, c, d))
        if tpl.shape == 3:
            return _apply(o1, a, _apply(o3, _apply(o2, b, c), d))
        return _apply(o1, a, _apply(o2, b, _apply(o3, c, d)))
    except DivisionByZero:
        return None


def _apply(op: str, left: Fraction, right: Fraction) -> Fraction:
    if op == "+":
        return left + right
    if op == "-":
        return left - right
    if op == "*":
        return left * right
    if right == 0:
        raise DivisionByZero("zero denominator")
    return left / right


@lru_cache(maxsize=None)
def _solve_sorted(values: tuple[int, ...], target: int) -> Optional[int]:
    fracs = tuple(Fraction(v) for v in values)
    want = Fraction(target)
    for index, tpl in enumerate(template_space()):
        if _template_value(tpl, fracs) == want:
            return index
    return None


def solve_template(numbers: Sequence[int], target: int = 24) -> Optional[int]:
    """Index into template_space() of the first solving template, if any."""
    return _solve_sorted(tuple(sorted(numbers)), target)


def solve(numbers: Sequence[int], target: int = 24) -> Optional[str]:
    """First formula (canonical scan order) hitting the target, or None."""
    values = tuple(sorted(numbers))
    index = _solve_sorted(values, target)
    if index is None:
        return None
    return template_space()[index].render(values)


def sample_quadruple(rule: RuleConfig, seed: int, max_attempts: int = 10_000) -> tuple[Card, ...]:
    """Deal 4 cards that are solvable under the rule; rejection sampling."""
    rng = Random(seed)
    deck = full_deck(rule.colors)
    for _ in range(max_attempts):
        cards = tuple(rng.sample(deck, 4))
        if rule.sampling == "face_required" and not any(c.rank in ("J", "Q", "K") for c in cards):
            continue
        numbers = tuple(map_card(c.rank, rule.face_rule) for c in cards)
        if solve(numbers, rule.target) is not None:
            return cards
    raise SamplingExhausted(f"no solvable quadruple within {max_attempts} attempts")


# --- episode state machine ---------------------------------------------------


@dataclass(frozen=True)
class GPState:
    cards: tuple[Card, ...]
    rule: RuleConfig
    numbers: tuple[int, ...]  # deal order, rule-mapped
    t: int = 0
    history: tuple[VerdictClass, ...] = ()
    done: bool = False

    @property
    def ranks(self) -> tuple[str, ...]:
        return tuple(c.rank for c in self.cards)


@dataclass(frozen=True)
class GPStepResult:
    reward: float
    verifier_text: str
    done: bool
    state: GPState
    verdict: Verdict
    step_limit_penalty: float = 0.0
    status: Optional[str] = None  # "success" | "step_limit" once done


class GeneralPointsEnv:
    """Card game episodes with sequential revision.

    variant "l" renders the card list into the prompt; "vl" leaves state out
    of the text and carries suits/colors as metadata only.
    """

    kind = "gp"

    def __init__(self, rule: RuleConfig | None = None, variant: str = "l"):
        if variant not in ("l", "vl"):
            raise ValueError("variant must be 'l' or 'vl'")
        self.rule = rule if rule is not None else RuleConfig()
        self.variant = variant

    @property
    def max_episode_turns(self) -> int:
        return self.rule.max_verify_steps

    def max_episode_turns_for(self, state: GPState) -> int:
        return self.rule.max_verify_steps

    def reset(self, seed: int) -> tuple[GPState, str]:
        cards = sample_quadruple(self.rule, seed)
        numbers = tuple(map_card(c.rank, self.rule.face_rule) for c in cards)
        state = GPState(cards=cards, rule=self.rule, numbers=numbers)
        ranks = state.ranks if self.variant == "l" else None
        prompt = prompts.render_gp_prompt(self.rule.face_rule, self.rule.target, ranks)
        return state, prompt

    def step(self, state: GPState, text: str) -> GPStepResult:
        if state.done:
            raise ValueError("episode is already done")
        answer = parse_answer_text(text)
        verdict = classify(
            answer,
            legal_numbers=state.numbers,
            true_cards=state.ranks,
            target=state.rule.target,
            recognition_enabled=state.rule.recognition_enabled,
        )
        correct = verdict.equation_correct
        exhausted = not correct and state.t + 1 >= state.rule.max_verify_steps
        done = correct or exhausted
        next_state = replace(
            state, t=state.t + 1, history=state.history + (verdict.cls,), done=done
        )
        status = None
        if correct:
            status = "success"
        elif exhausted:
            status = "step_limit"
        return GPStepResult(
            reward=verdict.reward,
            verifier_text=prompts.GP_SUCCESS_LINE if correct else prompts.GP_FAILURE_LINE,
            done=done,
            state=next_state,
            verdict=verdict,
            step_limit_penalty=-1.0 if exhausted else 0.0,
            status=status,
        )

    def expert_response(self, state: GPState) -> str:
        formula = solve(state.numbers, state.rule.target)
        if formula is None:
            raise ValueError(f"state {state.ranks} has no solution")
        answer = {
            "cards": list(state.ranks),
            "number": list(state.numbers),
            "formula": f"{formula}={state.rule.target}",
        }
        return json.dumps(answer)

    def episode_meta(self, state: GPState, seed: int) -> dict:
        return {
            "env": "gp",
            "variant": self.variant,
            "seed": seed,
            "cards": [c.label() for c in state.cards],
            "colors": [c.color for c in state.cards],
            "face_rule": self.rule.face_rule,
            "target": self.rule.target,
        }

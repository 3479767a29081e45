"""Arithmetic equation parsing, exact evaluation, and answer grading.

The grammar covers integer literals, + - * /, parentheses, and an optional
trailing "=<integer>" tail. Evaluation is exact rational arithmetic; grading
maps a structured answer against the legal numbers and target to a Verdict
with its scalar reward.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union


class MalformedExpression(ValueError):
    """Input text is not a well-formed formula."""


class DivisionByZero(ArithmeticError):
    """Exact evaluation hit a zero denominator."""


@dataclass(frozen=True)
class Lit:
    value: int


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Node"
    right: "Node"


Node = Union[Lit, BinOp]

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


@dataclass(frozen=True)
class Equation:
    """Parsed formula: expression tree plus the optional "=<int>" tail."""

    root: Node
    rhs: Optional[int] = None

    def render(self) -> str:
        text = render(self.root)
        if self.rhs is not None:
            text += f"={self.rhs}"
        return text


# --- tokenizer -------------------------------------------------------------

_OPS = set("+-*/")


def _tokenize(text: str) -> list:
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(("int", int(text[i:j])))
            i = j
            continue
        if ch in _OPS or ch in "()=":
            tokens.append((ch, None))
            i += 1
            continue
        raise MalformedExpression(f"unexpected character {ch!r} at position {i}")
    return tokens


# --- recursive descent -----------------------------------------------------


class _Parser:
    def __init__(self, tokens: list):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Optional[str]:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos][0]
        return None

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expr(self) -> Node:
        node = self.term()
        while self.peek() in ("+", "-"):
            op, _ = self.take()
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek() in ("*", "/"):
            op, _ = self.take()
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        kind = self.peek()
        if kind == "int":
            _, value = self.take()
            return Lit(value)
        if kind == "(":
            self.take()
            node = self.expr()
            if self.peek() != ")":
                raise MalformedExpression("unbalanced parenthesis")
            self.take()
            return node
        # no unary minus, no empty factor
        raise MalformedExpression(f"expected a number or '(' , got {kind!r}")


def parse(text: str) -> Equation:
    """Parse a formula, optionally ending in "=<integer>".

    Raises MalformedExpression on anything outside the grammar (unknown
    characters, unbalanced parentheses, dangling operators, unary minus,
    empty input, a non-literal equality tail, trailing junk).
    """
    tokens = _tokenize(text)
    if not tokens:
        raise MalformedExpression("empty input")
    parser = _Parser(tokens)
    root = parser.expr()
    rhs = None
    if parser.peek() == "=":
        parser.take()
        if parser.peek() != "int":
            raise MalformedExpression("equality tail must be an integer literal")
        _, rhs = parser.take()
    if parser.peek() is not None:
        raise MalformedExpression(f"trailing tokens at position {parser.pos}")
    return Equation(root, rhs)


def render(node: Node) -> str:
    """Print a tree with the parentheses needed to reparse it unchanged."""
    if isinstance(node, Lit):
        return str(node.value)
    left = render(node.left)
    right = render(node.right)
    prec = _PRECEDENCE[node.op]
    if isinstance(node.left, BinOp) and _PRECEDENCE[node.left.op] < prec:
        left = f"({left})"
    # the parser is left-associative, so an equal-precedence right child
    # needs parentheses to survive a round trip
    if isinstance(node.right, BinOp) and _PRECEDENCE[node.right.op] <= prec:
        right = f"({right})"
    return f"{left}{node.op}{right}"


def evaluate(node: Union[Node, Equation]) -> Fraction:
    """Exact value of the expression; the equality tail is not consulted."""
    if isinstance(node, Equation):
        node = node.root
    if isinstance(node, Lit):
        return Fraction(node.value)
    left = evaluate(node.left)
    right = evaluate(node.right)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if right == 0:
        raise DivisionByZero(f"division by zero in {render(node)}")
    return left / right


def operand_multiset(node: Union[Node, Equation]) -> Counter:
    if isinstance(node, Equation):
        node = node.root
    if isinstance(node, Lit):
        return Counter([node.value])
    counts = operand_multiset(node.left)
    counts.update(operand_multiset(node.right))
    return counts


# --- grading ---------------------------------------------------------------


class VerdictClass(enum.Enum):
    SUCCESS = "success"
    WRONG_VALUE = "wrong_value"
    ILLEGAL_NUMBERS = "illegal_numbers"
    MALFORMED = "malformed"
    RECOGNITION_MISMATCH = "recognition_mismatch"
    STEP_LIMIT = "step_limit"


BASE_REWARD = {
    VerdictClass.SUCCESS: 5.0,
    VerdictClass.WRONG_VALUE: -1.0,
    VerdictClass.ILLEGAL_NUMBERS: -2.0,
    VerdictClass.MALFORMED: -3.0,
    VerdictClass.RECOGNITION_MISMATCH: 5.0,  # success base before the echo penalty
    VerdictClass.STEP_LIMIT: -1.0,
}

RECOGNITION_PENALTY = -1.5


@dataclass(frozen=True)
class Verdict:
    cls: VerdictClass
    reward: float
    recognition_mismatch: bool = False

    @property
    def equation_correct(self) -> bool:
        return self.cls in (VerdictClass.SUCCESS, VerdictClass.RECOGNITION_MISMATCH)


def step_limit_verdict() -> Verdict:
    return Verdict(VerdictClass.STEP_LIMIT, BASE_REWARD[VerdictClass.STEP_LIMIT])


def classify(
    answer: Mapping,
    legal_numbers: Sequence[int],
    true_cards: Sequence[str],
    target: int = 24,
    recognition_enabled: bool = False,
) -> Verdict:
    """Grade one structured answer {cards, number, formula}.

    Precedence: Malformed beats IllegalNumbers beats WrongValue beats Success.
    The "number" field is never scored. The cards echo only matters when the
    recognition channel is on; a wrong echo costs an extra 1.5 and flips an
    otherwise successful verdict to RECOGNITION_MISMATCH.
    """
    cls = _formula_class(answer, legal_numbers, target)
    mismatch = False
    if recognition_enabled:
        mismatch = not _echo_matches(answer, true_cards)
    if mismatch and cls is VerdictClass.SUCCESS:
        cls = VerdictClass.RECOGNITION_MISMATCH
    reward = BASE_REWARD[cls]
    if mismatch:
        reward += RECOGNITION_PENALTY
    return Verdict(cls, reward, recognition_mismatch=mismatch)


def _formula_class(answer: Mapping, legal_numbers: Sequence[int], target: int) -> VerdictClass:
    formula = answer.get("formula") if isinstance(answer, Mapping) else None
    if not isinstance(formula, str):
        return VerdictClass.MALFORMED
    try:
        equation = parse(formula)
        value = evaluate(equation)
    except (MalformedExpression, DivisionByZero):
        return VerdictClass.MALFORMED
    if operand_multiset(equation) != Counter(legal_numbers):
        return VerdictClass.ILLEGAL_NUMBERS
    if value != target:
        return VerdictClass.WRONG_VALUE
    return VerdictClass.SUCCESS


def _echo_matches(answer: Mapping, true_cards: Sequence[str]) -> bool:
    echoed = answer.get("cards") if isinstance(answer, Mapping) else None
    if not isinstance(echoed, (list, tuple)):
        return False
    return Counter(str(c) for c in echoed) == Counter(str(c) for c in true_cards)

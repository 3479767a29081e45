"""Metrics, compute accounting, smoothing, and report files.

Everything here is a pure function of transcripts or config values. Episode
grading is reconstructed from turn rewards alone (the one signal that
survives the transcript log round-trip): a graded turn is correct exactly
when its reward is positive.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, Iterable, Optional, Sequence

import numpy as np
from scipy.signal import savgol_filter


class EmptyInput(ValueError):
    pass


class WindowNotOdd(ValueError):
    pass


class WindowTooLarge(ValueError):
    pass


# --- metric points ------------------------------------------------------------------


@dataclass(frozen=True)
class MetricPoint:
    """A proportion with its binomial standard error."""

    value: float
    n: int
    stderr: float = None  # type: ignore[assignment]  # filled in __post_init__

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"value {self.value} outside [0, 1]")
        expected = math.sqrt(self.value * (1.0 - self.value) / self.n)
        if self.stderr is None:
            object.__setattr__(self, "stderr", expected)
        elif abs(self.stderr - expected) > 1e-12:
            raise ValueError("stderr inconsistent with sqrt(p(1-p)/n)")

    @classmethod
    def from_counts(cls, hits: int, n: int) -> "MetricPoint":
        if n < 1:
            raise EmptyInput("no samples")
        return cls(hits / n, n)


def _turn_correct(turn) -> bool:
    # success is the only positively rewarded outcome in either environment
    return turn.reward > 0


def episode_succeeded(transcript, kind: str) -> bool:
    if kind == "gp":
        return any(_turn_correct(t) for t in transcript.turns)
    if kind == "nav":
        # completion: the final graded action is the accepted stop()
        return bool(transcript.turns) and _turn_correct(transcript.turns[-1])
    raise ValueError(f"unknown environment kind {kind!r}")


def success_rate(transcripts: Sequence, kind: str) -> MetricPoint:
    """Fraction of episodes that succeed at least once within the step budget."""
    if not transcripts:
        raise EmptyInput("no transcripts")
    hits = sum(episode_succeeded(tr, kind) for tr in transcripts)
    return MetricPoint.from_counts(hits, len(transcripts))


def per_step_accuracy(transcripts: Sequence) -> MetricPoint:
    """Correct decisions over all graded decisions, retries as independent samples."""
    if not transcripts:
        raise EmptyInput("no transcripts")
    hits = 0
    total = 0
    for tr in transcripts:
        if tr.meta.get("env") == "gp":
            raise ValueError("per-step accuracy is a navigation metric")
        for turn in tr.turns:
            hits += _turn_correct(turn)
            total += 1
    if total == 0:
        raise EmptyInput("no graded decisions")
    return MetricPoint.from_counts(hits, total)


# --- compute accounting -------------------------------------------------------------

DEFAULT_LAMBDA = {"gp": Fraction(6), "nav": Fraction(51, 10)}

# relative slack when an explicit buffer multiplier is cross-checked against
# its components; the published per-env values are rounded to 2 figures
_LAMBDA_RTOL = Fraction(1, 10)


@dataclass(frozen=True)
class FlopsConfig:
    """Token accounting for the 6ND training / 2ND inference estimates.

    n is the parameter count; d_init, d_sft, d_rl are token counts. The
    buffer multiplier lam may be given directly, derived from the rollout
    components (e generation calls averaging d_i input and d_o output
    tokens), or defaulted per environment kind.
    """

    n: int
    d_init: int = 0
    d_sft: int = 0
    d_rl: int = 0
    lam: Optional[float] = None
    e: Optional[int] = None
    d_i: Optional[float] = None
    d_o: Optional[float] = None
    env: Optional[str] = None

    def __post_init__(self) -> None:
        for name in ("n", "d_init", "d_sft", "d_rl", "lam", "e", "d_i", "d_o"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative")
        derived = self._component_lambda()
        if derived is not None and self.lam is not None:
            lam = Fraction(str(self.lam))
            if abs(lam - derived) > _LAMBDA_RTOL * max(lam, derived):
                raise ValueError(
                    f"lam {self.lam} inconsistent with e*d_i*d_o/d_rl = {float(derived):.4g}"
                )

    def _component_lambda(self) -> Optional[Fraction]:
        if self.e is None or self.d_i is None or self.d_o is None:
            return None
        if self.d_rl == 0:
            raise ValueError("component lambda needs d_rl > 0")
        return (
            Fraction(self.e) * Fraction(str(self.d_i)) * Fraction(str(self.d_o))
        ) / Fraction(self.d_rl)

    def resolved_lambda(self) -> Fraction:
        derived = self._component_lambda()
        if derived is not None:
            return derived
        if self.lam is not None:
            return Fraction(str(self.lam))
        if self.env in DEFAULT_LAMBDA:
            return DEFAULT_LAMBDA[self.env]
        raise ValueError("lam unresolved: give lam, its components, or an env kind")


def _exact(x: Fraction):
    return int(x) if x.denominator == 1 else float(x)


def flops_sft(config: FlopsConfig):
    return _exact(6 * Fraction(config.n) * (config.d_init + config.d_sft))


def flops_rl(config: FlopsConfig):
    train = 6 * Fraction(config.n) * (config.d_init + config.d_rl)
    if config.d_rl == 0:
        return _exact(train)
    d_buffer = config.resolved_lambda() * config.d_rl
    return _exact(train + 2 * Fraction(config.n) * d_buffer)


def token_count(text: str) -> int:
    """Whitespace token count, the desk-scale stand-in for tokenizer counts."""
    return len(text.split())


# --- smoothing ----------------------------------------------------------------------


def smooth(
    series: Sequence[float], window_length: int = 9, polyorder: int = 3
) -> np.ndarray:
    """Savitzky-Golay smoothing; output length equals input length.

    Edges are handled by fitting the edge window's polynomial and evaluating
    it at the edge positions, so any polynomial of degree <= polyorder is
    reproduced exactly everywhere.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if window_length % 2 == 0:
        raise WindowNotOdd(f"window_length {window_length} is even")
    if window_length > x.size:
        raise WindowTooLarge(f"window_length {window_length} > series length {x.size}")
    if window_length <= polyorder:
        raise ValueError("window_length must exceed polyorder")
    return savgol_filter(x, window_length, polyorder, mode="interp")


# --- report files -------------------------------------------------------------------

CONDITIONS = ("SFT-ID", "SFT-OOD", "RL-ID", "RL-OOD")

REPORT_FIELDS = (
    "compute_gflops",
    "metric",
    "value",
    "stderr",
    "condition",
    "env",
    "viter",
    "n",
)


@dataclass(frozen=True)
class ReportRow:
    compute_gflops: float
    metric: str
    value: float
    stderr: float
    condition: str
    env: str
    viter: int
    n: int

    def __post_init__(self) -> None:
        if self.condition not in CONDITIONS:
            raise ValueError(f"condition {self.condition!r} not in {CONDITIONS}")

    @classmethod
    def from_metric(
        cls,
        point: MetricPoint,
        *,
        metric: str,
        condition: str,
        env: str,
        viter: int,
        flops: float,
    ) -> "ReportRow":
        return cls(
            compute_gflops=flops / 1e9,
            metric=metric,
            value=point.value,
            stderr=point.stderr,
            condition=condition,
            env=env,
            viter=viter,
            n=point.n,
        )


def write_report(rows: Iterable[ReportRow], fh: IO[str]) -> int:
    writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
    writer.writeheader()
    count = 0
    for row in rows:
        record = {f: getattr(row, f) for f in REPORT_FIELDS}
        record["value"] = f"{row.value:.10g}"
        record["stderr"] = f"{row.stderr:.10g}"
        record["compute_gflops"] = f"{row.compute_gflops:.10g}"
        writer.writerow(record)
        count += 1
    return count


def read_report(fh: IO[str]) -> list[ReportRow]:
    rows = []
    for record in csv.DictReader(fh):
        rows.append(
            ReportRow(
                compute_gflops=float(record["compute_gflops"]),
                metric=record["metric"],
                value=float(record["value"]),
                stderr=float(record["stderr"]),
                condition=record["condition"],
                env=record["env"],
                viter=int(record["viter"]),
                n=int(record["n"]),
            )
        )
    return rows

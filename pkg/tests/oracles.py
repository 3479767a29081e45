"""Independent reference implementations the tests grade against.

Everything here is deliberately written with different algorithms than the
package code: pairwise value reduction instead of template enumeration,
central finite differences instead of backprop, per-window least squares
instead of convolution.
"""

from fractions import Fraction
from functools import lru_cache

import numpy as np

from ruleshift import nn


# --- 24-game solvability by pairwise reduction ---------------------------------


@lru_cache(maxsize=None)
def _reducible(values: tuple[Fraction, ...], want: Fraction) -> bool:
    if len(values) == 1:
        return values[0] == want
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            a, b = values[i], values[j]
            rest = values[:i] + values[i + 1:j] + values[j + 1:]
            outcomes = {a + b, a - b, b - a, a * b}
            if b != 0:
                outcomes.add(a / b)
            if a != 0:
                outcomes.add(b / a)
            for c in outcomes:
                if _reducible(tuple(sorted(rest + (c,))), want):
                    return True
    return False


def oracle_solvable(numbers, target=24) -> bool:
    """True when some formula over the numbers reaches the target.

    Combines any two remaining values with one of the four operators (both
    orders for - and /) until a single value is left.
    """
    return _reducible(tuple(sorted(Fraction(n) for n in numbers)), Fraction(target))


# --- gradient checking -----------------------------------------------------------


def fd_check(loss_fn, params, rel_tol=1e-4, samples=60, eps=1e-5, seed=0):
    """Central-difference check of loss_fn's gradient at params.

    loss_fn(params) -> (scalar loss, grads in the params layout). A random
    subset of coordinates is probed; each must match to rel_tol relative to
    max(|fd|, |grad|, 1).
    """
    _, grads = loss_fn(params)
    flat, spec = nn.flatten(params)
    gflat, _ = nn.flatten(grads)
    rng = np.random.default_rng(seed)
    picks = rng.choice(flat.size, size=min(samples, flat.size), replace=False)
    worst = 0.0
    for i in picks:
        bumped = flat.copy()
        bumped[i] += eps
        up, _ = loss_fn(nn.unflatten(bumped, spec))
        bumped[i] -= 2 * eps
        down, _ = loss_fn(nn.unflatten(bumped, spec))
        fd = (up - down) / (2 * eps)
        scale = max(abs(fd), abs(gflat[i]), 1.0)
        worst = max(worst, abs(fd - gflat[i]) / scale)
        assert abs(fd - gflat[i]) <= rel_tol * scale, (
            f"coordinate {i}: fd {fd} vs grad {gflat[i]}"
        )
    return worst


# --- Savitzky-Golay by explicit least squares --------------------------------------


def savgol_lsq_oracle(series, window_length: int, polyorder: int) -> np.ndarray:
    """Smooth by fitting a polynomial to each window and reading the center.

    Edge points come from evaluating the two boundary windows' fits at their
    own positions, which is the interpolating-edge convention.
    """
    y = np.asarray(series, dtype=float)
    n = len(y)
    half = window_length // 2
    out = np.empty(n)

    def window_fit(start: int) -> np.poly1d:
        xs = np.arange(start, start + window_length)
        return np.poly1d(np.polyfit(xs, y[start:start + window_length], polyorder))

    for t in range(half, n - half):
        out[t] = window_fit(t - half)(t)
    left = window_fit(0)
    for t in range(half):
        out[t] = left(t)
    right = window_fit(n - window_length)
    for t in range(n - half, n):
        out[t] = right(t)
    return out


# --- binomial interval ---------------------------------------------------------------


def binomial_99_interval(p: float, n: int) -> tuple[float, float]:
    """Normal-approximation 99% interval for a sample mean of Bernoulli(p)."""
    half = 2.5758293035489004 * (p * (1 - p) / n) ** 0.5
    return p - half, p + half

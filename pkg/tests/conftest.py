"""Shared independent oracles and the acceptance summary hook.

The oracles here are deliberately naive (exact rationals, set checks,
explicit recursion) so they share no code with the package.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, name: str, ok: bool, detail: str = ""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {name}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


# ---------------------------------------------------------------- oracles


def exact_spike_frames(q: Fraction, frames: int, threshold: Fraction = Fraction(1)) -> list[int]:
    """0-based spike frames of a zero-residual integrator with exact arithmetic.

    With no reset loss the k-th spike (1-based) is at readout ceil(k * T) where
    T = threshold / q, i.e. frame ceil(k * T) - 1.
    """
    period = threshold / q
    out = []
    k = 1
    while True:
        n = math.ceil(k * period) - 1
        if n >= frames:
            return out
        out.append(n)
        k += 1


def set_stable(values) -> bool:
    s = sorted(set(int(v) for v in values))
    return len(s) <= 1 or (len(s) == 2 and s[1] - s[0] == 1)


def gaps(seq, firing) -> list[int]:
    pos = [i for i, v in enumerate(seq) if v == firing]
    return [b - a for a, b in zip(pos, pos[1:])]


def tree_is_stable(seq, depth: int) -> bool:
    """Recursive walk of both branches; True when no node within ``depth`` breaks the rule."""
    if depth == 0 or not seq:
        return True
    if not set_stable(seq):
        return False
    values = sorted(set(seq))
    if len(values) == 1:
        return True
    return all(tree_is_stable(gaps(seq, v), depth - 1) for v in values)


def greedy_fsr_cuts(intervals: list[int]) -> list[int]:
    """Indices where a new stable run starts, by growing each run while its value set stays stable."""
    cuts = []
    start = 0
    for i in range(1, len(intervals) + 1):
        if i == len(intervals) or not set_stable(intervals[start : i + 1]):
            if i < len(intervals):
                cuts.append(i)
                start = i
    return cuts


def mixed_rate_bits(rng: np.random.Generator, frames: int, noisy: bool = False) -> np.ndarray:
    """Spike train from a piecewise-constant random rate, optional bit flips."""
    rates = np.empty(frames)
    n = 0
    while n < frames:
        span = int(rng.integers(20, 400))
        rates[n : n + span] = rng.uniform(0.02, 1.0)
        n += span
    v = rng.uniform(0, 1)
    bits = np.zeros(frames, dtype=np.uint8)
    for i, q in enumerate(rates):
        v += q
        if v >= 1:
            bits[i] = 1
            v -= 1
    if noisy:
        bits ^= (rng.random(frames) < 0.01).astype(np.uint8)
    return bits


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

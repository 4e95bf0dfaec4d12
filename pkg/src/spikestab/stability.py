"""Stability of spike-like streams.

A stream is *zero-order stable* when it holds a single value, or two values
that differ by exactly one. Taking the gaps between consecutive firing
values gives the interval stream; a stream is n-order stable when that
derivation can be repeated n times without breaking the zero-order rule.
Once an interval stream holds two values either one may serve as the next
firing value, so the derivation forms a binary tree ('-' picks the smaller
value, '+' the larger).

For a constant accumulation rate every branch of that tree stays stable.
The lemma helpers below expose the closed-form predictions behind that
fact so they can be checked against simulation:

* intervals of a constant-rate stream take only ``floor(T)`` and
  ``floor(T) + 1`` where ``T = threshold / q0``;
* the interval stream is itself generated by an integrate-and-fire unit
  with a fixed rate, so its own intervals obey the same bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import IntervalStream, SpikeLikeStream, ValidationError
from .simulator import constant_stream, simulate_pixel

SMALLER, LARGER = "smaller", "larger"
FiringChoice = Literal["smaller", "larger"]

# relative slack for deciding that threshold / q0 is an integer
PERIOD_TOLERANCE = 1e-9


def _values(stream) -> np.ndarray:
    if isinstance(stream, SpikeLikeStream):
        return stream.values
    if isinstance(stream, IntervalStream):
        return stream.intervals
    return np.asarray(stream, dtype=np.int64).ravel()


def interval_stream(stream, firing: int | None = None) -> IntervalStream:
    """Gaps between consecutive occurrences of the firing value.

    ``firing`` defaults to the stream's own firing value for spike-like
    streams and is required for plain integer sequences.
    """
    if firing is None:
        if not isinstance(stream, SpikeLikeStream):
            raise ValidationError("firing value required for a plain sequence")
        firing = stream.firing_value
    positions = np.flatnonzero(_values(stream) == firing)
    return IntervalStream(np.diff(positions))


def zero_order_violation(seq) -> int | None:
    """Index of the first element that breaks the zero-order rule, scanning left to right.

    The accepted value pair forms lazily: the first element fixes one value
    and the first distinct neighbour within +-1 completes the pair.
    """
    lo = hi = None
    for i, v in enumerate(_values(seq).tolist()):
        if lo is None:
            lo = hi = v
        elif lo == hi:
            if v == lo - 1:
                lo = v
            elif v == lo + 1:
                hi = v
            elif v != lo:
                return i
        elif v != lo and v != hi:
            return i
    return None


def is_zero_order_stable(seq) -> bool:
    distinct = np.unique(_values(seq))
    return bool(distinct.size <= 1 or (distinct.size == 2 and distinct[1] - distinct[0] == 1))


@dataclass(frozen=True)
class Violation:
    path: str  # '-'/'+' choices below the first interval stream; '' means S1 itself
    depth: int
    index: int


@dataclass(frozen=True)
class StabilityReport:
    """Outcome of walking the interval-stream tree.

    ``absolute`` means no node of the explored tree broke the zero-order
    rule. ``exhausted`` additionally says every branch ran out (emptied, or
    collapsed to a single repeated value) before ``max_depth``.
    """

    verified_order: int
    absolute: bool
    first_violation: Violation | None = None
    exhausted: bool = False
    nodes: int = 0

    def __post_init__(self):
        if self.absolute and self.first_violation is not None:
            raise ValidationError("an absolute report cannot carry a violation")
        if self.verified_order < 0:
            raise ValidationError("verified_order must be >= 0")


def stability_order(stream: SpikeLikeStream, max_depth: int = 8) -> StabilityReport:
    """Breadth-first walk of the '-'/'+' tree down to ``max_depth``.

    Depth 1 is the interval stream of ``stream`` taken on its own firing
    value. Nodes within a level are visited '-' before '+', so the reported
    violation is the shallowest one and, among those, the first in
    depth-first order.
    """
    if max_depth < 1:
        raise ValidationError(f"max_depth must be >= 1, got {max_depth}")
    level = [("", interval_stream(stream).intervals)]
    nodes = 0
    for depth in range(1, max_depth + 1):
        children = []
        for path, seq in level:
            nodes += 1
            bad = zero_order_violation(seq)
            if bad is not None:
                return StabilityReport(depth - 1, False, Violation(path, depth, bad), nodes=nodes)
            distinct = np.unique(seq)
            # one repeated value: every descendant is a run of ones, nothing can break
            if distinct.size == 2:
                for sign, firing in (("-", distinct[0]), ("+", distinct[1])):
                    child = np.diff(np.flatnonzero(seq == firing))
                    if child.size:
                        children.append((path + sign, child))
        level = children
        if not level:
            return StabilityReport(max_depth, True, None, exhausted=True, nodes=nodes)
    return StabilityReport(max_depth, True, None, exhausted=False, nodes=nodes)


def period_parts(q0: float, threshold: float = 1.0) -> tuple[int, float]:
    """Split ``threshold / q0`` into its integer part and remainder ``b`` in [0, 1)."""
    if not q0 > 0:
        raise ValidationError(f"q0 must be > 0, got {q0}")
    if not threshold > 0:
        raise ValidationError(f"threshold must be > 0, got {threshold}")
    if q0 > threshold:
        raise ValidationError(f"q0 {q0} exceeds threshold {threshold}")
    period = threshold / q0
    nearest = round(period)
    if abs(period - nearest) <= PERIOD_TOLERANCE * period:
        return int(nearest), 0.0
    whole = math.floor(period)
    return int(whole), period - whole


def lemma1_interval_bounds(q0: float, threshold: float = 1.0) -> tuple[int, int]:
    """The only interval values a constant-rate stream can produce.

    ``(k, k + 1)`` with ``k = floor(threshold / q0)``, collapsing to
    ``(k, k)`` when the period is an exact integer.
    """
    k, b = period_parts(q0, threshold)
    return (k, k) if b == 0.0 else (k, k + 1)


@dataclass(frozen=True)
class Lemma2Params:
    """Integrator that regenerates the interval stream of a constant-rate stream.

    For the larger-value choice both ``q1`` and ``m1_threshold`` are negative:
    the status falls and fires on reaching the (negative) threshold.
    """

    q1: float
    m1_threshold: float
    firing_choice: FiringChoice
    derived_firing_value: int
    derived_resting_value: int

    def __post_init__(self):
        if self.firing_choice == SMALLER:
            if not (self.q1 > 0 and self.m1_threshold > 0):
                raise ValidationError("smaller-value integrator needs positive rate and threshold")
        elif self.firing_choice == LARGER:
            if not (self.q1 < 0 and self.m1_threshold < 0):
                raise ValidationError("larger-value integrator needs negative rate and threshold")
        else:
            raise ValidationError(f"unknown firing choice {self.firing_choice!r}")
        if abs(self.q1) > abs(self.m1_threshold) * (1 + PERIOD_TOLERANCE):
            raise ValidationError("|q1| must not exceed |m1_threshold|")


def lemma2_params(q0: float, threshold: float = 1.0, firing_choice: FiringChoice = SMALLER) -> Lemma2Params:
    k, b = period_parts(q0, threshold)
    denom = k + b
    if firing_choice == SMALLER:
        return Lemma2Params((1 - b) * threshold / denom, threshold / denom, SMALLER, k, k + 1)
    if firing_choice == LARGER:
        if b == 0.0:
            raise ValidationError(
                f"threshold/q0 = {k} is an integer: the interval stream holds one value, there is no larger choice"
            )
        return Lemma2Params(-b * threshold / denom, -threshold / denom, LARGER, k + 1, k)
    raise ValidationError(f"unknown firing choice {firing_choice!r}")


def lemma2_stream(params: Lemma2Params, length: int, initial_residual: float = 0.0) -> SpikeLikeStream:
    """Run the derived integrator for ``length`` steps and label its output.

    Negative integrators are simulated on ``(|q1|, |m1|)``: negating both the
    rate and the threshold leaves the firing pattern unchanged.
    """
    q, m = abs(params.q1), abs(params.m1_threshold)
    bits = simulate_pixel(np.full(length, min(q, m)), m, initial_residual).values
    values = np.where(bits == 1, params.derived_firing_value, params.derived_resting_value)
    return SpikeLikeStream(values, params.derived_firing_value, params.derived_resting_value)


@dataclass(frozen=True)
class Lemma2Check:
    q0: float
    first_level_ok: bool
    second_level_ok: bool
    first_level_values: tuple[int, ...]
    second_level_values: tuple[int, ...]
    predicted_second_level: tuple[int, int]

    @property
    def ok(self) -> bool:
        return self.first_level_ok and self.second_level_ok


def check_lemma2(q0: float, threshold: float = 1.0, length: int = 4096) -> Lemma2Check:
    """Simulate, derive the first two interval levels and compare with the predictions."""
    s0 = constant_stream(q0, length, threshold)
    s1 = interval_stream(s0)
    lo, hi = lemma1_interval_bounds(q0, threshold)
    first = tuple(s1.distinct())
    first_ok = is_zero_order_stable(s1) and set(first) <= {lo, hi}

    params = lemma2_params(q0, threshold, SMALLER)
    predicted = lemma1_interval_bounds(params.q1, params.m1_threshold)
    s2 = interval_stream(s1.intervals, firing=params.derived_firing_value)
    second = tuple(s2.distinct())
    second_ok = set(second) <= set(predicted)
    return Lemma2Check(q0, first_ok, second_ok, first, second, predicted)


def verify_lemma2(q0: float, threshold: float = 1.0, length: int = 4096) -> bool:
    """True when the simulated interval stream behaves as a fixed-rate integrator predicts."""
    return check_lemma2(q0, threshold, length).ok


def sweep_rates(count: int = 200, q_min: float = 1e-3, q_max: float = 1.0) -> np.ndarray:
    """Logarithmically spaced rates in ``[q_min, q_max]``."""
    if not (0 < q_min <= q_max <= 1.0):
        raise ValidationError("rates must satisfy 0 < q_min <= q_max <= 1")
    return np.geomspace(q_min, q_max, count)


def first_breakpoint(stream: SpikeLikeStream) -> int | None:
    """Frame index of the spike that closes the first unstable interval, if any."""
    s1 = interval_stream(stream)
    bad = zero_order_violation(s1)
    if bad is None:
        return None
    return int(stream.firing_positions()[bad + 1])


def violation_frame(stream: SpikeLikeStream, violation: Violation) -> int:
    """Frame of the spike that completes the offending element of ``violation``.

    Each interval is attributed to the spike that closes it; deeper
    intervals inherit the frame of the element that closes them.
    """
    pos = stream.firing_positions()
    seq = np.diff(pos)
    frames = pos[1:]
    for sign in violation.path:
        distinct = np.unique(seq)
        firing = distinct[0] if sign == "-" else distinct[-1]
        idx = np.flatnonzero(seq == firing)
        seq, frames = np.diff(idx), frames[idx[1:]]
    return int(frames[violation.index])

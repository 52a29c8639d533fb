"""Sup-norm event-triggering law and its interval analytics.

Between two sampling instants the held input is ``u = g(x(t_k))`` and the
disturbance ``r(t)`` is the integral of ``xi`` since ``t_k``.  The next
instant is the first ``t`` with ``(t - t_k) * gamma_bar(R) >= R`` and
``R > 0``, where ``R`` is the running sup of ``||r||`` on ``[t_k, t]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import ControlledSystem
from .errors import ArgumentError, UnboundedIntervalError
from .gains import GainFn, slope_at_zero


@dataclass
class TriggerState:
    gamma_bar: GainFn
    t_k: float = 0.0
    x_k: np.ndarray | None = None
    u_held: np.ndarray | None = None
    r: np.ndarray | None = None
    R: float = 0.0
    t_last: float = 0.0
    xi_last: np.ndarray | None = None

    def reset(self, t: float, x, sys: ControlledSystem) -> "TriggerState":
        """Sample at ``t``: hold ``g(x)`` and clear the accumulators."""
        self.t_k = float(t)
        self.x_k = np.array(x, dtype=float)
        self.u_held = np.asarray(sys.g(self.x_k), dtype=float).copy()
        self.r = np.zeros(sys.m)
        self.R = 0.0
        self.t_last = self.t_k
        self.xi_last = None
        return self

    def accumulate(self, xi_samples: Sequence[tuple[float, Sequence[float]]]) -> "TriggerState":
        """Integrate time-stamped samples of ``xi`` into ``r`` (trapezoid rule).

        The first sample after a reset only anchors the integrand; every
        later sample extends ``r`` and the running sup ``R``.
        """
        for t, v in xi_samples:
            t = float(t)
            v = np.asarray(v, dtype=float)
            if t < self.t_last or t < self.t_k:
                raise ArgumentError(f"xi sample at t={t} is out of order")
            if self.xi_last is None:
                if t > self.t_k:
                    # no earlier sample: treat xi as constant back to t_k
                    self.r = self.r + (t - self.t_k) * v
            else:
                self.r = self.r + 0.5 * (t - self.t_last) * (self.xi_last + v)
            self.xi_last = v
            self.t_last = t
            self.R = max(self.R, float(np.linalg.norm(self.r)))
        return self

    def absorb(self, r_new, r_norms=()) -> None:
        """Take an externally integrated ``r`` plus intermediate norms."""
        self.r = np.asarray(r_new, dtype=float)
        self.R = max([self.R, float(np.linalg.norm(self.r)), *map(float, r_norms)])

    def event_fn(self, t: float) -> float:
        return event_fn(self, t)

    def triggered(self, t: float) -> bool:
        return is_event(self, t)


def reset(ts: TriggerState, t: float, x, sys: ControlledSystem) -> TriggerState:
    return ts.reset(t, x, sys)


def accumulate(ts: TriggerState, xi_samples) -> TriggerState:
    return ts.accumulate(xi_samples)


def event_fn(ts: TriggerState, t: float) -> float:
    """``h(t) = (t - t_k) * gamma_bar(R) - R``; negative means not yet."""
    if t < ts.t_k:
        raise ArgumentError("event function queried before t_k")
    return (t - ts.t_k) * ts.gamma_bar.scalar(ts.R) - ts.R


def is_event(ts: TriggerState, t: float) -> bool:
    return ts.R > 0.0 and event_fn(ts, t) >= 0.0


def predicted_limit_interval(gamma_bar: GainFn) -> float | None:
    """Limit of the inter-event times, ``1 / lim gamma_bar(s)/s``.

    ``None`` when the slope at zero is infinite; ``inf`` when it is zero.
    """
    mu = slope_at_zero(gamma_bar)
    if mu == math.inf:
        return None
    if mu <= 0:
        return math.inf
    return 1.0 / mu


def interval_upper_bound(gamma_bar: GainFn, r_sup: float, num: int = 400) -> float:
    """``1 / inf_{s in (0, r_sup]} gamma_bar(s)/s`` on a geometric grid."""
    if not r_sup > 0:
        raise ArgumentError("r_sup must be positive")
    grid = np.geomspace(r_sup * 1e-9, r_sup, num)
    ratios = np.asarray(gamma_bar(grid), dtype=float) / grid
    mu = slope_at_zero(gamma_bar)
    inf_ratio = float(min(np.min(ratios), mu))
    if not inf_ratio > 1e-300:
        raise UnboundedIntervalError(
            f"{gamma_bar.label}: gamma_bar(s)/s vanishes on (0, {r_sup:g}]")
    return 1.0 / inf_ratio


@dataclass(frozen=True)
class EventRow:
    k: int
    t_k: float
    interval: float
    R: float


def event_rows(times: Sequence[float], intervals: Sequence[float], R: Sequence[float]) -> list[EventRow]:
    return [EventRow(i + 1, float(t), float(d), float(r))
            for i, (t, d, r) in enumerate(zip(times, intervals, R))]

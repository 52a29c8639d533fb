"""Scenario runs: RK4 on the augmented state (x, r), events, diagnostics.

The loop itself lives in :mod:`etcsim.kernel`; this module validates the
scenario, packages the raw arrays into a :class:`SimResult` and provides
the post-run checks and CSV writers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import kernel
from .dynamics import ControlledSystem, get_system
from .errors import ArgumentError, SimulationDivergence
from .gains import GainFn
from .trigger import interval_upper_bound

DEFAULT_X0 = {
    "paper_sec4": (1.0, 1.0, -1.0, 1.0),
    "scalar_demo": (1.0,),
    "interconnected_demo": (1.0, 1.0),
}

_STATUS_TEXT = {
    1: "non-finite state",
    2: "state norm exceeded the divergence limit",
    3: "accumulated r drifted away from g(x) - g(x_k)",
}


@dataclass
class Scenario:
    system: str
    gamma_bar: GainFn
    params: Mapping[str, float] = field(default_factory=dict)
    x0: Sequence[float] | None = None
    horizon: float = 20.0
    step: float = 1e-4
    loc_tol: float = 1e-9
    record_every: int = 1
    backend: str = "auto"
    dual_r_factor: float = 10.0
    dual_r_abort: float = 1e-6
    divergence_limit: float = 1e6
    name: str = "scenario"
    T_pred: float | None = None
    convergence_rtol: float = 0.05

    def build_system(self) -> ControlledSystem:
        return get_system(self.system, **dict(self.params))

    def initial_state(self, sys: ControlledSystem) -> np.ndarray:
        x0 = self.x0 if self.x0 is not None else DEFAULT_X0.get(self.system)
        if x0 is None:
            raise ArgumentError(f"{self.name}: no initial state for {self.system}")
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (sys.n,):
            raise ArgumentError(f"{self.name}: x0 has {x0.size} entries, system needs {sys.n}")
        return x0

    def validate(self) -> "Scenario":
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ArgumentError(f"{self.name}: step must be positive")
        if not self.horizon > self.step:
            raise ArgumentError(f"{self.name}: horizon must exceed step")
        if not 0 < self.loc_tol < self.step:
            raise ArgumentError(f"{self.name}: localization tolerance must lie in (0, step)")
        if int(self.record_every) < 1:
            raise ArgumentError(f"{self.name}: record_every must be >= 1")
        if self.backend not in kernel.BACKENDS:
            raise ArgumentError(f"{self.name}: unknown backend {self.backend!r}")
        return self


@dataclass
class SimResult:
    name: str
    labels: tuple[str, ...]
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    r_norm: np.ndarray
    R: np.ndarray
    event: np.ndarray
    event_t: np.ndarray
    intervals: np.ndarray
    event_R: np.ndarray
    summary: dict
    diagnostics: dict

    @property
    def n_events(self) -> int:
        return int(self.intervals.size)


def tail_mean(intervals: Sequence[float], fraction: float = 0.2) -> float:
    iv = np.asarray(intervals, dtype=float)
    if iv.size == 0:
        return math.nan
    n_tail = max(1, int(math.ceil(fraction * iv.size)))
    return float(np.mean(iv[-n_tail:]))


def simulate(sc: Scenario) -> SimResult:
    """Run one scenario; raises :class:`SimulationDivergence` on blow-up."""
    sc.validate()
    sys = sc.build_system()
    x0 = sc.initial_state(sys)
    raw = kernel.run(sys, sc.gamma_bar, x0, sc.step, sc.horizon, sc.loc_tol,
                     int(sc.record_every), sc.backend, sc.dual_r_factor,
                     sc.dual_r_abort, sc.divergence_limit)
    iv = raw["ev_interval"]
    x_final = raw["x"][-1]
    summary = {
        "scenario": sc.name,
        "system": sc.system,
        "backend": raw["backend"],
        "t_end": raw["t_end"],
        "n_events": int(iv.size),
        "min_interval": float(iv.min()) if iv.size else math.nan,
        "mean_interval": float(iv.mean()) if iv.size else math.nan,
        "tail_interval": tail_mean(iv),
        "final_norm": float(np.linalg.norm(x_final)),
        "initial_norm": float(np.linalg.norm(x0)),
        "quiescent": bool(iv.size == 0),
    }
    if sc.T_pred is not None:
        summary["T_pred"] = float(sc.T_pred)
    diagnostics = {
        "steps": int(raw["steps"]),
        "status": int(raw["status"]),
        "dual_r_max": float(raw["dual_r_max"]),
        "dual_r_ratio": float(raw["dual_r_ratio"]),
        "dual_r_violations": int(raw["dual_r_violations"]),
        "dual_r_checks": int(raw["dual_r_checks"]),
        "h_max_between_events": float(raw["h_max"]),
        "max_event_R": float(raw["ev_R"].max()) if iv.size else 0.0,
    }
    res = SimResult(sc.name, sys.labels(), raw["t"], raw["x"], raw["u"], raw["r_norm"],
                    raw["R"], raw["event"], raw["ev_t"], iv, raw["ev_R"], summary,
                    diagnostics)
    if raw["status"] != 0:
        err = SimulationDivergence(
            f"{sc.name}: {_STATUS_TEXT[int(raw['status'])]} at t={raw['t_end']:.6g}",
            t_last=float(res.t[-2] if res.t.size > 1 else 0.0))
        err.result = res
        raise err
    return res


# ----------------------------------------------------------- diagnostics


@dataclass
class ZenoReport:
    passed: bool
    min_interval: float | None
    shrinking: bool
    note: str = ""


def _intervals_of(res) -> np.ndarray:
    if isinstance(res, SimResult):
        return res.intervals
    return np.asarray(res, dtype=float)


def zeno_check(res, window: int = 10, drop: float = 0.5) -> ZenoReport:
    """Minimum interval and a shrinking-trend detector.

    Flags when the last ``window`` intervals decrease monotonically and
    the last one is below ``(1 - drop)`` times the first of them.
    """
    iv = _intervals_of(res)
    if iv.size == 0:
        return ZenoReport(True, None, False, "quiescent: no events")
    mn = float(iv.min())
    if iv.size == 1:
        return ZenoReport(mn > 0, mn, False, "single event")
    tail = iv[-window:]
    shrinking = bool(tail.size >= window and np.all(np.diff(tail) < 0)
                     and tail[-1] < (1.0 - drop) * tail[0])
    note = "shrinking interval pattern" if shrinking else ""
    if not mn > 0:
        note = (note + "; " if note else "") + "non-positive interval"
    return ZenoReport(mn > 0 and not shrinking, mn, shrinking, note)


@dataclass
class ConvergenceReport:
    status: str  # "pass", "fail" or "insufficient"
    tail_mean: float
    T_pred: float
    rel_error: float
    n_events: int

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def interval_convergence(res, T_pred: float, rtol: float = 0.05,
                         min_events: int = 10) -> ConvergenceReport:
    iv = _intervals_of(res)
    if iv.size < min_events:
        return ConvergenceReport("insufficient", tail_mean(iv), T_pred, math.nan, int(iv.size))
    tm = tail_mean(iv)
    err = abs(tm - T_pred) / T_pred
    return ConvergenceReport("pass" if err <= rtol else "fail", tm, T_pred, err, int(iv.size))


@dataclass
class BoundReport:
    passed: bool
    bound: float
    worst_excess: float


def interval_bound_check(res: SimResult, gamma_bar: GainFn, tol: float = 1e-6) -> BoundReport:
    """Every observed interval against ``T_max`` for the largest event R."""
    if res.n_events == 0:
        return BoundReport(True, math.inf, -math.inf)
    bound = interval_upper_bound(gamma_bar, float(res.event_R.max()))
    excess = float(np.max(res.intervals) - bound)
    return BoundReport(excess <= tol, bound, excess)


# ------------------------------------------------------------------ output


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def write_series_csv(res: SimResult, path) -> Path:
    path = Path(path)
    m = res.u.shape[1]
    head = ["t", *res.labels, *(f"u{i + 1}" for i in range(m)), "r_norm", "R", "event"]
    lines = [",".join(head)]
    for i in range(res.t.size):
        vals = [res.t[i], *res.x[i], *res.u[i], res.r_norm[i], res.R[i]]
        lines.append(",".join(map(_fmt, vals)) + f",{int(res.event[i])}")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_events_csv(res: SimResult, path) -> Path:
    path = Path(path)
    lines = ["k,t_k,interval,R"]
    for k in range(res.n_events):
        lines.append(f"{k + 1},{_fmt(res.event_t[k])},{_fmt(res.intervals[k])},"
                     f"{_fmt(res.event_R[k])}")
    path.write_text("\n".join(lines) + "\n")
    return path


def format_summary(items: Mapping[str, object]) -> str:
    out = []
    for k, v in items.items():
        if isinstance(v, bool):
            v = str(v).lower()
        elif isinstance(v, float):
            v = _fmt(v)
        out.append(f"{k}={v}")
    return "\n".join(out) + "\n"


def write_summary(res: SimResult, path, extra: Mapping[str, object] | None = None) -> Path:
    path = Path(path)
    items = {**res.summary, **res.diagnostics, **(extra or {})}
    path.write_text(format_summary(items))
    return path

"""Plants, feedback laws and the sampled-data closed-loop signals.

Systems are registered under string names so scenario files can select
them.  Each factory returns a :class:`ControlledSystem`; the feedback
Jacobian is supplied analytically and cross-checked against finite
differences when the system is built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ArgumentError, DimensionError

# codes understood by the compiled kernel
NATIVE_SCALAR_DEMO = 1
NATIVE_BENCHMARK = 2
NATIVE_INTERCONNECTED_DEMO = 3


@dataclass(frozen=True)
class ControlledSystem:
    """Plant ``x' = f(x, u)`` with state feedback ``u = g(x)``."""

    name: str
    n: int
    m: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False)
    g: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    grad_g: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    params: Mapping[str, float] = field(default_factory=dict)
    native_id: int | None = None
    state_labels: tuple[str, ...] | None = None

    def labels(self) -> tuple[str, ...]:
        return self.state_labels or tuple(f"x{i + 1}" for i in range(self.n))


@dataclass(frozen=True)
class InterconnectedSystem:
    """``z' = q(z, x, u)``, ``x' = f(z, x, u)`` with feedback ``u = g(x)``.

    The z-state is not available for feedback.
    """

    name: str
    q_dim: int
    n: int
    m: int
    q_dyn: Callable = field(repr=False)
    f: Callable = field(repr=False)
    g: Callable = field(repr=False)
    grad_g: Callable = field(repr=False)
    params: Mapping[str, float] = field(default_factory=dict)
    native_id: int | None = None

    def as_controlled(self) -> ControlledSystem:
        """Stack ``(z, x)`` into one state; the law only reads ``x``."""
        q, n = self.q_dim, self.n

        def f(y, u):
            z, x = y[:q], y[q:]
            return np.concatenate([self.q_dyn(z, x, u), self.f(z, x, u)])

        def g(y):
            return self.g(y[q:])

        def grad_g(y):
            jx = np.atleast_2d(self.grad_g(y[q:]))
            return np.hstack([np.zeros((self.m, q)), jx])

        labels = tuple(f"z{i + 1}" for i in range(q)) + tuple(f"x{i + 1}" for i in range(n))
        return ControlledSystem(self.name, q + n, self.m, f, g, grad_g, dict(self.params),
                                self.native_id, labels)


def _check_dims(sys: ControlledSystem, x, u=None):
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.n,):
        raise DimensionError(f"{sys.name}: state has shape {x.shape}, expected ({sys.n},)")
    if u is not None:
        u = np.asarray(u, dtype=float)
        if u.shape != (sys.m,):
            raise DimensionError(f"{sys.name}: input has shape {u.shape}, expected ({sys.m},)")
    return x, u


def closed_loop_rhs(sys: ControlledSystem, x, u_held) -> np.ndarray:
    """Sampled-data vector field ``f(x, u_held)``.

    Equal to ``f(x, g(x) - r)`` with ``r = g(x) - u_held``.
    """
    x, u = _check_dims(sys, x, u_held)
    return np.asarray(sys.f(x, u), dtype=float)


def xi(sys: ControlledSystem, x, u_held) -> np.ndarray:
    """Time derivative of ``g(x(t))`` along the held-input flow."""
    x, u = _check_dims(sys, x, u_held)
    return np.atleast_2d(sys.grad_g(x)) @ np.asarray(sys.f(x, u), dtype=float)


def r_direct(sys: ControlledSystem, x, x_k) -> np.ndarray:
    """Input disturbance ``g(x) - g(x_k)`` caused by holding ``g(x_k)``."""
    x, _ = _check_dims(sys, x)
    x_k, _ = _check_dims(sys, x_k)
    return np.asarray(sys.g(x), dtype=float) - np.asarray(sys.g(x_k), dtype=float)


@dataclass
class ValidationReport:
    equilibrium_ok: bool
    gradient_ok: bool
    worst_gradient_error: float
    messages: list[str]

    @property
    def passed(self) -> bool:
        return self.equilibrium_ok and self.gradient_ok


def validate_system(sys: ControlledSystem, n_points: int = 8, rtol: float = 1e-5,
                    seed: int = 0) -> ValidationReport:
    """Equilibrium conditions and a central-difference check of ``grad_g``."""
    msgs = []
    zero_x = np.zeros(sys.n)
    f0 = np.asarray(sys.f(zero_x, np.zeros(sys.m)), dtype=float)
    g0 = np.asarray(sys.g(zero_x), dtype=float)
    eq_ok = bool(np.all(f0 == 0) and np.all(g0 == 0))
    if not eq_ok:
        msgs.append(f"f(0,0)={f0.tolist()}, g(0)={g0.tolist()}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        x = rng.uniform(-1.0, 1.0, sys.n)
        jac = np.atleast_2d(sys.grad_g(x))
        fd = np.empty((sys.m, sys.n))
        for i in range(sys.n):
            h = 1e-6 * max(1.0, abs(x[i]))
            e = np.zeros(sys.n)
            e[i] = h
            fd[:, i] = (np.atleast_1d(sys.g(x + e)) - np.atleast_1d(sys.g(x - e))) / (2 * h)
        err = np.max(np.abs(jac - fd)) / max(1.0, np.max(np.abs(fd)))
        worst = max(worst, float(err))
    grad_ok = worst <= rtol
    if not grad_ok:
        msgs.append(f"grad_g differs from finite differences by {worst:.3g} (relative)")
    return ValidationReport(eq_ok, grad_ok, worst, msgs)


# ---------------------------------------------------------------- registry

_REGISTRY: dict[str, Callable[..., ControlledSystem]] = {}


def register(name: str):
    def deco(factory):
        _REGISTRY[name] = factory
        return factory
    return deco


def registered() -> list[str]:
    return sorted(_REGISTRY)


def get_system(name: str, **params) -> ControlledSystem:
    """Build a registered system, validating it before returning."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ArgumentError(f"unknown system {name!r}; known: {', '.join(registered())}") from None
    sys = factory(**params)
    if isinstance(sys, InterconnectedSystem):
        sys = sys.as_controlled()
    report = validate_system(sys)
    if not report.passed:
        raise ArgumentError(f"system {name!r} failed validation: {'; '.join(report.messages)}")
    return sys


@register("scalar_demo")
def scalar_demo(k: float = 1.0) -> ControlledSystem:
    """``x' = u`` with ``u = -k x``."""
    k = float(k)
    return ControlledSystem(
        "scalar_demo", 1, 1,
        f=lambda x, u: np.array([u[0]]),
        g=lambda x: np.array([-k * x[0]]),
        grad_g=lambda x: np.array([[-k]]),
        params={"k": k},
        native_id=NATIVE_SCALAR_DEMO,
    )


def benchmark_xbar2(x) -> float:
    return x[3] + 2.5 * x[1]


@register("paper_sec4")
def benchmark_plant(w1: float = 0.5, w2: float = 0.5) -> ControlledSystem:
    """Lower-triangular benchmark with two dynamic uncertainties.

    State ordering is ``(z1, x1, z2, x2)``; the feedback is
    ``u = -(0.3 y**2 + 5) y`` with ``y = x2 + 2.5 x1``.
    """
    w1, w2 = float(w1), float(w2)
    if not (0.0 <= w1 <= 1.0 and 0.0 <= w2 <= 1.0):
        raise ArgumentError("benchmark uncertainties must lie in [0, 1]")

    def f(x, u):
        z1, x1, z2, x2 = x
        return np.array([
            -z1 ** 3,
            w1 * z1 + x2,
            -z2 + x1,
            -w2 * x1 * x2 + x1 + 3.0 * u[0],
        ])

    def g(x):
        y = x[3] + 2.5 * x[1]
        return np.array([-(0.3 * y * y + 5.0) * y])

    def grad_g(x):
        y = x[3] + 2.5 * x[1]
        d = -(0.9 * y * y + 5.0)
        return np.array([[0.0, 2.5 * d, 0.0, d]])

    return ControlledSystem("paper_sec4", 4, 1, f, g, grad_g, {"w1": w1, "w2": w2},
                            NATIVE_BENCHMARK, ("z1", "x1", "z2", "x2"))


@register("interconnected_demo")
def interconnected_demo(a: float = 0.5, k: float = 2.0) -> InterconnectedSystem:
    """``z' = -z + x``, ``x' = a z + u`` with ``u = -k x`` (z unmeasured)."""
    a, k = float(a), float(k)
    return InterconnectedSystem(
        "interconnected_demo", 1, 1, 1,
        q_dyn=lambda z, x, u: np.array([-z[0] + x[0]]),
        f=lambda z, x, u: np.array([a * z[0] + u[0]]),
        g=lambda x: np.array([-k * x[0]]),
        grad_g=lambda x: np.array([[-k]]),
        params={"a": a, "k": k},
        native_id=NATIVE_INTERCONNECTED_DEMO,
    )


def native_params(sys: ControlledSystem) -> np.ndarray:
    """Parameter vector in the order the compiled kernel expects."""
    if sys.native_id == NATIVE_SCALAR_DEMO:
        return np.array([sys.params["k"]], dtype=float)
    if sys.native_id == NATIVE_BENCHMARK:
        return np.array([sys.params["w1"], sys.params["w2"]], dtype=float)
    if sys.native_id == NATIVE_INTERCONNECTED_DEMO:
        return np.array([sys.params["a"], sys.params["k"]], dtype=float)
    raise ArgumentError(f"{sys.name} has no native implementation")


def state_norm(x) -> float:
    return math.sqrt(float(np.dot(x, x)))

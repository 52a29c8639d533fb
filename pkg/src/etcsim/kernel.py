"""Backend selection for the simulation loop.

The compiled kernel is used when it was built and the run qualifies
(built-in plant, polynomial gamma_bar); everything else goes through the
pure-Python loop, which implements the identical algorithm.
"""

from __future__ import annotations

import numpy as np

from . import _loop
from .dynamics import ControlledSystem, native_params
from .errors import ArgumentError
from .gains import GainFn

try:
    from . import _native
    HAVE_NATIVE = True
except ImportError:  # pragma: no cover - depends on the build
    _native = None
    HAVE_NATIVE = False

BACKENDS = ("auto", "native", "python")


def pieces_matrix(g: GainFn) -> np.ndarray:
    """Dense (pieces x degree) coefficient matrix of a polynomial gain."""
    if g.pieces is None:
        raise ArgumentError(f"{g.label} is not a polynomial gain")
    width = max(len(p) for p in g.pieces)
    out = np.zeros((len(g.pieces), width))
    for i, p in enumerate(g.pieces):
        out[i, :len(p)] = p
    return out


def native_eligible(sys: ControlledSystem, gamma_bar: GainFn) -> bool:
    return (HAVE_NATIVE and sys.native_id is not None and sys.m == 1
            and gamma_bar.pieces is not None)


def resolve_backend(backend: str, sys: ControlledSystem, gamma_bar: GainFn) -> str:
    if backend not in BACKENDS:
        raise ArgumentError(f"backend must be one of {BACKENDS}, got {backend!r}")
    if backend == "python":
        return "python"
    ok = native_eligible(sys, gamma_bar)
    if backend == "native" and not ok:
        why = "not built" if not HAVE_NATIVE else "run not supported by the compiled plant set"
        raise ArgumentError(f"native backend unavailable: {why}")
    return "native" if ok else "python"


def run(sys: ControlledSystem, gamma_bar: GainFn, x0, step: float, horizon: float,
        loc_tol: float, record_every: int = 1, backend: str = "auto",
        dual_r_factor: float = 10.0, dual_r_abort: float = 1e-6,
        divergence_limit: float = 1e6) -> dict:
    chosen = resolve_backend(backend, sys, gamma_bar)
    x0 = np.ascontiguousarray(x0, dtype=float)
    if chosen == "native":
        out = _native.run_native(int(sys.native_id), native_params(sys),
                                 pieces_matrix(gamma_bar), x0, step, horizon, loc_tol,
                                 int(record_every), dual_r_factor, dual_r_abort,
                                 divergence_limit)
    else:
        out = _loop.run_loop(sys, gamma_bar, x0, step, horizon, loc_tol, record_every,
                             dual_r_factor, dual_r_abort, divergence_limit)
    out["backend"] = chosen
    return out

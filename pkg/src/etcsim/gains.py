"""Class-K / class-K-infinity comparison functions and their numeric algebra.

A :class:`GainFn` is an immutable closure ``s -> g(s)`` on ``s >= 0``.  When
a gain is (a pointwise maximum of) polynomials with nonnegative
coefficients and no constant term, the coefficients are carried along in
``pieces``; this keeps composition, scaling and maxima exact and lets the
compiled simulation kernel evaluate the gain without calling back into
Python.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import (
    ArgumentError,
    DomainError,
    GainRangeError,
    SlopeEstimationError,
)

Pieces = tuple[tuple[float, ...], ...]

#: geometric grid used for slope-at-zero estimation (descending)
SLOPE_GRID = 10.0 ** -np.arange(1, 9, dtype=float)

DEFAULT_TOL = 1e-10
MAX_BISECT_ITER = 200


def default_grid(lo: float = 1e-6, hi: float = 1e2, num: int = 200) -> np.ndarray:
    """Geometric validation grid used by the inequality checks."""
    return np.geomspace(lo, hi, num)


def _horner(coeffs: Sequence[float], s):
    # sum_i coeffs[i] * s**(i+1)
    val = 0.0
    for c in reversed(coeffs):
        val = (val + c) * s
    return val


def _pieces_func(pieces: Pieces) -> Callable:
    if len(pieces) == 1:
        p = pieces[0]
        return lambda s: _horner(p, s)

    def f(s):
        if isinstance(s, np.ndarray):
            return reduce(np.maximum, (_horner(p, s) for p in pieces))
        return max(_horner(p, s) for p in pieces)

    return f


def _prune(pieces: Iterable[Sequence[float]]) -> Pieces:
    """Drop pieces that are coefficientwise dominated by another piece.

    With nonnegative coefficients and s >= 0 a dominated piece never
    attains the maximum, so pruning leaves the evaluated values unchanged.
    """
    width = 0
    cleaned = []
    for p in pieces:
        p = list(map(float, p))
        while len(p) > 1 and p[-1] == 0.0:
            p.pop()
        cleaned.append(p)
        width = max(width, len(p))
    padded = [tuple(p + [0.0] * (width - len(p))) for p in cleaned]
    keep: list[int] = []
    for i, a in enumerate(padded):
        dominated = False
        for j, b in enumerate(padded):
            if i == j:
                continue
            if all(x <= y for x, y in zip(a, b)) and (a != b or j < i):
                dominated = True
                break
        if not dominated:
            keep.append(i)
    return tuple(tuple(cleaned[i]) for i in keep)


@dataclass(frozen=True)
class GainFn:
    """A comparison function ``s -> func(s)`` on the nonnegative reals.

    ``slope`` is ``lim_{s->0+} g(s)/s`` when analytically known (``math.inf``
    allowed), ``domain_hint`` the upper end of the range on which the
    function has been validated.
    """

    func: Callable = field(repr=False)
    slope: float | None = None
    domain_hint: float = 1e2
    pieces: Pieces | None = None
    label: str = "g"
    is_zero: bool = False

    def __call__(self, s):
        arr = np.asarray(s, dtype=float)
        if np.any(np.isnan(arr)) or np.any(arr < 0.0):
            raise DomainError(f"{self.label}: gain evaluated at negative argument")
        if arr.ndim == 0:
            x = float(arr)
            return 0.0 if x == 0.0 else float(self.func(x))
        out = np.asarray(self.func(arr), dtype=float)
        return np.where(arr == 0.0, 0.0, out)

    def scalar(self, s: float) -> float:
        """Unchecked fast path for hot loops (caller guarantees s >= 0)."""
        return 0.0 if s == 0.0 else float(self.func(s))

    def __repr__(self) -> str:
        return f"GainFn({self.label!r}, slope={self.slope})"


# ---------------------------------------------------------------- builders


def polynomial(coeffs: Sequence[float], label: str | None = None,
               domain_hint: float = 1e2) -> GainFn:
    """``sum_i coeffs[i] * s**(i+1)`` (no constant term)."""
    coeffs = tuple(float(c) for c in coeffs)
    if not coeffs:
        raise ArgumentError("polynomial gain needs at least one coefficient")
    label = label or "poly(" + ",".join(f"{c:g}" for c in coeffs) + ")"
    if all(c >= 0 for c in coeffs):
        pieces = _prune([coeffs])
        return GainFn(_pieces_func(pieces), slope=coeffs[0], domain_hint=domain_hint,
                      pieces=pieces, label=label, is_zero=not any(coeffs))
    return GainFn(lambda s: _horner(coeffs, s), slope=coeffs[0],
                  domain_hint=domain_hint, label=label)


def linear(a: float, label: str | None = None) -> GainFn:
    return polynomial([a], label=label or f"{a:g}s")


def identity() -> GainFn:
    return linear(1.0, label="s")


def zero_gain() -> GainFn:
    """The zero map, used where a coupling is absent."""
    pieces: Pieces = ((0.0,),)
    return GainFn(lambda s: 0.0 * s, slope=0.0, pieces=pieces, label="0", is_zero=True)


def power(a: float, p: float, label: str | None = None) -> GainFn:
    """``a * s**p`` with ``a, p > 0``."""
    if a <= 0 or p <= 0:
        raise ArgumentError("power gain needs a > 0 and p > 0")
    if float(p).is_integer():
        coeffs = [0.0] * (int(p) - 1) + [float(a)]
        return polynomial(coeffs, label=label or f"{a:g}s^{int(p)}")
    slope = a if p == 1 else (0.0 if p > 1 else math.inf)
    return GainFn(lambda s: a * s ** p, slope=slope, label=label or f"{a:g}s^{p:g}")


def from_callable(fn: Callable, slope: float | None = None,
                  domain_hint: float = 1e2, label: str = "g") -> GainFn:
    """Wrap an arbitrary vectorised callable as a gain."""
    return GainFn(fn, slope=slope, domain_hint=domain_hint, label=label)


# -------------------------------------------------------------- operations


def evaluate(g: GainFn, s: float) -> float:
    if s < 0:
        raise DomainError(f"{g.label}: negative argument {s}")
    return g(float(s))


def _slope_product(a: float | None, b: float | None) -> float | None:
    if a is None or b is None:
        return None
    if (a == 0 and b == math.inf) or (a == math.inf and b == 0):
        return None
    return a * b


def _compose_pieces(outer: Pieces, inner: Pieces) -> Pieces:
    out = []
    for p in outer:
        pc = np.concatenate([[0.0], p])
        for q in inner:
            qc = np.concatenate([[0.0], q])
            acc = np.array([0.0])
            for c in pc[::-1]:
                acc = npoly.polyadd(npoly.polymul(acc, qc), [c])
            acc = np.concatenate([acc, np.zeros(max(0, 2 - len(acc)))])
            out.append(tuple(acc[1:]))
    return _prune(out)


def compose(outer: GainFn, inner: GainFn) -> GainFn:
    """``s -> outer(inner(s))``; slopes multiply (chain rule at 0)."""
    label = f"{outer.label}∘{inner.label}"
    slope = _slope_product(outer.slope, inner.slope)
    hint = inner.domain_hint
    if outer.is_zero or inner.is_zero:
        z = zero_gain()
        return GainFn(z.func, 0.0, hint, z.pieces, label, True)
    if outer.pieces is not None and inner.pieces is not None:
        pieces = _compose_pieces(outer.pieces, inner.pieces)
        return GainFn(_pieces_func(pieces), slope, hint, pieces, label)
    of, inf_ = outer.func, inner.func
    return GainFn(lambda s: of(inf_(s)), slope, hint, None, label)


def max_of(gains: Sequence[GainFn]) -> GainFn:
    """Pointwise maximum of a nonempty list of gains."""
    gains = list(gains)
    if not gains:
        raise ArgumentError("max_of needs at least one gain")
    if len(gains) == 1:
        return gains[0]
    label = "max{" + ", ".join(g.label for g in gains) + "}"
    slopes = [g.slope for g in gains]
    slope = None if any(s is None for s in slopes) else max(slopes)
    hint = min(g.domain_hint for g in gains)
    live = [g for g in gains if not g.is_zero] or gains[:1]
    if all(g.pieces is not None for g in live):
        pieces = _prune([p for g in live for p in g.pieces])
        return GainFn(_pieces_func(pieces), slope, hint, pieces, label,
                      all(g.is_zero for g in gains))
    funcs = [g.func for g in live]

    def f(s):
        if isinstance(s, np.ndarray):
            return reduce(np.maximum, (fn(s) for fn in funcs))
        return max(fn(s) for fn in funcs)

    return GainFn(f, slope, hint, None, label)


def scale(c: float, g: GainFn) -> GainFn:
    """``s -> c * g(s)`` for ``c > 0``."""
    if not c > 0:
        raise ArgumentError(f"scale factor must be positive, got {c}")
    slope = None if g.slope is None else c * g.slope
    label = f"{c:g}·{g.label}"
    if g.pieces is not None:
        pieces = tuple(tuple(c * x for x in p) for p in g.pieces)
        return GainFn(_pieces_func(pieces), slope, g.domain_hint, pieces, label, g.is_zero)
    fn = g.func
    return GainFn(lambda s: c * fn(s), slope, g.domain_hint, None, label, g.is_zero)


def add(a: GainFn, b: GainFn) -> GainFn:
    """Pointwise sum."""
    slope = None if a.slope is None or b.slope is None else a.slope + b.slope
    label = f"({a.label} + {b.label})"
    hint = min(a.domain_hint, b.domain_hint)
    if a.pieces is not None and b.pieces is not None:
        out = []
        for p in a.pieces:
            for q in b.pieces:
                n = max(len(p), len(q))
                out.append(tuple((p[i] if i < len(p) else 0.0) + (q[i] if i < len(q) else 0.0)
                                 for i in range(n)))
        pieces = _prune(out)
        return GainFn(_pieces_func(pieces), slope, hint, pieces, label,
                      a.is_zero and b.is_zero)
    fa, fb = a.func, b.func
    return GainFn(lambda s: fa(s) + fb(s), slope, hint, None, label)


def _bisect(func, y: np.ndarray, hi: float, tol: float, max_iter: int) -> np.ndarray:
    lo = np.zeros_like(y)
    hi = np.full_like(y, hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        # no representable midpoint left: the bracket is at machine resolution
        stalled = (mid <= lo) | (mid >= hi)
        fm = np.asarray(func(mid), dtype=float)
        below = fm < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all((hi - lo <= tol) | stalled):
            break
    return 0.5 * (lo + hi)


def inverse_eval(g: GainFn, y, tol: float = DEFAULT_TOL, expand: bool = False):
    """Solve ``g(s) = y`` by monotone bisection on ``[0, domain_hint]``.

    ``tol`` is an absolute tolerance on the argument; ``tol=0`` bisects to
    machine resolution.  With ``expand`` the bracket is doubled until it
    contains the target instead of raising :class:`GainRangeError`.
    """
    arr = np.asarray(y, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("inverse_eval needs y >= 0")
    hi = float(g.domain_hint)
    top = g(hi)
    if np.any(arr > top):
        if not expand:
            raise GainRangeError(
                f"{g.label}: y={float(np.max(arr)):g} outside validated range [0, {top:g}]")
        for _ in range(200):
            hi *= 2.0
            top = g(hi)
            if np.all(arr <= top):
                break
        else:
            raise GainRangeError(f"{g.label}: cannot bracket y={float(np.max(arr)):g}")
    flat = np.atleast_1d(arr)
    out = _bisect(g.func, flat, hi, tol, MAX_BISECT_ITER)
    out = np.where(flat == 0.0, 0.0, out)
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def inverse(g: GainFn, label: str | None = None) -> GainFn:
    """The inverse function as a gain (bisection to machine resolution)."""
    if g.is_zero:
        raise ArgumentError("the zero gain has no inverse")
    if g.slope is None:
        slope = None
    elif g.slope == 0:
        slope = math.inf
    elif g.slope == math.inf:
        slope = 0.0
    else:
        slope = 1.0 / g.slope
    return GainFn(lambda y: inverse_eval(g, y, tol=0.0, expand=True), slope,
                  float(g(g.domain_hint)), None, label or f"({g.label})⁻¹")


def estimate_slope(g: GainFn, grid: np.ndarray = SLOPE_GRID) -> float:
    """Numeric ``lim g(s)/s`` from ratios on a decreasing geometric grid.

    The increments of successive ratios are inspected: if they shrink the
    limit is extrapolated with an Aitken tail correction, if they keep
    growing in one direction the slope is reported as ``+inf``.
    """
    s = np.asarray(grid, dtype=float)
    q = np.asarray(g(s), dtype=float) / s
    d = np.diff(q)
    diag = {"s": s.tolist(), "ratio": q.tolist()}
    if not np.all(np.isfinite(q)):
        raise SlopeEstimationError(f"{g.label}: non-finite ratio", diag)
    scale_q = max(1.0, float(np.max(np.abs(q))))
    if abs(d[-1]) <= 1e-12 * scale_q:
        return float(q[-1])
    if d[-2] == 0.0:
        raise SlopeEstimationError(f"{g.label}: erratic ratio trend", diag)
    rho = d[-1] / d[-2]
    if d[-1] > 0 and d[-2] > 0 and rho >= 0.5 and np.all(d[-4:] > 0):
        return math.inf
    if 0.0 < rho < 0.5 and np.sign(d[-1]) == np.sign(d[-2]):
        return float(q[-1] + d[-1] * rho / (1.0 - rho))
    if abs(d[-1]) <= 1e-8 * scale_q:
        return float(q[-1])
    raise SlopeEstimationError(f"{g.label}: non-monotone ratio trend", diag)


def slope_at_zero(g: GainFn) -> float:
    """Analytic slope when declared, else :func:`estimate_slope`."""
    if g.slope is not None:
        return float(g.slope)
    return estimate_slope(g)


# ------------------------------------------------------------------ checks


@dataclass
class KInfinityReport:
    label: str
    zero_ok: bool
    monotone_ok: bool
    growth_ok: bool
    failures: list[str]

    @property
    def passed(self) -> bool:
        return self.zero_ok and self.monotone_ok and self.growth_ok


def check_k_infinity(g: GainFn, grid: Sequence[float] | None = None) -> KInfinityReport:
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    failures = []
    zero_ok = float(g.func(0.0) if not g.is_zero else 0.0) == 0.0
    if not zero_ok:
        failures.append(f"g(0) = {g.func(0.0)!r} != 0")
    vals = np.asarray(g(grid), dtype=float)
    steps = np.diff(vals)
    monotone_ok = bool(np.all(steps > 0)) and bool(np.all(vals >= 0))
    if not monotone_ok:
        i = int(np.argmax(steps <= 0)) if np.any(steps <= 0) else int(np.argmax(vals < 0))
        failures.append(f"not strictly increasing near s={grid[i]:g}")
    smax = float(grid[-1])
    growth_ok = float(g(smax)) > float(g(smax / 2))
    if not growth_ok:
        failures.append(f"no growth at s_max={smax:g}")
    return KInfinityReport(g.label, zero_ok, monotone_ok, growth_ok, failures)


@dataclass
class SmallGainResult:
    holds: bool
    witness: float | None
    worst_ratio: float

    def __bool__(self) -> bool:
        return self.holds


def check_small_gain(g1: GainFn, g2: GainFn, grid: Sequence[float] | None = None) -> SmallGainResult:
    """Does ``g1(g2(s)) < s`` hold on every grid point?"""
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    loop = np.asarray(g1(np.asarray(g2(grid), dtype=float)), dtype=float)
    ratio = loop / grid
    bad = ~(loop < grid)
    witness = float(grid[np.argmax(bad)]) if np.any(bad) else None
    return SmallGainResult(witness is None, witness, float(np.max(ratio)))


def build_gamma_bar(gamma: GainFn, eps1: float, eps2: float,
                    grid: Sequence[float] | None = None) -> GainFn:
    """``eps1 * gamma(s) + eps2 * s`` for ``eps1 > 1``, ``eps2 > 0``."""
    if not eps1 > 1:
        raise ArgumentError(f"eps1 must exceed 1, got {eps1}")
    if not eps2 > 0:
        raise ArgumentError(f"eps2 must be positive, got {eps2}")
    gb = add(scale(eps1, gamma), linear(eps2))
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if not np.all(gb(grid) >= eps1 * np.asarray(gamma(grid))):
        raise ArgumentError("gamma_bar >= eps1 * gamma failed on grid")
    if not slope_at_zero(gb) >= eps2:
        raise ArgumentError("gamma_bar slope at zero below eps2")
    return gb

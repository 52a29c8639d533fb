"""Recursive backstepping for lower-triangular systems with dynamic uncertainty.

Plant (per level ``j``)::

    z_j' = q_j(z_1..z_j, x_1..x_j, w)
    x_j' = f_j(z_1..z_j, x_1..x_j, w) + b_j x_{j+1},   u = x_{l+1}

Coordinates ``xbar_1 = x_1``, ``xbar_j = x_j - theta_{j-1}(xbar_{j-1})`` with
virtual controllers
``theta_j(s) = -(cbar_j + b_j^2/4 + m_j(s) + psi_j(|s|)) s / b_j``.

The designer supplies envelope profiles (``iota``, ``m``, ``m_tilde``), the
constants ``c`` and ``k``, candidate ``psi`` profiles and ISS gains of the
z-subsystems.  :func:`synthesize` checks the design inequalities level by
level on a grid and produces the closed-loop gains from ``xbar_{l+1}``;
:func:`design_gamma_bar` turns those into the triggering gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np
from numpy.polynomial import polynomial as npoly

from .dynamics import ControlledSystem, benchmark_plant
from .errors import ArgumentError, CalibrationError, SynthesisError
from .gains import (
    GainFn,
    SmallGainResult,
    check_small_gain,
    compose,
    default_grid,
    from_callable,
    inverse,
    linear,
    max_of,
    polynomial,
    scale,
    slope_at_zero,
    zero_gain,
)
from .interconnect import ISSCertificate

# ------------------------------------------------------------- profiles


@dataclass(frozen=True)
class Profile:
    """Nonnegative polynomial profile ``a0 + a1 s + a2 s^2 + ...``.

    Used for the envelope functions and the ``psi_j`` candidates, which may
    have a constant term (unlike gains).
    """

    coeffs: tuple[float, ...]

    def __post_init__(self):
        if not self.coeffs:
            raise ArgumentError("profile needs at least one coefficient")
        if any(c < 0 for c in self.coeffs):
            raise ArgumentError("profile coefficients must be nonnegative")

    @classmethod
    def const(cls, a: float) -> "Profile":
        return cls((float(a),))

    def __call__(self, s):
        return npoly.polyval(s, self.coeffs)

    def deriv(self, s):
        if len(self.coeffs) == 1:
            return 0.0 * np.asarray(s, dtype=float)
        return npoly.polyval(s, npoly.polyder(self.coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_even(self, grid: np.ndarray | None = None) -> bool:
        grid = default_grid() if grid is None else grid
        return bool(np.allclose(self(grid), self(-grid), rtol=1e-12, atol=0.0))

    def times_s2(self, factor: float = 1.0, label: str = "") -> GainFn:
        """``factor * p(s) * s^2`` as a gain."""
        coeffs = [0.0] + [factor * c for c in self.coeffs]
        return polynomial(coeffs, label=label or None)

    def squared_times_s2(self, factor: float, label: str = "") -> GainFn:
        """``factor * p(s)^2 * s^2`` as a gain."""
        sq = npoly.polymul(self.coeffs, self.coeffs)
        coeffs = [0.0] + [factor * c for c in sq]
        return polynomial(coeffs, label=label or None)

    def __str__(self) -> str:
        return " + ".join(f"{c:g}s^{i}" if i else f"{c:g}" for i, c in enumerate(self.coeffs))


@dataclass(frozen=True)
class ZCert:
    """ISS gains of ``z_j`` w.r.t. the earlier z-states and the xbar-states."""

    gamma_z: GainFn
    gamma_x: GainFn


@dataclass
class PsiReport:
    level: int
    passed: bool
    worst_margin: float
    witness: float | None
    branches: dict[str, float] = field(default_factory=dict)


@dataclass
class LevelGains:
    level: int
    psi_report: PsiReport
    small_gain: dict[str, SmallGainResult]
    gamma_x_z: GainFn
    gamma_x_next: GainFn
    gamma_bar_Z: GainFn
    gamma_bar_X: GainFn
    gamma_Z_X: GainFn | None = None
    gamma_x_x: GainFn | None = None
    gamma_X_Z: GainFn | None = None
    gamma_X_next: GainFn | None = None
    bound_ok: bool = True
    bound_ratio: float = 0.0
    Z_slope: float = 0.0


@dataclass(frozen=True)
class LtsDesign:
    ell: int
    b: tuple[float, ...]
    c: tuple[float, ...]
    k: tuple[float, ...]
    iota: tuple[Profile, ...]
    m: tuple[Profile, ...]
    m_tilde: tuple[Profile | None, ...]
    psi: tuple[Profile, ...]
    z_cert: tuple[ZCert, ...]
    name: str = "design"
    # plant hooks used by the falsifiers
    n: int | None = None
    z_idx: tuple[tuple[int, ...], ...] | None = None
    x_idx: tuple[int, ...] | None = None
    plant: Callable[[Mapping[str, float]], Callable] | None = field(default=None, repr=False)
    w_box: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    radius: float = 1.0
    declared_xi: tuple[GainFn, GainFn, GainFn] | None = None
    synthesized: tuple[LevelGains, ...] | None = None

    def __post_init__(self):
        ell = self.ell
        if ell < 1:
            raise ArgumentError("relative degree must be >= 1")
        for name in ("b", "c", "k", "iota", "m", "m_tilde", "psi", "z_cert"):
            if len(getattr(self, name)) != ell:
                raise ArgumentError(f"design field {name!r} needs {ell} entries")
        if any(bj == 0 for bj in self.b):
            raise ArgumentError("b_j = 0 leaves the virtual controller undefined")
        if any(cj <= 0 for cj in self.c):
            raise ArgumentError("c_j must be positive")
        if not self.k[0] > 2 or any(not kj > 3 for kj in self.k[1:]):
            raise ArgumentError("need k_1 > 2 and k_j > 3 for j >= 2")
        for j in range(1, ell):
            if self.m_tilde[j] is None:
                raise ArgumentError(f"level {j + 1} needs an m_tilde envelope")

    def cbar(self, j: int) -> float:
        return self.c[0] if j == 1 else 2.0 * self.c[j - 1]

    def level(self, j: int) -> LevelGains:
        if self.synthesized is None:
            raise ArgumentError(f"{self.name}: not synthesized")
        return self.synthesized[j - 1]


def _check_level(design: LtsDesign, j: int) -> None:
    if not 1 <= j <= design.ell:
        raise ArgumentError(f"level {j} outside 1..{design.ell}")


# ------------------------------------------------------ controller & coords


def virtual_controller(design: LtsDesign, j: int, xbar_j):
    """``theta_j(xbar_j)``; odd in ``xbar_j`` for even ``m_j``, ``psi_j``."""
    _check_level(design, j)
    s = np.asarray(xbar_j, dtype=float)
    b = design.b[j - 1]
    gain = design.cbar(j) + 0.25 * b * b + design.m[j - 1](s) + design.psi[j - 1](np.abs(s))
    out = -gain * s / b
    return float(out) if np.ndim(out) == 0 else out


def controller_slope(design: LtsDesign, j: int, xbar_j):
    """Derivative of ``theta_j`` with respect to its argument."""
    _check_level(design, j)
    s = np.asarray(xbar_j, dtype=float)
    a = np.abs(s)
    b = design.b[j - 1]
    m, psi = design.m[j - 1], design.psi[j - 1]
    val = design.cbar(j) + 0.25 * b * b + m(s) + psi(a) + m.deriv(s) * s + psi.deriv(a) * a
    out = -val / b
    return float(out) if np.ndim(out) == 0 else out


def transform(design: LtsDesign, x) -> np.ndarray:
    """``x -> xbar`` for the ``l`` chain states."""
    x = np.asarray(x, dtype=float)
    if x.shape != (design.ell,):
        raise ArgumentError(f"expected {design.ell} chain states")
    xb = np.empty_like(x)
    xb[0] = x[0]
    for j in range(1, design.ell):
        xb[j] = x[j] - virtual_controller(design, j, xb[j - 1])
    return xb


def inverse_transform(design: LtsDesign, xbar) -> np.ndarray:
    xbar = np.asarray(xbar, dtype=float)
    if xbar.shape != (design.ell,):
        raise ArgumentError(f"expected {design.ell} chain states")
    x = np.empty_like(xbar)
    x[0] = xbar[0]
    for j in range(1, design.ell):
        x[j] = xbar[j] + virtual_controller(design, j, xbar[j - 1])
    return x


def transform_jacobian(design: LtsDesign, xbar) -> np.ndarray:
    """``d xbar / d x`` (lower triangular, unit diagonal)."""
    ell = design.ell
    J = np.zeros((ell, ell))
    J[0, 0] = 1.0
    for j in range(1, ell):
        J[j] = -controller_slope(design, j, xbar[j - 1]) * J[j - 1]
        J[j, j] = 1.0
    return J


# ----------------------------------------------------------------- gains


def rho(design: LtsDesign, j: int, grid=None) -> GainFn:
    """``rho_j(s) = psi_j(s) s^2``."""
    _check_level(design, j)
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    psi = design.psi[j - 1]
    if not np.all(psi(grid) > 0):
        raise SynthesisError(f"psi_{j} is not positive on the grid", level=j)
    return psi.times_s2(label=f"rho{j}")


def _iota_bar(design: LtsDesign, j: int) -> GainFn:
    return design.iota[j - 1].squared_times_s2(1.0 / (4.0 * design.c[j - 1]), f"iota_bar{j}")


def _m_bar(design: LtsDesign, j: int) -> GainFn:
    return design.m_tilde[j - 1].squared_times_s2(1.0 / (4.0 * design.c[j - 1]), f"m_bar{j}")


def _rho_inverse_of(design: LtsDesign, j: int, h: GainFn, label: str) -> GainFn:
    """``rho_j^{-1} o h``; closed form when ``psi_j`` is constant."""
    if h.is_zero:
        return zero_gain()
    psi = design.psi[j - 1]
    if psi.degree == 0:
        a = psi.coeffs[0]
        if h.pieces is not None and all(len(p) == 2 and p[0] == 0.0 for p in h.pieces):
            # h(s) = max_i c_i s^2  ->  max_i sqrt(c_i / a) s
            return max_of([linear(math.sqrt(p[1] / a)) for p in h.pieces])
        hf = h.func
        slope = None
        if h.slope == 0 and h.pieces is not None:
            slope = max(math.sqrt(p[1] / a) if len(p) > 1 else 0.0 for p in h.pieces)
        return from_callable(lambda s: np.sqrt(hf(s) / a), slope=slope, label=label)
    return replace(compose(inverse(rho(design, j)), h), label=label)


def _psi_check(design: LtsDesign, j: int, grid: np.ndarray,
               gamma_Z_X: GainFn | None) -> PsiReport:
    s2 = grid * grid
    kj = design.k[j - 1]
    psi_vals = design.psi[j - 1](grid)
    iota_bar = _iota_bar(design, j)
    if j == 1:
        zb = np.asarray(compose(iota_bar, design.z_cert[0].gamma_x)(grid)) / s2
        branches = {"iota": zb, "one": np.ones_like(grid)}
    else:
        mb = np.asarray(_m_bar(design, j)(grid)) / s2
        zb = np.asarray(compose(iota_bar, gamma_Z_X)(2.0 * grid)) / s2
        branches = {"m_bar": mb, "iota": zb, "two": 2.0 * np.ones_like(grid)}
    rhs = kj * np.max(np.vstack(list(branches.values())), axis=0)
    margin = psi_vals - rhs
    i = int(np.argmin(margin))
    passed = bool(np.all(margin > 0))
    return PsiReport(j, passed, float(margin[i]), None if passed else float(grid[i]),
                     {k: float(kj * np.max(v)) for k, v in branches.items()})


def check_psi_conditions(design: LtsDesign, j: int, grid=None) -> PsiReport:
    """Evaluate the ``psi_j`` inequality on the grid (earlier levels must pass)."""
    _check_level(design, j)
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if j == 1:
        return _psi_check(design, 1, grid, None)
    prev = synthesize(replace(design, ell=j - 1, b=design.b[:j - 1], c=design.c[:j - 1],
                              k=design.k[:j - 1], iota=design.iota[:j - 1],
                              m=design.m[:j - 1], m_tilde=design.m_tilde[:j - 1],
                              psi=design.psi[:j - 1], z_cert=design.z_cert[:j - 1],
                              synthesized=None), grid)
    return _psi_check(design, j, grid, _gamma_Z_X(design, j, prev.level(j - 1)))


def _gamma_Z_X(design: LtsDesign, j: int, prev: LevelGains) -> GainFn:
    zc = design.z_cert[j - 1]
    return scale(2.0, max_of([zc.gamma_x, prev.gamma_bar_Z, compose(zc.gamma_z, prev.gamma_bar_Z)]))


def _finite_slope(g: GainFn) -> float:
    try:
        return slope_at_zero(g)
    except ArithmeticError:
        return math.inf


def synthesize(design: LtsDesign, grid=None) -> LtsDesign:
    """Run the level recursion; raises :class:`SynthesisError` on any failed check.

    The bound on the closed-loop gain from ``xbar_{j+1}`` to the xbar-states
    is checked as ``gamma_bar_X(s) <= s`` (equality admitted).
    """
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    levels: list[LevelGains] = []
    sq = polynomial([0.0, 1.0], label="s^2")
    for j in range(1, design.ell + 1):
        kj = design.k[j - 1]
        rho(design, j, grid)  # positivity of psi_j
        g_x_z = _rho_inverse_of(design, j, scale(kj, _iota_bar(design, j)), f"gamma_x{j}_z")
        g_x_next = _rho_inverse_of(design, j, scale(kj, sq), f"gamma_x{j}_x{j + 1}")
        zc = design.z_cert[j - 1]
        small: dict[str, SmallGainResult] = {}
        if j == 1:
            psi_rep = _psi_check(design, 1, grid, None)
            small["x_z"] = check_small_gain(g_x_z, zc.gamma_x, grid)
            g_bar_X = g_x_next
            g_bar_Z = compose(zc.gamma_x, g_x_next)
            lv = LevelGains(1, psi_rep, small, g_x_z, g_x_next, g_bar_Z, g_bar_X)
        else:
            prev = levels[-1]
            g_Z_X = _gamma_Z_X(design, j, prev)
            psi_rep = _psi_check(design, j, grid, g_Z_X)
            g_x_x = _rho_inverse_of(design, j, scale(kj, _m_bar(design, j)), f"gamma_x{j}_x")
            g_X_Z = scale(2.0, g_x_z)
            g_X_next = scale(2.0, g_x_next)
            small["x_x"] = check_small_gain(g_x_x, prev.gamma_bar_X, grid)
            small["Z_X"] = check_small_gain(g_Z_X, g_X_Z, grid)
            g_bar_Z = compose(g_Z_X, g_X_next)
            g_bar_X = g_X_next
            lv = LevelGains(j, psi_rep, small, g_x_z, g_x_next, g_bar_Z, g_bar_X,
                            g_Z_X, g_x_x, g_X_Z, g_X_next)
        vals = np.asarray(lv.gamma_bar_X(grid))
        lv.bound_ratio = float(np.max(vals / grid))
        lv.bound_ok = bool(np.all(vals <= grid * (1 + 1e-12)))
        lv.Z_slope = _finite_slope(lv.gamma_bar_Z)

        if not psi_rep.passed:
            raise SynthesisError(
                f"{design.name}: psi condition fails at level {j} "
                f"(margin {psi_rep.worst_margin:.4g} at s={psi_rep.witness:g})",
                level=j, witness=psi_rep.witness)
        for key, res in small.items():
            if not res:
                raise SynthesisError(
                    f"{design.name}: small-gain check {key} fails at level {j}, s={res.witness:g}",
                    level=j, witness=res.witness)
        if not lv.bound_ok:
            i = int(np.argmax(vals > grid * (1 + 1e-12)))
            raise SynthesisError(f"{design.name}: gamma_bar_X{j}(s) > s at level {j}",
                                 level=j, witness=float(grid[i]))
        if not math.isfinite(lv.Z_slope):
            raise SynthesisError(f"{design.name}: gamma_bar_Z{j} has infinite slope at 0",
                                 level=j)
        levels.append(lv)
    return replace(design, synthesized=tuple(levels))


# ------------------------------------------------------- output (xi) gains


def _norm_rows(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(a * a, axis=1)) if a.size else np.zeros(len(a))


def derived_xi_gains(design: LtsDesign) -> tuple[GainFn, GainFn, GainFn]:
    """Output gains valid on the ball of radius ``design.radius``.

    ``|xi| <= A(|xbar|) (iota |z| + kappa(|xbar|) |xbar| + |b| |r|)`` where
    ``A`` bounds ``|theta_l'|`` and ``kappa`` collects the envelope and
    controller terms; a sum of three terms is below three times their max.
    """
    ell, R = design.ell, design.radius
    b = design.b[ell - 1]
    m, psi = design.m[ell - 1], design.psi[ell - 1]
    mt = design.m_tilde[ell - 1] if ell > 1 else Profile.const(0.0)
    base = design.cbar(ell) + 0.25 * b * b
    # A(s) >= |theta'| on |xbar_l| <= s (every profile is nondecreasing on s >= 0)
    A = np.polynomial.Polynomial([base]) + _poly(m) + _poly(psi) \
        + np.polynomial.Polynomial([0, 1]) * (_poly(m).deriv() + _poly(psi).deriv())
    A_coef = A.coef / abs(b)
    A_R = float(np.polynomial.polynomial.polyval(R, A_coef))
    kappa = _poly(mt) + _poly(m) + np.polynomial.Polynomial([base]) + _poly(m) + _poly(psi)
    iota_R = float(design.iota[ell - 1](R))
    prod = np.polynomial.polynomial.polymul(A_coef, kappa.coef)
    g_z = polynomial([3.0 * A_R * iota_R], label="gamma_xi_z", domain_hint=R)
    g_x = polynomial(3.0 * np.asarray(prod), label="gamma_xi_x", domain_hint=R)
    g_r = polynomial([3.0 * A_R * abs(b)], label="gamma_xi_r", domain_hint=R)
    return g_z, g_x, g_r


def _poly(p: Profile) -> np.polynomial.Polynomial:
    return np.polynomial.Polynomial(p.coeffs)


def output_xi_gains(design: LtsDesign, mode: str = "auto", validate: bool = False,
                    n_samples: int = 10_000, seed: int = 0) -> tuple[GainFn, GainFn, GainFn]:
    """The three bounded-output gains of ``xi``.

    ``mode="declared"`` returns the design's published gains, ``"derived"``
    builds them from the envelopes, ``"auto"`` prefers declared ones.
    With ``validate`` a Monte-Carlo search runs and any violation raises
    :class:`CalibrationError` carrying the witness state.
    """
    if design.synthesized is None:
        raise ArgumentError(f"{design.name}: synthesize before requesting xi gains")
    if mode not in ("auto", "declared", "derived"):
        raise ArgumentError(f"unknown xi gain mode {mode!r}")
    if mode == "declared" or (mode == "auto" and design.declared_xi is not None):
        if design.declared_xi is None:
            raise ArgumentError(f"{design.name}: no declared xi gains")
        gains = design.declared_xi
    else:
        gains = derived_xi_gains(design)
    if validate:
        rep = falsify_xi_bound(design, gains, n_samples=n_samples, seed=seed)
        if not rep.passed:
            raise CalibrationError(
                f"{design.name}: xi bound violated in {rep.violations}/{rep.samples} samples "
                f"(worst ratio {rep.worst_ratio:.3g})", witness=rep.witness)
    return gains


def design_gamma(design: LtsDesign, xi_gains=None) -> GainFn:
    lv = design.level(design.ell)
    g_z, g_x, g_r = xi_gains if xi_gains is not None else output_xi_gains(design)
    return max_of([compose(g_z, lv.gamma_bar_Z), compose(g_x, lv.gamma_bar_X), g_r])


def design_gamma_bar(design: LtsDesign, eps: float, xi_gains=None) -> GainFn:
    """``gamma_bar = eps * max{g_xi_z o gbar_Z, g_xi_x o gbar_X, g_xi_r}``."""
    if not eps > 1:
        raise ArgumentError(f"eps must exceed 1, got {eps}")
    return scale(eps, design_gamma(design, xi_gains))


def design_certificate(design: LtsDesign, xi_gains=None) -> ISSCertificate:
    """Closed-loop gains from ``xbar_{l+1}`` packaged as an interconnection certificate.

    The recursion already delivers the composed gains; the cross gains are
    therefore zero and the composition step passes them through unchanged.
    """
    lv = design.level(design.ell)
    g_z, g_x, g_r = xi_gains if xi_gains is not None else output_xi_gains(design)
    return ISSCertificate(zero_gain(), lv.gamma_bar_Z, zero_gain(), lv.gamma_bar_X,
                          g_z, g_x, g_r, beta_note="transients from the level recursion",
                          label=f"{design.name} certificate")


# ------------------------------------------------------------ falsifiers


@dataclass
class MonteCarloReport:
    samples: int
    violations: int
    worst_ratio: float
    witness: dict | None = None
    per_level: dict[int, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _ball(rng, n: int, dim: int, radius: float) -> np.ndarray:
    v = rng.normal(size=(n, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * (radius * rng.uniform(size=(n, 1)) ** (1.0 / dim))


def _require_plant(design: LtsDesign):
    if design.plant is None or design.z_idx is None or design.x_idx is None or design.n is None:
        raise ArgumentError(f"{design.name}: no plant attached for falsification")


def _sample_w(rng, design: LtsDesign) -> dict:
    return {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in design.w_box.items()}


def _assemble(design: LtsDesign, z: np.ndarray, xbar: np.ndarray) -> np.ndarray:
    y = np.zeros(design.n)
    zi = [i for idx in design.z_idx for i in idx]
    y[zi] = z
    y[list(design.x_idx)] = inverse_transform(design, xbar)
    return y


def falsify_envelopes(design: LtsDesign, n_samples: int = 10_000, seed: int = 0,
                      radius: float | None = None, rtol: float = 1e-9) -> MonteCarloReport:
    """Check ``|fbar_j| <= iota_j |z^j| + m_tilde_j |xbar^{j-1}| + m_j |xbar_j|``."""
    _require_plant(design)
    rng = np.random.default_rng(seed)
    radius = design.radius if radius is None else radius
    nz = sum(len(i) for i in design.z_idx)
    zs = _ball(rng, n_samples, nz + design.ell, radius)
    rep = MonteCarloReport(n_samples, 0, 0.0, per_level={j: 0 for j in range(1, design.ell + 1)})
    zcount = [len(i) for i in design.z_idx]
    zoff = np.cumsum([0] + zcount)
    xi_idx = list(design.x_idx)
    for row in zs:
        z, xbar = row[:nz], row[nz:]
        w = _sample_w(rng, design)
        f = design.plant(w)
        y = _assemble(design, z, xbar)
        fy = np.asarray(f(y, np.zeros(1)), dtype=float)
        J = transform_jacobian(design, xbar)
        xdot = fy[xi_idx]
        for j in range(1, design.ell + 1):
            xbar_dot = float(J[j - 1] @ xdot)
            coupling = design.b[j - 1] * y[xi_idx[j]] if j < design.ell else 0.0
            fbar = abs(xbar_dot - coupling)
            nzj = float(np.linalg.norm(z[:zoff[j]]))
            bound = design.iota[j - 1](nzj) * nzj + design.m[j - 1](xbar[j - 1]) * abs(xbar[j - 1])
            if j > 1:
                nxp = float(np.linalg.norm(xbar[:j - 1]))
                bound += design.m_tilde[j - 1](nxp) * nxp
            ratio = fbar / bound if bound > 0 else (math.inf if fbar > 0 else 0.0)
            rep.worst_ratio = max(rep.worst_ratio, ratio)
            if fbar > bound * (1 + rtol) + 1e-14:
                rep.violations += 1
                rep.per_level[j] += 1
                if rep.witness is None:
                    rep.witness = {"level": j, "z": z.tolist(), "xbar": xbar.tolist(), "w": w,
                                   "fbar": fbar, "bound": float(bound)}
    return rep


def falsify_xi_bound(design: LtsDesign, gains, n_samples: int = 10_000, seed: int = 0,
                     radius: float | None = None, rtol: float = 1e-9) -> MonteCarloReport:
    """Sample ``(z, xbar, r)`` in the ball; compare ``|xi|`` with the max of the gains.

    ``xi`` is the derivative of ``theta_l(xbar_l)`` along the plant driven
    by ``u = theta_l(xbar_l) - r``.
    """
    _require_plant(design)
    rng = np.random.default_rng(seed)
    radius = design.radius if radius is None else radius
    g_z, g_x, g_r = gains
    nz = sum(len(i) for i in design.z_idx)
    ell = design.ell
    pts = _ball(rng, n_samples, nz + ell + 1, radius)
    rep = MonteCarloReport(n_samples, 0, 0.0)
    xi_idx = list(design.x_idx)
    for row in pts:
        z, xbar, r = row[:nz], row[nz:nz + ell], float(row[-1])
        w = _sample_w(rng, design)
        y = _assemble(design, z, xbar)
        u = virtual_controller(design, ell, xbar[-1]) - r
        fy = np.asarray(design.plant(w)(y, np.array([u])), dtype=float)
        J = transform_jacobian(design, xbar)
        xi = controller_slope(design, ell, xbar[-1]) * float(J[-1] @ fy[xi_idx])
        bound = max(g_z(float(np.linalg.norm(z))), g_x(float(np.linalg.norm(xbar))), g_r(abs(r)))
        ratio = abs(xi) / bound if bound > 0 else (math.inf if xi != 0 else 0.0)
        rep.worst_ratio = max(rep.worst_ratio, ratio)
        if abs(xi) > bound * (1 + rtol) + 1e-14:
            rep.violations += 1
            if rep.witness is None:
                rep.witness = {"z": z.tolist(), "xbar": xbar.tolist(), "r": r, "w": w,
                               "xi": xi, "bound": float(bound)}
    return rep


def falsify_z_certificate(design: LtsDesign, level: int, zdyn: Callable, n_traj: int = 20,
                          horizon: float = 5.0, step: float = 1e-3, hold: float = 0.25,
                          amp: float | None = None, seed: int = 0) -> MonteCarloReport:
    """Drive ``z_j`` from rest with random piecewise-constant inputs.

    ``zdyn(z_j, z_prev, xbar_hat, w)`` is the z_j vector field written in
    xbar-coordinates.  Checks
    ``|z_j(t)| <= max{gamma_z(sup|z_prev|), gamma_x(sup|xbar_hat|)}``.
    """
    _require_plant(design)
    _check_level(design, level)
    rng = np.random.default_rng(seed)
    amp = design.radius if amp is None else amp
    zc = design.z_cert[level - 1]
    dim = len(design.z_idx[level - 1])
    n_prev = sum(len(i) for i in design.z_idx[:level - 1])
    hold_n = max(1, int(round(hold / step)))
    rep = MonteCarloReport(0, 0, 0.0)
    for traj in range(n_traj):
        w = _sample_w(rng, design)
        zj = np.zeros(dim)
        sup_p = sup_x = 0.0
        for i in range(int(round(horizon / step))):
            if i % hold_n == 0:
                zp = rng.uniform(-amp, amp, n_prev)
                xb = rng.uniform(-amp, amp, level)
                sup_p = max(sup_p, float(np.linalg.norm(zp)))
                sup_x = max(sup_x, float(np.linalg.norm(xb)))

            def fz(v):
                return np.asarray(zdyn(v, zp, xb, w), dtype=float)

            k1 = fz(zj)
            k2 = fz(zj + 0.5 * step * k1)
            k3 = fz(zj + 0.5 * step * k2)
            k4 = fz(zj + step * k3)
            zj = zj + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            lhs = float(np.linalg.norm(zj))
            bound = max(zc.gamma_z(sup_p), zc.gamma_x(sup_x))
            rep.samples += 1
            if lhs > 0:
                rep.worst_ratio = max(rep.worst_ratio, lhs / bound if bound > 0 else math.inf)
            if lhs > bound * (1 + 1e-9) + 1e-14:
                rep.violations += 1
                if rep.witness is None:
                    rep.witness = {"trajectory": traj, "t": (i + 1) * step, "z": zj.tolist()}
    return rep


def design_system(design: LtsDesign, w: Mapping[str, float] | None = None) -> ControlledSystem:
    """Plant closed with the design's own controller ``u = theta_l(xbar_l(x))``."""
    _require_plant(design)
    w = dict(w or {k: 0.5 * (lo + hi) for k, (lo, hi) in design.w_box.items()})
    f = design.plant(w)
    xi_idx = list(design.x_idx)
    ell = design.ell

    def g(y):
        xbar = transform(design, y[xi_idx])
        return np.array([virtual_controller(design, ell, xbar[-1])])

    def grad_g(y):
        xbar = transform(design, y[xi_idx])
        row = controller_slope(design, ell, xbar[-1]) * transform_jacobian(design, xbar)[-1]
        out = np.zeros((1, design.n))
        out[0, xi_idx] = row
        return out

    return ControlledSystem(f"{design.name}_closed", design.n, 1, f, g, grad_g, w)


# ---------------------------------------------------- benchmark example


BENCH_XI_Z = (12.5, 2.5)
BENCH_XI_X = (70.0, 40.0, 15.0, 3.56, 0.27)
BENCH_XI_R = (5.0, 1.0)


def benchmark_declared_xi() -> tuple[GainFn, GainFn, GainFn]:
    return (polynomial(BENCH_XI_Z, label="gamma_xi_z"),
            polynomial(BENCH_XI_X, label="gamma_xi_x"),
            polynomial(BENCH_XI_R, label="gamma_xi_r"))


def _benchmark_plant(w: Mapping[str, float]):
    return benchmark_plant(w.get("w1", 0.5), w.get("w2", 0.5)).f


def benchmark_z2_dynamics(z2, z_prev, xbar_hat, w):
    # z2' = -z2 + x1 and x1 = xbar1
    return np.array([-z2[0] + xbar_hat[0]])


def benchmark_design(variant: str = "certified", radius: float = 1.0) -> LtsDesign:
    """Two-level design for the four-state benchmark.

    ``"certified"`` passes every check and reproduces the closed-loop gains
    ``2s`` (z-block) and ``s`` (xbar-block) together with
    ``xbar_2 = x_2 + 2.5 x_1``; its own controller is linear.
    ``"cubic"`` picks constants that give exactly the cubic
    controller ``-(0.3 s^2 + 5) s``; it fails the level-2 psi check.
    """
    R = float(radius)
    common = dict(
        ell=2, b=(1.0, 3.0),
        iota=(Profile.const(1.0), Profile.const(2.5)),
        m_tilde=(None, Profile.const(5.25 + 2.5 * R)),
        z_cert=(ZCert(zero_gain(), zero_gain()), ZCert(zero_gain(), linear(1.0))),
        n=4, z_idx=((0,), (2,)), x_idx=(1, 3), plant=_benchmark_plant,
        w_box={"w1": (0.0, 1.0), "w2": (0.0, 1.0)}, radius=R,
        declared_xi=benchmark_declared_xi(),
    )
    if variant == "certified":
        return LtsDesign(c=(0.05, 8.0), k=(2.1, 3.05),
                         m=(Profile.const(0.0), Profile.const(2.5 + R)),
                         psi=(Profile.const(2.2), Profile.const(12.2)),
                         name="paper_sec4_design", **common)
    if variant == "cubic":
        return LtsDesign(c=(0.05, 1.0), k=(2.1, 3.05),
                         m=(Profile.const(0.0), Profile((3.5, 0.0, 0.9))),
                         psi=(Profile.const(2.2), Profile.const(7.25)),
                         name="cubic_controller_design", **common)
    raise ArgumentError(f"unknown variant {variant!r}")


__all__ = [
    "Profile", "ZCert", "LtsDesign", "LevelGains", "PsiReport", "MonteCarloReport",
    "virtual_controller", "controller_slope", "transform", "inverse_transform",
    "transform_jacobian", "rho", "check_psi_conditions", "synthesize",
    "derived_xi_gains", "output_xi_gains", "design_gamma", "design_gamma_bar",
    "design_certificate", "falsify_envelopes", "falsify_xi_bound",
    "falsify_z_certificate", "design_system", "benchmark_design", "benchmark_declared_xi",
    "benchmark_z2_dynamics",
]

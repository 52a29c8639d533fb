"""Gain bookkeeping for an ISS interconnection of z- and x-dynamics.

A certificate lists the declared gains: ISS gains of each subsystem with
respect to the other and to the input disturbance r, and the bounded-output
gains of xi in terms of z, x and r.  From these the module composes the
closed-loop gains from r, the triggering gain, and the conservative
alternative that treats (z, x) as a single state.  A Monte-Carlo falsifier
spot-checks declared certificates on simulated trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import ControlledSystem
from .errors import ArgumentError, SmallGainError
from .gains import (
    GainFn,
    KInfinityReport,
    check_k_infinity,
    check_small_gain,
    compose,
    estimate_slope,
    linear,
    max_of,
    scale,
    zero_gain,
)

GAIN_FIELDS = ("gamma_z_x", "gamma_z_r", "gamma_x_z", "gamma_x_r",
               "gamma_xi_z", "gamma_xi_x", "gamma_xi_r")


@dataclass(frozen=True)
class ISSCertificate:
    gamma_z_x: GainFn
    gamma_z_r: GainFn
    gamma_x_z: GainFn
    gamma_x_r: GainFn
    gamma_xi_z: GainFn
    gamma_xi_x: GainFn
    gamma_xi_r: GainFn
    # transient (KL) bounds are documented, never evaluated
    beta_note: str = ""
    label: str = "certificate"

    def gains(self) -> dict[str, GainFn]:
        return {k: getattr(self, k) for k in GAIN_FIELDS}

    def validate(self, grid=None) -> dict[str, KInfinityReport]:
        """Grid K-infinity check of every nonzero gain (zero = absent coupling)."""
        return {k: check_k_infinity(g, grid) for k, g in self.gains().items() if not g.is_zero}

    def replace(self, **kw) -> "ISSCertificate":
        data = {**self.gains(), "beta_note": self.beta_note, "label": self.label, **kw}
        return ISSCertificate(**data)


def _slope(g: GainFn) -> float:
    return g.slope if g.slope is not None else estimate_slope(g)


def closed_loop_gains(cert: ISSCertificate, grid=None) -> tuple[GainFn, GainFn]:
    """Closed-loop ISS gains from r to z and to x.

    ``max{g_z_r, g_z_x o g_x_r}`` and ``max{g_x_r, g_x_z o g_z_r}``, valid
    under the small-gain condition ``g_z_x o g_x_z < id``.
    """
    sg = check_small_gain(cert.gamma_z_x, cert.gamma_x_z, grid)
    if not sg:
        raise SmallGainError(
            f"{cert.label}: gamma_z_x o gamma_x_z >= s at s={sg.witness:g}", witness=sg.witness)
    gz = max_of([cert.gamma_z_r, compose(cert.gamma_z_x, cert.gamma_x_r)])
    gx = max_of([cert.gamma_x_r, compose(cert.gamma_x_z, cert.gamma_z_r)])
    return gz, gx


def triggering_gain(cert: ISSCertificate, grid=None) -> GainFn:
    """Triggering gain ``max{g_xi_z o gbar_z_r, g_xi_x o gbar_x_r, g_xi_r}``."""
    gz, gx = closed_loop_gains(cert, grid)
    return max_of([compose(cert.gamma_xi_z, gz), compose(cert.gamma_xi_x, gx),
                   cert.gamma_xi_r])


@dataclass
class ZenoCondition:
    holds: bool
    slope: float


def zeno_free_condition(gamma: GainFn) -> ZenoCondition:
    """Finite slope at zero, the requirement that excludes Zeno behaviour."""
    mu = _slope(gamma)
    return ZenoCondition(math.isfinite(mu), mu)


def joint_state_gain(cert: ISSCertificate, grid=None) -> GainFn:
    """Conservative gain from the joint state ``(z, x)``.

    ``max{g_xi o g_L, g_xi_r}`` with ``g_xi = max{g_xi_x, g_xi_z}`` and
    ``g_L = 2 max{gbar_z_r, gbar_x_r}``.
    """
    gz, gx = closed_loop_gains(cert, grid)
    g_lambda = scale(2.0, max_of([gz, gx]))
    g_xi = max_of([cert.gamma_xi_x, cert.gamma_xi_z])
    return max_of([compose(g_xi, g_lambda), cert.gamma_xi_r])


def reduced_gamma(cert: ISSCertificate) -> GainFn:
    """``max{g_xi_x o g_x_r, g_xi_r}``: the triggering gain when z drops out."""
    return max_of([compose(cert.gamma_xi_x, cert.gamma_x_r), cert.gamma_xi_r])


# ----------------------------------------------------------------- presets


def preset_autonomous_z(gamma_x_z: GainFn, gamma_x_r: GainFn, gamma_xi_z: GainFn,
                        gamma_xi_x: GainFn, gamma_xi_r: GainFn,
                        label: str = "autonomous z") -> ISSCertificate:
    """z-dynamics driven by neither x nor u (``g_z_x = g_z_r = 0``)."""
    return ISSCertificate(zero_gain(), zero_gain(), gamma_x_z, gamma_x_r, gamma_xi_z,
                          gamma_xi_x, gamma_xi_r,
                          beta_note="z' = q(z): z decays on its own", label=label)


def preset_cascade_z(gamma_z_x: GainFn, gamma_x_r: GainFn, gamma_xi_x: GainFn,
                     gamma_xi_r: GainFn, label: str = "cascade z") -> ISSCertificate:
    """z driven by x only, x free of z (``g_z_r = g_x_z = g_xi_z = 0``)."""
    return ISSCertificate(gamma_z_x, zero_gain(), zero_gain(), gamma_x_r, zero_gain(),
                          gamma_xi_x, gamma_xi_r,
                          beta_note="z' = q(z, x), x' = f(x, u)", label=label)


def demo_certificate(a: float = 0.5, k: float = 2.0) -> ISSCertificate:
    """Certificate for ``z' = -z + x``, ``x' = a z + u``, ``u = -k x``.

    With zero initial state ``|z| <= sup|x|`` and
    ``|x| <= (a sup|z| + sup|r|)/k <= max{2a/k sup|z|, 2/k sup|r|}``;
    ``xi = -k x'`` gives ``|xi| <= 3 max{k a |z|, k^2 |x|, k |r|}``.
    """
    a, k = float(a), float(k)
    if not (a > 0 and k > 0):
        raise ArgumentError("demo certificate needs a > 0, k > 0")
    return ISSCertificate(
        linear(1.0), zero_gain(), linear(2 * a / k), linear(2 / k),
        linear(3 * k * a), linear(3 * k * k), linear(3 * k),
        beta_note="exponential decay, rates 1 and k",
        label=f"interconnected_demo(a={a:g}, k={k:g})",
    )


# --------------------------------------------------------------- falsifier


@dataclass
class FalsifierReport:
    checks: int = 0
    violations: dict[str, int] = field(default_factory=lambda: {"z": 0, "x": 0, "xi": 0})
    worst_ratio: dict[str, float] = field(default_factory=lambda: {"z": 0.0, "x": 0.0, "xi": 0.0})
    witness: dict | None = None

    @property
    def passed(self) -> bool:
        return not any(self.violations.values())


def falsify_certificate(sys: ControlledSystem, cert: ISSCertificate, z_idx: Sequence[int],
                        x_idx: Sequence[int], coords: Callable | None = None,
                        n_traj: int = 20, horizon: float = 5.0, step: float = 1e-3,
                        r_amp: float = 0.5, r_hold: float = 0.25, seed: int = 0,
                        rtol: float = 1e-6, atol: float = 1e-9) -> FalsifierReport:
    """Search for trajectories that break the declared bounds.

    Each trajectory starts at the origin (so the transient terms vanish)
    and is driven by a random piecewise-constant r entering as
    ``u = g(y) - r``.  ``coords`` maps the plant state to the coordinates
    the certificate is written in (identity by default); ``z_idx`` and
    ``x_idx`` select the two blocks of those coordinates.
    """
    rng = np.random.default_rng(seed)
    z_idx, x_idx = list(z_idx), list(x_idx)
    coords = coords or (lambda y: y)
    f, g, jac = sys.f, sys.g, sys.grad_g
    rep = FalsifierReport()
    hold_steps = max(1, int(round(r_hold / step)))
    n_steps = int(round(horizon / step))

    def rhs(y, r):
        return np.asarray(f(y, np.asarray(g(y)) - r), dtype=float)

    for traj in range(n_traj):
        y = np.zeros(sys.n)
        sup_z = sup_x = sup_r = 0.0
        r = np.zeros(sys.m)
        for i in range(n_steps):
            if i % hold_steps == 0:
                r = rng.uniform(-r_amp, r_amp, sys.m)
                sup_r = max(sup_r, float(np.linalg.norm(r)))
            xi = np.atleast_2d(jac(y)) @ rhs(y, r)
            k1 = rhs(y, r)
            k2 = rhs(y + 0.5 * step * k1, r)
            k3 = rhs(y + 0.5 * step * k2, r)
            k4 = rhs(y + step * k3, r)
            c = coords(y)
            nz = float(np.linalg.norm(c[z_idx])) if z_idx else 0.0
            nx = float(np.linalg.norm(c[x_idx]))
            sup_z, sup_x = max(sup_z, nz), max(sup_x, nx)
            bounds = {
                "z": (nz, max(cert.gamma_z_x(sup_x), cert.gamma_z_r(sup_r))),
                "x": (nx, max(cert.gamma_x_z(sup_z), cert.gamma_x_r(sup_r))),
                "xi": (float(np.linalg.norm(xi)),
                       max(cert.gamma_xi_z(sup_z), cert.gamma_xi_x(sup_x),
                           cert.gamma_xi_r(sup_r))),
            }
            rep.checks += 1
            for key, (lhs, rhs_b) in bounds.items():
                if lhs == 0.0:
                    continue
                ratio = lhs / rhs_b if rhs_b > 0 else math.inf
                if ratio > rep.worst_ratio[key]:
                    rep.worst_ratio[key] = ratio
                if lhs > rhs_b * (1 + rtol) + atol:
                    rep.violations[key] += 1
                    if rep.witness is None:
                        rep.witness = {"bound": key, "trajectory": traj, "t": i * step,
                                       "state": y.tolist(), "r": r.tolist(),
                                       "lhs": lhs, "rhs": rhs_b}
            y = y + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return rep

"""Lyapunov spectrum estimation by iterated tangent maps with QR renormalization.

Works on two kinds of tangent steppers: the variational RK4 map of the true
flows (analytic vector-field Jacobians propagated through the RK4 stages)
and the closed-loop map of a trained reservoir.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import dynamics
from .rcmodel import step_state, symmetry_jacobian_diag, symmetry_transform
from .reservoir import Reservoir

# log |R_ii| below this signals a collapsed tangent frame
_COLLAPSE_LOG = -600.0


class FrameCollapseError(RuntimeError):
    """Tangent frame collapsed; reduce renorm_every."""


@dataclass
class LyapunovResult:
    """Exponents sorted descending, in inverse time units."""

    exponents: np.ndarray
    n_steps: int
    renorm_every: int
    dt: float

    def to_dict(self) -> dict:
        return {
            "exponents": [float(v) for v in self.exponents],
            "n_steps": int(self.n_steps),
            "renorm_every": int(self.renorm_every),
            "dt": float(self.dt),
        }


def rc_jacobian(res: Reservoir, r: np.ndarray) -> np.ndarray:
    """Jacobian of the autonomous reservoir map at state r."""
    if res.w_out is None:
        raise ValueError("reservoir has no trained readout")
    feedback = res.w_in @ res.w_out
    activation = res.a @ r + feedback @ symmetry_transform(r)
    sech2 = 1.0 - np.tanh(activation) ** 2
    inner = res.a + feedback * symmetry_jacobian_diag(r)[None, :]
    beta = res.beta
    return (1.0 - beta) * np.eye(res.d_r) + beta * sech2[:, None] * inner


def rc_tangent_stepper(res: Reservoir) -> Callable:
    """State-and-Jacobian stepper for the trained autonomous reservoir."""

    def step(r):
        j = rc_jacobian(res, r)
        v = res.w_out @ symmetry_transform(r)
        return step_state(res, r, v), j

    return step


def variational_rk4_stepper(derivative_fn, jacobian_fn, dt: float) -> Callable:
    """Tangent stepper for a flow: RK4 state update plus its exact derivative.

    The returned Jacobian is that of the one-step RK4 map, obtained by
    differentiating each stage with the analytic vector-field Jacobian.
    """

    def step(y):
        eye = np.eye(y.shape[0])
        k1 = derivative_fn(y)
        j1 = jacobian_fn(y)
        y2 = y + 0.5 * dt * k1
        k2 = derivative_fn(y2)
        j2 = jacobian_fn(y2) @ (eye + 0.5 * dt * j1)
        y3 = y + 0.5 * dt * k2
        k3 = derivative_fn(y3)
        j3 = jacobian_fn(y3) @ (eye + 0.5 * dt * j2)
        y4 = y + dt * k3
        k4 = derivative_fn(y4)
        j4 = jacobian_fn(y4) @ (eye + dt * j3)
        y_next = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        j_map = eye + (dt / 6.0) * (j1 + 2.0 * j2 + 2.0 * j3 + j4)
        return y_next, j_map

    return step


def flow_tangent_stepper(system: str, regime: str, dt: float) -> Callable:
    params = dynamics.regime_params(system, regime)
    if system == "lorenz":
        return variational_rk4_stepper(
            lambda y: dynamics.lorenz_derivative(y, params),
            lambda y: dynamics.lorenz_jacobian(y, params),
            dt,
        )
    return variational_rk4_stepper(
        lambda y: dynamics.wilson_cowan_derivative(y, params),
        lambda y: dynamics.wilson_cowan_jacobian(y, params),
        dt,
    )


def lyapunov_spectrum(
    tangent_step: Callable,
    initial_state: np.ndarray,
    n_steps: int,
    dt: float,
    n_exponents: int | None = None,
    renorm_every: int = 1,
) -> LyapunovResult:
    """Benettin/QR estimate of the leading Lyapunov exponents.

    tangent_step(x) must return (x_next, J(x)), with J the Jacobian of the
    one-step map at x. Exponents are per unit time (accumulated log |R_ii|
    divided by n_steps * dt).
    """
    x = np.asarray(initial_state, dtype=float).copy()
    dim = x.shape[0]
    n_exp = dim if n_exponents is None else n_exponents
    if not 1 <= n_exp <= dim:
        raise ValueError(f"n_exponents must be in [1, {dim}]")
    if renorm_every < 1:
        raise ValueError("renorm_every must be >= 1")
    q = np.eye(dim)[:, :n_exp]
    sums = np.zeros(n_exp)
    since_renorm = 0
    for _ in range(n_steps):
        x, j = tangent_step(x)
        q = j @ q
        since_renorm += 1
        if since_renorm == renorm_every:
            q, sums = _renorm(q, sums)
            since_renorm = 0
    if since_renorm:
        _, sums = _renorm(q, sums)
    exponents = np.sort(sums / (n_steps * dt))[::-1]
    return LyapunovResult(exponents=exponents, n_steps=n_steps, renorm_every=renorm_every, dt=dt)


def _renorm(q, sums):
    q, r = np.linalg.qr(q)
    diag = np.abs(np.diag(r))
    if np.any(diag == 0.0):
        raise FrameCollapseError("tangent frame collapsed (zero R diagonal); reduce renorm_every")
    logs = np.log(diag)
    if np.any(logs < _COLLAPSE_LOG):
        raise FrameCollapseError("tangent frame collapsing; reduce renorm_every")
    # keep a right-handed, positively scaled frame
    q = q * np.sign(np.diag(r))
    return q, sums + logs


def flow_spectrum(
    system: str,
    regime: str,
    dt: float,
    n_steps: int,
    n_exponents: int | None = None,
    renorm_every: int = 1,
    transient_steps: int = 1000,
    seed=0,
) -> LyapunovResult:
    """Spectrum of a true flow from a seeded on-attractor start point."""
    stepper = flow_tangent_stepper(system, regime, dt)
    x = dynamics.initial_condition(system, seed)
    for _ in range(transient_steps):
        x, _ = stepper(x)
    return lyapunov_spectrum(stepper, x, n_steps, dt, n_exponents, renorm_every)


def reservoir_spectrum(
    res: Reservoir,
    r_start: np.ndarray,
    n_steps: int,
    dt: float,
    n_exponents: int | None = None,
    renorm_every: int = 1,
) -> LyapunovResult:
    """Spectrum of the trained autonomous reservoir map, per unit time."""
    stepper = rc_tangent_stepper(res)
    return lyapunov_spectrum(stepper, r_start, n_steps, dt, n_exponents, renorm_every)

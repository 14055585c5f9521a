"""Ground-truth dynamical systems: Lorenz and coupled Wilson-Cowan flows.

Trajectories are produced by fixed-step classical RK4. Regime presets cover
the chaotic / intermittent / periodic Lorenz variants and the aperiodic /
quasiperiodic / periodic coupled Wilson-Cowan variants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

# Largest Lyapunov exponent of the standard chaotic Lorenz flow (r = 28).
# Used as the time reference: evaluation horizons and scaled valid times
# are expressed in units of 1 / LORENZ_LAMBDA_REF.
LORENZ_LAMBDA_REF = 0.9056

# Steps discarded before any data is used, so trajectories start on the
# attractor rather than at the arbitrary initial condition.
DEFAULT_TRANSIENT_STEPS = 10_000


class IntegrationDivergedError(RuntimeError):
    """Raised when the state leaves the finite range during integration."""

    def __init__(self, step: int):
        super().__init__(f"integration diverged: non-finite state at step {step}")
        self.step = step


@dataclass(frozen=True)
class LorenzParams:
    sigma: float = 10.0
    r: float = 28.0
    b: float = 8.0 / 3.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.r > 0 and self.b > 0):
            raise ValueError("Lorenz parameters sigma, r, b must all be positive")


@dataclass(frozen=True)
class WilsonCowanParams:
    """Two reciprocally coupled excitatory/inhibitory rate models.

    State ordering is (E1, I1, E2, I2). `alpha` sets the strength of the
    excitatory cross-coupling between the two sub-models and selects the
    dynamical regime.
    """

    tau_e: float = 1.0
    tau_i: float = 1.0
    k_e: float = 1.0
    k_i: float = 1.0
    c1: float = 16.0
    c2: float = 12.0
    c3: float = 15.0
    c4: float = 3.0
    P: float = 1.09
    Pprime: float = 1.06
    alpha: float = 1.3
    a_e: float = 1.3
    theta_e: float = 4.0
    a_i: float = 2.0
    theta_i: float = 3.7

    def __post_init__(self):
        if not (self.tau_e > 0 and self.tau_i > 0):
            raise ValueError("Wilson-Cowan time constants must be positive")


@dataclass
class Trajectory:
    """Multivariate time series sampled at a fixed step.

    values has shape (n_samples, dim); t0 is the absolute time of the first
    sample.
    """

    dt: float
    values: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ValueError("trajectory needs a (n_samples, dim) array with n_samples >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("trajectory contains non-finite entries")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def to_csv(self, path) -> None:
        """Write `t,x0,x1,...` rows with full float64 precision."""
        header = "t," + ",".join(f"x{i}" for i in range(self.dim))
        data = np.column_stack([self.times, self.values])
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        dt = float(t[1] - t[0]) if len(t) > 1 else 1.0
        return cls(dt=dt, values=data[:, 1:], t0=float(t[0]))


def lorenz_derivative(state, params: LorenzParams) -> np.ndarray:
    x, y, z = state
    return np.array([
        params.sigma * (y - x),
        params.r * x - y - x * z,
        x * y - params.b * z,
    ])


def lorenz_jacobian(state, params: LorenzParams) -> np.ndarray:
    x, y, z = state
    return np.array([
        [-params.sigma, params.sigma, 0.0],
        [params.r - z, -1.0, -x],
        [y, x, -params.b],
    ])


def sigmoid_e(x, params: WilsonCowanParams):
    """Excitatory response function; constructed so that sigmoid_e(0) = 0."""
    return 1.0 / (1.0 + np.exp(-params.a_e * (x - params.theta_e))) - 1.0 / (
        1.0 + np.exp(params.a_e * params.theta_e)
    )


def sigmoid_i(x, params: WilsonCowanParams):
    """Inhibitory response function; constructed so that sigmoid_i(0) = 0."""
    return 1.0 / (1.0 + np.exp(-params.a_i * (x - params.theta_i))) - 1.0 / (
        1.0 + np.exp(params.a_i * params.theta_i)
    )


def _dsigmoid(x, a, theta):
    s = 1.0 / (1.0 + np.exp(-a * (x - theta)))
    return a * s * (1.0 - s)


def wilson_cowan_derivative(state, params: WilsonCowanParams) -> np.ndarray:
    e1, i1, e2, i2 = state
    p = params
    ze1 = p.c1 * e1 - p.c2 * i1 + p.P + p.alpha * e2
    zi1 = p.c3 * e1 - p.c4 * i1
    ze2 = p.c1 * e2 - p.c2 * i2 + p.Pprime + p.alpha * e1
    zi2 = p.c3 * e2 - p.c4 * i2
    return np.array([
        (-e1 + (p.k_e - e1) * sigmoid_e(ze1, p)) / p.tau_e,
        (-i1 + (p.k_i - i1) * sigmoid_i(zi1, p)) / p.tau_i,
        (-e2 + (p.k_e - e2) * sigmoid_e(ze2, p)) / p.tau_e,
        (-i2 + (p.k_i - i2) * sigmoid_i(zi2, p)) / p.tau_i,
    ])


def wilson_cowan_jacobian(state, params: WilsonCowanParams) -> np.ndarray:
    e1, i1, e2, i2 = state
    p = params
    ze1 = p.c1 * e1 - p.c2 * i1 + p.P + p.alpha * e2
    zi1 = p.c3 * e1 - p.c4 * i1
    ze2 = p.c1 * e2 - p.c2 * i2 + p.Pprime + p.alpha * e1
    zi2 = p.c3 * e2 - p.c4 * i2
    dse1 = _dsigmoid(ze1, p.a_e, p.theta_e)
    dsi1 = _dsigmoid(zi1, p.a_i, p.theta_i)
    dse2 = _dsigmoid(ze2, p.a_e, p.theta_e)
    dsi2 = _dsigmoid(zi2, p.a_i, p.theta_i)
    j = np.zeros((4, 4))
    j[0, 0] = (-1.0 - sigmoid_e(ze1, p) + (p.k_e - e1) * dse1 * p.c1) / p.tau_e
    j[0, 1] = (p.k_e - e1) * dse1 * (-p.c2) / p.tau_e
    j[0, 2] = (p.k_e - e1) * dse1 * p.alpha / p.tau_e
    j[1, 0] = (p.k_i - i1) * dsi1 * p.c3 / p.tau_i
    j[1, 1] = (-1.0 - sigmoid_i(zi1, p) + (p.k_i - i1) * dsi1 * (-p.c4)) / p.tau_i
    j[2, 2] = (-1.0 - sigmoid_e(ze2, p) + (p.k_e - e2) * dse2 * p.c1) / p.tau_e
    j[2, 3] = (p.k_e - e2) * dse2 * (-p.c2) / p.tau_e
    j[2, 0] = (p.k_e - e2) * dse2 * p.alpha / p.tau_e
    j[3, 2] = (p.k_i - i2) * dsi2 * p.c3 / p.tau_i
    j[3, 3] = (-1.0 - sigmoid_i(zi2, p) + (p.k_i - i2) * dsi2 * (-p.c4)) / p.tau_i
    return j


def rk4_step(f, y, dt: float):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_rk4(derivative_fn, initial, dt: float, n_steps: int, t0: float = 0.0) -> Trajectory:
    """Classical fixed-step RK4; returns n_steps + 1 states including `initial`."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    y = np.asarray(initial, dtype=float).copy()
    out = np.empty((n_steps + 1, y.shape[0]))
    out[0] = y
    for i in range(n_steps):
        y = rk4_step(derivative_fn, y, dt)
        if not np.all(np.isfinite(y)):
            raise IntegrationDivergedError(i + 1)
        out[i + 1] = y
    return Trajectory(dt=dt, values=out, t0=t0)


# Regime presets. Lorenz varies only r; Wilson-Cowan varies only alpha.
LORENZ_REGIMES = {
    "chaotic": 28.0,
    "intermittent": 100.0,
    "periodic": 147.0,
}
WILSON_COWAN_REGIMES = {
    "chaotic": 1.3,
    "aperiodic": 1.3,  # alias used interchangeably for the chaotic regime
    "quasiperiodic": 1.9,
    "periodic": 4.0,
}

SYSTEMS = ("lorenz", "wilson_cowan")


def regime_params(system: str, regime: str):
    """Parameter set for a (system, regime) pair; raises on unknown labels."""
    if system == "lorenz":
        if regime not in LORENZ_REGIMES:
            raise ValueError(f"unknown lorenz regime {regime!r}; expected one of {sorted(LORENZ_REGIMES)}")
        return LorenzParams(r=LORENZ_REGIMES[regime])
    if system == "wilson_cowan":
        if regime not in WILSON_COWAN_REGIMES:
            raise ValueError(
                f"unknown wilson_cowan regime {regime!r}; expected one of {sorted(WILSON_COWAN_REGIMES)}"
            )
        return WilsonCowanParams(alpha=WILSON_COWAN_REGIMES[regime])
    raise ValueError(f"unknown system {system!r}; expected one of {SYSTEMS}")


def system_dim(system: str) -> int:
    return 3 if system == "lorenz" else 4


def initial_condition(system: str, seed) -> np.ndarray:
    """Seeded start point near the attractor basin."""
    rng = np.random.default_rng(seed)
    if system == "lorenz":
        return np.array([1.0, 1.0, 1.0]) + rng.uniform(-0.5, 0.5, 3)
    return np.full(4, 0.1) + rng.uniform(0.0, 0.05, 4)


def generate_regime(
    system: str,
    regime: str,
    dt: float,
    n_steps: int,
    transient_steps: int = DEFAULT_TRANSIENT_STEPS,
    seed=0,
) -> Trajectory:
    """Seeded on-attractor trajectory of n_steps + 1 samples at step dt.

    The first transient_steps integration steps are discarded and the
    returned trajectory restarts its clock at t0 = 0.
    """
    params = regime_params(system, regime)
    if system == "lorenz":
        f = lambda y: lorenz_derivative(y, params)
    else:
        f = lambda y: wilson_cowan_derivative(y, params)
    y0 = initial_condition(system, seed)
    traj = integrate_rk4(f, y0, dt, n_steps + transient_steps)
    return Trajectory(dt=dt, values=traj.values[transient_steps:], t0=0.0)

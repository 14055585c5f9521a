"""Reservoir state evolution, readout training, and forecast metrics.

The discrete update is r(t+dt) = (1-beta) r(t) + beta tanh(A r(t) + W_in u(t)).
During forecasting the input u is replaced by the readout W_out rtilde(r),
where rtilde squares the second half of the state vector to break the sign
symmetry of the tanh reservoir.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .dynamics import Trajectory
from .reservoir import Reservoir

# tanh bounds legitimate states by 1 in magnitude; anything past this is a
# runaway feedback loop.
DIVERGENCE_BOUND = 10.0

_TRAIN_CHUNK = 4096


class RankDeficiencyError(np.linalg.LinAlgError):
    """Ridge system is singular; retry with mu > 0."""


def linear_split(d_r: int) -> int:
    """Number of leading state entries kept linear by the readout transform."""
    return d_r // 2


def symmetry_transform(r: np.ndarray) -> np.ndarray:
    """Square the trailing half of the state; leading floor(D_r/2) entries pass through."""
    r = np.asarray(r, dtype=float)
    out = r.copy()
    n_lin = linear_split(r.shape[-1])
    out[..., n_lin:] = r[..., n_lin:] ** 2
    return out


def symmetry_jacobian_diag(r: np.ndarray) -> np.ndarray:
    """Diagonal of d(rtilde)/dr: 1 on the linear half, 2 r_i on the squared half."""
    r = np.asarray(r, dtype=float)
    out = np.ones_like(r)
    n_lin = linear_split(r.shape[-1])
    out[..., n_lin:] = 2.0 * r[..., n_lin:]
    return out


def step_state(res: Reservoir, r: np.ndarray, u: np.ndarray) -> np.ndarray:
    """One leaky-tanh update driven by input vector u."""
    beta = res.beta
    return (1.0 - beta) * r + beta * np.tanh(res.a @ r + res.w_in @ u)


@dataclass
class StateSeries:
    """Reservoir states r(t), one row per consumed input step."""

    dt: float
    states: np.ndarray
    diverged: bool = False

    def __len__(self) -> int:
        return self.states.shape[0]


def _input_array(inputs):
    if isinstance(inputs, Trajectory):
        return inputs.values, inputs.dt
    arr = np.asarray(inputs, dtype=float)
    return arr, 0.0


def drive(res: Reservoir, inputs, r0: Optional[np.ndarray] = None) -> StateSeries:
    """Teacher-forced evolution; returns one state per input step."""
    u, dt = _input_array(inputs)
    n = u.shape[0]
    r = np.zeros(res.d_r) if r0 is None else np.asarray(r0, dtype=float).copy()
    states = np.empty((n, res.d_r))
    for t in range(n):
        r = step_state(res, r, u[t])
        states[t] = r
    diverged = bool(np.abs(states).max(initial=0.0) >= DIVERGENCE_BOUND)
    return StateSeries(dt=dt, states=states, diverged=diverged)


def fit_output(states, targets, mu: float) -> np.ndarray:
    """Ridge readout: argmin sum |u - W rtilde|^2 + mu ||W||^2.

    Solved through the normal equations with a symmetric positive-definite
    factorization. states may be a StateSeries or an (n, D_r) array; targets
    an (n, d) array aligned with it.
    """
    if mu < 0:
        raise ValueError("mu must be >= 0")
    x = states.states if isinstance(states, StateSeries) else np.asarray(states, dtype=float)
    y = targets.values if isinstance(targets, Trajectory) else np.asarray(targets, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"states ({x.shape[0]}) and targets ({y.shape[0]}) must have equal length")
    xt = symmetry_transform(x)
    gram = xt.T @ xt
    cross = y.T @ xt
    return _solve_readout(gram, cross, mu)


def _solve_readout(gram: np.ndarray, cross: np.ndarray, mu: float) -> np.ndarray:
    d_r = gram.shape[0]
    system = gram + mu * np.eye(d_r)
    try:
        cho = scipy.linalg.cho_factor(system, lower=True)
    except np.linalg.LinAlgError as err:
        raise RankDeficiencyError(
            "ridge normal equations are rank deficient; use a regularization mu > 0"
        ) from err
    return scipy.linalg.cho_solve(cho, cross.T).T


def train_readout(res: Reservoir, train: Trajectory, mu: float, washout: int = 0):
    """Drive on the training segment and fit W_out without storing all states.

    Inputs are u(0..M-2) and targets u(1..M-1), so the readout of the state
    that has absorbed data up to time t approximates u(t). The first
    `washout` state/target pairs are excluded from the regression. Returns
    (w_out, diverged).
    """
    u = train.values
    n_inputs = u.shape[0] - 1
    if n_inputs - washout < 1:
        raise ValueError("training segment too short for the requested washout")
    d_r = res.d_r
    gram = np.zeros((d_r, d_r))
    cross = np.zeros((u.shape[1], d_r))
    r = np.zeros(d_r)
    diverged = False
    for start in range(0, n_inputs, _TRAIN_CHUNK):
        stop = min(start + _TRAIN_CHUNK, n_inputs)
        block = np.empty((stop - start, d_r))
        for t in range(start, stop):
            r = step_state(res, r, u[t])
            block[t - start] = r
        if np.abs(block).max(initial=0.0) >= DIVERGENCE_BOUND:
            diverged = True
        keep = slice(max(washout - start, 0), stop - start)
        xt = symmetry_transform(block[keep])
        gram += xt.T @ xt
        cross += u[start + 1 + keep.start : stop + 1].T @ xt
    return _solve_readout(gram, cross, mu), diverged


@dataclass
class ForecastRun:
    """Autonomous predictions; row t is the output after t feedback steps."""

    predictions: np.ndarray
    final_state: np.ndarray
    diverged: bool = False


def forecast(res: Reservoir, r_start: np.ndarray, n_steps: int) -> ForecastRun:
    """Closed-loop forecast returning n_steps + 1 readout outputs."""
    if res.w_out is None:
        raise ValueError("reservoir has no trained readout")
    r = np.asarray(r_start, dtype=float).copy()
    d = res.w_out.shape[0]
    preds = np.empty((n_steps + 1, d))
    diverged = False
    for t in range(n_steps + 1):
        v = res.w_out @ symmetry_transform(r)
        preds[t] = v
        if t < n_steps:
            r = step_state(res, r, v)
            if np.abs(r).max() >= DIVERGENCE_BOUND:
                diverged = True
    return ForecastRun(predictions=preds, final_state=r, diverged=diverged)


def eval_epsilon(predictions, truths, dt: float, t_eval: float) -> float:
    """RMS forecast error over horizon t_eval, averaged over start points.

    Each prediction/truth pair contributes
    eps_i^2 = (dt / t_eval) * sum_{j < n} |u_j - v_j|^2 with n = t_eval / dt
    steps, and the result is sqrt(mean_i eps_i^2).
    """
    n = int(round(t_eval / dt))
    if n < 1:
        raise ValueError("t_eval must cover at least one step")
    eps_sq = []
    for pred, truth in zip(predictions, truths, strict=True):
        pred = np.asarray(pred, dtype=float)
        truth = np.asarray(truth, dtype=float)
        if pred.shape[0] < n or truth.shape[0] < n:
            raise ValueError(f"need at least {n} steps per start point, got {pred.shape[0]}/{truth.shape[0]}")
        diff = pred[:n] - truth[:n]
        eps_sq.append((dt / t_eval) * float(np.sum(diff**2)))
    return float(np.sqrt(np.mean(eps_sq)))


def rms_norm(values: np.ndarray) -> float:
    """Time-averaged root-mean-square L2 norm, <||u||^2>^(1/2)."""
    values = np.asarray(values, dtype=float)
    return float(np.sqrt(np.mean(np.sum(values**2, axis=1))))


def valid_time(prediction, truth, dt: float, f: float, norm_denominator: float):
    """Elapsed time until the normalized error first exceeds f.

    Returns (t_v, censored); censored means the error never exceeded f over
    the available horizon, in which case t_v equals the horizon itself.
    """
    if norm_denominator <= 0:
        raise ValueError("norm_denominator must be positive")
    if not 0.0 <= f <= 1.0:
        raise ValueError("f must be in [0, 1]")
    pred = np.asarray(prediction, dtype=float)
    tru = np.asarray(truth, dtype=float)
    err = np.linalg.norm(pred - tru, axis=1) / norm_denominator
    exceeded = np.flatnonzero(err > f)
    if exceeded.size == 0:
        return float(len(err) * dt), True
    return float(exceeded[0] * dt), False


@dataclass
class ForecastReport:
    """Figures of merit for one trained reservoir over P start points."""

    epsilon: float
    valid_times: list[float]
    p: int
    t_eval: float
    f: float
    horizon: float
    censored: int = 0
    diverged: bool = False
    time_scale: float = 1.0  # multiply valid times by this for reporting
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)

    @property
    def median_valid_time(self) -> float:
        return float(np.median(self.valid_times))

    @property
    def median_valid_time_scaled(self) -> float:
        return self.median_valid_time * self.time_scale

    def to_dict(self) -> dict:
        return {
            "epsilon": float(self.epsilon),
            "valid_times": [float(v) for v in self.valid_times],
            "median_valid_time": self.median_valid_time,
            "median_valid_time_scaled": self.median_valid_time_scaled,
            "time_scale": float(self.time_scale),
            "p": int(self.p),
            "t_eval": float(self.t_eval),
            "f": float(self.f),
            "horizon": float(self.horizon),
            "censored": int(self.censored),
            "diverged": bool(self.diverged),
            "config": self.config,
            "seeds": self.seeds,
        }

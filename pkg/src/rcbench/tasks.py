"""Forecasting tasks: data preparation plus train-and-evaluate plumbing.

A ForecastTask fixes the ground-truth data, representation, and evaluation
protocol; evaluate() then measures one seeded reservoir realization on it.
Lorenz times are reported in units of the chaotic Lorenz Lyapunov time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import datapipe, dynamics, rcmodel
from .dynamics import LORENZ_LAMBDA_REF, Trajectory
from .reservoir import HyperParams, Reservoir, build_reservoir
from .seeds import derive_seed

# Per-system evaluation defaults. t_eval is the epsilon horizon; the valid
# time horizon, start spacing, and sync length are in steps.
_SYSTEM_DEFAULTS = {
    "lorenz": {
        "dt": 1e-2,
        "t_eval": 1.0 / LORENZ_LAMBDA_REF,
        "horizon_steps": 2208,  # 20 Lyapunov times
        "spacing_steps": 552,  # 5 Lyapunov times
        "time_scale": LORENZ_LAMBDA_REF,
    },
    "wilson_cowan": {
        "dt": 1e-1,
        "t_eval": 10.0,
        "horizon_steps": 1000,
        "spacing_steps": 200,
        "time_scale": 1.0,
    },
}


@dataclass
class TaskResult:
    epsilon: float
    valid_times: list[float]
    censored: int
    diverged: bool
    time_scale: float = 1.0

    @property
    def median_valid_time(self) -> float:
        return float(np.median(self.valid_times)) if self.valid_times else math.nan

    @property
    def median_valid_time_scaled(self) -> float:
        return self.median_valid_time * self.time_scale


@dataclass
class _Prepared:
    train_clean: np.ndarray
    train_noisy: np.ndarray
    eval_clean: np.ndarray
    normalizer: datapipe.Normalizer
    norm_denominator: float
    dt: float
    dim: int


@dataclass
class ForecastTask:
    """One forecasting benchmark: system, regime, representation, protocol."""

    system: str
    regime: str
    topology: str
    d_r: int
    train_steps: int
    data_seed: int
    dt: Optional[float] = None
    norm_mode: str = "DN"
    noise_std: float = 0.0
    transient_steps: int = dynamics.DEFAULT_TRANSIENT_STEPS
    washout: int = 100
    sync_steps: int = 100
    p_eval: int = 50
    p_opt: int = 20
    f: float = 0.4
    t_eval: Optional[float] = None
    horizon_steps: Optional[int] = None
    spacing_steps: Optional[int] = None
    fixed_k: Optional[int] = None  # clamp the ER in-degree during optimization
    raw_trajectory: Optional[Trajectory] = None  # bypass generate_regime (tests)
    _prepared: Optional[_Prepared] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        defaults = _SYSTEM_DEFAULTS[self.system]
        if self.dt is None:
            self.dt = defaults["dt"]
        if self.t_eval is None:
            self.t_eval = defaults["t_eval"]
        if self.horizon_steps is None:
            self.horizon_steps = defaults["horizon_steps"]
        if self.spacing_steps is None:
            self.spacing_steps = defaults["spacing_steps"]

    @property
    def time_scale(self) -> float:
        return _SYSTEM_DEFAULTS[self.system]["time_scale"]

    @property
    def eval_steps(self) -> int:
        p = max(self.p_eval, self.p_opt)
        return self.sync_steps + p * self.spacing_steps + self.horizon_steps + 2

    def prepare(self) -> _Prepared:
        if self._prepared is not None:
            return self._prepared
        if self.raw_trajectory is not None:
            traj = self.raw_trajectory
        else:
            traj = dynamics.generate_regime(
                self.system,
                self.regime,
                self.dt,
                self.train_steps + self.eval_steps,
                transient_steps=self.transient_steps,
                seed=self.data_seed,
            )
        train, evaluation = datapipe.split(traj, self.train_steps)
        norm = datapipe.fit_normalizer(train.values, self.norm_mode)
        train_clean = norm.apply(train.values)
        eval_clean = norm.apply(evaluation.values)
        if self.noise_std > 0:
            spec = datapipe.NoiseSpec(std=self.noise_std, seed=derive_seed(self.data_seed, "noise"))
            train_noisy = datapipe.add_noise(train_clean, spec)
        else:
            train_noisy = train_clean
        self._prepared = _Prepared(
            train_clean=train_clean,
            train_noisy=train_noisy,
            eval_clean=eval_clean,
            normalizer=norm,
            norm_denominator=rcmodel.rms_norm(train_clean),
            dt=self.dt,
            dim=traj.dim,
        )
        return self._prepared

    def start_indices(self, p: int, seed) -> np.ndarray:
        """Forecast start offsets into the evaluation segment, jittered per seed."""
        rng = np.random.default_rng(derive_seed(seed, "starts"))
        jitter = int(rng.integers(0, self.spacing_steps))
        return self.sync_steps + jitter + self.spacing_steps * np.arange(p)

    def build(self, params: HyperParams, seed) -> Reservoir:
        prep = self.prepare()
        res = build_reservoir(self.topology, self.d_r, prep.dim, params, seed)
        res.normalizer = prep.normalizer
        return res

    def train(self, params: HyperParams, seed) -> tuple[Reservoir, bool]:
        """Build one seeded realization and fit its readout on the (noisy) training data."""
        prep = self.prepare()
        res = self.build(params, seed)
        train_traj = Trajectory(dt=prep.dt, values=prep.train_noisy)
        w_out, diverged = rcmodel.train_readout(res, train_traj, params.mu, washout=self.washout)
        res.w_out = w_out
        return res, diverged

    def synchronized_state(self, res: Reservoir, start: int) -> np.ndarray:
        """Listening phase: drive with true data over the sync window before `start`."""
        prep = self.prepare()
        window = prep.eval_clean[start - self.sync_steps : start]
        return rcmodel.drive(res, window).states[-1]

    def evaluate(
        self,
        params: HyperParams,
        seed,
        p: Optional[int] = None,
        horizon_steps: Optional[int] = None,
        want_valid_times: bool = True,
    ) -> TaskResult:
        """Train one realization and measure epsilon (and valid times) on it."""
        prep = self.prepare()
        n_out = self.horizon_steps if horizon_steps is None else horizon_steps
        n_out = max(n_out, int(round(self.t_eval / prep.dt)))
        p = self.p_eval if p is None else p
        res, diverged = self.train(params, seed)
        preds, truths = [], []
        valid_times: list[float] = []
        censored = 0
        for start in self.start_indices(p, seed):
            r_start = self.synchronized_state(res, int(start))
            run = rcmodel.forecast(res, r_start, n_out - 1)
            diverged = diverged or run.diverged
            truth = prep.eval_clean[start : start + n_out]
            preds.append(run.predictions)
            truths.append(truth)
            if want_valid_times:
                t_v, cens = rcmodel.valid_time(
                    run.predictions, truth, prep.dt, self.f, prep.norm_denominator
                )
                valid_times.append(t_v)
                censored += int(cens)
        epsilon = rcmodel.eval_epsilon(preds, truths, prep.dt, self.t_eval)
        return TaskResult(
            epsilon=epsilon,
            valid_times=valid_times,
            censored=censored,
            diverged=diverged,
            time_scale=self.time_scale,
        )

    def evaluate_for_optimization(self, params: HyperParams, seed) -> TaskResult:
        """Cheap objective evaluation: epsilon only, over the epsilon horizon."""
        n_out = int(round(self.t_eval / self.prepare().dt))
        return self.evaluate(params, seed, p=self.p_opt, horizon_steps=n_out, want_valid_times=False)

    def report(self, result: TaskResult, config: dict | None = None, seeds: dict | None = None):
        return rcmodel.ForecastReport(
            epsilon=result.epsilon,
            valid_times=result.valid_times,
            p=len(result.valid_times),
            t_eval=self.t_eval,
            f=self.f,
            horizon=self.horizon_steps * self.dt,
            censored=result.censored,
            diverged=result.diverged,
            time_scale=result.time_scale,
            config=config or {},
            seeds=seeds or {},
        )

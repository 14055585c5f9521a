"""Gaussian-process Bayesian optimization of reservoir hyperparameters.

The search space depends on the topology: linked k = 1 kinds clamp the
in-degree, RUN additionally clamps rho = 0, and ER searches k as an integer
by continuous relaxation plus rounding. The surrogate is a Matern-5/2 GP on
unit-cube inputs with noise and lengthscale picked by marginal likelihood
on a small grid; proposals maximize expected improvement over a seeded
quasi-random candidate set.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.special
from scipy.stats import qmc

from .datapipe import DegenerateDataError
from .dynamics import IntegrationDivergedError
from .rcmodel import RankDeficiencyError
from .reservoir import FIXED_K, HyperParams, InconsistentTopologyError, InfeasibleInputMatrixError
from .seeds import derive_seed
from .tasks import ForecastTask, TaskResult

PARAM_NAMES = ("rho", "p_in", "rho_in", "beta", "log10_mu", "k")

# Objective is log10(epsilon); divergence and construction failures are
# capped at +1 and exact-zero errors floored at -12.
PENALTY_LOG10 = 1.0
FLOOR_LOG10 = -12.0
EPSILON_FLOOR = 1e-12

N_INIT_DEFAULT = 10
N_CANDIDATES = 1000
DEFAULT_ITERATIONS = {"R": 100, "A": 200, "B": 500}

_LENGTHSCALE_GRID = (0.1, 0.2, 0.4, 0.8, 1.6)
_NOISE_GRID = (1e-6, 1e-4, 1e-3, 1e-2, 1e-1)
_GRID_FIT_SUBSET = 100


@dataclass(frozen=True)
class OptRanges:
    """Closed search intervals per hyperparameter; k is an integer range."""

    label: str
    rho: tuple[float, float]
    p_in: tuple[float, float]
    rho_in: tuple[float, float]
    beta: tuple[float, float]
    log10_mu: tuple[float, float]
    k: tuple[int, int]

    def bounds(self, name: str) -> tuple[float, float]:
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            **{name: list(self.bounds(name)) for name in PARAM_NAMES},
        }


_RANGE_TABLE = {
    "R": OptRanges("R", (0.3, 1.5), (0.0, 1.0), (0.3, 1.5), (0.07, 0.11), (-5.0, 5.0), (1, 5)),
    "A": OptRanges("A", (0.1, 1.5), (0.1, 1.0), (0.1, 1.5), (0.05, 1.0), (-5.0, 0.0), (1, 5)),
    "B": OptRanges("B", (0.0, 1.5), (0.0, 1.0), (0.0, 1.5), (0.05, 1.0), (-5.0, 0.0), (1, 5)),
}


def standard_ranges(label: str) -> OptRanges:
    if label not in _RANGE_TABLE:
        raise ValueError(f"unknown range label {label!r}; expected one of {sorted(_RANGE_TABLE)}")
    return _RANGE_TABLE[label]


@dataclass(frozen=True)
class ActiveSpace:
    """Search dimensions after applying topology clamps."""

    names: tuple[str, ...]
    bounds: np.ndarray
    fixed: dict

    @property
    def n_dims(self) -> int:
        return len(self.names)


def active_space(ranges: OptRanges, topology: str = "ER", fixed_k: Optional[int] = None) -> ActiveSpace:
    fixed: dict = {}
    if topology == "RUN":
        fixed["rho"] = 0.0
        fixed["k"] = 0
    elif topology in FIXED_K:
        fixed["k"] = FIXED_K[topology]
    elif fixed_k is not None:
        fixed["k"] = int(fixed_k)
    names = tuple(n for n in PARAM_NAMES if n not in fixed)
    bounds = np.array([ranges.bounds(n) for n in names], dtype=float)
    return ActiveSpace(names=names, bounds=bounds, fixed=fixed)


def params_from_point(space: ActiveSpace, z: np.ndarray) -> HyperParams:
    """Map a unit-cube point to hyperparameters; k is rounded to an integer."""
    values = dict(space.fixed)
    for name, zi, (lo, hi) in zip(space.names, z, space.bounds):
        v = lo + float(np.clip(zi, 0.0, 1.0)) * (hi - lo)
        values[name] = int(round(v)) if name == "k" else v
    return HyperParams(**values)


def point_from_params(space: ActiveSpace, params: HyperParams) -> np.ndarray:
    z = np.empty(space.n_dims)
    for i, (name, (lo, hi)) in enumerate(zip(space.names, space.bounds)):
        v = float(getattr(params, name))
        z[i] = 0.5 if hi == lo else (v - lo) / (hi - lo)
    return z


# ---------------------------------------------------------------------------
# Gaussian process surrogate


def _matern52(dist: np.ndarray, lengthscale: float) -> np.ndarray:
    s = math.sqrt(5.0) * dist / lengthscale
    return (1.0 + s + s**2 / 3.0) * np.exp(-s)


def _pairwise_dist(xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    sq = np.sum(xa**2, axis=1)[:, None] + np.sum(xb**2, axis=1)[None, :] - 2.0 * xa @ xb.T
    return np.sqrt(np.maximum(sq, 0.0))


@dataclass
class GaussianProcess:
    x: np.ndarray
    y_mean: float
    y_std: float
    lengthscale: float
    noise: float
    chol: tuple = field(repr=False, default=None)
    alpha: np.ndarray = field(repr=False, default=None)


def _log_marginal_likelihood(x, y, lengthscale, noise):
    k = _matern52(_pairwise_dist(x, x), lengthscale) + noise * np.eye(len(y))
    try:
        cho = scipy.linalg.cho_factor(k, lower=True)
    except np.linalg.LinAlgError:
        return -np.inf
    alpha = scipy.linalg.cho_solve(cho, y)
    return float(
        -0.5 * y @ alpha - np.sum(np.log(np.diag(cho[0]))) - 0.5 * len(y) * math.log(2 * math.pi)
    )


def fit_gp(x: np.ndarray, y: np.ndarray, fixed_noise: Optional[float] = None) -> GaussianProcess:
    """Fit on normalized targets; hyperparameters by grid marginal likelihood.

    Grid selection uses at most the most recent _GRID_FIT_SUBSET points to
    bound the cubic cost; the final factorization uses all points.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std == 0.0:
        y_std = 1.0
    yn = (y - y_mean) / y_std
    if fixed_noise is not None:
        best = (1.0, fixed_noise)
    else:
        sub = slice(-_GRID_FIT_SUBSET, None)
        best, best_lml = None, -np.inf
        for ls in _LENGTHSCALE_GRID:
            for noise in _NOISE_GRID:
                lml = _log_marginal_likelihood(x[sub], yn[sub], ls, noise)
                if lml > best_lml:
                    best, best_lml = (ls, noise), lml
    lengthscale, noise = best
    k = _matern52(_pairwise_dist(x, x), lengthscale) + noise * np.eye(len(yn))
    cho = scipy.linalg.cho_factor(k, lower=True)
    alpha = scipy.linalg.cho_solve(cho, yn)
    return GaussianProcess(
        x=x, y_mean=y_mean, y_std=y_std, lengthscale=lengthscale, noise=noise, chol=cho, alpha=alpha
    )


def gp_predict(gp: GaussianProcess, xs: np.ndarray):
    """Posterior mean and latent (noise-free) std in the original y units."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ks = _matern52(_pairwise_dist(xs, gp.x), gp.lengthscale)
    mean = ks @ gp.alpha
    v = scipy.linalg.cho_solve(gp.chol, ks.T)
    var = np.maximum(1.0 - np.sum(ks * v.T, axis=1), 0.0)
    return gp.y_mean + gp.y_std * mean, gp.y_std * np.sqrt(var)


def expected_improvement(mean: np.ndarray, std: np.ndarray, best: float) -> np.ndarray:
    """EI for minimization; zero wherever the predictive std vanishes."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    ei = np.zeros_like(mean)
    ok = std > 0
    z = (best - mean[ok]) / std[ok]
    cdf = 0.5 * (1.0 + scipy.special.erf(z / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * z**2) / math.sqrt(2.0 * math.pi)
    ei[ok] = (best - mean[ok]) * cdf + std[ok] * pdf
    return np.maximum(ei, 0.0)


def _sobol(n_dims: int, n: int, seed: int) -> np.ndarray:
    sampler = qmc.Sobol(d=n_dims, scramble=True, seed=seed)
    return sampler.random(n)


def _propose_point(x_hist: np.ndarray, y_hist: np.ndarray, n_dims: int, seed, n_init: int) -> np.ndarray:
    n_seen = len(y_hist)
    if n_seen < n_init:
        return _sobol(n_dims, n_init, derive_seed(seed, "init"))[n_seen]
    rng = np.random.default_rng(derive_seed(seed, "fallback"))
    if float(np.ptp(y_hist)) < 1e-15:
        return rng.random(n_dims)
    gp = fit_gp(x_hist, y_hist)
    candidates = _sobol(n_dims, N_CANDIDATES, derive_seed(seed, "candidates"))
    mean, std = gp_predict(gp, candidates)
    ei = expected_improvement(mean, std, float(np.min(y_hist)))
    if ei.max() <= 0.0:
        return rng.random(n_dims)
    return candidates[int(np.argmax(ei))]


# ---------------------------------------------------------------------------
# Optimization driver


@dataclass
class OptRun:
    """Full history of one Bayesian-optimization run."""

    history: list[tuple[HyperParams, float]]
    seed: int
    n_iterations: int
    ranges_label: str
    topology: str

    @property
    def best(self) -> tuple[HyperParams, float]:
        return min(self.history, key=lambda item: item[1])

    @property
    def best_params(self) -> HyperParams:
        return self.best[0]

    @property
    def best_value(self) -> float:
        return self.best[1]

    def running_minimum(self) -> np.ndarray:
        return np.minimum.accumulate([v for _, v in self.history])

    def to_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "n_iterations": int(self.n_iterations),
            "ranges_label": self.ranges_label,
            "topology": self.topology,
            "history": [{"params": p.to_dict(), "value": float(v)} for p, v in self.history],
            "best": {"params": self.best_params.to_dict(), "value": float(self.best_value)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptRun":
        history = [(HyperParams.from_dict(h["params"]), float(h["value"])) for h in d["history"]]
        return cls(
            history=history,
            seed=int(d["seed"]),
            n_iterations=int(d["n_iterations"]),
            ranges_label=d["ranges_label"],
            topology=d["topology"],
        )


def objective(params: HyperParams, task: ForecastTask, seed) -> float:
    """log10(epsilon) of one seeded realization; total by construction.

    Construction failures and diverged forecasts return the penalty value
    instead of raising, so the optimizer always sees a finite objective.
    """
    try:
        result = task.evaluate_for_optimization(params, seed)
    except (
        InfeasibleInputMatrixError,
        InconsistentTopologyError,
        RankDeficiencyError,
        DegenerateDataError,
        IntegrationDivergedError,
    ):
        return PENALTY_LOG10
    if result.diverged or not math.isfinite(result.epsilon):
        return PENALTY_LOG10
    if result.epsilon <= EPSILON_FLOOR:
        return FLOOR_LOG10
    return min(math.log10(result.epsilon), PENALTY_LOG10)


def propose_next(
    history: Sequence[tuple[HyperParams, float]],
    ranges: OptRanges,
    seed,
    topology: str = "ER",
    fixed_k: Optional[int] = None,
    n_init: int = N_INIT_DEFAULT,
) -> HyperParams:
    """Next hyperparameter point given the evaluated history."""
    space = active_space(ranges, topology, fixed_k)
    if history:
        x_hist = np.array([point_from_params(space, p) for p, _ in history])
        y_hist = np.array([v for _, v in history])
    else:
        x_hist = np.empty((0, space.n_dims))
        y_hist = np.empty(0)
    z = _propose_point(x_hist, y_hist, space.n_dims, seed, n_init)
    return params_from_point(space, z)


def optimize(
    task: ForecastTask,
    ranges: OptRanges,
    n_iterations: Optional[int] = None,
    seed=0,
    n_init: int = N_INIT_DEFAULT,
) -> OptRun:
    """One full optimization run on a single seeded reservoir realization.

    The realization seed and the start-point set are fixed for the whole
    run, so the objective is a deterministic function of the proposal;
    randomness enters across runs through their seeds.
    """
    if n_iterations is None:
        n_iterations = DEFAULT_ITERATIONS[ranges.label]
    if n_iterations < n_init:
        raise ValueError(f"n_iterations must be >= n_init = {n_init}")
    history: list[tuple[HyperParams, float]] = []
    for i in range(n_iterations):
        params = propose_next(
            history,
            ranges,
            derive_seed(seed, "propose", i),
            topology=task.topology,
            fixed_k=task.fixed_k,
            n_init=n_init,
        )
        value = objective(params, task, seed)
        history.append((params, value))
    return OptRun(
        history=history,
        seed=int(seed),
        n_iterations=n_iterations,
        ranges_label=ranges.label,
        topology=task.topology,
    )


@dataclass
class OptAggregate:
    """Medians (continuous) and mode/median (k) over per-run optima."""

    medians: dict
    k_mode: int
    k_median: float
    k_disagreement: bool
    distributions: dict
    n_runs: int

    def params(self) -> HyperParams:
        values = dict(self.medians)
        values["k"] = self.k_mode
        return HyperParams(**values)

    def to_dict(self) -> dict:
        return {
            "medians": {k: float(v) for k, v in self.medians.items()},
            "k_mode": int(self.k_mode),
            "k_median": float(self.k_median),
            "k_disagreement": bool(self.k_disagreement),
            "params": self.params().to_dict(),
            "distributions": {k: [float(x) for x in v] for k, v in self.distributions.items()},
            "n_runs": int(self.n_runs),
        }


def aggregate(runs: Sequence[OptRun]) -> OptAggregate:
    """Combine >= 2 optimization runs into one hyperparameter set.

    Continuous parameters take the median of per-run bests; k takes the
    most probable value (mode, smallest on ties), with the median reported
    alongside and flagged when the two disagree.
    """
    if len(runs) < 2:
        raise ValueError("aggregation requires at least 2 optimization runs")
    bests = [run.best_params for run in runs]
    distributions = {name: [float(getattr(p, name)) for p in bests] for name in PARAM_NAMES}
    medians = {
        name: float(np.median(distributions[name]))
        for name in PARAM_NAMES
        if name != "k"
    }
    k_values = [int(getattr(p, "k")) for p in bests]
    counts = Counter(k_values)
    top = max(counts.values())
    k_mode = min(k for k, c in counts.items() if c == top)
    k_median = float(np.median(k_values))
    return OptAggregate(
        medians=medians,
        k_mode=k_mode,
        k_median=k_median,
        k_disagreement=(k_median != k_mode),
        distributions=distributions,
        n_runs=len(runs),
    )

"""Data representation transforms, observational noise, and splitting.

Three representations are supported:

* OR -- raw data, identity transform.
* EN -- per-component error normalization (u_i - mean_i) / var_i.
* DN -- global min-max normalization into [0, 1] with one scale shared by
  all components, preserving their relative magnitudes.

Transform parameters are always fitted on training data only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import Trajectory

NORMALIZATION_MODES = ("OR", "EN", "DN")


class DegenerateDataError(ValueError):
    """Training data cannot support the requested normalization."""


def _as_values(data) -> np.ndarray:
    if isinstance(data, Trajectory):
        return data.values
    return np.asarray(data, dtype=float)


@dataclass
class Normalizer:
    mode: str
    mean: Optional[np.ndarray] = None  # EN, per component
    var: Optional[np.ndarray] = None  # EN, per component
    lo: Optional[float] = None  # DN, global over components and times
    hi: Optional[float] = None

    def apply(self, data) -> np.ndarray:
        x = _as_values(data)
        if self.mode == "OR":
            return x.copy()
        if self.mode == "EN":
            return (x - self.mean) / self.var
        return (x - self.lo) / (self.hi - self.lo)

    def invert(self, data) -> np.ndarray:
        x = _as_values(data)
        if self.mode == "OR":
            return x.copy()
        if self.mode == "EN":
            return x * self.var + self.mean
        return x * (self.hi - self.lo) + self.lo

    def to_dict(self) -> dict:
        out = {"mode": self.mode}
        if self.mode == "EN":
            out["mean"] = [float(v) for v in self.mean]
            out["var"] = [float(v) for v in self.var]
        elif self.mode == "DN":
            out["lo"] = float(self.lo)
            out["hi"] = float(self.hi)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        mode = d["mode"]
        if mode == "EN":
            return cls(mode, mean=np.asarray(d["mean"], dtype=float), var=np.asarray(d["var"], dtype=float))
        if mode == "DN":
            return cls(mode, lo=float(d["lo"]), hi=float(d["hi"]))
        return cls(mode)


def fit_normalizer(train, mode: str) -> Normalizer:
    """Fit transform parameters on the training segment only."""
    if mode not in NORMALIZATION_MODES:
        raise ValueError(f"unknown normalization mode {mode!r}; expected one of {NORMALIZATION_MODES}")
    x = _as_values(train)
    if x.size == 0:
        raise DegenerateDataError("cannot fit a normalizer on empty data")
    if mode == "OR":
        return Normalizer("OR")
    if mode == "EN":
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        if np.any(var <= 0):
            raise DegenerateDataError("EN requires positive variance in every component")
        return Normalizer("EN", mean=mean, var=var)
    lo = float(x.min())
    hi = float(x.max())
    if hi <= lo:
        raise DegenerateDataError("DN requires max > min over the training data")
    return Normalizer("DN", lo=lo, hi=hi)


@dataclass(frozen=True)
class NoiseSpec:
    """White Gaussian observational noise of standard deviation `std`."""

    std: float
    seed: int = 0

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("noise std must be >= 0")


def add_noise(data, spec: NoiseSpec) -> np.ndarray:
    """Add independent N(0, std^2) noise to every entry; std = 0 is a no-op."""
    x = _as_values(data)
    if spec.std == 0:
        return x.copy()
    rng = np.random.default_rng(spec.seed)
    return x + rng.normal(0.0, spec.std, size=x.shape)


def snr_db(signal, noise_std: float) -> float:
    """Signal-to-noise ratio in dB for noise of the given std."""
    x = _as_values(signal)
    power = float(np.mean(x**2))
    return 10.0 * np.log10(power / noise_std**2)


def split(data: Trajectory, train_steps: int):
    """Contiguous (train, eval) split; eval keeps its absolute time offset."""
    n = len(data)
    if not 0 < train_steps < n:
        raise ValueError(f"train_steps must be in (0, {n}), got {train_steps}")
    train = Trajectory(dt=data.dt, values=data.values[:train_steps], t0=data.t0)
    evaluation = Trajectory(
        dt=data.dt,
        values=data.values[train_steps:],
        t0=data.t0 + train_steps * data.dt,
    )
    return train, evaluation

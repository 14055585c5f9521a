"""Reservoir network construction: topologies, scaling, input matrices.

Adjacency convention: A[i, j] != 0 means a directed link j -> i, so row i
holds the incoming connections of node i and the reservoir update reads
tanh(A @ r + W_in @ u).

Six topology kinds are supported:

* ER            -- every node has exactly k incoming links (random digraph)
* cycle_included -- in-degree 1, weakly connected, exactly one cycle
* tree          -- in-degree 1 except a single root, no cycles
* single_cycle  -- one Hamiltonian directed cycle through all nodes
* single_line   -- one Hamiltonian directed path through all nodes
* RUN           -- unconnected nodes, A identically zero (k = 0)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .datapipe import Normalizer

TOPOLOGIES = ("ER", "cycle_included", "tree", "single_cycle", "single_line", "RUN")
# Kinds whose in-degree is fixed by construction rather than a hyperparameter.
FIXED_K = {"cycle_included": 1, "tree": 1, "single_cycle": 1, "single_line": 1, "RUN": 0}

MAX_INPUT_REDRAWS = 100


class InconsistentTopologyError(ValueError):
    """(kind, k) pair violates the kind's in-degree constraint."""


class InfeasibleInputMatrixError(ValueError):
    """No input matrix with the requested sparsity/scale exists."""


@dataclass(frozen=True)
class HyperParams:
    """Optimizable reservoir hyperparameters.

    rho and rho_in are the target spectral radius of A and target largest
    singular value of W_in. p_in is the input connection probability, beta
    the leakage rate, log10_mu the log ridge parameter, and k the in-degree.
    """

    rho: float
    p_in: float
    rho_in: float
    beta: float
    log10_mu: float
    k: int

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("rho must be >= 0")
        if not 0.0 <= self.p_in <= 1.0:
            raise ValueError("p_in must be in [0, 1]")
        if self.rho_in < 0:
            raise ValueError("rho_in must be >= 0")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must be in (0, 1]")
        if self.k < 0 or self.k != int(self.k):
            raise ValueError("k must be a non-negative integer")

    @property
    def mu(self) -> float:
        return 10.0**self.log10_mu

    def to_dict(self) -> dict:
        return {
            "rho": float(self.rho),
            "p_in": float(self.p_in),
            "rho_in": float(self.rho_in),
            "beta": float(self.beta),
            "log10_mu": float(self.log10_mu),
            "k": int(self.k),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        return cls(
            rho=float(d["rho"]),
            p_in=float(d["p_in"]),
            rho_in=float(d["rho_in"]),
            beta=float(d["beta"]),
            log10_mu=float(d["log10_mu"]),
            k=int(d["k"]),
        )


def check_topology_k(kind: str, k: int) -> int:
    if kind not in TOPOLOGIES:
        raise InconsistentTopologyError(f"unknown topology {kind!r}; expected one of {TOPOLOGIES}")
    if kind == "ER":
        if k < 1:
            raise InconsistentTopologyError("ER requires in-degree k >= 1")
        return k
    fixed = FIXED_K[kind]
    if k != fixed:
        raise InconsistentTopologyError(f"{kind} forces k = {fixed}, got k = {k}")
    return fixed


def _weak_components(targets: np.ndarray, sources: np.ndarray, n: int) -> np.ndarray:
    """Union-find component labels for the undirected version of the edge list."""
    parent = np.arange(n)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for s, t in zip(sources, targets):
        ra, rb = find(s), find(t)
        if ra != rb:
            parent[ra] = rb
    return np.array([find(i) for i in range(n)])


def _functional_cycle(in_neighbor: np.ndarray, start: int) -> list[int]:
    """Nodes on the unique cycle reachable by following in-links from start."""
    seen = {}
    node = start
    step = 0
    while node not in seen:
        seen[node] = step
        node = int(in_neighbor[node])
        step += 1
    cycle_start = seen[node]
    return [n for n, s in seen.items() if s >= cycle_start]


def build_adjacency(kind: str, d_r: int, k: int, seed) -> np.ndarray:
    """Unscaled adjacency with standard-normal weights on existing links."""
    if d_r < 2:
        raise ValueError("d_r must be >= 2")
    k = check_topology_k(kind, k)
    rng = np.random.default_rng(seed)
    a = np.zeros((d_r, d_r))

    if kind == "RUN":
        return a

    if kind == "ER":
        if k > d_r - 1:
            raise InconsistentTopologyError(f"k = {k} exceeds the {d_r - 1} available distinct sources")
        for i in range(d_r):
            choices = rng.choice(d_r - 1, size=k, replace=False)
            choices = choices + (choices >= i)  # skip the self-loop slot
            a[i, choices] = rng.standard_normal(k)
        return a

    if kind == "cycle_included":
        picks = rng.integers(0, d_r - 1, size=d_r)
        in_neighbor = picks + (picks >= np.arange(d_r))
        labels = _weak_components(np.arange(d_r), in_neighbor, d_r)
        # Merge extra components into the one containing node 0 by rewiring
        # one cycle node per component; each rewire removes that component's
        # cycle, so exactly one cycle survives.
        while True:
            main = labels[0]
            extra = np.unique(labels[labels != main])
            if extra.size == 0:
                break
            comp = extra[0]
            members = np.flatnonzero(labels == comp)
            cycle_node = min(_functional_cycle(in_neighbor, int(members[0])))
            main_members = np.flatnonzero(labels == main)
            in_neighbor[cycle_node] = rng.choice(main_members)
            labels[members] = main
        a[np.arange(d_r), in_neighbor] = rng.standard_normal(d_r)
        return a

    perm = rng.permutation(d_r)
    if kind == "tree":
        # Random recursive tree: each node attaches below an earlier node.
        for i in range(1, d_r):
            parent = perm[rng.integers(0, i)]
            a[perm[i], parent] = rng.standard_normal()
        return a
    if kind == "single_cycle":
        a[np.roll(perm, -1), perm] = rng.standard_normal(d_r)
        return a
    # single_line: same path without the closing edge
    a[perm[1:], perm[:-1]] = rng.standard_normal(d_r - 1)
    return a


def is_acyclic(a: np.ndarray) -> bool:
    """Kahn peeling on the nonzero structure; acyclic means nilpotent A."""
    n = a.shape[0]
    adj = a != 0
    indeg = adj.sum(axis=1)
    active = np.ones(n, dtype=bool)
    removed = True
    while removed:
        removed = False
        zero = np.flatnonzero(active & (indeg == 0))
        if zero.size:
            removed = True
            active[zero] = False
            indeg = indeg - adj[:, zero].sum(axis=1)
    return not active.any()


def spectral_radius(a: np.ndarray) -> float:
    """Largest eigenvalue magnitude; exactly 0 for structurally acyclic A."""
    if not a.any():
        return 0.0
    if is_acyclic(a):
        # eigvals of nilpotent matrices are numerically unreliable
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def largest_singular_value(a: np.ndarray) -> float:
    if not a.any():
        return 0.0
    return float(np.linalg.norm(a, 2))


def scale_to_spectral_radius(a: np.ndarray, rho: float) -> np.ndarray:
    """Rescale A so its spectral radius is rho.

    Nilpotent adjacencies (tree, single_line) have spectral radius 0 and are
    rescaled to largest singular value rho instead; see adjacency_scale_mode.
    """
    if rho < 0:
        raise ValueError("rho must be >= 0")
    if rho == 0 or not a.any():
        return np.zeros_like(a)
    sr = spectral_radius(a)
    if sr > 0:
        return a * (rho / sr)
    return a * (rho / largest_singular_value(a))


def adjacency_scale_mode(a: np.ndarray, rho: float) -> str:
    """Which magnitude functional scale_to_spectral_radius used for A."""
    if rho == 0 or not a.any():
        return "zero"
    return "eigen" if spectral_radius(a) > 0 else "singular"


def build_input_matrix(d: int, d_r: int, p_in: float, rho_in: float, seed) -> np.ndarray:
    """Sparse random input matrix with connection strengths of scale rho_in.

    Entries are nonzero independently with probability p_in; existing
    connections carry standard-normal draws multiplied by rho_in, so the
    strength of individual input couplings is rho_in regardless of d_r. Any
    draw that leaves an input component disconnected is redrawn (at most
    MAX_INPUT_REDRAWS times).
    """
    if d < 1 or d_r < 1:
        raise ValueError("d and d_r must be >= 1")
    if not 0.0 <= p_in <= 1.0:
        raise ValueError("p_in must be in [0, 1]")
    if p_in == 0.0:
        if rho_in > 0:
            raise InfeasibleInputMatrixError("p_in = 0 cannot realize rho_in > 0")
        return np.zeros((d_r, d))
    rng = np.random.default_rng(seed)
    for _ in range(MAX_INPUT_REDRAWS):
        mask = rng.random((d_r, d)) < p_in
        if mask.any(axis=0).all():
            break
    else:
        raise InfeasibleInputMatrixError(
            f"could not connect every input component in {MAX_INPUT_REDRAWS} draws (p_in = {p_in})"
        )
    if rho_in == 0.0:
        return np.zeros((d_r, d))
    w = np.zeros((d_r, d))
    w[mask] = rho_in * rng.standard_normal(int(mask.sum()))
    return w


@dataclass
class Reservoir:
    """A realized reservoir; w_out stays None until training."""

    kind: str
    d_r: int
    hyper: HyperParams
    a: np.ndarray
    w_in: np.ndarray
    seed: int
    scale_mode: str
    w_out: Optional[np.ndarray] = None
    normalizer: Optional[Normalizer] = None

    @property
    def beta(self) -> float:
        return self.hyper.beta

    @property
    def mu(self) -> float:
        return self.hyper.mu

    @property
    def dim(self) -> int:
        return self.w_in.shape[1]

    @property
    def trained(self) -> bool:
        return self.w_out is not None


def build_reservoir(kind: str, d_r: int, d: int, hyper: HyperParams, seed) -> Reservoir:
    """Realize adjacency and input matrices for one seeded reservoir."""
    k = hyper.k if kind == "ER" else FIXED_K.get(kind, hyper.k)
    raw = build_adjacency(kind, d_r, k, seed)
    rho = 0.0 if kind == "RUN" else hyper.rho
    a = scale_to_spectral_radius(raw, rho)
    mode = adjacency_scale_mode(raw, rho)
    # Input matrix draws come from an offset stream so adjacency and W_in
    # can be regenerated independently.
    w_in = build_input_matrix(d, d_r, hyper.p_in, hyper.rho_in, np.random.SeedSequence([int(seed), 1]))
    return Reservoir(kind=kind, d_r=d_r, hyper=hyper, a=a, w_in=w_in, seed=int(seed), scale_mode=mode)


def save_reservoir(res: Reservoir, path) -> None:
    """Write `<path>.json` metadata plus `<path>.npz` weight payloads."""
    base = Path(path)
    meta = {
        "kind": res.kind,
        "d_r": res.d_r,
        "dim": res.dim,
        "hyper": res.hyper.to_dict(),
        "seed": res.seed,
        "scale_mode": res.scale_mode,
        "trained": res.trained,
        "normalizer": res.normalizer.to_dict() if res.normalizer is not None else None,
    }
    base.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    arrays = {"a": res.a, "w_in": res.w_in}
    if res.w_out is not None:
        arrays["w_out"] = res.w_out
    np.savez(base.with_suffix(".npz"), **arrays)


def load_reservoir(path) -> Reservoir:
    base = Path(path)
    meta = json.loads(base.with_suffix(".json").read_text())
    payload = np.load(base.with_suffix(".npz"))
    norm = Normalizer.from_dict(meta["normalizer"]) if meta["normalizer"] is not None else None
    return Reservoir(
        kind=meta["kind"],
        d_r=int(meta["d_r"]),
        hyper=HyperParams.from_dict(meta["hyper"]),
        a=payload["a"],
        w_in=payload["w_in"],
        seed=int(meta["seed"]),
        scale_mode=meta["scale_mode"],
        w_out=payload["w_out"] if "w_out" in payload else None,
        normalizer=norm,
    )

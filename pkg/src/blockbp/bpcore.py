"""Exact belief propagation on trees: the magnetization recursion and oracles.

The magnetization of a node u given observations at its k-th descendant level
is X = P(sigma_u = + | obs) - P(sigma_u = - | obs).  On a tree with channel
strength theta, the child values x_1..x_m combine as

    (prod(1 + theta x_i) - prod(1 - theta x_i))
    / (prod(1 + theta x_i) + prod(1 - theta x_i)),

which this module evaluates in the numerically stable log-ratio form
tanh(sum_i atanh(theta x_i)), with values clamped to |x| <= 1 - clamp so the
atanh never blows up.  Products of hundreds of factors would under/overflow;
the tanh form never does, and the clamp models fixed-precision truncation.

Two independent routes compute the same posterior: `bp_root` (the recursion)
and `exact_posterior` (brute-force enumeration over all latent spin
assignments).  The enumeration is the ground truth the recursion is tested
against; it stays deliberately naive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .broadcast import BroadcastTree
from .seeding import as_generator

__all__ = [
    "BpConfig",
    "MagnetizationStats",
    "bp_combine",
    "bp_levels",
    "bp_root",
    "exact_posterior",
    "magnetization_stats",
]

_MODES = ("leaf-exact", "leaf-noisy", "leaf-signs")


@dataclass(frozen=True)
class BpConfig:
    """Recursion settings: channel strength, leaf initialization, clamp.

    Modes: "leaf-exact" starts leaves at the observed +-1 spins, "leaf-noisy"
    at +-(1 - 2*delta) (posterior of a spin seen through a delta-flip
    channel), "leaf-signs" at +-1 signs supplied by an external estimator.
    """

    theta: float
    mode: str = "leaf-exact"
    delta: float | None = None
    clamp: float = 1e-12

    def __post_init__(self):
        if not -1.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [-1, 1]")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        if self.mode == "leaf-noisy":
            if self.delta is None or not 0.0 <= self.delta < 0.5:
                raise ValueError("leaf-noisy mode needs delta in [0, 1/2)")
        if not 1e-12 <= self.clamp <= 1e-6:
            raise ValueError("clamp must lie in [1e-12, 1e-6]")

    def leaf_values(self, observed: np.ndarray) -> np.ndarray:
        obs = np.asarray(observed, dtype=np.float64)
        if obs.size and not np.all(np.abs(obs) == 1.0):
            raise ValueError("observations must be +-1 valued")
        if self.mode == "leaf-noisy":
            return (1.0 - 2.0 * self.delta) * obs
        return obs.copy()


def _combine_levels(msgs: np.ndarray, parent_pos: np.ndarray, n_parents: int,
                    theta: float, clamp: float) -> np.ndarray:
    """One recursion level over arrays: child values -> parent values.

    msgs are child magnetizations, parent_pos[i] the index of child i's
    parent within its level.  Parents with no children get 0 (no
    information -> uniform posterior).
    """
    lim = 1.0 - clamp
    r = np.arctanh(np.clip(theta * msgs, -lim, lim))
    sums = np.bincount(parent_pos, weights=r, minlength=n_parents)
    return np.clip(np.tanh(sums), -lim, lim)


def bp_combine(children, theta: float, clamp: float = 1e-12):
    """Combine child magnetizations into the parent's.

    Accepts a sequence of values in [-1, 1]; an empty sequence yields 0.
    """
    vals = np.asarray(children, dtype=np.float64)
    if vals.size == 0:
        return 0.0
    if np.any(np.abs(vals) > 1.0):
        raise ValueError("child magnetizations must lie in [-1, 1]")
    lim = 1.0 - clamp
    s = float(np.sum(np.arctanh(np.clip(theta * vals, -lim, lim))))
    return float(np.clip(np.tanh(s), -lim, lim))


def bp_levels(tree: BroadcastTree, cfg: BpConfig, observed, level: int | None = None) -> np.ndarray:
    """Run the recursion from ``level`` up to the root; returns root-level values.

    ``observed`` must cover exactly the nodes of ``tree.level(level)`` in id
    order; under Galton-Watson extinction interior nodes without children
    contribute magnetization 0.
    """
    k = tree.depth if level is None else level
    obs = np.asarray(observed, dtype=np.float64)
    if obs.shape != (tree.level_size(k),):
        raise ValueError(
            f"observation vector has length {obs.size}, level {k} has "
            f"{tree.level_size(k)} nodes"
        )
    vals = cfg.leaf_values(obs)
    for j in range(k - 1, -1, -1):
        lo, hi = int(tree.level_start[j]), int(tree.level_start[j + 1])
        clo, chi = int(tree.level_start[j + 1]), int(tree.level_start[j + 2])
        parent_pos = tree.parent[clo:chi] - lo
        vals = _combine_levels(vals, parent_pos, hi - lo, cfg.theta, cfg.clamp)
    return vals


def bp_root(tree: BroadcastTree, cfg: BpConfig, observed, level: int | None = None) -> float:
    """Root magnetization given +-1 observations on one descendant level."""
    vals = bp_levels(tree, cfg, observed, level=level)
    return float(vals[0]) if vals.size else 0.0


def exact_posterior(tree: BroadcastTree, theta: float, observed,
                    delta: float | None = None, level: int | None = None,
                    guard: int = 2 ** 22) -> float:
    """Brute-force root magnetization: sum over every latent spin assignment.

    Each tree edge contributes a factor (1 + theta * s_u * s_v) / 2 and, when
    ``delta`` is given, each observed leaf contributes
    (1 + (1 - 2*delta) * s_leaf * obs) / 2 with the leaf spin itself latent.
    With ``delta`` None the leaf spins are pinned to the observations.
    Refuses trees whose latent configuration count exceeds ``guard``.
    """
    k = tree.depth if level is None else level
    leaf_lo, leaf_hi = int(tree.level_start[k]), int(tree.level_start[k + 1])
    obs = np.asarray(observed, dtype=np.float64)
    if obs.shape != (leaf_hi - leaf_lo,):
        raise ValueError("observation vector length does not match the level")
    if obs.size and not np.all(np.abs(obs) == 1.0):
        raise ValueError("observations must be +-1 valued")

    latent = list(range(leaf_lo))
    if delta is not None:
        latent.extend(range(leaf_lo, leaf_hi))
    L = len(latent)
    if 1 << L > guard:
        raise ValueError(f"2^{L} latent configurations exceed the guard {guard}")

    # spin column per node: latent nodes enumerate, pinned leaves are constant
    configs = 1 << L
    col_of = {u: i for i, u in enumerate(latent)}
    bits = ((np.arange(configs, dtype=np.int64)[:, None] >> np.arange(L)) & 1)
    spins = (2.0 * bits - 1.0) if L else np.zeros((1, 0))

    def spin(u: int) -> np.ndarray:
        if u in col_of:
            return spins[:, col_of[u]]
        return np.full(configs, obs[u - leaf_lo])

    w = np.ones(configs)
    for v in range(1, leaf_hi):
        w *= 0.5 * (1.0 + theta * spin(v) * spin(tree.parent[v]))
    if delta is not None:
        for v in range(leaf_lo, leaf_hi):
            w *= 0.5 * (1.0 + (1.0 - 2.0 * delta) * spin(v) * obs[v - leaf_lo])

    root = spin(0)
    w_plus = float(w[root > 0].sum())
    w_minus = float(w[root < 0].sum())
    total = w_plus + w_minus
    if total == 0.0:
        raise ValueError("all configurations have zero weight")
    return (w_plus - w_minus) / total


@dataclass(frozen=True)
class MagnetizationStats:
    """Monte Carlo summary of the root magnetization at one depth."""

    k: int
    trials: int
    x_mean: float       # E(X | sigma_root = +)
    x_ci: float
    abs_mean: float     # E|X|
    abs_ci: float

    @property
    def p_hat(self) -> float:
        """Estimated optimal success probability (1 + E|X|) / 2."""
        return 0.5 * (1.0 + self.abs_mean)

    @property
    def p_ci(self) -> float:
        return 0.5 * self.abs_ci


def magnetization_stats(trials: int, kind: str, d: float, theta: float, k: int,
                        mode: str = "leaf-exact", delta: float = 0.0, seed=0,
                        clamp: float = 1e-12) -> MagnetizationStats:
    """Monte Carlo estimate of E(X | sigma_root=+) and E|X| at depth k.

    Sampling is done by the level-population engine (see ``popdyn``), which
    draws from exactly the root-magnetization distribution of d-ary /
    Poisson trees without materializing trees, so deep levels stay cheap.
    """
    from . import popdyn  # local import: popdyn builds on this module

    if trials < 1:
        raise ValueError("trials must be >= 1")
    if mode not in ("leaf-exact", "leaf-noisy"):
        raise ValueError("magnetization_stats supports leaf-exact and leaf-noisy")
    rows, _ = popdyn.magnetization_chain(
        kind, d, theta, k, trials, as_generator(seed), delta=delta, clamp=clamp,
    )
    row = rows[-1]
    which = "y" if mode == "leaf-noisy" else "x"
    return MagnetizationStats(
        k=k,
        trials=trials,
        x_mean=row[f"{which}_mean"],
        x_ci=row[f"{which}_ci"],
        abs_mean=row[f"abs{which}_mean"],
        abs_ci=row[f"abs{which}_ci"],
    )

"""Level-synchronous Monte Carlo engines for tree functionals.

Root quantities of broadcast trees (magnetizations, level sums, effective
conductances) satisfy one-generation distributional recursions: the value at
a node is a function of i.i.d. copies of the value at its children.  The
*population chain* exploits that: keep a pool of ``trials`` independent
samples of the level-k law conditioned on sigma = +, and produce the level
k+1 pool by drawing, for each new sample, an offspring count, that many pool
members, and the child-spin flips.  One level costs O(trials * mean
offspring) regardless of tree size, which is what makes depth-12 experiments
with 1e5 trials feasible (an explicit mean-17 tree of depth 8 has ~1e10
nodes).

A second engine ("forest") materializes many explicit trees at once as flat
per-level arrays tagged by trial id; it is used where per-tree quantities are
needed (current-weighted estimators, per-tree conductance) and as an
independent cross-check of the population chain.

All chains consume randomness in a delta-independent pattern, so runs with
the same seed and different noise levels share tree structure and spins
(coupled comparisons), and a run with delta=0 reproduces the noiseless chain
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .seeding import as_generator

__all__ = [
    "Z99",
    "ci_half_width",
    "magnetization_chain",
    "sum_chain",
    "dary_sum_trials",
    "conductance_chain",
    "Forest",
    "sample_forest",
    "forest_leaf_values",
    "forest_conductance",
    "forest_current_estimators",
]

Z99 = 2.576  # 99% two-sided normal quantile used for every CI in the package


def ci_half_width(std: float, n: int, z: float = Z99) -> float:
    """Normal-approximation half-width z * s / sqrt(n)."""
    if n <= 0:
        return float("inf")
    return z * std / np.sqrt(n)


def _offspring(kind: str, d: float, size: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "gw":
        return rng.poisson(d, size).astype(np.int64)
    if kind == "dary":
        di = int(d)
        if di != d:
            raise ValueError("d-ary trees need integer d")
        return np.full(size, di, dtype=np.int64)
    raise ValueError(f"unknown tree kind {kind!r}")


def _stat(name: str, values: np.ndarray, n: int) -> dict:
    m = float(values.mean())
    s = float(values.std())
    return {f"{name}_mean": m, f"{name}_std": s, f"{name}_ci": ci_half_width(s, n)}


def magnetization_chain(kind: str, d: float, theta: float, k: int, trials: int,
                        rng, *, delta: float = 0.0, clamp: float = 1e-12,
                        y_init: str = "noisy"):
    """Coupled (X, Y) population chain conditioned on sigma = +.

    X starts from exact leaf spins (+1 under the conditioning); Y starts from
    the noisy observation: tau scaled by (1 - 2*delta) for y_init="noisy", or
    the bare sign tau for y_init="signs".  Both then follow the same
    recursion through the same sampled offspring and flips, so (X - Y) is the
    effect of leaf initialization alone.

    Returns (rows, pools): one dict per level 0..k with mean/std/ci of X, |X|,
    Y, |Y|, (X-Y)^2 and sqrt|X-Y|, plus the final pools {"x": ..., "y": ...}.
    """
    rng = as_generator(rng)
    if not -1.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [-1, 1]")
    eta = 0.5 * (1.0 - theta)
    lim = 1.0 - clamp

    tau = np.where(rng.random(trials) < delta, -1.0, 1.0)
    x = np.ones(trials)
    if y_init == "noisy":
        y = (1.0 - 2.0 * delta) * tau
    elif y_init == "signs":
        y = tau.copy()
    else:
        raise ValueError("y_init must be 'noisy' or 'signs'")

    def row(level: int) -> dict:
        out = {"level": level, "n": trials}
        out.update(_stat("x", x, trials))
        out.update(_stat("absx", np.abs(x), trials))
        out.update(_stat("y", y, trials))
        out.update(_stat("absy", np.abs(y), trials))
        out.update(_stat("diff2", (x - y) ** 2, trials))
        out.update(_stat("sqrtdiff", np.sqrt(np.abs(x - y)), trials))
        return out

    rows = [row(0)]
    idx_lvl = np.arange(trials)
    for level in range(1, k + 1):
        counts = _offspring(kind, d, trials, rng)
        m = int(counts.sum())
        idx = rng.integers(0, trials, m)
        sgn = np.where(rng.random(m) < eta, -1.0, 1.0)
        seg = np.repeat(idx_lvl, counts)
        rx = np.arctanh(np.clip(theta * sgn * x[idx], -lim, lim))
        ry = np.arctanh(np.clip(theta * sgn * y[idx], -lim, lim))
        x = np.clip(np.tanh(np.bincount(seg, weights=rx, minlength=trials)), -lim, lim)
        y = np.clip(np.tanh(np.bincount(seg, weights=ry, minlength=trials)), -lim, lim)
        rows.append(row(level))
    return rows, {"x": x, "y": y}


def sum_chain(kind: str, d: float, theta: float, k: int, trials: int, rng, *,
              delta: float = 0.0):
    """Population chain for the level sums S (plain spins) and S~ (noisy spins).

    Tracks, per level, the conditional-on-+ mean and variance of both sums and
    the success rate of sign(S), sign(S~) (ties counted 1/2).  Returns
    (rows, pools).

    Pool members share ancestors through resampling, so when theta * d > 1
    the reported CI of the *mean* sum understates the truth by an O(1)
    factor; use ``dary_sum_trials`` (fully independent trials) for tight
    moment checks, and this chain where trees are too big to materialize.
    """
    rng = as_generator(rng)
    eta = 0.5 * (1.0 - theta)
    tau = np.where(rng.random(trials) < delta, -1.0, 1.0)
    s = np.ones(trials)
    sn = tau.copy()

    def row(level: int) -> dict:
        out = {"level": level, "n": trials}
        out.update(_stat("s", s, trials))
        out.update(_stat("sn", sn, trials))
        for name, v in (("s", s), ("sn", sn)):
            succ = np.where(v > 0, 1.0, np.where(v < 0, 0.0, 0.5))
            out.update(_stat(f"{name}_success", succ, trials))
            sq = (v - v.mean()) ** 2
            out[f"{name}_var"] = float(sq.mean())
            out[f"{name}_var_ci"] = ci_half_width(float(sq.std()), trials)
        return out

    rows = [row(0)]
    idx_lvl = np.arange(trials)
    for level in range(1, k + 1):
        counts = _offspring(kind, d, trials, rng)
        m = int(counts.sum())
        idx = rng.integers(0, trials, m)
        sgn = np.where(rng.random(m) < eta, -1.0, 1.0)
        seg = np.repeat(idx_lvl, counts)
        s = np.bincount(seg, weights=sgn * s[idx], minlength=trials)
        sn = np.bincount(seg, weights=sgn * sn[idx], minlength=trials)
        rows.append(row(level))
    return rows, {"s": s, "sn": sn}


def _compose_through_edge(z: np.ndarray, theta: float) -> np.ndarray:
    """Series composition of a subtree conductance with its parent edge.

    In subtree-local units the parent edge has resistance (1-theta^2)/theta^2,
    so the composed conductance is theta^2 * z / ((1-theta^2) z + 1), handled
    in the reciprocal form to keep z = inf (a terminal) and z = 0 (extinct)
    exact without special cases.
    """
    t2 = theta * theta
    inv = np.full_like(z, np.inf)
    np.divide(1.0, z, out=inv, where=z > 0)  # z=inf -> 0, z=0 -> stays inf
    return t2 / ((1.0 - t2) + inv)


def _terminal_conductance(delta: float | None) -> float:
    """Level-local conductance of the noisy terminal resistor (inf if no noise)."""
    if delta is None:
        return np.inf
    if delta == 0.0:
        return np.inf
    return (1.0 - 2.0 * delta) ** 2 / (4.0 * delta * (1.0 - delta))


def conductance_chain(kind: str, d: float, theta: float, k: int, trials: int,
                      rng, *, delta: float | None = None, keep_levels=None):
    """Population chain for the root effective conductance of depth-k trees.

    Uses the series-parallel recursion: a child subtree of conductance Z seen
    through its edge contributes theta^2 Z / ((1-theta^2) Z + 1), and siblings
    add.  Returns (rows, pools) where pools maps each level in ``keep_levels``
    (plus the final level) to its conductance sample.
    """
    rng = as_generator(rng)
    if not -1.0 < theta < 1.0 or theta == 0.0:
        raise ValueError("conductance needs 0 < |theta| < 1")
    keep = set(keep_levels) if keep_levels is not None else set()
    z = np.full(trials, _terminal_conductance(delta))
    rows = []
    pools: dict[int, np.ndarray] = {}
    idx_lvl = np.arange(trials)
    for level in range(1, k + 1):
        counts = _offspring(kind, d, trials, rng)
        m = int(counts.sum())
        idx = rng.integers(0, trials, m)
        c = _compose_through_edge(z[idx], theta)
        seg = np.repeat(idx_lvl, counts)
        z = np.bincount(seg, weights=c, minlength=trials)
        rows.append({
            "level": level,
            "n": trials,
            "alive_frac": float((z > 0).mean()),
            **_stat("ceff", z, trials),
        })
        if level in keep or level == k:
            pools[level] = z.copy()
    return rows, pools


def dary_sum_trials(d: int, theta: float, k: int, trials: int, rng, *,
                    delta: float = 0.0, batch: int = 10_000):
    """Independent-trial level sums on the d-ary tree, all depths 0..k.

    Simulates whole broadcast trees (in trial batches to bound memory) and
    records S_j and S~_j per trial for every level j; unlike ``sum_chain``
    the trials are fully independent, so plain CIs are exact.  Noise is drawn
    fresh per level, which matches each level being its own observation
    experiment.  Returns (s, sn): arrays of shape (k+1, trials).
    """
    rng = as_generator(rng)
    di = int(d)
    if di != d:
        raise ValueError("d-ary trees need integer d")
    eta = 0.5 * (1.0 - theta)
    s = np.empty((k + 1, trials))
    sn = np.empty((k + 1, trials))
    for lo in range(0, trials, batch):
        b = min(batch, trials - lo)
        sig = np.ones(b)
        s[0, lo:lo + b] = 1.0
        sn[0, lo:lo + b] = np.where(rng.random(b) < delta, -1.0, 1.0)
        for j in range(1, k + 1):
            m = b * di ** j
            sig = np.repeat(sig, di) * np.where(rng.random(m) < eta, -1.0, 1.0)
            tau = sig * np.where(rng.random(m) < delta, -1.0, 1.0)
            view = sig.reshape(b, -1)
            s[j, lo:lo + b] = view.sum(axis=1)
            sn[j, lo:lo + b] = tau.reshape(b, -1).sum(axis=1)
    return s, sn


# ---------------------------------------------------------------------------
# Explicit forests: many trees at once as flat per-level arrays.


@dataclass
class Forest:
    """``trials`` independent trees, level-synchronous layout.

    Per level j: node_trial[j] maps each node to its trial, parent_pos[j]
    (j >= 1) to its parent's index within level j-1, sigma[j] to its spin
    (conditioned sigma_root = +).
    """

    kind: str
    d: float
    theta: float
    depth: int
    trials: int
    node_trial: list = field(default_factory=list)
    parent_pos: list = field(default_factory=list)
    sigma: list = field(default_factory=list)

    def level_size(self, j: int) -> int:
        return len(self.node_trial[j])


def sample_forest(kind: str, d: float, theta: float, depth: int, trials: int,
                  rng) -> Forest:
    """Sample ``trials`` trees with spins, conditioned on sigma_root = +."""
    rng = as_generator(rng)
    eta = 0.5 * (1.0 - theta)
    f = Forest(kind=kind, d=d, theta=theta, depth=depth, trials=trials)
    f.node_trial.append(np.arange(trials, dtype=np.int64))
    f.parent_pos.append(None)
    f.sigma.append(np.ones(trials))
    for _ in range(depth):
        cur_trial = f.node_trial[-1]
        cur_sigma = f.sigma[-1]
        counts = _offspring(kind, d, len(cur_trial), rng)
        pp = np.repeat(np.arange(len(cur_trial), dtype=np.int64), counts)
        flips = np.where(rng.random(len(pp)) < eta, -1.0, 1.0)
        f.node_trial.append(cur_trial[pp])
        f.parent_pos.append(pp)
        f.sigma.append(cur_sigma[pp] * flips)
    return f


def forest_leaf_values(forest: Forest, rng, delta: float = 0.0):
    """(sigma, tau) at the deepest level; tau flips each spin w.p. delta."""
    rng = as_generator(rng)
    sig = forest.sigma[forest.depth]
    flips = np.where(rng.random(len(sig)) < delta, -1.0, 1.0)
    return sig, sig * flips


def forest_conductance(forest: Forest, delta: float | None = None):
    """Per-node series-parallel conductance pass, leaves to roots.

    Returns (z_levels, c_levels): z_levels[j] is the subtree conductance of
    each level-j node in subtree-local units (so z_levels[0] is the per-trial
    root effective conductance), c_levels[j] (j >= 1) the composed
    through-edge conductance of each level-j node as seen by its parent.
    """
    theta = forest.theta
    k = forest.depth
    z_levels: list = [None] * (k + 1)
    c_levels: list = [None] * (k + 1)
    z_levels[k] = np.full(forest.level_size(k), _terminal_conductance(delta))
    for j in range(k, 0, -1):
        c = _compose_through_edge(z_levels[j], theta)
        c_levels[j] = c
        z_levels[j - 1] = np.bincount(
            forest.parent_pos[j], weights=c, minlength=forest.level_size(j - 1)
        )
    return z_levels, c_levels


def forest_current_estimators(forest: Forest, rng, delta: float = 0.0):
    """Unit-current weighted estimators R (noiseless) and S (noisy) per trial.

    Weights are theta^-k times the unit current flow into each leaf; for the
    noisy estimator the currents are computed in the network with terminal
    resistors and the sum is rescaled by 1/(1-2*delta).  Returns a dict with
    per-trial arrays: r, s, ceff (noiseless network), ceff_noisy (None when
    delta == 0), alive mask.
    """
    rng = as_generator(rng)
    theta = forest.theta
    k = forest.depth
    sig, tau = forest_leaf_values(forest, rng, delta)

    def currents(z_levels, c_levels):
        # current splits at each node proportionally to child branch conductance
        cur = np.ones(forest.trials)
        for j in range(1, k + 1):
            pp = forest.parent_pos[j]
            zpar = z_levels[j - 1][pp]
            frac = np.zeros(len(pp))
            np.divide(c_levels[j], zpar, out=frac, where=zpar > 0)
            cur = cur[pp] * frac
        return cur

    z0, c0 = forest_conductance(forest, delta=None)
    cur0 = currents(z0, c0)
    w0 = cur0 * theta ** (-k)
    r = np.bincount(forest.node_trial[k], weights=w0 * sig, minlength=forest.trials)
    ceff = z0[0]
    out = {
        "r": r,
        "ceff": ceff,
        "alive": ceff > 0,
    }
    if delta > 0:
        zn, cn = forest_conductance(forest, delta=delta)
        curn = currents(zn, cn)
        wn = curn * theta ** (-k)
        s = np.bincount(forest.node_trial[k], weights=wn * tau, minlength=forest.trials)
        out["s"] = s / (1.0 - 2.0 * delta)
        out["ceff_noisy"] = zn[0]
    else:
        out["s"] = r.copy()
        out["ceff_noisy"] = None
    return out

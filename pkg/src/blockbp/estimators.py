"""Linear root estimators: level majorities and current-weighted majorities.

The plain majority estimator sums the spins (or noisy spins) of one
descendant level and takes the sign.  Its conditional moments on d-ary trees
have closed forms:

    E+ S_k       = (theta d)^k
    E+ S~_k      = (1-2 delta) (theta d)^k
    Var+ S_k     = 4 eta (1-eta) d^k ((theta^2 d)^k - 1) / (theta^2 d - 1)
    Var+ S~_k    = 4 d^k delta (1-delta) + (1-2 delta)^2 Var+ S_k

with the geometric ratio replaced by its limit k when theta^2 d = 1.

The current-weighted majority views the tree as a resistor network: the edge
to a generation-j child carries resistance (1-theta^2) theta^(-2j), and each
observed leaf may carry an extra terminal resistor 4 delta (1-delta)
(1-2 delta)^(-2) theta^(-2k) modelling observation noise.  Trees are
series-parallel, so effective conductance and the unit current flow come from
one post-order sweep; weighting leaf observations by theta^(-k) times the
current into the leaf gives an estimator with conditional mean sigma_root and
conditional variance equal to the network's effective resistance.  A dense
Laplacian solve of the same network exists in the test suite as an
independent oracle; it is deliberately not used here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .broadcast import BroadcastTree
from .popdyn import _compose_through_edge, _terminal_conductance
from .seeding import as_generator

__all__ = [
    "MajorityMoments",
    "ConductanceNetwork",
    "CurrentWeights",
    "majority_moments",
    "majority_estimate",
    "effective_conductance",
    "current_weights",
    "weighted_majority_sign",
]


@dataclass(frozen=True)
class MajorityMoments:
    """Closed-form conditional moments of the level sums on a d-ary tree."""

    mean: float        # E+ S_k
    var: float         # Var+ S_k
    noisy_mean: float  # E+ S~_k
    noisy_var: float   # Var+ S~_k


def majority_moments(d: int, theta: float, k: int, delta: float = 0.0,
                     eta: float | None = None) -> MajorityMoments:
    """Moment formulas above; ``eta`` may be passed but must equal (1-theta)/2."""
    derived_eta = 0.5 * (1.0 - theta)
    if eta is not None and abs(eta - derived_eta) > 1e-12:
        raise ValueError("inconsistent eta: must equal (1 - theta) / 2")
    eta = derived_eta
    if not 0.0 <= delta < 0.5:
        raise ValueError("delta must lie in [0, 1/2)")
    s = theta * theta * d
    if abs(s - 1.0) <= 1e-12:
        gsum = float(k)  # limit of ((s^k - 1)/(s - 1)) as s -> 1
    else:
        gsum = (s ** k - 1.0) / (s - 1.0)
    mean = (theta * d) ** k
    var = 4.0 * eta * (1.0 - eta) * d ** k * gsum
    noisy_mean = (1.0 - 2.0 * delta) * mean
    noisy_var = 4.0 * d ** k * delta * (1.0 - delta) + (1.0 - 2.0 * delta) ** 2 * var
    return MajorityMoments(mean=mean, var=var, noisy_mean=noisy_mean, noisy_var=noisy_var)


def majority_estimate(tree: BroadcastTree, use_noisy: bool = False, level: int | None = None) -> int:
    """Sign of the level sum: +-1, or 0 on a tie or an empty (extinct) level."""
    k = tree.depth if level is None else level
    lo, hi = int(tree.level_start[k]), int(tree.level_start[k + 1])
    if hi <= lo:
        return 0
    if use_noisy:
        if tree.tau is None or tree.tau_level != k:
            raise ValueError("tree carries no noisy observations at this level")
        total = int(tree.tau[lo:hi].sum())
    else:
        if tree.sigma is None:
            raise ValueError("tree carries no spins")
        total = int(tree.sigma[lo:hi].sum())
    return (total > 0) - (total < 0)


@dataclass(frozen=True)
class ConductanceNetwork:
    """Resistor view of a depth-k tree and its root effective conductance.

    ``subtree_conductance[u]`` is the conductance between u and the terminal
    set in units local to u's generation; entry 0 is the root effective
    conductance ``ceff``.  ``edge_conductance[u]`` (u >= 1) is u's subtree
    conductance composed through the edge to its parent, again in the
    parent's local units.
    """

    theta: float
    delta: float | None
    k: int
    ceff: float
    subtree_conductance: np.ndarray
    edge_conductance: np.ndarray

    def edge_resistance(self, generation: int) -> float:
        """Resistance of an edge whose child is at ``generation`` (root = 0)."""
        t2 = self.theta * self.theta
        return (1.0 - t2) * t2 ** (-generation)

    @property
    def terminal_resistance(self) -> float:
        """Resistance of one noisy terminal resistor at level k (inf if delta=0)."""
        c = _terminal_conductance(self.delta)
        t2k = (self.theta * self.theta) ** (-self.k)
        return (1.0 / c) * t2k if c > 0 else np.inf


def effective_conductance(tree: BroadcastTree, theta: float,
                          delta: float | None = None,
                          k: int | None = None) -> ConductanceNetwork:
    """Series-parallel reduction, leaves to root, in one post-order sweep.

    A child subtree of local conductance Z composes through its parent edge
    as theta^2 Z / ((1-theta^2) Z + 1); siblings add.  An extinct tree has
    ceff = 0; with delta None and k = 0 the root is itself a terminal and
    ceff = inf.
    """
    if not -1.0 < theta < 1.0 or theta == 0.0:
        raise ValueError("conductance needs 0 < |theta| < 1")
    if delta is not None and not 0.0 <= delta < 0.5:
        raise ValueError("delta must lie in [0, 1/2)")
    k = tree.depth if k is None else k
    n = tree.n_nodes
    z = np.zeros(n)
    c = np.zeros(n)
    lo, hi = int(tree.level_start[k]), int(tree.level_start[k + 1])
    z[lo:hi] = _terminal_conductance(delta)
    for j in range(k, 0, -1):
        clo, chi = int(tree.level_start[j]), int(tree.level_start[j + 1])
        if chi <= clo:
            continue
        c[clo:chi] = _compose_through_edge(z[clo:chi], theta)
        plo = int(tree.level_start[j - 1])
        parent_pos = tree.parent[clo:chi] - plo
        z[plo:clo] = np.bincount(parent_pos, weights=c[clo:chi], minlength=clo - plo)
    return ConductanceNetwork(
        theta=theta, delta=delta, k=k, ceff=float(z[0]),
        subtree_conductance=z, edge_conductance=c,
    )


@dataclass(frozen=True)
class CurrentWeights:
    """Unit-current leaf weights for the linear root estimator.

    The estimator sum(w * obs) has conditional mean sigma_root when obs are
    the exact level-k spins; for noisy observations multiply by ``prefactor``
    (= 1/(1-2 delta)).  Weights sum to theta^(-k).
    """

    theta: float
    delta: float | None
    k: int
    leaf_ids: np.ndarray
    weights: np.ndarray
    prefactor: float
    network: ConductanceNetwork

    def estimate(self, observations) -> float:
        obs = np.asarray(observations, dtype=np.float64)
        if obs.shape != self.weights.shape:
            raise ValueError("observation vector does not match the leaf level")
        return self.prefactor * float(np.dot(self.weights, obs))


def current_weights(tree: BroadcastTree, theta: float,
                    delta: float | None = None,
                    k: int | None = None) -> CurrentWeights:
    """Weights proportional to the unit current flow from the root to each leaf.

    Splits the unit current at every node proportionally to the composed
    branch conductances from ``effective_conductance``; leaf v gets weight
    theta^(-k) * current(v).  Raises on an extinct tree (no estimator).
    """
    k = tree.depth if k is None else k
    net = effective_conductance(tree, theta, delta=delta, k=k)
    if net.ceff == 0.0:
        raise ValueError("no estimator: tree is extinct before the observed level")
    n = tree.n_nodes
    cur = np.zeros(n)
    cur[0] = 1.0
    for j in range(1, k + 1):
        clo, chi = int(tree.level_start[j]), int(tree.level_start[j + 1])
        if chi <= clo:
            break
        par = tree.parent[clo:chi]
        zpar = net.subtree_conductance[par]
        frac = np.zeros(chi - clo)
        np.divide(net.edge_conductance[clo:chi], zpar, out=frac, where=zpar > 0)
        cur[clo:chi] = cur[par] * frac
    lo, hi = int(tree.level_start[k]), int(tree.level_start[k + 1])
    leaf_ids = np.arange(lo, hi, dtype=np.int64)
    weights = cur[lo:hi] * theta ** (-k)
    prefactor = 1.0 if not delta else 1.0 / (1.0 - 2.0 * delta)
    return CurrentWeights(
        theta=theta, delta=delta, k=k, leaf_ids=leaf_ids,
        weights=weights, prefactor=prefactor, network=net,
    )


def weighted_majority_sign(tree: BroadcastTree, observations, theta: float,
                           rng, delta: float | None = None,
                           k: int | None = None) -> int:
    """Sign of the current-weighted observation sum; ties resolved by fair coin.

    An extinct tree (no observed level) also falls back to the coin: by the
    +- symmetry of the model a silent default to +1 would bias everything
    downstream.
    """
    rng = as_generator(rng)
    k = tree.depth if k is None else k
    try:
        cw = current_weights(tree, theta, delta=delta, k=k)
    except ValueError:
        return 1 if rng.random() < 0.5 else -1
    val = cw.estimate(observations)
    if val == 0.0:
        return 1 if rng.random() < 0.5 else -1
    return 1 if val > 0 else -1

"""Graph recovery by per-vertex neighborhood hold-out and boundary BP.

For each vertex v, the idea is: hide v's neighborhood, run a rough black-box
partitioner on the rest of the graph, read the inferred sides on the sphere
S(v, R) as noisy leaf observations, and recover v's label by robust tree
reconstruction on the BFS tree of B(v, R).  Because the black box is only
defined up to a global label flip, all runs are aligned through one held-out
high-degree anchor vertex u*: with a > b the anchor should see most of its
neighbors on its own side (rule reversed when a < b).

Label computation is two-stage, mirroring the fact that the boundary noise
level is unknown: first, every u in S(v, R-K) gets a hard +-1 vote, the sign
of the conductance-weighted sum of the observations in its depth-K subtree;
then exact BP runs on those signs from level R-K up to v.  K = 0 degenerates
to BP straight on the sphere observations.

The default "batch" variant runs the black box once on G minus the hold-out
set U and shares the partition across all vertices (inner balls are excluded
only from the observation read-off).  batch=1 reruns the black box per
vertex on G \\ B(v, R-1) \\ U, the literal per-vertex hold-out; batch=j > 1
shares one run per chunk of j vertices, with the union of the chunk's inner
balls removed.  Held-out vertices in U are labelled by fair coins at the end.

Neighborhoods are taken in the graph with U removed: U gets no inferred
sides, takes no part in the boundary observations, and is coin-labelled
anyway, so paths through it carry nothing the estimator could use.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, asdict

import numpy as np

from .bpcore import _combine_levels
from .params import ModelParams, derive_tree_params, ks_signal
from .partition import Partition, OverlapReport, blackbox_partition, overlap
from .popdyn import _compose_through_edge, _terminal_conductance
from .randgraph import LabelledGraph, _bfs_levels, remove_set
from .seeding import derived_rng

__all__ = [
    "AlgoConfig",
    "LabelOutcome",
    "RecoveryDiagnostics",
    "RecoveryResult",
    "resolve_radius",
    "choose_anchor",
    "align_partition",
    "label_vertex",
    "recover",
    "save_vertex_csv",
]


@dataclass(frozen=True)
class AlgoConfig:
    """Knobs of the recovery algorithm.

    R_mode "auto" picks the largest R in [1, 6] with (mean degree)^R at most
    n^(1/8), keeping balls small; "log-rule" uses floor(log(n) / (20(a+b))),
    faithful to the theory but 0 for any desk-scale n (an error here);
    "fixed" takes ``R`` as given.  K is the depth of the hard-vote stage,
    0 <= K <= R.  ``batch`` None shares one black-box run across all
    vertices; an integer j reruns it per chunk of j vertices with the chunk's
    inner balls held out (j = 1 is the literal per-vertex variant).
    ``weights_delta`` sets terminal resistors for the hard-vote weights; the
    boundary noise level is normally unknown, so the default uses none.
    """

    R: int | None = None
    R_mode: str = "auto"  # "auto" | "log-rule" | "fixed"
    K: int = 1
    u_size: int | None = None
    u_star_min_degree: int | None = None
    batch: int | None = None
    weights_delta: float | None = None
    clamp: float = 1e-12

    def __post_init__(self):
        if self.R_mode not in ("auto", "log-rule", "fixed"):
            raise ValueError("R_mode must be auto, log-rule, or fixed")
        if self.R_mode == "fixed" and (self.R is None or self.R < 1):
            raise ValueError("fixed R_mode needs R >= 1")
        if self.K < 0:
            raise ValueError("K must be nonnegative")
        if self.batch is not None and self.batch < 1:
            raise ValueError("batch must be None or >= 1")


def resolve_radius(cfg: AlgoConfig, n: int, a: float, b: float) -> int:
    if cfg.R_mode == "fixed":
        r = int(cfg.R)
    elif cfg.R_mode == "log-rule":
        r = math.floor(math.log(n) / (20.0 * (a + b)))
        if r < 1:
            raise ValueError(
                f"log-rule radius is {r} at n={n}, a+b={a + b:g}; "
                "use R_mode='auto' or 'fixed'"
            )
    else:
        d = (a + b) / 2.0
        bound = n ** 0.125
        r = 1
        while r < 6 and d ** (r + 1) <= bound:
            r += 1
    if cfg.K > r:
        raise ValueError(f"K={cfg.K} exceeds the neighborhood radius R={r}")
    return r


def choose_anchor(g: LabelledGraph, hold_out, rng, min_degree: int | None = None):
    """Uniformly random hold-out vertex with enough neighbors outside the hold-out.

    Falls back to the maximum out-degree hold-out vertex (smallest id on
    ties) when none qualifies; the fallback is reported so runs can be
    audited.  Returns (u_star, fallback_used).
    """
    hold_out = np.asarray(hold_out, dtype=np.int64)
    if hold_out.size == 0:
        raise ValueError("hold-out set is empty")
    if min_degree is None:
        min_degree = math.ceil(math.sqrt(math.log(g.n))) if g.n > 1 else 1
    in_u = np.zeros(g.n, dtype=bool)
    in_u[hold_out] = True
    out_deg = np.array(
        [int((~in_u[g.neighbors(u)]).sum()) for u in hold_out], dtype=np.int64
    )
    qualifying = hold_out[out_deg >= min_degree]
    if len(qualifying):
        return int(qualifying[rng.integers(len(qualifying))]), False
    return int(hold_out[int(np.argmax(out_deg))]), True


@dataclass(frozen=True)
class AlignInfo:
    swapped: bool
    tie: bool
    n_plus: int
    n_minus: int


def align_partition(p: Partition, g: LabelledGraph, u_star: int, a: float,
                    b: float, old_to_new=None) -> tuple[Partition, AlignInfo]:
    """Relabel the partition so the anchor's neighbor count points the right way.

    With a > b the anchor should have more neighbors on the + side; with
    a < b the rule reverses.  A tie leaves the partition unchanged and is
    flagged.  ``old_to_new`` maps g's vertex ids into p's domain (identity
    when None; -1 marks vertices absent from the domain).
    """
    nbrs = g.neighbors(u_star)
    if old_to_new is not None:
        mapped = old_to_new[nbrs]
        mapped = mapped[mapped >= 0]
    else:
        mapped = nbrs
    sides = p.side[mapped]
    n_plus = int((sides == 1).sum())
    n_minus = int((sides == -1).sum())
    if n_plus == n_minus:
        return p, AlignInfo(swapped=False, tie=True, n_plus=n_plus, n_minus=n_minus)
    swapped = (n_plus > n_minus) != (a > b)
    return (p.flipped() if swapped else p), AlignInfo(
        swapped=swapped, tie=False, n_plus=n_plus, n_minus=n_minus
    )


@dataclass(frozen=True)
class LabelOutcome:
    sign: int
    magnetization: float
    coin: bool            # label decided by fair coin (tie / nothing observed)
    empty_sphere: bool    # BFS never reached radius R
    nontree: bool         # ball contained edges the BFS tree ignores
    missing_obs: int      # sphere vertices with no inferred side
    watch_hit: bool = False  # watched vertex set intersected the inner ball


def _two_stage_root(levels, parent_pos, xi, theta, big_k, weights_delta, clamp, rng):
    """Hard votes at level R-K from conductance weights, then BP to the root.

    ``xi`` holds the +-1 observations on the deepest level (0 = missing; a
    missing observation is an absent terminal, so it gets no weight).
    Returns (root value, number of coin-resolved votes).
    """
    r = len(levels) - 1
    coins = 0
    if big_k > 0:
        j0 = r - big_k
        anc = np.arange(len(levels[j0]), dtype=np.int64)
        for j in range(j0 + 1, r + 1):
            anc = anc[parent_pos[j]]
        z = [None] * (r + 1)
        c = [None] * (r + 1)
        z[r] = np.where(xi != 0.0, _terminal_conductance(weights_delta), 0.0)
        for j in range(r, j0, -1):
            c[j] = _compose_through_edge(z[j], theta)
            z[j - 1] = np.bincount(parent_pos[j], weights=c[j],
                                   minlength=len(levels[j - 1]))
        cur = np.ones(len(levels[j0]))
        for j in range(j0 + 1, r + 1):
            pp = parent_pos[j]
            zpar = z[j - 1][pp]
            frac = np.zeros(len(pp))
            np.divide(c[j], zpar, out=frac, where=zpar > 0)
            cur = cur[pp] * frac
        w = cur * theta ** (-big_k)
        sums = np.bincount(anc, weights=w * xi, minlength=len(levels[j0]))
        ties = sums == 0.0
        coins = int(ties.sum())
        vals = np.sign(sums)
        if coins:
            vals[ties] = np.where(rng.random(coins) < 0.5, 1.0, -1.0)
        start = j0
    else:
        vals = xi.astype(np.float64)
        start = r
    for j in range(start - 1, -1, -1):
        vals = _combine_levels(vals, parent_pos[j + 1], len(levels[j]), theta, clamp)
    return float(vals[0]), coins


def _label_core(indptr, indices, v, radius, big_k, theta, weights_delta, clamp,
                xi_of_node, visited, rng, watch_mask=None) -> LabelOutcome:
    levels, parent_pos, induced = _bfs_levels(indptr, indices, v, radius, visited)
    ball_size = sum(len(l) for l in levels)
    nontree = induced != ball_size - 1
    watch_hit = False
    if watch_mask is not None:
        watch_hit = any(bool(watch_mask[l].any()) for l in levels[:radius])
    if len(levels) - 1 < radius:
        sign = 1 if rng.random() < 0.5 else -1
        return LabelOutcome(sign=sign, magnetization=0.0, coin=True,
                            empty_sphere=True, nontree=nontree, missing_obs=0,
                            watch_hit=watch_hit)
    xi = xi_of_node(levels[radius])
    missing = int((xi == 0).sum())
    if not np.any(xi != 0):
        sign = 1 if rng.random() < 0.5 else -1
        return LabelOutcome(sign=sign, magnetization=0.0, coin=True,
                            empty_sphere=False, nontree=nontree,
                            missing_obs=missing, watch_hit=watch_hit)
    value, _ = _two_stage_root(levels, parent_pos, xi, theta, big_k,
                               weights_delta, clamp, rng)
    if value == 0.0:
        sign = 1 if rng.random() < 0.5 else -1
        return LabelOutcome(sign=sign, magnetization=0.0, coin=True,
                            empty_sphere=False, nontree=nontree,
                            missing_obs=missing, watch_hit=watch_hit)
    return LabelOutcome(sign=1 if value > 0 else -1, magnetization=value,
                        coin=False, empty_sphere=False, nontree=nontree,
                        missing_obs=missing, watch_hit=watch_hit)


def label_vertex(g: LabelledGraph, v: int, aligned: Partition, cfg: AlgoConfig,
                 params: ModelParams, seed: int = 0,
                 radius: int | None = None) -> LabelOutcome:
    """Label one vertex of g from an aligned partition of g's vertices.

    Partition sides are read only on the sphere S(v, R); inferred sides
    inside the ball are never used.
    """
    if aligned.n != g.n:
        raise ValueError("aligned partition must cover the graph's vertex set")
    tp = derive_tree_params(params)
    r = resolve_radius(cfg, g.n, params.a, params.b) if radius is None else radius
    rng = derived_rng(seed, "label-one", v)
    visited = np.zeros(g.n, dtype=bool)
    side = aligned.side

    def xi_of_node(nodes):
        return side[nodes].astype(np.float64)

    return _label_core(g.indptr, g.indices, v, r, cfg.K, tp.theta,
                       cfg.weights_delta, cfg.clamp, xi_of_node, visited, rng)


@dataclass
class RecoveryDiagnostics:
    r_used: int = 0
    u_star: int = -1
    u_star_fallback: bool = False
    align_ties: int = 0
    align_swaps: int = 0
    coin_labels: int = 0
    empty_spheres: int = 0
    nontree_neighborhoods: int = 0
    missing_observations: int = 0
    u_star_ball_violations: int = 0
    blackbox_runs: int = 0


@dataclass(frozen=True)
class RecoveryResult:
    side: np.ndarray
    magnetization: np.ndarray
    report: OverlapReport
    diagnostics: RecoveryDiagnostics
    seconds: float

    @property
    def accuracy(self) -> float:
        return self.report.accuracy

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.report.accuracy,
            "delta_frac": self.report.delta_frac,
            "aligned_sign": self.report.aligned_sign,
            "n": self.report.n,
            "seconds": self.seconds,
            "diagnostics": asdict(self.diagnostics),
        }


def save_vertex_csv(result: RecoveryResult, path) -> None:
    """Per-vertex dump: "v, assigned_sign, magnetization" per line."""
    with open(path, "w") as fh:
        fh.write("v,assigned_sign,magnetization\n")
        for v, (s, m) in enumerate(zip(result.side, result.magnetization)):
            fh.write(f"{v},{int(s)},{m:.10g}\n")


def recover(g: LabelledGraph, cfg: AlgoConfig, params: ModelParams,
            impl: str = "spectral", seed: int = 0,
            delta0: float | None = None) -> RecoveryResult:
    """Run the full recovery: hold-out, anchor, black box, align, label, coins."""
    t0 = time.perf_counter()
    if params.n != g.n:
        raise ValueError("params.n does not match the graph")
    if ks_signal(params) <= 1.0:
        warnings.warn(
            "signal (a-b)^2 / (2(a+b)) is at or below 1; nothing is recoverable",
            stacklevel=2,
        )
    tp = derive_tree_params(params)
    r = resolve_radius(cfg, g.n, params.a, params.b)
    diag = RecoveryDiagnostics(r_used=r)

    u_size = cfg.u_size if cfg.u_size is not None else int(math.isqrt(g.n))
    u_size = max(1, min(u_size, g.n - 1))
    hold_out = np.sort(
        derived_rng(seed, "hold-out").choice(g.n, size=u_size, replace=False)
    ).astype(np.int64)

    u_star, fallback = choose_anchor(g, hold_out, derived_rng(seed, "anchor"),
                                     min_degree=cfg.u_star_min_degree)
    diag.u_star = u_star
    diag.u_star_fallback = fallback

    sub = remove_set(g, hold_out)
    h = sub.graph
    rng_label = derived_rng(seed, "labels")

    ustar_nbr_mask = np.zeros(h.n, dtype=bool)
    mapped = sub.old_to_new[g.neighbors(u_star)]
    ustar_nbr_mask[mapped[mapped >= 0]] = True

    side_out = np.zeros(g.n, dtype=np.int8)
    mag_out = np.zeros(g.n, dtype=np.float64)
    visited = np.zeros(h.n, dtype=bool)

    def run_blackbox(graph: LabelledGraph, tag: int) -> Partition:
        diag.blackbox_runs += 1
        return blackbox_partition(graph, impl=impl,
                                  seed=derived_rng(seed, "bb", tag), delta0=delta0)

    def label_chunk(xi_side_h: np.ndarray, vertices_h) -> None:
        def xi_of_node(nodes):
            return xi_side_h[nodes].astype(np.float64)

        for v in vertices_h:
            out = _label_core(h.indptr, h.indices, int(v), r, cfg.K, tp.theta,
                              cfg.weights_delta, cfg.clamp, xi_of_node, visited,
                              rng_label, watch_mask=ustar_nbr_mask)
            orig = sub.new_to_old[v]
            side_out[orig] = out.sign
            mag_out[orig] = out.magnetization
            diag.coin_labels += out.coin
            diag.empty_spheres += out.empty_sphere
            diag.nontree_neighborhoods += out.nontree
            diag.missing_observations += out.missing_obs
            diag.u_star_ball_violations += out.watch_hit

    all_h = np.arange(h.n, dtype=np.int64)
    if cfg.batch is None:
        part = run_blackbox(h, 0)
        aligned, info = align_partition(part, g, u_star, params.a, params.b,
                                        old_to_new=sub.old_to_new)
        diag.align_ties += info.tie
        diag.align_swaps += info.swapped
        label_chunk(aligned.side, all_h)
    else:
        for start in range(0, h.n, cfg.batch):
            chunk = all_h[start : start + cfg.batch]
            ball_mask = np.zeros(h.n, dtype=bool)
            for v in chunk:
                lv, _, _ = _bfs_levels(h.indptr, h.indices, int(v), r - 1, visited)
                for ids in lv:
                    ball_mask[ids] = True
            inner = remove_set(h, np.flatnonzero(ball_mask))
            part = run_blackbox(inner.graph, int(chunk[0]) + 1)
            # g-ids -> inner ids, for anchor alignment
            comp = np.full(h.n, -1, dtype=np.int64)
            comp[inner.new_to_old] = np.arange(inner.graph.n, dtype=np.int64)
            old_to_inner = np.full(g.n, -1, dtype=np.int64)
            kept = np.flatnonzero(sub.old_to_new >= 0)
            old_to_inner[kept] = comp[sub.old_to_new[kept]]
            aligned, info = align_partition(part, g, u_star, params.a, params.b,
                                            old_to_new=old_to_inner)
            diag.align_ties += info.tie
            diag.align_swaps += info.swapped
            # sides on h-ids; vertices inside the removed balls have none
            xi_side_h = np.zeros(h.n, dtype=np.int8)
            ok = comp >= 0
            xi_side_h[ok] = aligned.side[comp[ok]]
            label_chunk(xi_side_h, chunk)

    coins = derived_rng(seed, "hold-out-coins").random(len(hold_out))
    side_out[hold_out] = np.where(coins < 0.5, 1, -1)
    diag.coin_labels += len(hold_out)

    report = overlap(Partition(side=side_out), g.labels)
    return RecoveryResult(
        side=side_out,
        magnetization=mag_out,
        report=report,
        diagnostics=diag,
        seconds=time.perf_counter() - t0,
    )

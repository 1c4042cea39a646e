"""Labelled sparse two-class random graphs and BFS neighborhoods.

Graphs live in CSR-style arrays (indptr/indices) with sorted, deduplicated
neighbor lists and an int8 +-1 label per vertex.  Edge sampling walks the
lexicographic stream of candidate pairs with geometric jumps, so generating a
graph costs O(edges) rather than O(n^2) Bernoulli trials; n up to 1e6 is fine
on a desktop.

BFS neighborhoods use a deterministic tie-break: neighbor lists are scanned
in ascending id order and the BFS parent of a newly discovered vertex is its
smallest-id neighbor in the previous shell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ModelParams
from .seeding import as_generator

__all__ = [
    "LabelledGraph",
    "Neighborhood",
    "SubgraphMap",
    "sample_sbm",
    "graph_from_edges",
    "extract_neighborhood",
    "remove_set",
    "save_edge_list",
    "load_edge_list",
    "save_labels",
    "load_labels",
]


@dataclass(frozen=True)
class LabelledGraph:
    """Undirected graph in CSR form plus hidden +-1 labels."""

    n: int
    indptr: np.ndarray   # int64, length n+1
    indices: np.ndarray  # int64, sorted within each row
    labels: np.ndarray   # int8, +-1

    @property
    def m(self) -> int:
        """Number of undirected edges."""
        return len(self.indices) // 2

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)


def _csr_from_edges(n: int, u: np.ndarray, v: np.ndarray, labels: np.ndarray) -> LabelledGraph:
    """Build CSR from one copy of each undirected edge (arrays u, v)."""
    src = np.concatenate((u, v))
    dst = np.concatenate((v, u))
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return LabelledGraph(n=n, indptr=indptr, indices=dst.astype(np.int64),
                         labels=labels.astype(np.int8))


def graph_from_edges(n: int, edges, labels) -> LabelledGraph:
    """Small-graph constructor from an iterable of (u, v) pairs."""
    labels = np.asarray(labels, dtype=np.int8)
    if labels.shape != (n,) or not np.all(np.abs(labels) == 1):
        raise ValueError("labels must be n values in {-1, +1}")
    if edges:
        e = np.asarray(list(edges), dtype=np.int64)
        u, v = e[:, 0], e[:, 1]
        if np.any(u == v):
            raise ValueError("self-loops are not allowed")
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        key = lo * n + hi
        if len(np.unique(key)) != len(key):
            raise ValueError("duplicate edges")
        u, v = lo, hi
    else:
        u = v = np.empty(0, dtype=np.int64)
    return _csr_from_edges(n, u, v, labels)


def _bernoulli_positions(rng: np.random.Generator, n_pairs: int, p: float) -> np.ndarray:
    """Indices of successes in a Bernoulli(p) stream of length n_pairs.

    Walks the stream with Geometric(p) jumps, drawing jump batches sized by
    the expected remaining count plus a safety margin.
    """
    if n_pairs <= 0 or p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(n_pairs, dtype=np.int64)
    chunks = []
    pos = -1
    while True:
        remaining = n_pairs - pos - 1
        expect = int(remaining * p) + 1
        size = expect + int(10.0 * np.sqrt(expect)) + 16
        gaps = rng.geometric(p, size)
        steps = np.cumsum(gaps, dtype=np.int64) + pos
        cut = np.searchsorted(steps, n_pairs, side="left")
        chunks.append(steps[:cut])
        if cut < len(steps):
            break
        pos = int(steps[-1])
    return np.concatenate(chunks) if len(chunks) > 1 else chunks[0]


def _unrank_within(t: np.ndarray, ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map pair ranks t in [0, m(m-1)/2) to (ids[i], ids[j]) with i < j.

    Row-major order: (0,1), (0,2), ..., (0,m-1), (1,2), ...  The float sqrt
    can land one row off; two correction passes make it exact.
    """
    m = len(ids)
    tm = 2 * m - 1
    i = np.floor((tm - np.sqrt(tm * tm - 8.0 * t.astype(np.float64))) / 2.0).astype(np.int64)
    for _ in range(2):
        row_start = i * (tm - i) // 2
        too_big = row_start > t
        i -= too_big.astype(np.int64)
        row_start = i * (tm - i) // 2
        next_start = (i + 1) * (tm - i - 1) // 2
        too_small = t >= next_start
        i += too_small.astype(np.int64)
    row_start = i * (tm - i) // 2
    j = t - row_start + i + 1
    return ids[i], ids[j]


def sample_sbm(m: ModelParams, mode: str = "uniform-random", seed=0,
               labels=None) -> LabelledGraph:
    """Sample a labelled graph: within-class pairs at a/n, between at b/n.

    mode "uniform-random" draws i.i.d. uniform +-1 labels; mode "fixed-sets"
    uses the supplied label vector (for fixed near-balanced classes).
    Deterministic given the seed.
    """
    rng = as_generator(seed)
    n = m.n
    if mode == "uniform-random":
        if labels is not None:
            raise ValueError("labels are drawn internally in uniform-random mode")
        lab = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
    elif mode == "fixed-sets":
        if labels is None:
            raise ValueError("fixed-sets mode needs a label vector")
        lab = np.asarray(labels, dtype=np.int8)
        if lab.shape != (n,) or not np.all(np.abs(lab) == 1):
            raise ValueError("labels must be n values in {-1, +1}")
    else:
        raise ValueError(f"unknown partition mode {mode!r}")

    plus = np.flatnonzero(lab == 1).astype(np.int64)
    minus = np.flatnonzero(lab == -1).astype(np.int64)
    us, vs = [], []
    for ids in (plus, minus):
        cnt = len(ids) * (len(ids) - 1) // 2
        t = _bernoulli_positions(rng, cnt, m.p_within)
        if len(t):
            u, v = _unrank_within(t, ids)
            us.append(u)
            vs.append(v)
    cross = len(plus) * len(minus)
    t = _bernoulli_positions(rng, cross, m.p_between)
    if len(t) and len(minus):
        us.append(plus[t // len(minus)])
        vs.append(minus[t % len(minus)])
    if us:
        u = np.concatenate(us)
        v = np.concatenate(vs)
    else:
        u = v = np.empty(0, dtype=np.int64)
    return _csr_from_edges(n, u, v, lab)


@dataclass(frozen=True)
class Neighborhood:
    """BFS ball around a center: shells, BFS-tree parents, tree-ness flag.

    levels[j] holds the ids at distance exactly j (ascending); parent_pos[j]
    (j >= 1) the index, within levels[j-1], of each node's BFS parent.
    """

    center: int
    radius: int
    levels: list
    parent_pos: list
    is_tree: bool
    n_extra_edges: int

    @property
    def ball(self) -> np.ndarray:
        return np.concatenate(self.levels) if self.levels else np.empty(0, np.int64)

    @property
    def sphere(self) -> np.ndarray:
        if len(self.levels) == self.radius + 1:
            return self.levels[self.radius]
        return np.empty(0, dtype=np.int64)

    def bfs_parent(self, j: int) -> np.ndarray:
        """Parent ids of the level-j nodes."""
        return self.levels[j - 1][self.parent_pos[j]]


def _bfs_levels(indptr: np.ndarray, indices: np.ndarray, v: int, radius: int,
                visited: np.ndarray):
    """Shells and smallest-id-discoverer parents; ``visited`` is scratch.

    Returns (levels, parent_pos, n_induced_edges).  The caller must hand in a
    clean boolean scratch array of length n; it is cleaned up before return.
    """
    levels = [np.array([v], dtype=np.int64)]
    parent_pos: list = [None]
    visited[v] = True
    for _ in range(radius):
        front = levels[-1]
        degs = indptr[front + 1] - indptr[front]
        total = int(degs.sum())
        if total == 0:
            break
        starts = indptr[front]
        # flat gather of all neighbor slices of the frontier
        offs = np.repeat(starts - np.concatenate(([0], np.cumsum(degs)[:-1])), degs)
        flat = offs + np.arange(total, dtype=np.int64)
        cand = indices[flat]
        ppos = np.repeat(np.arange(len(front), dtype=np.int64), degs)
        keep = ~visited[cand]
        cand, ppos = cand[keep], ppos[keep]
        if len(cand) == 0:
            break
        order = np.lexsort((front[ppos], cand))
        cand, ppos = cand[order], ppos[order]
        first = np.ones(len(cand), dtype=bool)
        first[1:] = cand[1:] != cand[:-1]
        nxt, npos = cand[first], ppos[first]
        visited[nxt] = True
        levels.append(nxt)
        parent_pos.append(npos)
    ball = np.concatenate(levels)
    # count edges induced on the ball (each counted from both endpoints)
    degs = indptr[ball + 1] - indptr[ball]
    total = int(degs.sum())
    starts = indptr[ball]
    offs = np.repeat(starts - np.concatenate(([0], np.cumsum(degs)[:-1])), degs)
    nbrs = indices[offs + np.arange(total, dtype=np.int64)]
    induced = int(visited[nbrs].sum()) // 2
    visited[ball] = False
    return levels, parent_pos, induced


def extract_neighborhood(g: LabelledGraph, v: int, radius: int) -> Neighborhood:
    """BFS ball/sphere/tree of the given radius around v."""
    if not 0 <= v < g.n:
        raise ValueError("center vertex out of range")
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    visited = np.zeros(g.n, dtype=bool)
    levels, parent_pos, induced = _bfs_levels(g.indptr, g.indices, v, radius, visited)
    ball_size = sum(len(l) for l in levels)
    return Neighborhood(
        center=v, radius=radius, levels=levels, parent_pos=parent_pos,
        is_tree=induced == ball_size - 1, n_extra_edges=induced - (ball_size - 1),
    )


@dataclass(frozen=True)
class SubgraphMap:
    """Induced subgraph together with the stable id maps both ways."""

    graph: LabelledGraph
    new_to_old: np.ndarray
    old_to_new: np.ndarray  # -1 for removed vertices


def remove_set(g: LabelledGraph, victims) -> SubgraphMap:
    """Induced subgraph on V minus victims."""
    victims = np.asarray(list(victims) if not isinstance(victims, np.ndarray) else victims,
                         dtype=np.int64)
    keep = np.ones(g.n, dtype=bool)
    if len(victims):
        if victims.min() < 0 or victims.max() >= g.n:
            raise ValueError("victims must be vertices of the graph")
        keep[victims] = False
    new_to_old = np.flatnonzero(keep).astype(np.int64)
    old_to_new = np.full(g.n, -1, dtype=np.int64)
    old_to_new[new_to_old] = np.arange(len(new_to_old), dtype=np.int64)
    src = np.repeat(np.arange(g.n, dtype=np.int64), g.degrees)
    dst = g.indices
    emask = keep[src] & keep[dst] & (src < dst)
    u = old_to_new[src[emask]]
    v = old_to_new[dst[emask]]
    sub = _csr_from_edges(len(new_to_old), u, v, g.labels[new_to_old])
    return SubgraphMap(graph=sub, new_to_old=new_to_old, old_to_new=old_to_new)


def save_edge_list(g: LabelledGraph, path) -> None:
    """Text dump: header "n m", then one "u v" line per undirected edge."""
    src = np.repeat(np.arange(g.n, dtype=np.int64), g.degrees)
    mask = src < g.indices
    with open(path, "w") as fh:
        fh.write(f"{g.n} {g.m}\n")
        for u, v in zip(src[mask], g.indices[mask]):
            fh.write(f"{u} {v}\n")


def load_edge_list(path, labels=None) -> LabelledGraph:
    """Inverse of save_edge_list; labels default to all +1 if no file given."""
    with open(path) as fh:
        n, m = map(int, fh.readline().split())
        edges = [tuple(map(int, line.split())) for line in fh if line.strip()]
    if len(edges) != m:
        raise ValueError(f"{path}: header claims {m} edges, found {len(edges)}")
    lab = labels if labels is not None else np.ones(n, dtype=np.int8)
    return graph_from_edges(n, edges, lab)


def save_labels(g: LabelledGraph, path) -> None:
    """Text dump: one "v +1" / "v -1" line per vertex."""
    with open(path, "w") as fh:
        for v in range(g.n):
            fh.write(f"{v} {'+1' if g.labels[v] > 0 else '-1'}\n")


def load_labels(path, n: int) -> np.ndarray:
    out = np.zeros(n, dtype=np.int8)
    seen = np.zeros(n, dtype=bool)
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            v, s = line.split()
            out[int(v)] = int(s)
            seen[int(v)] = True
    if not seen.all():
        raise ValueError(f"{path}: labels missing for some vertices")
    return out

"""Graph container, normalization/propagation primitives, kNN augmentation,
masking, anomaly injection, and plain-text dataset I/O."""

from __future__ import annotations

import dataclasses
from collections import deque
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

LABEL_NORMAL = 0
LABEL_ATTR = 1
LABEL_STRUCT = 2
LABEL_MIXED = 3

_VALID_LABELS = (LABEL_NORMAL, LABEL_ATTR, LABEL_STRUCT, LABEL_MIXED)


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class Graph:
    """Undirected attributed graph.

    adjacency is a binary symmetric CSR matrix with a zero diagonal;
    attributes is a dense float64 matrix with one row per node; labels,
    when present, hold one of the LABEL_* constants per node.
    """

    n: int
    adjacency: sp.csr_matrix
    attributes: np.ndarray
    labels: np.ndarray | None = None

    @property
    def d(self) -> int:
        return self.attributes.shape[1]

    def num_edges(self) -> int:
        return self.adjacency.nnz // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def neighbors(self, i: int) -> np.ndarray:
        lo, hi = self.adjacency.indptr[i], self.adjacency.indptr[i + 1]
        return self.adjacency.indices[lo:hi]

    def copy(self) -> "Graph":
        labels = None if self.labels is None else self.labels.copy()
        return Graph(self.n, self.adjacency.copy(), self.attributes.copy(), labels)

    def validate(self) -> None:
        a = self.adjacency
        if a.shape != (self.n, self.n):
            raise ValueError(f"adjacency shape {a.shape} does not match n={self.n}")
        if abs(a - a.T).sum() != 0:
            raise ValueError("adjacency is not symmetric")
        if a.diagonal().any():
            raise ValueError("adjacency has nonzero diagonal entries")
        if a.nnz and not np.all(a.data == 1.0):
            raise ValueError("adjacency entries must be 0 or 1")
        if self.attributes.shape[0] != self.n:
            raise ValueError("attribute row count does not match n")
        if not np.all(np.isfinite(self.attributes)):
            raise ValueError("attributes contain non-finite values")
        if self.labels is not None:
            if len(self.labels) != self.n:
                raise ValueError("label vector length does not match n")
            if not np.isin(self.labels, _VALID_LABELS).all():
                raise ValueError("labels must be in {0,1,2,3}")


@dataclasses.dataclass
class NormalizedAdj:
    """Symmetrically normalized adjacency; kind self_loop_sym adds I first."""

    matrix: sp.csr_matrix
    kind: str


@dataclasses.dataclass
class PropagationStack:
    """Multi-scale propagated feature views (one dense matrix per scale)."""

    views: list[np.ndarray]
    alpha: float
    scales: int


@dataclasses.dataclass
class InjectionConfig:
    clique_count: int = 0
    clique_size: int = 15
    attr_anom_count: int = 0
    candidate_pool: int = 50
    mixed_count: int = 0
    seed: int = 0

    def validate(self) -> None:
        for name in ("clique_count", "attr_anom_count", "mixed_count"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.clique_size < 2:
            raise ValueError("clique_size must be at least 2")
        if self.candidate_pool < 1:
            raise ValueError("candidate_pool must be at least 1")

    def total_anomalies(self) -> int:
        return (self.clique_count * self.clique_size
                + self.attr_anom_count + self.mixed_count)


# ---------------------------------------------------------------------------
# construction helpers
# ---------------------------------------------------------------------------

def build_adjacency(n: int, edges: Iterable[tuple[int, int]]) -> sp.csr_matrix:
    """Binary symmetric CSR from an edge iterable; dedups, drops self-loops."""
    rows, cols = [], []
    for u, v in edges:
        if u == v:
            continue
        rows.extend((u, v))
        cols.extend((v, u))
    a = sp.coo_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n, n), dtype=np.float64
    ).tocsr()
    a.data[:] = 1.0  # collapse duplicates
    a.sort_indices()
    return a


def make_graph(n: int, edges: Iterable[tuple[int, int]], attributes,
               labels=None) -> Graph:
    x = np.asarray(attributes, dtype=np.float64)
    lab = None if labels is None else np.asarray(labels, dtype=np.int64)
    g = Graph(n, build_adjacency(n, edges), x, lab)
    g.validate()
    return g


# ---------------------------------------------------------------------------
# file I/O (edge list "u v", attribute CSV without header, label lines)
# ---------------------------------------------------------------------------

def _parse_attributes(attr_path) -> np.ndarray:
    try:
        x = np.loadtxt(attr_path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError:
        # slow pass only to locate the offending line for the error message
        width = None
        with open(attr_path, encoding="utf-8") as fh:
            for ln, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                fields = line.strip().split(",")
                if width is None:
                    width = len(fields)
                elif len(fields) != width:
                    raise ValueError(
                        f"{attr_path}: line {ln}: expected {width} fields, "
                        f"got {len(fields)}") from None
                for field in fields:
                    try:
                        float(field)
                    except ValueError:
                        raise ValueError(
                            f"{attr_path}: line {ln}: cannot parse "
                            f"{field!r} as a number") from None
        raise  # parseable after all; re-raise the original
    bad = ~np.isfinite(x)
    if bad.any():
        row = int(np.argwhere(bad)[0][0])
        raise ValueError(f"{attr_path}: line {row + 1}: non-finite attribute value")
    return x


def _parse_edges(edge_path, n: int) -> list[tuple[int, int]]:
    edges = []
    with open(edge_path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise ValueError(
                    f"{edge_path}: line {ln}: expected 'u v', got {stripped!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(
                    f"{edge_path}: line {ln}: node ids must be integers") from None
            if not (0 <= u < n and 0 <= v < n):
                raise IndexError(
                    f"{edge_path}: line {ln}: node id out of range [0,{n})")
            edges.append((u, v))
    return edges


def _parse_labels(label_path, n: int) -> np.ndarray:
    values = []
    with open(label_path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                values.append(int(stripped))
            except ValueError:
                raise ValueError(
                    f"{label_path}: line {ln}: labels must be integers") from None
    if len(values) != n:
        raise ValueError(
            f"{label_path}: expected {n} labels, got {len(values)}")
    labels = np.asarray(values, dtype=np.int64)
    if not np.isin(labels, _VALID_LABELS).all():
        raise ValueError(f"{label_path}: labels must be in {{0,1,2,3}}")
    return labels


def load_graph(edge_path, attr_path, label_path=None) -> Graph:
    """Read a graph from an edge list, an attribute CSV, and optional labels.

    Node count and attribute width come from the attribute file; duplicate
    and reversed edges collapse to one undirected edge; self-loops are
    dropped.
    """
    x = _parse_attributes(attr_path)
    n = x.shape[0]
    edges = _parse_edges(edge_path, n)
    labels = None if label_path is None else _parse_labels(label_path, n)
    g = Graph(n, build_adjacency(n, edges), x, labels)
    g.validate()
    return g


def save_graph(g: Graph, edge_path, attr_path, label_path=None) -> None:
    """Write a graph in the load_graph formats (floats via repr round-trip)."""
    coo = sp.triu(g.adjacency, k=1).tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(edge_path, "w", encoding="utf-8") as fh:
        for u, v in zip(coo.row[order], coo.col[order]):
            fh.write(f"{u} {v}\n")
    with open(attr_path, "w", encoding="utf-8") as fh:
        for row in g.attributes:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    if label_path is not None:
        if g.labels is None:
            raise ValueError("graph has no labels to save")
        with open(label_path, "w", encoding="utf-8") as fh:
            for lab in g.labels:
                fh.write(f"{int(lab)}\n")


# ---------------------------------------------------------------------------
# normalization and propagation
# ---------------------------------------------------------------------------

def normalize_matrix(a: sp.spmatrix, kind: str = "self_loop_sym") -> sp.csr_matrix:
    """D^(-1/2) M D^(-1/2) where M = A+I (self_loop_sym) or A itself (none_sym)."""
    a = a.tocsr().astype(np.float64)
    if kind == "self_loop_sym":
        m = (a + sp.eye(a.shape[0], format="csr")).tocsr()
    elif kind == "none_sym":
        m = a
    else:
        raise ValueError(f"unknown normalization kind {kind!r}")
    deg = np.asarray(m.sum(axis=1)).ravel()
    with np.errstate(divide="ignore"):
        dinv = np.where(deg > 0, deg ** -0.5, 0.0)
    out = (sp.diags(dinv) @ m @ sp.diags(dinv)).tocsr()
    out.sort_indices()
    return out


def normalize_adjacency(g, kind: str = "self_loop_sym") -> NormalizedAdj:
    """Symmetric normalization of a Graph's adjacency (or a raw sparse matrix)."""
    a = g.adjacency if isinstance(g, Graph) else g
    return NormalizedAdj(normalize_matrix(a, kind), kind)


def propagate_multiscale(adj: NormalizedAdj, x: np.ndarray, alpha: float,
                         scales: int) -> PropagationStack:
    """Iterated restart propagation; returns all intermediate views 1..scales."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must be in (0,1], got {alpha}")
    if scales < 1:
        raise ValueError(f"scales must be >= 1, got {scales}")
    views = []
    cur = x
    for _ in range(scales):
        cur = (1.0 - alpha) * (adj.matrix @ cur) + alpha * x
        views.append(cur)
    return PropagationStack(views, alpha, scales)


def diffuse(adj: NormalizedAdj, x: np.ndarray, beta: float, steps: int) -> np.ndarray:
    """Restart diffusion; returns only the final iterate."""
    if not (0.0 < beta <= 1.0):
        raise ValueError(f"beta must be in (0,1], got {beta}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    cur = x
    for _ in range(steps):
        cur = (1.0 - beta) * (adj.matrix @ cur) + beta * x
    return cur


# ---------------------------------------------------------------------------
# kNN graph
# ---------------------------------------------------------------------------

def knn_graph(features: np.ndarray, k: int) -> sp.csr_matrix:
    """Mutual-union kNN graph under cosine similarity.

    An edge t-i exists iff t is among i's k most similar rows or vice versa.
    Zero-norm rows have similarity 0 to everything; ties break toward the
    lower node index.
    """
    n = features.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k >= n:
        raise ValueError(f"k={k} must be smaller than n={n}")
    norms = np.linalg.norm(features, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    unit = features / safe[:, None]
    sim = unit @ unit.T
    np.fill_diagonal(sim, -np.inf)
    # stable argsort on the negated similarities: equal values keep index order
    nearest = np.argsort(-sim, axis=1, kind="stable")[:, :k]
    rows = np.repeat(np.arange(n), k)
    cols = nearest.ravel()
    a = sp.coo_matrix(
        (np.ones(2 * rows.size), (np.concatenate([rows, cols]),
                                  np.concatenate([cols, rows]))),
        shape=(n, n), dtype=np.float64).tocsr()
    a.data[:] = 1.0
    a.sort_indices()
    return a


# ---------------------------------------------------------------------------
# masking
# ---------------------------------------------------------------------------

def _as_node_array(targets) -> np.ndarray:
    arr = np.unique(np.asarray(list(targets), dtype=np.int64)) \
        if not isinstance(targets, np.ndarray) else np.unique(targets.astype(np.int64))
    return arr


def mask_attributes(g: Graph, targets) -> np.ndarray:
    """Copy of X with each target row replaced by the mean of its neighbors'
    original rows (global column mean for degree-0 targets)."""
    targets = _as_node_array(targets)
    xm = g.attributes.copy()
    if targets.size == 0:
        return xm
    global_mean = None
    for t in targets:
        nbrs = g.neighbors(int(t))
        if nbrs.size:
            xm[t] = g.attributes[nbrs].mean(axis=0)
        else:
            if global_mean is None:
                global_mean = g.attributes.mean(axis=0)
            xm[t] = global_mean
    return xm


def mask_edges(g: Graph, targets) -> Graph:
    """Graph with every edge incident to a target removed (attributes shared)."""
    targets = _as_node_array(targets)
    if targets.size == 0:
        return Graph(g.n, g.adjacency.copy(), g.attributes, g.labels)
    hit = np.zeros(g.n, dtype=bool)
    hit[targets] = True
    coo = g.adjacency.tocoo()
    keep = ~(hit[coo.row] | hit[coo.col])
    a = sp.coo_matrix(
        (coo.data[keep], (coo.row[keep], coo.col[keep])),
        shape=(g.n, g.n), dtype=np.float64).tocsr()
    a.sort_indices()
    return Graph(g.n, a, g.attributes, g.labels)


# ---------------------------------------------------------------------------
# anomaly injection
# ---------------------------------------------------------------------------

def _swap_attribute(rng, x_orig: np.ndarray, x_new: np.ndarray, node: int,
                    pool: int) -> None:
    n = x_orig.shape[0]
    cand = rng.choice(n - 1, size=min(pool, n - 1), replace=False)
    cand[cand >= node] += 1  # uniform over nodes != node
    dist2 = ((x_orig[cand] - x_orig[node]) ** 2).sum(axis=1)
    donor = int(cand[int(np.argmax(dist2))])
    x_new[node] = x_orig[donor]


def inject_anomalies(g: Graph, cfg: InjectionConfig) -> Graph:
    """Perturb an unlabeled graph with clique, attribute-swap, and mixed
    anomalies; returns a labeled copy.

    Structural: clique_count disjoint node sets of clique_size are fully
    connected. Attribute: each chosen node's row is replaced by the most
    Euclidean-distant row among candidate_pool random others (drawn from the
    original attributes). Mixed nodes receive both perturbations, with the
    mixed set itself wired into cliques of clique_size (a leftover singleton
    merges into the previous group; if the mixed set is a single node it is
    instead connected to clique_size-1 random other nodes).
    """
    cfg.validate()
    if g.labels is not None:
        raise ValueError("inject_anomalies expects an unlabeled graph")
    need = cfg.total_anomalies()
    if need > g.n:
        raise ValueError(
            f"config needs {need} anomalous nodes but the graph has {g.n}")

    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(g.n)
    labels = np.full(g.n, LABEL_NORMAL, dtype=np.int64)
    x_new = g.attributes.copy()
    extra_edges: list[tuple[int, int]] = []
    pos = 0

    def connect_clique(members: np.ndarray) -> None:
        for a_idx in range(len(members)):
            for b_idx in range(a_idx + 1, len(members)):
                extra_edges.append((int(members[a_idx]), int(members[b_idx])))

    for _ in range(cfg.clique_count):
        members = perm[pos:pos + cfg.clique_size]
        pos += cfg.clique_size
        connect_clique(members)
        labels[members] = LABEL_STRUCT

    for _ in range(cfg.attr_anom_count):
        node = int(perm[pos])
        pos += 1
        _swap_attribute(rng, g.attributes, x_new, node, cfg.candidate_pool)
        labels[node] = LABEL_ATTR

    mixed = perm[pos:pos + cfg.mixed_count]
    pos += cfg.mixed_count
    for node in mixed:
        _swap_attribute(rng, g.attributes, x_new, int(node), cfg.candidate_pool)
    labels[mixed] = LABEL_MIXED
    if mixed.size == 1:
        node = int(mixed[0])
        others = rng.choice(g.n - 1, size=min(cfg.clique_size - 1, g.n - 1),
                            replace=False)
        others[others >= node] += 1
        extra_edges.extend((node, int(o)) for o in others)
    elif mixed.size > 1:
        groups = [mixed[i:i + cfg.clique_size]
                  for i in range(0, mixed.size, cfg.clique_size)]
        if len(groups) > 1 and len(groups[-1]) == 1:
            groups[-2] = np.concatenate([groups[-2], groups[-1]])
            groups.pop()
        for group in groups:
            connect_clique(group)

    if extra_edges:
        rows = [u for u, v in extra_edges] + [v for u, v in extra_edges]
        cols = [v for u, v in extra_edges] + [u for u, v in extra_edges]
        add = sp.coo_matrix((np.ones(len(rows)), (rows, cols)),
                            shape=(g.n, g.n), dtype=np.float64).tocsr()
        a = (g.adjacency + add).tocsr()
        a.data[:] = 1.0
    else:
        a = g.adjacency.copy()
    a.sort_indices()
    out = Graph(g.n, a, x_new, labels)
    out.validate()
    return out


# ---------------------------------------------------------------------------
# BFS hop distances
# ---------------------------------------------------------------------------

class HopDistances(dict):
    """(source, target) -> hop count; missing pairs read as the sentinel cap+1."""

    def __init__(self, cap: int):
        super().__init__()
        self.cap = cap

    def __missing__(self, key):
        return self.cap + 1


def hop_distances(g: Graph, sources, cap: int) -> HopDistances:
    """BFS distances from each source, truncated at cap hops."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    dists = HopDistances(cap)
    indptr, indices = g.adjacency.indptr, g.adjacency.indices
    for s in _as_node_array(sources):
        s = int(s)
        seen = {s: 0}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            du = seen[u]
            if du == cap:
                continue
            for v in indices[indptr[u]:indptr[u + 1]]:
                v = int(v)
                if v not in seen:
                    seen[v] = du + 1
                    queue.append(v)
        for t, dv in seen.items():
            dists[(s, t)] = dv
    return dists


# ---------------------------------------------------------------------------
# synthetic benchmark graph
# ---------------------------------------------------------------------------

def synthetic_communities(n: int, d: int, intra_p: float, inter_p: float,
                          seed: int) -> Graph:
    """Two equal communities with Bernoulli edges (intra_p within, inter_p
    across) and Gaussian attributes around community means at -1 and +1."""
    rng = np.random.default_rng(seed)
    comm = np.zeros(n, dtype=np.int64)
    comm[n // 2:] = 1
    same = comm[:, None] == comm[None, :]
    prob = np.where(same, intra_p, inter_p)
    draw = rng.random((n, n))
    upper = np.triu(draw < prob, k=1)
    adj = sp.csr_matrix(np.logical_or(upper, upper.T).astype(np.float64))
    adj.sort_indices()
    means = np.where(comm[:, None] == 0, -1.0, 1.0)
    x = rng.standard_normal((n, d)) + means
    g = Graph(n, adj, x)
    g.validate()
    return g

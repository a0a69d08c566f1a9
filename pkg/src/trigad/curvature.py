"""Edge curvature from exact optimal transport.

Curvature of an edge is one minus the Wasserstein distance between the two
endpoints' neighborhood mass distributions. The attribute-mixed variant
shifts mass toward common neighbors in proportion to attribute similarity.
The exact transportation LP is solved by the compiled extension when it
built, with a pure-Python twin as fallback; ot_oracle is an independent
brute-force reference used to verify both.
"""

from __future__ import annotations

import dataclasses
import itertools

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.special import expit

from trigad.graph import Graph, HopDistances, hop_distances

try:
    from trigad import _ot as _ot_backend
except ImportError:  # extension not built; pure-Python twin
    from trigad import _ot_py as _ot_backend

MASS_TOL = 1e-9
DIST_CAP = 4  # supports sit within 2 hops of an edge, so 4 never binds


def ot_backend_name() -> str:
    return _ot_backend.BACKEND


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class DiscreteDistribution:
    """Probability mass on a set of distinct node ids; sums to 1."""

    support: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=np.int64)
        self.mass = np.asarray(self.mass, dtype=np.float64)
        if self.support.shape != self.mass.shape or self.support.ndim != 1:
            raise ValueError("support and mass must be equal-length vectors")
        if len(np.unique(self.support)) != len(self.support):
            raise ValueError("support ids must be distinct")
        if self.mass.min(initial=0.0) < 0.0:
            raise ValueError("mass entries must be nonnegative")
        total = self.mass.sum()
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"mass sums to {total}, not 1")


def base_distribution(g: Graph, i: int, alpha: float) -> DiscreteDistribution:
    """Mass alpha at the node itself, (1-alpha)/k at each of its k neighbors."""
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must be in [0,1], got {alpha}")
    nbrs = g.neighbors(i)
    k = nbrs.size
    if k == 0:
        raise ValueError(f"node {i} is isolated; no distribution defined")
    support = np.concatenate(([i], nbrs))
    mass = np.concatenate(([alpha], np.full(k, (1.0 - alpha) / k)))
    return DiscreteDistribution(support, mass)


def attribute_similarity(x_i: np.ndarray, x_j: np.ndarray) -> float:
    """Cosine similarity mapped to [0,1]; zero-norm rows count as cosine 0."""
    ni = np.linalg.norm(x_i)
    nj = np.linalg.norm(x_j)
    if ni == 0.0 or nj == 0.0:
        cos = 0.0
    else:
        cos = float(np.clip(x_i @ x_j / (ni * nj), -1.0, 1.0))
    return (cos + 1.0) / 2.0


def mixed_distribution(g: Graph, i: int, j: int, delta: float,
                       s_ij: float | None = None) -> DiscreteDistribution:
    """Similarity-weighted neighborhood distribution of i relative to j.

    Mass delta stays at i; each common neighbor of i and j receives
    (1-delta + S'/n_common)/k and each remaining neighbor
    (1-delta - S'/n_rest)/k, where S' = S/(1-delta) and k = degree(i).
    S is capped at (1-delta)*min(1, n_rest/k) so masses stay nonnegative for
    typical degrees; any residual negatives are clamped to zero and the
    vector renormalized. If either neighbor group is empty the similarity
    term is dropped entirely, leaving the plain base distribution with
    coefficient delta.
    """
    if not (0.0 <= delta < 1.0):
        raise ValueError(f"delta must be in [0,1), got {delta}")
    if g.adjacency[i, j] != 1.0:
        raise ValueError(f"({i},{j}) is not an edge")
    nbrs = g.neighbors(i)
    k = nbrs.size
    common = np.isin(nbrs, g.neighbors(j))
    n_common = int(common.sum())
    n_rest = k - n_common  # j itself is never adjacent to j, so n_rest >= 1
    support = np.concatenate(([i], nbrs))

    if n_common == 0 or n_rest == 0:
        mass = np.concatenate(([delta], np.full(k, (1.0 - delta) / k)))
        return DiscreteDistribution(support, mass)

    if s_ij is None:
        s_ij = attribute_similarity(g.attributes[i], g.attributes[j])
    s = min(s_ij, (1.0 - delta) * min(1.0, n_rest / k))
    s_prime = s / (1.0 - delta)

    mass = np.empty(1 + k)
    mass[0] = delta
    mass[1:][common] = (1.0 - delta + s_prime / n_common) / k
    mass[1:][~common] = (1.0 - delta - s_prime / n_rest) / k
    if mass.min() < 0.0:
        mass = np.maximum(mass, 0.0)
        mass /= mass.sum()
    return DiscreteDistribution(support, mass)


# ---------------------------------------------------------------------------
# exact optimal transport
# ---------------------------------------------------------------------------

def _cost_matrix(mu: DiscreteDistribution, nu: DiscreteDistribution,
                 cost) -> np.ndarray:
    if isinstance(cost, np.ndarray):
        if cost.shape != (mu.support.size, nu.support.size):
            raise ValueError(
                f"cost shape {cost.shape} does not match supports "
                f"{mu.support.size}x{nu.support.size}")
        mat = np.asarray(cost, dtype=np.float64)
    else:  # mapping keyed by node-id pairs, e.g. hop_distances output
        mat = np.empty((mu.support.size, nu.support.size))
        for r, si in enumerate(mu.support):
            for c, sj in enumerate(nu.support):
                mat[r, c] = 0.0 if si == sj else float(cost[(int(si), int(sj))])
    if mat.min(initial=0.0) < 0.0:
        raise ValueError("cost entries must be nonnegative")
    return mat


def _check_balance(mu: DiscreteDistribution, nu: DiscreteDistribution) -> None:
    if abs(mu.mass.sum() - nu.mass.sum()) > MASS_TOL:
        raise ValueError("distributions carry different total mass")


def wasserstein(mu: DiscreteDistribution, nu: DiscreteDistribution,
                cost) -> float:
    """Exact 1-Wasserstein distance under a pairwise ground cost.

    cost is either a dense |mu| x |nu| array over the supports or a mapping
    from node-id pairs (such as hop_distances output).
    """
    _check_balance(mu, nu)
    mat = _cost_matrix(mu, nu, cost)
    keep_r = mu.mass > 0.0
    keep_c = nu.mass > 0.0
    a = mu.mass[keep_r]
    b = nu.mass[keep_c]
    if a.size == 0 or b.size == 0:
        return 0.0
    return float(_ot_backend.solve(
        np.ascontiguousarray(mat[np.ix_(keep_r, keep_c)]), a, b))


def ot_oracle(mu: DiscreteDistribution, nu: DiscreteDistribution,
              cost) -> float:
    """Brute-force reference: enumerate every spanning-tree basis of the
    transportation polytope and take the cheapest feasible one."""
    _check_balance(mu, nu)
    mat = _cost_matrix(mu, nu, cost)
    keep_r = mu.mass > 0.0
    keep_c = nu.mass > 0.0
    a = mu.mass[keep_r]
    b = nu.mass[keep_c]
    mat = mat[np.ix_(keep_r, keep_c)]
    m, n = mat.shape
    if m == 0 or n == 0:
        return 0.0
    if m * n > 16:
        raise ValueError(f"oracle limited to 16 cells, got {m}x{n}")

    cells = list(itertools.product(range(m), range(n)))
    best = np.inf
    for subset in itertools.combinations(cells, m + n - 1):
        flows = _tree_flows(subset, a, b, m, n)
        if flows is None:
            continue
        total = sum(f * mat[i, j] for (i, j), f in zip(subset, flows))
        best = min(best, total)
    return float(best)


def _tree_flows(subset, a, b, m, n):
    """Flows of a candidate basis via leaf elimination, or None if the cell
    set is cyclic or the flows go negative."""
    parent = list(range(m + n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (i, j) in subset:
        ri, rj = find(i), find(m + j)
        if ri == rj:
            return None  # cycle: not a tree
        parent[ri] = rj

    remaining = {v: [] for v in range(m + n)}
    for idx, (i, j) in enumerate(subset):
        remaining[i].append(idx)
        remaining[m + j].append(idx)
    supply = np.concatenate([a, b]).astype(np.float64)
    flows = np.zeros(len(subset))
    done = np.zeros(len(subset), dtype=bool)
    for _ in range(len(subset)):
        leaf = next(v for v, es in remaining.items()
                    if len([e for e in es if not done[e]]) == 1)
        edge = next(e for e in remaining[leaf] if not done[e])
        i, j = subset[edge]
        other = m + j if leaf == i else i
        flows[edge] = supply[leaf]
        supply[other] -= supply[leaf]
        supply[leaf] = 0.0
        done[edge] = True
    if flows.min() < -1e-12:
        return None
    return flows


# ---------------------------------------------------------------------------
# curvature
# ---------------------------------------------------------------------------

def ollivier_curvature(g: Graph, edge: tuple[int, int], alpha: float) -> float:
    """1 - W(m_i, m_j) for an existing edge (graph distance 1)."""
    i, j = edge
    if g.adjacency[i, j] != 1.0:
        raise ValueError(f"({i},{j}) is not an edge")
    mu = base_distribution(g, i, alpha)
    nu = base_distribution(g, j, alpha)
    sources = np.union1d(mu.support, nu.support)
    dists = hop_distances(g, sources, cap=DIST_CAP)
    return 1.0 - wasserstein(mu, nu, dists)


@dataclasses.dataclass
class CurvatureTable:
    """Per-edge raw/normalized attribute-mixed curvature plus the updated
    adjacency C (unit diagonal, normalized curvature on edges)."""

    edges: np.ndarray        # (E, 2) int64, i < j
    kappa_raw: np.ndarray    # (E,)
    kappa_norm: np.ndarray   # (E,)
    c: sp.csr_matrix         # n x n

    def edge_count(self) -> int:
        return self.edges.shape[0]


def _hop_matrix(g: Graph, cap: int) -> np.ndarray:
    """Truncated all-pairs hop distances; beyond-cap pairs get the cap+1
    sentinel (same convention as hop_distances). Dense n x n — fine at the
    graph sizes this package targets."""
    dist = csgraph.dijkstra(g.adjacency, directed=False, unweighted=True,
                            limit=float(cap))
    dist[~np.isfinite(dist)] = cap + 1
    return dist


def mixed_curvature_table(g: Graph, delta: float) -> CurvatureTable:
    """Attribute-mixed curvature for every edge, normalized by a sigmoid."""
    coo = sp.triu(g.adjacency, k=1).tocoo()
    order = np.lexsort((coo.col, coo.row))
    edges = np.stack([coo.row[order], coo.col[order]], axis=1).astype(np.int64)

    # every support pair sits within DIST_CAP hops of the shared edge, so one
    # truncated all-pairs sweep replaces a BFS per edge
    dist_matrix = _hop_matrix(g, DIST_CAP)
    kappa = np.empty(edges.shape[0])
    for e, (i, j) in enumerate(edges):
        i, j = int(i), int(j)
        s_ij = attribute_similarity(g.attributes[i], g.attributes[j])
        mu = mixed_distribution(g, i, j, delta, s_ij)
        nu = mixed_distribution(g, j, i, delta, s_ij)
        cost = dist_matrix[np.ix_(mu.support, nu.support)]
        kappa[e] = 1.0 - wasserstein(mu, nu, cost)

    kappa_norm = expit(kappa)
    rows = np.concatenate([edges[:, 0], edges[:, 1], np.arange(g.n)])
    cols = np.concatenate([edges[:, 1], edges[:, 0], np.arange(g.n)])
    vals = np.concatenate([kappa_norm, kappa_norm, np.ones(g.n)])
    c = sp.coo_matrix((vals, (rows, cols)), shape=(g.n, g.n)).tocsr()
    c.sort_indices()
    return CurvatureTable(edges, kappa, kappa_norm, c)


# ---------------------------------------------------------------------------
# edge statistics (histogram feed)
# ---------------------------------------------------------------------------

EDGE_CLASSES = ("nn", "na", "aa")


def edge_classes(table: CurvatureTable, labels: np.ndarray) -> np.ndarray:
    """Classify edges by endpoint labels: nn both normal, na exactly one
    anomalous, aa both anomalous."""
    anom = labels[table.edges] != 0
    count = anom.sum(axis=1)
    return np.array(EDGE_CLASSES)[count]


def curvature_histogram(table: CurvatureTable, labels: np.ndarray,
                        bins: int = 10) -> dict:
    """Bin normalized curvature over [0,1] per edge class."""
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    classes = edge_classes(table, labels)
    edges01 = np.linspace(0.0, 1.0, bins + 1)
    out = {"bin_lo": edges01[:-1].tolist(), "bin_hi": edges01[1:].tolist()}
    for cls in EDGE_CLASSES:
        vals = table.kappa_norm[classes == cls]
        counts, _ = np.histogram(vals, bins=edges01)
        out[f"count_{cls}"] = counts.astype(int).tolist()
    return out

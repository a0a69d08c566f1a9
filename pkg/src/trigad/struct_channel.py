"""Structure estimation channel.

Reconstructs the adjacency from two diffused views — the (edge-masked) graph
itself and a kNN graph built over the diffused features — encoded by shared
weights and combined into a symmetric sigmoid inner-product decoder. A
node's anomaly score is the squared reconstruction error of its adjacency
row after masking its edges.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from trigad.graph import (Graph, diffuse, knn_graph, mask_edges,
                          normalize_adjacency, propagate_multiscale)
from trigad.nn import Param, glorot, relu, sigmoid


@dataclasses.dataclass
class StructModel:
    proj_in: Param        # d x h, first shared layer
    proj_hidden: Param    # h x h, second shared layer
    edge_combiner: Param  # 2h x h, fuses the two views before the decoder
    restart: float        # diffusion restart probability
    steps: int            # diffusion iterations
    knn_k: int
    consistency_weight: float
    # Optional reweighting of the adjacency loss: existing edges count
    # pos_weight times. Sparse graphs have ~n^2 zeros pulling the decoder
    # toward an all-flat output; 1.0 keeps the plain unweighted loss.
    pos_weight: float = 1.0

    def params(self) -> list[Param]:
        return [self.proj_in, self.proj_hidden, self.edge_combiner]

    @property
    def hidden_dim(self) -> int:
        return self.proj_in.value.shape[1]


def init_struct_model(d: int, hidden: int, restart: float, steps: int,
                      knn_k: int, consistency_weight: float,
                      seed: int, pos_weight: float = 1.0) -> StructModel:
    if pos_weight <= 0.0:
        raise ValueError(f"pos_weight must be positive, got {pos_weight}")
    rng = np.random.default_rng(seed)
    return StructModel(
        proj_in=Param(glorot(rng, (d, hidden)), "proj_in"),
        proj_hidden=Param(glorot(rng, (hidden, hidden)), "proj_hidden"),
        edge_combiner=Param(glorot(rng, (2 * hidden, hidden)), "edge_combiner"),
        restart=restart,
        steps=steps,
        knn_k=knn_k,
        consistency_weight=consistency_weight,
        pos_weight=pos_weight,
    )


@dataclasses.dataclass
class StructForwardOut:
    h1: np.ndarray       # n x h, linear features of the masked graph
    h1_enh: np.ndarray   # n x h, same weights on the kNN-enhanced graph
    h2: np.ndarray       # n x h
    h2_enh: np.ndarray   # n x h
    a_hat: np.ndarray    # n x n, symmetric, entries in (0,1)
    _cache: dict = dataclasses.field(repr=False, default_factory=dict)


def struct_forward(model: StructModel, masked_g: Graph,
                   enhanced_own_iterates: bool = True) -> StructForwardOut:
    """Diffuse, build the kNN-enhanced graph, encode both views with shared
    weights, and decode a dense adjacency estimate.

    enhanced_own_iterates selects whether the enhanced graph's diffusion
    feeds back its own iterates (default) or re-propagates the masked
    graph's iterate sequence.
    """
    x = masked_g.attributes
    adj = normalize_adjacency(masked_g)
    stack = propagate_multiscale(adj, x, model.restart, model.steps)
    xbar = stack.views[-1]

    a_enh = knn_graph(xbar, model.knn_k)
    adj_enh = normalize_adjacency(a_enh)
    if enhanced_own_iterates:
        xbar_enh = diffuse(adj_enh, x, model.restart, model.steps)
    else:
        beta = model.restart
        prev = x  # the masked graph's iterate sequence drives the update
        for t in range(model.steps):
            xbar_enh = (1.0 - beta) * (adj_enh.matrix @ prev) + beta * x
            prev = stack.views[t]

    h1 = xbar @ model.proj_in.value
    h1_enh = xbar_enh @ model.proj_in.value
    r = relu(h1)
    r_enh = relu(h1_enh)
    h2 = r @ model.proj_hidden.value
    h2_enh = r_enh @ model.proj_hidden.value
    cat = np.hstack([h2, h2_enh])
    pre_comb = cat @ model.edge_combiner.value
    p = relu(pre_comb)
    a_hat = sigmoid(p @ p.T)
    cache = {"xbar": xbar, "xbar_enh": xbar_enh, "r": r, "r_enh": r_enh,
             "cat": cat, "pre_comb": pre_comb, "p": p}
    return StructForwardOut(h1, h1_enh, h2, h2_enh, a_hat, cache)


def struct_losses(out: StructForwardOut, a_real, gamma: float,
                  pos_weight: float = 1.0) -> tuple[float, float, float]:
    """(adjacency loss, view-consistency loss, their gamma-weighted total).

    pos_weight > 1 counts each existing-edge entry that many times in the
    adjacency loss; 1.0 is the plain Frobenius form.
    """
    a_dense = np.asarray(a_real.todense()) if hasattr(a_real, "todense") \
        else np.asarray(a_real, dtype=np.float64)
    if out.a_hat.shape != a_dense.shape:
        raise ValueError(
            f"shape mismatch: {out.a_hat.shape} vs {a_dense.shape}")
    diff = out.a_hat - a_dense
    sq = diff * diff
    if pos_weight != 1.0:
        sq = sq * (1.0 + (pos_weight - 1.0) * a_dense)
    l_adj = float(sq.sum())
    cons = out.h1 - out.h1_enh
    l_cons = float((cons * cons).sum())
    return l_adj, l_cons, l_adj + gamma * l_cons


def struct_backward(model: StructModel, out: StructForwardOut,
                    d_ahat: np.ndarray, cons_weight: float,
                    d_h2_extra: np.ndarray | None = None) -> None:
    """Accumulate parameter gradients.

    d_ahat is dLoss/d(a_hat); cons_weight multiplies the H1-alignment
    gradient (pass loss_scale * gamma); d_h2_extra lands on the masked-graph
    view's representation h2 (distillation).
    """
    cache = out._cache
    p, pre_comb, cat = cache["p"], cache["pre_comb"], cache["cat"]
    h = model.hidden_dim

    ds = d_ahat * out.a_hat * (1.0 - out.a_hat)
    dp = (ds + ds.T) @ p
    dpre = dp * (pre_comb > 0.0)
    model.edge_combiner.accumulate(cat.T @ dpre)
    dcat = dpre @ model.edge_combiner.value.T
    dh2 = dcat[:, :h]
    dh2_enh = dcat[:, h:]
    if d_h2_extra is not None:
        dh2 = dh2 + d_h2_extra

    model.proj_hidden.accumulate(
        cache["r"].T @ dh2 + cache["r_enh"].T @ dh2_enh)
    dr = dh2 @ model.proj_hidden.value.T
    dr_enh = dh2_enh @ model.proj_hidden.value.T
    dcons = 2.0 * cons_weight * (out.h1 - out.h1_enh)
    dh1 = dr * (out.h1 > 0.0) + dcons
    dh1_enh = dr_enh * (out.h1_enh > 0.0) - dcons
    model.proj_in.accumulate(
        cache["xbar"].T @ dh1 + cache["xbar_enh"].T @ dh1_enh)


def struct_embed(model: StructModel, g: Graph,
                 enhanced_own_iterates: bool = True) -> np.ndarray:
    """Masked-view representation of the unperturbed graph (teacher
    embeddings)."""
    return struct_forward(model, g, enhanced_own_iterates).h2


def struct_score(model: StructModel, g: Graph, batch_size: int = 64,
                 enhanced_own_iterates: bool = True) -> np.ndarray:
    """Per-node anomaly score: mask a batch's edges, reconstruct, record
    each masked node's squared adjacency-row error."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    a_real = np.asarray(g.adjacency.todense())
    scores = np.empty(g.n)
    for lo in range(0, g.n, batch_size):
        batch = np.arange(lo, min(lo + batch_size, g.n))
        out = struct_forward(model, mask_edges(g, batch), enhanced_own_iterates)
        diff = out.a_hat[batch] - a_real[batch]
        scores[batch] = (diff * diff).sum(axis=1)
    return scores

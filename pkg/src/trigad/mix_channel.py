"""Mixture estimation channel.

A small GCN over the curvature-updated adjacency reconstructs the normalized
edge-curvature matrix through a sigmoid inner-product decoder with learned
scalar scale/shift. A node's anomaly score compares the mean curvature of
its incident edges against the mean of the reconstructed values on the same
edges.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.sparse as sp

from trigad.curvature import CurvatureTable
from trigad.graph import Graph, normalize_matrix
from trigad.nn import Param, glorot, relu, sigmoid


@dataclasses.dataclass
class MixModel:
    gcn_weights: list[Param]  # chains d -> h -> ... -> h
    dec_scale: Param          # 1x1 scalar on the inner products
    dec_shift: Param          # 1x1 offset
    delta: float              # curvature self-mass coefficient

    def params(self) -> list[Param]:
        return [*self.gcn_weights, self.dec_scale, self.dec_shift]

    @property
    def layers(self) -> int:
        return len(self.gcn_weights)

    @property
    def hidden_dim(self) -> int:
        return self.gcn_weights[-1].value.shape[1]


def init_mix_model(d: int, hidden: int, layers: int, delta: float,
                   seed: int) -> MixModel:
    if layers < 1:
        raise ValueError(f"layers must be >= 1, got {layers}")
    rng = np.random.default_rng(seed)
    dims = [d] + [hidden] * layers
    weights = [Param(glorot(rng, (dims[l], dims[l + 1])), f"gcn_{l}")
               for l in range(layers)]
    return MixModel(
        gcn_weights=weights,
        dec_scale=Param(np.ones((1, 1)), "dec_scale"),
        dec_shift=Param(np.zeros((1, 1)), "dec_shift"),
        delta=delta,
    )


def curvature_propagation(table: CurvatureTable) -> sp.csr_matrix:
    """Symmetric normalization of the curvature adjacency C (which already
    carries its unit diagonal, so no extra self-loops are added)."""
    return normalize_matrix(table.c, kind="none_sym")


@dataclasses.dataclass
class MixForwardOut:
    hc: np.ndarray     # n x h final representation
    c_hat: np.ndarray  # n x n symmetric reconstruction in (0,1)
    _cache: dict = dataclasses.field(repr=False, default_factory=dict)


def mix_forward(model: MixModel, g: Graph, table: CurvatureTable,
                lap: sp.csr_matrix | None = None) -> MixForwardOut:
    if lap is None:
        lap = curvature_propagation(table)
    hs = [g.attributes]
    pres = []
    last = model.layers - 1
    for l, w in enumerate(model.gcn_weights):
        pre = lap @ (hs[-1] @ w.value)
        pres.append(pre)
        hs.append(relu(pre) if l < last else pre)  # final layer stays linear
    hc = hs[-1]
    inner = hc @ hc.T
    pre_dec = model.dec_scale.value[0, 0] * inner + model.dec_shift.value[0, 0]
    c_hat = sigmoid(pre_dec)
    cache = {"lap": lap, "hs": hs, "pres": pres, "inner": inner}
    return MixForwardOut(hc, c_hat, cache)


def mix_loss(out: MixForwardOut, table: CurvatureTable) -> tuple[float, np.ndarray]:
    """Squared error against the dense curvature matrix; returns
    (loss, d_loss/d_c_hat)."""
    c_dense = np.asarray(table.c.todense())
    if out.c_hat.shape != c_dense.shape:
        raise ValueError(
            f"shape mismatch: {out.c_hat.shape} vs {c_dense.shape}")
    diff = out.c_hat - c_dense
    return float((diff * diff).sum()), 2.0 * diff


def mix_backward(model: MixModel, out: MixForwardOut, d_chat: np.ndarray,
                 d_hc_extra: np.ndarray | None = None) -> None:
    """Accumulate parameter gradients; d_hc_extra lands on the final
    representation hc (distillation)."""
    cache = out._cache
    lap, hs, pres = cache["lap"], cache["hs"], cache["pres"]

    dpre_dec = d_chat * out.c_hat * (1.0 - out.c_hat)
    model.dec_scale.accumulate(
        np.array([[float((dpre_dec * cache["inner"]).sum())]]))
    model.dec_shift.accumulate(np.array([[float(dpre_dec.sum())]]))
    dinner = model.dec_scale.value[0, 0] * dpre_dec
    dh = (dinner + dinner.T) @ out.hc
    if d_hc_extra is not None:
        dh = dh + d_hc_extra

    last = model.layers - 1
    for l in range(last, -1, -1):
        dpre = dh if l == last else dh * (pres[l] > 0.0)
        dm = lap.T @ dpre  # lap is symmetric; .T keeps the math explicit
        model.gcn_weights[l].accumulate(hs[l].T @ dm)
        dh = dm @ model.gcn_weights[l].value.T


def mix_embed(model: MixModel, g: Graph, table: CurvatureTable) -> np.ndarray:
    return mix_forward(model, g, table).hc


def mix_scores_from(c: sp.csr_matrix, c_hat: np.ndarray,
                    adjacency: sp.csr_matrix) -> np.ndarray:
    """Per-node score from fixed matrices: squared gap between the mean true
    curvature and the mean reconstructed value over incident edges;
    degree-0 nodes score 0."""
    deg = np.asarray(adjacency.sum(axis=1)).ravel()
    true_sum = np.asarray(adjacency.multiply(c).sum(axis=1)).ravel()
    hat_sum = np.asarray(adjacency.multiply(c_hat).sum(axis=1)).ravel()
    scores = np.zeros(adjacency.shape[0])
    has = deg > 0
    gap = true_sum[has] / deg[has] - hat_sum[has] / deg[has]
    scores[has] = gap * gap
    return scores


def mix_score(model: MixModel, g: Graph, table: CurvatureTable) -> np.ndarray:
    out = mix_forward(model, g, table)
    return mix_scores_from(table.c, out.c_hat, g.adjacency)

"""Attribute estimation channel.

Reconstructs masked node attributes from multi-scale propagated views fused
by a per-node attention over scales; a node's anomaly score is the squared
reconstruction error of its attribute row.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from trigad.graph import (Graph, NormalizedAdj, PropagationStack,
                          mask_attributes, normalize_adjacency,
                          propagate_multiscale)
from trigad.nn import Param, glorot, relu, softmax_rows


@dataclasses.dataclass
class AttrModel:
    encoder: Param       # d x h, shared across scales
    attn_vec: Param      # a x 1
    attn_hidden: Param   # a x h, context from the fused-scale hidden state
    attn_input: Param    # a x d, context from the node's own (masked) row
    decoder: Param       # h x d
    decoder_bias: Param  # 1 x d
    scales: int
    restart: float

    def params(self) -> list[Param]:
        return [self.encoder, self.attn_vec, self.attn_hidden,
                self.attn_input, self.decoder, self.decoder_bias]

    @property
    def hidden_dim(self) -> int:
        return self.encoder.value.shape[1]


def init_attr_model(d: int, hidden: int, attn_dim: int, scales: int,
                    restart: float, seed: int) -> AttrModel:
    rng = np.random.default_rng(seed)
    return AttrModel(
        encoder=Param(glorot(rng, (d, hidden)), "encoder"),
        attn_vec=Param(glorot(rng, (attn_dim, 1)), "attn_vec"),
        attn_hidden=Param(glorot(rng, (attn_dim, hidden)), "attn_hidden"),
        attn_input=Param(glorot(rng, (attn_dim, d)), "attn_input"),
        decoder=Param(glorot(rng, (hidden, d)), "decoder"),
        decoder_bias=Param(np.zeros((1, d)), "decoder_bias"),
        scales=scales,
        restart=restart,
    )


@dataclasses.dataclass
class AttrForwardOut:
    z: np.ndarray      # n x h fused representation
    x_hat: np.ndarray  # n x d reconstruction
    attn: np.ndarray   # n x scales, rows sum to 1
    _cache: dict = dataclasses.field(repr=False, default_factory=dict)


def attr_forward(model: AttrModel, stack: PropagationStack,
                 x_masked: np.ndarray) -> AttrForwardOut:
    """Encode every propagated view, fuse them with per-node attention over
    scales, and decode back to attribute space."""
    if stack.scales != model.scales:
        raise ValueError(
            f"stack has {stack.scales} scales, model expects {model.scales}")
    n = x_masked.shape[0]
    w_enc = model.encoder.value
    ctx_input = x_masked @ model.attn_input.value.T  # n x a
    pre_enc, zs, ts = [], [], []
    omega = np.empty((n, model.scales))
    for l, view in enumerate(stack.views):
        pre = view @ w_enc
        z_l = relu(pre)
        t = np.tanh(z_l @ model.attn_hidden.value.T + ctx_input)
        omega[:, l] = (t @ model.attn_vec.value).ravel()
        pre_enc.append(pre)
        zs.append(z_l)
        ts.append(t)
    attn = softmax_rows(omega)
    z = np.zeros_like(zs[0])
    for l in range(model.scales):
        z += attn[:, l:l + 1] * zs[l]
    pre_dec = z @ model.decoder.value + model.decoder_bias.value
    x_hat = relu(pre_dec)
    cache = {"x_masked": x_masked, "views": stack.views, "pre_enc": pre_enc,
             "zs": zs, "ts": ts, "pre_dec": pre_dec}
    return AttrForwardOut(z, x_hat, attn, cache)


def attr_loss(out: AttrForwardOut, x_real: np.ndarray,
              eval_nodes=None) -> tuple[float, np.ndarray]:
    """Squared reconstruction error, optionally restricted to given rows;
    returns (loss, d_loss/d_x_hat)."""
    if out.x_hat.shape != x_real.shape:
        raise ValueError(
            f"shape mismatch: {out.x_hat.shape} vs {x_real.shape}")
    diff = out.x_hat - x_real
    if eval_nodes is None:
        return float((diff * diff).sum()), 2.0 * diff
    rows = np.asarray(sorted(set(int(t) for t in eval_nodes)), dtype=np.int64)
    grad = np.zeros_like(diff)
    if rows.size == 0:
        return 0.0, grad
    sel = diff[rows]
    grad[rows] = 2.0 * sel
    return float((sel * sel).sum()), grad


def attr_backward(model: AttrModel, out: AttrForwardOut, d_xhat: np.ndarray,
                  d_z_extra: np.ndarray | None = None) -> None:
    """Accumulate parameter gradients for attr_forward.

    d_xhat is dLoss/d(x_hat); d_z_extra, when given, is an additional
    gradient landing directly on the fused representation z (distillation).
    """
    cache = out._cache
    zs, ts, pre_enc = cache["zs"], cache["ts"], cache["pre_enc"]
    x_masked, views = cache["x_masked"], cache["views"]
    attn = out.attn

    dpre_dec = d_xhat * (cache["pre_dec"] > 0.0)
    model.decoder.accumulate(out.z.T @ dpre_dec)
    model.decoder_bias.accumulate(dpre_dec.sum(axis=0, keepdims=True))
    dz = dpre_dec @ model.decoder.value.T
    if d_z_extra is not None:
        dz = dz + d_z_extra

    # fused sum: z = sum_l attn[:,l] * z_l
    dattn = np.stack([(dz * zs[l]).sum(axis=1)
                      for l in range(model.scales)], axis=1)
    domega = attn * (dattn - (attn * dattn).sum(axis=1, keepdims=True))

    d_enc = np.zeros_like(model.encoder.value)
    d_q = np.zeros_like(model.attn_vec.value)
    d_wz = np.zeros_like(model.attn_hidden.value)
    d_wx = np.zeros_like(model.attn_input.value)
    q = model.attn_vec.value
    for l in range(model.scales):
        dom_l = domega[:, l:l + 1]
        d_q += ts[l].T @ dom_l
        dt = dom_l @ q.T
        du = dt * (1.0 - ts[l] * ts[l])
        d_wz += du.T @ zs[l]
        d_wx += du.T @ x_masked
        dz_l = attn[:, l:l + 1] * dz + du @ model.attn_hidden.value
        dpre = dz_l * (pre_enc[l] > 0.0)
        d_enc += views[l].T @ dpre
    model.encoder.accumulate(d_enc)
    model.attn_vec.accumulate(d_q)
    model.attn_hidden.accumulate(d_wz)
    model.attn_input.accumulate(d_wx)


def attr_embed(model: AttrModel, g: Graph,
               adj: NormalizedAdj | None = None) -> np.ndarray:
    """Fused representation of the unperturbed graph (teacher embeddings)."""
    if adj is None:
        adj = normalize_adjacency(g)
    stack = propagate_multiscale(adj, g.attributes, model.restart, model.scales)
    return attr_forward(model, stack, g.attributes).z


def attr_score(model: AttrModel, g: Graph, batch_size: int = 64,
               adj: NormalizedAdj | None = None) -> np.ndarray:
    """Per-node anomaly score: mask a batch of nodes, reconstruct, record
    each masked row's squared error against the true attributes."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if adj is None:
        adj = normalize_adjacency(g)
    scores = np.empty(g.n)
    for lo in range(0, g.n, batch_size):
        batch = np.arange(lo, min(lo + batch_size, g.n))
        x_masked = mask_attributes(g, batch)
        stack = propagate_multiscale(adj, x_masked, model.restart, model.scales)
        out = attr_forward(model, stack, x_masked)
        diff = out.x_hat[batch] - g.attributes[batch]
        scores[batch] = (diff * diff).sum(axis=1)
    return scores

"""Sequential training of the three channels with triplet mutual distillation.

The workflow runs four phases in a fixed order: the structure channel is
pretrained alone, then each channel in turn is trained as the *student*
against the frozen, already-trained channels as *teachers*:

    1. pretrain-structure   (no teachers)
    2. attribute            (teacher: structure)
    3. structure            (teacher: attribute; warm-started from phase 1)
    4. mixture              (teachers: attribute and structure)

Teacher embeddings are computed once per phase from the unperturbed graph
and stay fixed; teacher parameters are never touched (they are not handed
to the optimizer and no backward pass runs through them). A triplet pulls
the student's view of a node toward each teacher's view of the same node
and pushes it away from the teacher's view of a random other node.

`train_unified` is the ablation baseline: one optimizer over all three
channels minimizing the plain sum of the reconstruction losses, no
distillation. It runs for `epochs_attr` epochs.
"""

from __future__ import annotations

import dataclasses
import json
import os

import numpy as np

from trigad.attr_channel import (AttrModel, attr_backward, attr_embed,
                                 attr_forward, attr_loss, attr_score,
                                 init_attr_model)
from trigad.config import DistillConfig, RunConfig, TrainSchedule, \
    config_hash, config_to_dict
from trigad.curvature import CurvatureTable, mixed_curvature_table, \
    ot_backend_name
from trigad.graph import Graph, NormalizedAdj, mask_attributes, mask_edges, \
    normalize_adjacency, propagate_multiscale
from trigad.mix_channel import (MixModel, curvature_propagation, init_mix_model,
                                mix_backward, mix_forward, mix_loss, mix_score)
from trigad.nn import Adam, Param, frobenius_loss, gcn_backward, gcn_forward, \
    grad_check, init_params, linear_backward, linear_forward, load_checkpoint, \
    save_checkpoint
from trigad.struct_channel import (StructModel, init_struct_model,
                                   struct_backward, struct_embed,
                                   struct_forward, struct_losses, struct_score)

PHASE_ORDER = ("pretrain-structure", "attribute", "structure", "mixture")


# ---------------------------------------------------------------------------
# triplet machinery
# ---------------------------------------------------------------------------

def triplet_loss(anchor: np.ndarray, positive: np.ndarray,
                 negative: np.ndarray, margin: float
                 ) -> tuple[float, np.ndarray]:
    """Hinged squared-distance triplet loss over row-aligned embeddings.

    loss = sum_t max(0, ||pos_t - anc_t||^2 - ||neg_t - anc_t||^2 + margin)

    Returns (loss, d_loss/d_anchor). Positive and negative rows are treated
    as constants (they come from frozen teachers), so only the anchor
    gradient is produced.
    """
    if anchor.shape != positive.shape or anchor.shape != negative.shape:
        raise ValueError(
            f"triplet shape mismatch: {anchor.shape} / {positive.shape} / "
            f"{negative.shape}")
    dp = ((positive - anchor) ** 2).sum(axis=1)
    dn = ((negative - anchor) ** 2).sum(axis=1)
    term = dp - dn + margin
    active = term > 0.0
    loss = float(term[active].sum())
    d_anchor = 2.0 * (negative - positive) * active[:, None]
    return loss, d_anchor


def sample_triplets(n: int, count: int, rng) -> np.ndarray:
    """(count, 3) int64 rows of (anchor, positive, negative) node ids.

    Anchors cycle deterministically through 0..n-1 so every node is covered
    once per n draws; the positive is the anchor itself (the teacher's view
    of the same node); the negative is uniform over the other n-1 nodes.
    rng is a seed or a Generator.
    """
    if n < 2:
        raise ValueError(f"need at least 2 nodes to form triplets, got {n}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    anchors = np.resize(np.arange(n, dtype=np.int64), count)
    negatives = rng.integers(0, n - 1, size=count, dtype=np.int64)
    negatives[negatives >= anchors] += 1  # uniform over ids != anchor
    return np.stack([anchors, anchors, negatives], axis=1)


def _draw_mask(rng: np.random.Generator, n: int, rho: float) -> np.ndarray:
    size = max(1, int(round(rho * n)))
    return np.sort(rng.choice(n, size=size, replace=False))


# ---------------------------------------------------------------------------
# channel adapters: one epoch of forward/loss/backward per channel
# ---------------------------------------------------------------------------

class AttrStudent:
    channel = "attribute"
    uses_masks = True

    def __init__(self, model: AttrModel, g: Graph, adj: NormalizedAdj):
        self.model = model
        self.g = g
        self.adj = adj

    @property
    def embedding_dim(self) -> int:
        return self.model.hidden_dim

    def params(self) -> list[Param]:
        return self.model.params()

    def epoch_forward(self, mask_nodes):
        x_masked = mask_attributes(self.g, mask_nodes)
        stack = propagate_multiscale(self.adj, x_masked, self.model.restart,
                                     self.model.scales)
        out = attr_forward(self.model, stack, x_masked)
        loss, d_raw = attr_loss(out, self.g.attributes, mask_nodes)
        return loss, out, d_raw

    def embedding(self, out) -> np.ndarray:
        return out.z

    def backward(self, out, scale: float, d_raw, d_emb) -> None:
        attr_backward(self.model, out, scale * d_raw, d_emb)


class StructStudent:
    channel = "structure"
    uses_masks = True

    def __init__(self, model: StructModel, g: Graph,
                 enhanced_own_iterates: bool = True):
        self.model = model
        self.g = g
        self.a_real = np.asarray(g.adjacency.todense())
        self.own_iterates = enhanced_own_iterates
        w = model.pos_weight
        self.loss_weights = None if w == 1.0 \
            else 1.0 + (w - 1.0) * self.a_real

    @property
    def embedding_dim(self) -> int:
        return self.model.hidden_dim

    def params(self) -> list[Param]:
        return self.model.params()

    def epoch_forward(self, mask_nodes):
        out = struct_forward(self.model, mask_edges(self.g, mask_nodes),
                             self.own_iterates)
        _, _, l_str = struct_losses(out, self.a_real,
                                    self.model.consistency_weight,
                                    self.model.pos_weight)
        d_raw = 2.0 * (out.a_hat - self.a_real)
        if self.loss_weights is not None:
            d_raw = d_raw * self.loss_weights
        return l_str, out, d_raw

    def embedding(self, out) -> np.ndarray:
        return out.h2

    def backward(self, out, scale: float, d_raw, d_emb) -> None:
        struct_backward(self.model, out, scale * d_raw,
                        scale * self.model.consistency_weight, d_emb)


class MixStudent:
    channel = "mixture"
    uses_masks = False  # trains against the full curvature target every epoch

    def __init__(self, model: MixModel, g: Graph, table: CurvatureTable,
                 lap=None):
        self.model = model
        self.g = g
        self.table = table
        self.lap = curvature_propagation(table) if lap is None else lap

    @property
    def embedding_dim(self) -> int:
        return self.model.hidden_dim

    def params(self) -> list[Param]:
        return self.model.params()

    def epoch_forward(self, mask_nodes):
        out = mix_forward(self.model, self.g, self.table, self.lap)
        loss, d_raw = mix_loss(out, self.table)
        return loss, out, d_raw

    def embedding(self, out) -> np.ndarray:
        return out.hc

    def backward(self, out, scale: float, d_raw, d_emb) -> None:
        mix_backward(self.model, out, scale * d_raw, d_emb)


# ---------------------------------------------------------------------------
# one phase
# ---------------------------------------------------------------------------

def train_phase(student, teacher_embeddings, distill: DistillConfig,
                schedule: TrainSchedule, epochs: int, phase_index: int,
                phase_name: str) -> list[dict]:
    """Run one training phase; returns the per-epoch loss history.

    teacher_embeddings is a (possibly empty) list of fixed n-by-h arrays.
    Masking noise and triplet sampling draw from independent streams keyed
    by (seed, phase_index), so disabling distillation (eta2 = 0, or no
    teachers) leaves the mask sequence — and hence the whole trajectory —
    bitwise unchanged.
    """
    n = student.g.n
    for emb in teacher_embeddings:
        if emb.shape != (n, student.embedding_dim):
            raise ValueError(
                "configuration error: teacher embedding shape "
                f"{emb.shape} does not match student ({n}, "
                f"{student.embedding_dim})")
    distill_on = bool(teacher_embeddings) and distill.eta2 > 0.0
    masks_rng = np.random.default_rng([schedule.seed, phase_index, 0])
    triplet_rng = np.random.default_rng([distill.seed, phase_index, 1])
    count = distill.triplets_per_epoch if distill.triplets_per_epoch else n

    opt = Adam(student.params(), lr=schedule.lr)
    history = []
    for epoch in range(epochs):
        mask_nodes = _draw_mask(masks_rng, n, schedule.rho) \
            if student.uses_masks else None
        recon, out, d_raw = student.epoch_forward(mask_nodes)
        distill_loss = 0.0
        d_emb = None
        if distill_on:
            emb = student.embedding(out)
            trips = sample_triplets(n, count, triplet_rng)
            anchors = trips[:, 0]
            d_emb = np.zeros_like(emb)
            for t_emb in teacher_embeddings:
                t_loss, d_anchor = triplet_loss(
                    emb[anchors], t_emb[trips[:, 1]], t_emb[trips[:, 2]],
                    distill.margin)
                distill_loss += t_loss
                np.add.at(d_emb, anchors, distill.eta2 * d_anchor)
        total = distill.eta1 * recon + distill.eta2 * distill_loss
        if not np.isfinite(total):
            raise RuntimeError(
                f"training diverged in phase {phase_name!r} "
                f"(index {phase_index}) at epoch {epoch}: loss={total}")
        student.backward(out, distill.eta1, d_raw, d_emb)
        opt.step()
        history.append({"epoch": epoch, "reconstruction": float(recon),
                        "distillation": float(distill_loss),
                        "total": float(total)})
    return history


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class TrainResult:
    attr_model: AttrModel
    struct_model: StructModel
    mix_model: MixModel
    table: CurvatureTable
    adj: NormalizedAdj
    manifest: dict


def _init_models(cfg: RunConfig, d: int):
    seed = cfg.train.seed
    attr_model = init_attr_model(d, cfg.model.hidden, cfg.model.attn_dim,
                                 cfg.attr.scales, cfg.attr.restart, seed)
    struct_model = init_struct_model(d, cfg.model.hidden, cfg.struct.restart,
                                     cfg.struct.steps, cfg.struct.knn_k,
                                     cfg.struct.consistency_weight, seed + 1,
                                     cfg.struct.pos_weight)
    mix_model = init_mix_model(d, cfg.model.hidden, cfg.mix.layers,
                               cfg.mix.delta, seed + 2)
    return attr_model, struct_model, mix_model


def _write_manifest(out_dir, manifest: dict) -> None:
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def orchestrate(g: Graph, cfg: RunConfig, out_dir=None) -> TrainResult:
    """Run the four-phase sequential workflow on an unlabeled-for-training
    graph; optionally write per-phase checkpoints plus a manifest."""
    cfg.validate()
    table = mixed_curvature_table(g, cfg.mix.delta)
    adj = normalize_adjacency(g)
    lap = curvature_propagation(table)
    attr_model, struct_model, mix_model = _init_models(cfg, g.d)

    attr_student = AttrStudent(attr_model, g, adj)
    struct_student = StructStudent(struct_model, g,
                                   cfg.struct.enhanced_own_iterates)
    mix_student = MixStudent(mix_model, g, table, lap)

    own = cfg.struct.enhanced_own_iterates
    phases = []  # (student, teacher thunks, epochs)
    phases.append((struct_student, [], cfg.train.epochs_pretrain))
    phases.append((attr_student,
                   [lambda: struct_embed(struct_model, g, own)],
                   cfg.train.epochs_attr))
    phases.append((struct_student,
                   [lambda: attr_embed(attr_model, g, adj)],
                   cfg.train.epochs_struct))
    phases.append((mix_student,
                   [lambda: attr_embed(attr_model, g, adj),
                    lambda: struct_embed(struct_model, g, own)],
                   cfg.train.epochs_mix))

    manifest = {
        "mode": "sequential",
        "backend": ot_backend_name(),
        "config": config_to_dict(cfg),
        "config_hash": config_hash(cfg),
        "seed": cfg.train.seed,
        "phases": [],
    }
    for index, ((student, teacher_fns, epochs), name) in enumerate(
            zip(phases, PHASE_ORDER), start=1):
        teachers = [fn() for fn in teacher_fns]
        history = train_phase(student, teachers, cfg.distill, cfg.train,
                              epochs, index, name)
        ckpt_name = f"phase{index}-{student.channel}.ckpt"
        if out_dir is not None:
            save_checkpoint(os.path.join(out_dir, ckpt_name),
                            student.params(), cfg.train.seed)
        manifest["phases"].append({
            "index": index, "name": name, "channel": student.channel,
            "teachers": len(teachers), "checkpoint": ckpt_name,
            "history": history,
        })
    if out_dir is not None:
        _write_manifest(out_dir, manifest)
    return TrainResult(attr_model, struct_model, mix_model, table, adj,
                       manifest)


def train_unified(g: Graph, cfg: RunConfig, out_dir=None) -> TrainResult:
    """Ablation baseline: one optimizer, summed reconstruction losses, no
    distillation. Mask streams match the corresponding sequential phases."""
    cfg.validate()
    table = mixed_curvature_table(g, cfg.mix.delta)
    adj = normalize_adjacency(g)
    lap = curvature_propagation(table)
    attr_model, struct_model, mix_model = _init_models(cfg, g.d)

    attr_student = AttrStudent(attr_model, g, adj)
    struct_student = StructStudent(struct_model, g,
                                   cfg.struct.enhanced_own_iterates)
    mix_student = MixStudent(mix_model, g, table, lap)
    students = (attr_student, struct_student, mix_student)

    all_params = [p for s in students for p in s.params()]
    opt = Adam(all_params, lr=cfg.train.lr)
    attr_masks = np.random.default_rng([cfg.train.seed, 2, 0])
    struct_masks = np.random.default_rng([cfg.train.seed, 3, 0])
    mask_rngs = {attr_student: attr_masks, struct_student: struct_masks}

    epochs = cfg.train.epochs_attr
    history = []
    for epoch in range(epochs):
        entry = {"epoch": epoch}
        total = 0.0
        for student in students:
            mask_nodes = _draw_mask(mask_rngs[student], g.n, cfg.train.rho) \
                if student.uses_masks else None
            loss, out, d_raw = student.epoch_forward(mask_nodes)
            student.backward(out, 1.0, d_raw, None)
            entry[student.channel] = float(loss)
            total += loss
        if not np.isfinite(total):
            raise RuntimeError(
                f"training diverged in phase 'unified' at epoch {epoch}: "
                f"loss={total}")
        entry["total"] = float(total)
        opt.step()
        history.append(entry)

    checkpoints = {}
    for student in students:
        ckpt_name = f"unified-{student.channel}.ckpt"
        checkpoints[student.channel] = ckpt_name
        if out_dir is not None:
            save_checkpoint(os.path.join(out_dir, ckpt_name),
                            student.params(), cfg.train.seed)
    manifest = {
        "mode": "unified",
        "backend": ot_backend_name(),
        "config": config_to_dict(cfg),
        "config_hash": config_hash(cfg),
        "seed": cfg.train.seed,
        "epochs": history,
        "checkpoints": checkpoints,
    }
    if out_dir is not None:
        _write_manifest(out_dir, manifest)
    return TrainResult(attr_model, struct_model, mix_model, table, adj,
                       manifest)


def _assign_params(params: list[Param], loaded: dict[str, np.ndarray],
                   where: str) -> None:
    for p in params:
        if p.name not in loaded:
            raise ValueError(f"{where}: missing parameter {p.name!r}")
        if loaded[p.name].shape != p.value.shape:
            raise ValueError(
                f"{where}: shape mismatch for {p.name!r}: "
                f"{loaded[p.name].shape} vs {p.value.shape}")
        p.value[:] = loaded[p.name]


def load_trained(cfg: RunConfig, d: int, ckpt_dir, unified: bool = False):
    """Rebuild the three models from a checkpoint directory written by
    orchestrate (final per-channel phases) or train_unified."""
    attr_model, struct_model, mix_model = _init_models(cfg, d)
    if unified:
        names = {"attribute": "unified-attribute.ckpt",
                 "structure": "unified-structure.ckpt",
                 "mixture": "unified-mixture.ckpt"}
    else:
        names = {"attribute": "phase2-attribute.ckpt",
                 "structure": "phase3-structure.ckpt",
                 "mixture": "phase4-mixture.ckpt"}
    for model, channel in ((attr_model, "attribute"),
                           (struct_model, "structure"),
                           (mix_model, "mixture")):
        path = os.path.join(ckpt_dir, names[channel])
        loaded, _ = load_checkpoint(path)
        _assign_params(model.params(), loaded, path)
    return attr_model, struct_model, mix_model


def score_channels(attr_model: AttrModel, struct_model: StructModel,
                   mix_model: MixModel, g: Graph, table: CurvatureTable,
                   batch_size: int = 64, adj: NormalizedAdj | None = None,
                   enhanced_own_iterates: bool = True) -> np.ndarray:
    """(n, 3) matrix of per-node scores: attribute, structure, mixture."""
    cols = [attr_score(attr_model, g, batch_size, adj),
            struct_score(struct_model, g, batch_size, enhanced_own_iterates),
            mix_score(mix_model, g, table)]
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# gradient-check suite
# ---------------------------------------------------------------------------

def _suite_graph(rng: np.random.Generator) -> Graph:
    from trigad.graph import make_graph
    edges = [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (3, 5), (4, 5),
             (5, 6), (6, 7), (4, 7)]
    x = rng.normal(size=(8, 5))
    return make_graph(8, edges, x)


def run_gradcheck_suite(seed: int = 0) -> list[tuple[str, float]]:
    """Central-difference verification of every backward pass: the shared
    operations, each full channel (reconstruction + distillation path), and
    the triplet loss. Returns [(name, max relative error), ...]."""
    rng = np.random.default_rng(seed)
    out: list[tuple[str, float]] = []
    g = _suite_graph(rng)
    adj = normalize_adjacency(g)

    # linear layer
    x = rng.normal(size=(6, 4))
    target = rng.normal(size=(6, 3))
    w = init_params((4, 3), seed + 1, name="w")
    b = init_params((1, 3), seed + 2, scheme="zeros", name="b")

    def linear_fn() -> float:
        for p in (w, b):
            p.zero_grad()
        y = linear_forward(x, w, b)
        loss, dy = frobenius_loss(y, target)
        linear_backward(x, w, b, dy)
        return loss

    out.append(("linear", grad_check(linear_fn, [w, b])))

    # graph convolution (relu)
    h0 = rng.normal(size=(8, 5))
    gcn_target = rng.normal(size=(8, 4))
    wg = init_params((5, 4), seed + 3, name="wg")

    def gcn_fn() -> float:
        wg.zero_grad()
        y = gcn_forward(adj.matrix, h0, wg, act="relu")
        loss, dy = frobenius_loss(y, gcn_target)
        gcn_backward(adj.matrix, h0, wg, dy, act="relu")
        return loss

    out.append(("gcn", grad_check(gcn_fn, [wg])))

    # frobenius loss with respect to the prediction itself
    pred = init_params((5, 4), seed + 4, name="pred")
    frob_target = rng.normal(size=(5, 4))

    def frob_fn() -> float:
        pred.zero_grad()
        loss, d = frobenius_loss(pred.value, frob_target)
        pred.accumulate(d)
        return loss

    out.append(("frobenius", grad_check(frob_fn, [pred])))

    # triplet loss with respect to the anchor rows
    anchor = init_params((6, 5), seed + 5, name="anchor")
    pos = rng.normal(size=(6, 5))
    neg = rng.normal(size=(6, 5))

    def triplet_fn() -> float:
        anchor.zero_grad()
        loss, d = triplet_loss(anchor.value, pos, neg, 0.35)
        anchor.accumulate(d)
        return loss

    out.append(("triplet", grad_check(triplet_fn, [anchor])))

    # full channels, each with the distillation gradient folded in
    eta1, eta2, margin = 1.0, 0.5, 0.4
    teacher = rng.normal(size=(g.n, 6))
    trips = sample_triplets(g.n, g.n, rng)
    anchors = trips[:, 0]
    t_pos, t_neg = teacher[trips[:, 1]], teacher[trips[:, 2]]

    def distill_pull(emb: np.ndarray) -> tuple[float, np.ndarray]:
        t_loss, d_anchor = triplet_loss(emb[anchors], t_pos, t_neg, margin)
        d_emb = np.zeros_like(emb)
        np.add.at(d_emb, anchors, eta2 * d_anchor)
        return t_loss, d_emb

    attr_model = init_attr_model(g.d, 6, 4, 2, 0.2, seed + 6)
    mask_nodes = np.array([1, 3, 6])
    x_masked = mask_attributes(g, mask_nodes)
    stack = propagate_multiscale(adj, x_masked, attr_model.restart,
                                 attr_model.scales)

    def attr_fn() -> float:
        for p in attr_model.params():
            p.zero_grad()
        fwd = attr_forward(attr_model, stack, x_masked)
        recon, d_raw = attr_loss(fwd, g.attributes, mask_nodes)
        t_loss, d_emb = distill_pull(fwd.z)
        attr_backward(attr_model, fwd, eta1 * d_raw, d_emb)
        return eta1 * recon + eta2 * t_loss

    out.append(("attribute-channel", grad_check(attr_fn, attr_model.params())))

    struct_model = init_struct_model(g.d, 6, 0.2, 2, 2, 0.7, seed + 7)
    masked_g = mask_edges(g, np.array([2, 5]))
    a_real = np.asarray(g.adjacency.todense())

    def struct_fn() -> float:
        for p in struct_model.params():
            p.zero_grad()
        fwd = struct_forward(struct_model, masked_g)
        _, _, l_str = struct_losses(fwd, a_real,
                                    struct_model.consistency_weight)
        t_loss, d_emb = distill_pull(fwd.h2)
        struct_backward(struct_model, fwd, eta1 * 2.0 * (fwd.a_hat - a_real),
                        eta1 * struct_model.consistency_weight, d_emb)
        return eta1 * l_str + eta2 * t_loss

    out.append(("structure-channel",
                grad_check(struct_fn, struct_model.params())))

    mix_model = init_mix_model(g.d, 6, 2, 0.5, seed + 8)
    table = mixed_curvature_table(g, mix_model.delta)
    lap = curvature_propagation(table)

    def mix_fn() -> float:
        for p in mix_model.params():
            p.zero_grad()
        fwd = mix_forward(mix_model, g, table, lap)
        recon, d_raw = mix_loss(fwd, table)
        t_loss, d_emb = distill_pull(fwd.hc)
        mix_backward(mix_model, fwd, eta1 * d_raw, d_emb)
        return eta1 * recon + eta2 * t_loss

    out.append(("mixture-channel", grad_check(mix_fn, mix_model.params())))
    return out

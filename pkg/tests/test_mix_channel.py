"""Mixture channel: curvature-matrix reconstruction and its scores."""

import numpy as np
import pytest
import scipy.sparse as sp

from trigad.curvature import CurvatureTable, mixed_curvature_table
from trigad.graph import make_graph
from trigad.mix_channel import (MixForwardOut, curvature_propagation,
                                init_mix_model, mix_backward, mix_embed,
                                mix_forward, mix_loss, mix_score,
                                mix_scores_from)
from trigad.nn import Param, grad_check

from conftest import random_graph

SIG1 = 1.0 / (1.0 + np.exp(-1.0))


def _edge_table(kappa_norm):
    """Two-node table with one edge carrying the given normalized value."""
    c = sp.csr_matrix(np.array([[1.0, kappa_norm], [kappa_norm, 1.0]]))
    return CurvatureTable(np.array([[0, 1]]), np.array([1.0]),
                          np.array([kappa_norm]), c)


def _identity_table(n):
    return CurvatureTable(np.empty((0, 2), dtype=np.int64), np.empty(0),
                          np.empty(0), sp.identity(n, format="csr"))


# ---------------------------------------------------------------------------
# propagation matrix
# ---------------------------------------------------------------------------

def test_propagation_of_identity_is_identity():
    lap = curvature_propagation(_identity_table(3))
    np.testing.assert_allclose(lap.toarray(), np.eye(3), atol=1e-15)


def test_propagation_matches_symmetric_normalization(fixture8):
    table = mixed_curvature_table(fixture8, 0.5)
    dense = table.c.toarray()
    d = dense.sum(axis=1)
    expected = dense / np.sqrt(np.outer(d, d))
    np.testing.assert_allclose(curvature_propagation(table).toarray(),
                               expected, atol=1e-12)


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def _unit_mix_model(layers=1):
    return init_mix_model(1, 1, layers, 0.5, seed=0)


def test_forward_hand_trace_two_nodes():
    # C carries sigmoid(1) on the single edge; one linear layer with unit
    # weight reduces the representation to the normalized propagation of x
    g = make_graph(2, [(0, 1)], np.array([[1.0], [2.0]]))
    table = _edge_table(SIG1)
    model = _unit_mix_model()
    model.gcn_weights[0].value[:] = 1.0
    out = mix_forward(model, g, table)
    s = SIG1
    expected_hc = np.array([[1.0 + 2.0 * s], [s + 2.0]]) / (1.0 + s)
    np.testing.assert_allclose(out.hc, expected_hc, atol=1e-12)
    inner = expected_hc @ expected_hc.T
    np.testing.assert_allclose(out.c_hat, 1.0 / (1.0 + np.exp(-inner)),
                               atol=1e-12)


def test_forward_identity_curvature_skips_mixing():
    g = make_graph(2, [(0, 1)], np.array([[1.0], [2.0]]))
    model = _unit_mix_model()
    model.gcn_weights[0].value[:] = 1.0
    out = mix_forward(model, g, _identity_table(2))
    np.testing.assert_allclose(out.hc, g.attributes, atol=1e-15)


def test_forward_reconstruction_is_symmetric_unit_interval():
    g = random_graph(14, 0.25, 1, d=4)
    model = init_mix_model(4, 5, layers=2, delta=0.5, seed=3)
    table = mixed_curvature_table(g, 0.5)
    out = mix_forward(model, g, table)
    np.testing.assert_allclose(out.c_hat, out.c_hat.T, atol=1e-12)
    assert np.all(out.c_hat > 0.0)
    assert np.all(out.c_hat < 1.0)
    assert np.all(np.isfinite(out.hc))


def test_forward_accepts_a_precomputed_propagation(fixture8):
    table = mixed_curvature_table(fixture8, 0.5)
    model = init_mix_model(5, 4, layers=2, delta=0.5, seed=1)
    lazy = mix_forward(model, fixture8, table)
    eager = mix_forward(model, fixture8, table, curvature_propagation(table))
    np.testing.assert_array_equal(lazy.c_hat, eager.c_hat)


def test_init_shapes_chain_and_validation():
    model = init_mix_model(6, 3, layers=3, delta=0.5, seed=0)
    shapes = [tuple(w.value.shape) for w in model.gcn_weights]
    assert shapes == [(6, 3), (3, 3), (3, 3)]
    assert model.layers == 3
    assert model.hidden_dim == 3
    assert model.dec_scale.value.tolist() == [[1.0]]
    assert model.dec_shift.value.tolist() == [[0.0]]
    with pytest.raises(ValueError, match="layers"):
        init_mix_model(6, 3, layers=0, delta=0.5, seed=0)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def test_loss_zero_on_perfect_reconstruction():
    table = _edge_table(SIG1)
    c_dense = table.c.toarray()
    out = MixForwardOut(np.zeros((2, 1)), c_dense.copy())
    loss, grad = mix_loss(out, table)
    assert loss == 0.0
    np.testing.assert_array_equal(grad, np.zeros((2, 2)))


def test_loss_counts_every_offset_entry():
    table = _edge_table(SIG1)
    out = MixForwardOut(np.zeros((2, 1)), table.c.toarray() + 1.0)
    loss, grad = mix_loss(out, table)
    assert loss == pytest.approx(4.0)
    np.testing.assert_allclose(grad, np.full((2, 2), 2.0))


def test_loss_rejects_shape_mismatch():
    out = MixForwardOut(np.zeros((3, 1)), np.zeros((3, 3)))
    with pytest.raises(ValueError, match="shape mismatch"):
        mix_loss(out, _edge_table(SIG1))


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def test_gradients_match_finite_differences():
    g = random_graph(7, 0.4, 5, d=3)
    model = init_mix_model(3, 4, layers=2, delta=0.5, seed=2)
    table = mixed_curvature_table(g, 0.5)
    lap = curvature_propagation(table)
    m = np.random.default_rng(4).normal(size=(7, 4))

    def loss_fn():
        for p in model.params():
            p.zero_grad()
        out = mix_forward(model, g, table, lap)
        loss, d_chat = mix_loss(out, table)
        extra = float((out.hc * m).sum())
        mix_backward(model, out, d_chat, d_hc_extra=m)
        return loss + extra

    assert grad_check(loss_fn, model.params(), eps=1e-5) < 1e-4


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------

def test_scores_zero_when_reconstruction_is_exact(fixture8):
    table = mixed_curvature_table(fixture8, 0.5)
    scores = mix_scores_from(table.c, table.c.toarray(), fixture8.adjacency)
    np.testing.assert_allclose(scores, np.zeros(8), atol=1e-15)


def test_scores_zero_for_isolated_nodes():
    g = make_graph(3, [(0, 1)], np.ones((3, 2)))
    c = sp.csr_matrix(np.eye(3))
    c_hat = np.full((3, 3), 0.9)
    scores = mix_scores_from(c, c_hat, g.adjacency)
    assert scores[2] == 0.0


def test_scores_single_edge_hand_value():
    g = make_graph(2, [(0, 1)], np.ones((2, 1)))
    table = _edge_table(SIG1)
    c_hat = np.full((2, 2), 0.25)
    scores = mix_scores_from(table.c, c_hat, g.adjacency)
    np.testing.assert_allclose(scores, (SIG1 - 0.25) ** 2, atol=1e-12)


def test_corrupting_one_edge_only_moves_its_endpoints(fixture8):
    table = mixed_curvature_table(fixture8, 0.5)
    rng = np.random.default_rng(6)
    sym = rng.random((8, 8))
    c_hat = (sym + sym.T) / 2.0
    before = mix_scores_from(table.c, c_hat, fixture8.adjacency)
    bumped = table.c.tolil()
    bumped[0, 1] += 0.5
    bumped[1, 0] += 0.5
    after = mix_scores_from(bumped.tocsr(), c_hat, fixture8.adjacency)
    assert after[0] != before[0]
    assert after[1] != before[1]
    np.testing.assert_array_equal(after[2:], before[2:])


def test_score_wraps_forward_and_fixed_matrices(fixture8):
    table = mixed_curvature_table(fixture8, 0.5)
    model = init_mix_model(5, 4, layers=2, delta=0.5, seed=7)
    expected = mix_scores_from(table.c, mix_forward(model, fixture8, table).c_hat,
                               fixture8.adjacency)
    np.testing.assert_array_equal(mix_score(model, fixture8, table), expected)
    assert mix_score(model, fixture8, table).min() >= 0.0


def test_scores_follow_a_node_relabeling():
    g = random_graph(12, 0.3, 8, d=4)
    rng = np.random.default_rng(2)
    p = rng.permutation(g.n)
    attrs = np.empty_like(g.attributes)
    attrs[p] = g.attributes
    edges = [(min(int(p[u]), int(p[v])), max(int(p[u]), int(p[v])))
             for u, v in zip(*np.asarray(g.adjacency.nonzero())) if u < v]
    relabeled = make_graph(g.n, edges, attrs)
    model = init_mix_model(4, 4, layers=2, delta=0.5, seed=9)
    s = mix_score(model, g, mixed_curvature_table(g, 0.5))
    s_rel = mix_score(model, relabeled, mixed_curvature_table(relabeled, 0.5))
    np.testing.assert_allclose(s_rel[p], s, atol=1e-9)


def test_embed_is_the_final_representation(fixture8):
    table = mixed_curvature_table(fixture8, 0.5)
    model = init_mix_model(5, 4, layers=2, delta=0.5, seed=7)
    np.testing.assert_array_equal(mix_embed(model, fixture8, table),
                                  mix_forward(model, fixture8, table).hc)

import numpy as np
import pytest

from milpgnn import (
    ConstraintFeature,
    FoldableInput,
    GenConfig,
    MilpInstance,
    Permutation,
    Sense,
    VariableFeature,
    apply_permutation,
    attach_random_features,
    encode_graph,
    gen_d1,
    gen_d2,
    sample_random_features,
    sort_graph,
)
from milpgnn.canon import initial_order_key_v, initial_order_key_w


def test_sense_order_keys():
    ge = initial_order_key_v(ConstraintFeature(1.0, Sense.GE))
    le = initial_order_key_v(ConstraintFeature(1.0, Sense.LE))
    assert ge == (1.0, 1) and le == (1.0, -1) and ge > le
    eq = ConstraintFeature(0.0, Sense.EQ)
    assert initial_order_key_v(eq) == initial_order_key_v(eq)
    assert initial_order_key_v(ConstraintFeature(-2.0, Sense.GE)) < initial_order_key_v(ConstraintFeature(1.0, Sense.LE))


def test_variable_keys():
    w1 = initial_order_key_w(VariableFeature(1.0, None, 3.0, 0))
    w2 = initial_order_key_w(VariableFeature(1.0, None, 5.0, 1))
    assert w1 < w2
    assert initial_order_key_w(VariableFeature(0.0, 0.0, 1.0, 0)) < initial_order_key_w(VariableFeature(0.0, 0.0, 1.0, 1))
    same = VariableFeature(2.0, -1.0, None, 1)
    assert initial_order_key_w(same) == initial_order_key_w(same)


def test_infinite_bounds_order():
    neg = initial_order_key_w(VariableFeature(0.0, None, 0.0, 0))
    real = initial_order_key_w(VariableFeature(0.0, -1e300, 0.0, 0))
    assert neg < real
    finite_up = initial_order_key_w(VariableFeature(0.0, 0.0, 1e300, 0))
    inf_up = initial_order_key_w(VariableFeature(0.0, 0.0, None, 0))
    assert finite_up < inf_up


def test_figure2_order(fig2_graph):
    order = sort_graph(fig2_graph)
    assert order.sigma_w == (0, 1)
    assert order.w_rank == (0, 1)
    assert len(set(order.v_rank)) == 2


def test_foldable_rejected(pair):
    with pytest.raises(FoldableInput):
        sort_graph(encode_graph(pair[0]))


def _unfoldable_graphs(rng):
    out = [encode_graph(i) for i in gen_d1(GenConfig(seed=21, count=80))]
    for inst in gen_d2(GenConfig(seed=3, count=20, variant="d2")):
        out.append(attach_random_features(encode_graph(inst), sample_random_features(6, 20, rng)))
    return out


def test_equivariance(rng):
    for g in _unfoldable_graphs(rng):
        base = sort_graph(g)
        p = Permutation.random(g.m, g.n, rng)
        h = apply_permutation(g, p)
        moved = sort_graph(h)
        assert moved.sigma_w == tuple(p.sigma_w[j] for j in base.sigma_w)
        # the canonical sequence of variable features is unchanged
        assert [g.w_features[j] for j in base.sigma_w] == [h.w_features[j] for j in moved.sigma_w]
        col_g = g.dense()[:, list(base.sigma_w)]
        col_h = h.dense()[:, list(moved.sigma_w)]
        assert sorted(map(tuple, col_g)) == sorted(map(tuple, col_h))


def test_strict_and_sorted(rng):
    for g in _unfoldable_graphs(rng)[:30]:
        order = sort_graph(g)
        assert sorted(order.w_rank) == list(range(g.n))
        assert sorted(order.v_rank) == list(range(g.m))
        ranks = [order.w_rank[j] for j in order.sigma_w]
        assert ranks == sorted(ranks)
        assert order.rounds <= g.m + g.n


def test_extra_round_is_idempotent(rng):
    for g in _unfoldable_graphs(rng)[:30]:
        order = sort_graph(g)
        a = g.dense()
        # one more refinement by hand: ranks are already distinct, so order cannot change
        keys = [(order.w_rank[j], tuple(sorted((a[i, j], order.v_rank[i]) for i in range(g.m) if a[i, j])))
                for j in range(g.n)]
        again = tuple(sorted(range(g.n), key=lambda j: keys[j]))
        assert again == order.sigma_w


def test_multiset_refinement_breaks_feature_ties():
    # identical features; only the edge weights tell the variables apart
    inst = MilpInstance(1, 2, [(0, 0, 2.0), (0, 1, 1.0)], [0.0], [Sense.LE], [0.0, 0.0],
                        [0.0, 0.0], [1.0, 1.0], [False, False])
    order = sort_graph(encode_graph(inst))
    assert order.sigma_w == (1, 0)
    assert order.rounds >= 1

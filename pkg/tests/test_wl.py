import dataclasses
import math
import time

import numpy as np
import pytest

from milpgnn import (
    GenConfig,
    MilpInstance,
    Permutation,
    Sense,
    apply_permutation,
    attach_random_features,
    check_fold_partition,
    encode_graph,
    gen_d1,
    gen_d2,
    graphs_equivalent,
    graphs_w_equivalent,
    is_foldable,
    refine_colors,
    sample_random_features,
)


def naive_partition(g):
    """Textbook refinement on frozensets of vertices; returns the final (V, W) partitions."""
    def initial(items):
        return {k: repr(v) for k, v in items}

    def feat(f, k, side):
        key = (f,)
        if g.random_features is not None:
            key += (float(g.random_features[0 if side == "v" else 1][k]),)
        return key

    cv = initial((i, feat(f, i, "v")) for i, f in enumerate(g.v_features))
    cw = initial((j, feat(f, j, "w")) for j, f in enumerate(g.w_features))
    a = g.dense()
    while True:
        nv = {}
        for i in range(g.m):
            agg = {}
            for j in range(g.n):
                if a[i, j] != 0:
                    agg.setdefault(cw[j], []).append(a[i, j])
            nv[i] = repr((cv[i], sorted((k, math.fsum(v)) for k, v in agg.items() if math.fsum(v) != 0)))
        nw = {}
        for j in range(g.n):
            agg = {}
            for i in range(g.m):
                if a[i, j] != 0:
                    agg.setdefault(cv[i], []).append(a[i, j])
            nw[j] = repr((cw[j], sorted((k, math.fsum(v)) for k, v in agg.items() if math.fsum(v) != 0)))
        if len(set(nv.values())) == len(set(cv.values())) and len(set(nw.values())) == len(set(cw.values())):
            return blocks(cv), blocks(cw)
        cv, cw = nv, nw


def blocks(colors):
    out = {}
    for k in sorted(colors):
        out.setdefault(colors[k], []).append(k)
    return sorted(tuple(b) for b in out.values())


def d1_sample(count=20, seed=0):
    return gen_d1(GenConfig(seed=seed, count=count))


def test_figure2_discrete(fig2, fig2_graph):
    col = refine_colors(fig2_graph)
    assert col.is_discrete
    assert not is_foldable(fig2_graph)
    # round 0: the two v's share a feature, the w's differ; round 1 separates v's
    assert col.history[0][0][0] == col.history[0][0][1]
    assert col.v_colors[0] != col.v_colors[1]
    assert check_fold_partition(fig2, col)


def test_counterexample_single_colors(pair):
    for inst in pair:
        col = refine_colors(encode_graph(inst))
        assert not col.is_discrete
        for vc, wc in col.history:
            assert len(set(vc)) == 1 and len(set(wc)) == 1
        assert (col.s, col.t) == (1, 1)
        assert is_foldable(encode_graph(inst))
        assert check_fold_partition(inst, col)


def test_counterexample_equivalent(pair):
    g1, g2 = (encode_graph(i) for i in pair)
    assert graphs_equivalent(g1, g2)
    assert graphs_w_equivalent(g1, g2)
    assert graphs_equivalent(g1, g1) and graphs_w_equivalent(g2, g2)


def test_random_features_make_discrete(pair, rng):
    g = attach_random_features(encode_graph(pair[0]), sample_random_features(6, 6, rng))
    col = refine_colors(g)
    assert col.is_discrete
    assert len(set(col.history[0][0])) == 6 and len(set(col.history[0][1])) == 6


def test_d1_different_b_not_equivalent():
    a, b = d1_sample(2, seed=7)
    assert graphs_equivalent(encode_graph(a), encode_graph(a))
    assert not graphs_equivalent(encode_graph(a), encode_graph(b))
    assert not graphs_equivalent(encode_graph(a), encode_graph(a.replace(b=a.b + 1.0)))


def test_w_equivalence_sees_positions(fig2_graph):
    swapped = apply_permutation(fig2_graph, Permutation((0, 1), (1, 0)))
    assert graphs_equivalent(fig2_graph, swapped)
    assert not graphs_w_equivalent(fig2_graph, swapped)


def test_size_mismatch(fig2_graph, pair):
    with pytest.raises(ValueError):
        graphs_equivalent(fig2_graph, encode_graph(pair[0]))


def test_one_by_one_not_foldable():
    inst = MilpInstance(1, 1, [(0, 0, 2.0)], [1.0], [Sense.LE], [0.5], [0.0], [1.0], [True])
    assert not is_foldable(encode_graph(inst))


def test_split_partition_fails_block_sums(pair):
    for k, inst in enumerate(pair):
        col = refine_colors(encode_graph(inst))
        assert check_fold_partition(inst, col)
        split = dataclasses.replace(col, w_partition=((0, 1, 2), (3, 4, 5)))
        assert not check_fold_partition(inst, split)
    # each cycle row touches two columns, so every row/column sum of A is 2
    a = pair[0].a
    assert set(a.sum(0)) == {2.0} and set(a.sum(1)) == {2.0}


def test_check_fold_partition_dimension_error(fig2, pair):
    col = refine_colors(encode_graph(pair[0]))
    with pytest.raises(ValueError):
        check_fold_partition(fig2, col)


def test_matches_naive_refinement():
    insts = d1_sample(10) + gen_d2(GenConfig(seed=1, count=6, variant="d2"))
    rng = np.random.default_rng(2)
    graphs = [encode_graph(i) for i in insts]
    graphs.append(attach_random_features(graphs[-1], sample_random_features(6, 20, rng)))
    for g in graphs:
        col = refine_colors(g)
        v, w = naive_partition(g)
        assert sorted(col.v_partition) == v
        assert sorted(col.w_partition) == w


def _sparse_instance(rng, m, n):
    # integer weights and repeated features so refinement takes several rounds
    a = rng.integers(-1, 2, (m, n)).astype(float)
    return MilpInstance.from_dense(a, np.zeros(m), [Sense.EQ] * m, np.zeros(n), np.zeros(n),
                                   np.ones(n), np.zeros(n, dtype=bool))


def _refines(fine, coarse):
    owner = {}
    for k, blk in enumerate(coarse):
        for x in blk:
            owner[x] = k
    return all(len({owner[x] for x in blk}) == 1 for blk in fine)


def test_fixed_point_and_monotone(rng):
    for _ in range(60):
        m, n = int(rng.integers(1, 7)), int(rng.integers(1, 9))
        g = encode_graph(_sparse_instance(rng, m, n))
        col = refine_colors(g)
        assert col.rounds <= m + n
        again = refine_colors(g, max_rounds=m + n + 1)
        assert again.v_partition == col.v_partition and again.w_partition == col.w_partition
        for (v0, w0), (v1, w1) in zip(col.history, col.history[1:]):
            assert _refines(blocks(dict(enumerate(v1))), blocks(dict(enumerate(v0))))
            assert _refines(blocks(dict(enumerate(w1))), blocks(dict(enumerate(w0))))
        assert col.is_discrete == (col.s == m and col.t == n)
        assert sorted(x for b in col.v_partition for x in b) == list(range(m))
        assert sorted(x for b in col.w_partition for x in b) == list(range(n))
        assert refine_colors(g) == col


def test_permutation_invariance(rng):
    insts = d1_sample(5) + gen_d2(GenConfig(seed=2, count=4, variant="d2"))
    insts += [_sparse_instance(rng, 5, 7) for _ in range(10)]
    for inst in insts:
        g = encode_graph(inst)
        for _ in range(3):
            h = apply_permutation(g, Permutation.random(g.m, g.n, rng))
            assert is_foldable(h) == is_foldable(g)
            assert graphs_equivalent(g, h)
            assert refine_colors(h).s == refine_colors(g).s


def test_d1_d2_definitions_agree():
    insts = d1_sample(50) + gen_d2(GenConfig(seed=0, count=50, variant="d2"))
    for inst in insts:
        col = refine_colors(encode_graph(inst))
        assert check_fold_partition(inst, col)
        assert (not col.is_discrete) == (col.s < inst.m or col.t < inst.n)


def test_tolerance_bucketing_merges_near_values():
    inst = MilpInstance(1, 2, [(0, 0, 1.0), (0, 1, 1.0)], [0.0], [Sense.LE], [1.0, 1.0 + 1e-12],
                        [0.0, 0.0], [1.0, 1.0], [False, False])
    g = encode_graph(inst)
    assert not is_foldable(g)
    assert is_foldable(g, tol=1e-9)


def test_speed_2000_instances():
    insts = gen_d1(GenConfig(seed=11, count=1000)) + gen_d2(GenConfig(seed=11, count=1000, variant="d2"))
    graphs = [encode_graph(i) for i in insts]
    t = time.perf_counter()
    for inst, g in zip(insts, graphs):
        assert check_fold_partition(inst, refine_colors(g))
    assert time.perf_counter() - t < 5.0

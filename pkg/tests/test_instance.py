import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from milpgnn import (
    ConstraintFeature,
    InvalidInstance,
    MilpGraph,
    MilpInstance,
    Permutation,
    Sense,
    VariableFeature,
    apply_permutation,
    attach_random_features,
    decode_graph,
    encode_graph,
    gen_d1,
    GenConfig,
    has_repeated_random_feature,
    permute_instance,
    sample_random_features,
    solve_milp,
)

finite = st.floats(-50, 50, allow_nan=False)


@st.composite
def instances(draw, max_m=5, max_n=6):
    m = draw(st.integers(1, max_m))
    n = draw(st.integers(1, max_n))
    cells = draw(st.lists(st.tuples(st.integers(0, m - 1), st.integers(0, n - 1), finite),
                          max_size=m * n))
    b = draw(st.lists(finite, min_size=m, max_size=m))
    senses = draw(st.lists(st.sampled_from(list(Sense)), min_size=m, max_size=m))
    c = draw(st.lists(finite, min_size=n, max_size=n))
    lower, upper = [], []
    for _ in range(n):
        lo = draw(st.one_of(st.none(), finite))
        up = draw(st.one_of(st.none(), finite))
        if lo is not None and up is not None and lo > up:
            lo, up = up, lo
        lower.append(lo)
        upper.append(up)
    mask = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    entries = {(i, j): v for i, j, v in cells}
    return MilpInstance(m, n, entries, b, senses, c, lower, upper, mask)


def test_figure2_encoding(fig2_graph):
    g = fig2_graph
    assert g.v_features == (ConstraintFeature(1.0, Sense.GE),) * 2
    assert g.w_features == (VariableFeature(1.0, None, 3.0, 0), VariableFeature(1.0, None, 5.0, 1))
    assert dict(g.edges) == {(0, 0): 1.0, (0, 1): 3.0, (1, 0): 1.0, (1, 1): 1.0}


def test_figure2_swap(fig2_graph):
    h = apply_permutation(fig2_graph, Permutation((0, 1), (1, 0)))
    assert dict(h.edges) == {(0, 0): 3.0, (0, 1): 1.0, (1, 0): 1.0, (1, 1): 1.0}
    assert h.w_features == fig2_graph.w_features[::-1]
    assert h.v_features == fig2_graph.v_features


def test_zero_entries_dropped():
    inst = MilpInstance(1, 2, [(0, 0, 0.0), (0, 1, 2.0)], [1], [Sense.LE], [0, 0], [0, 0], [1, 1],
                        [False, False])
    assert inst.entries == ((0, 1, 2.0),)
    assert dict(encode_graph(inst).edges) == {(0, 1): 2.0}


def test_edges_row_major_regardless_of_insertion():
    ref = {(0, 1): 1.0, (1, 0): 2.0, (1, 2): 3.0}
    feats_v = (ConstraintFeature(0.0, Sense.EQ),) * 2
    feats_w = (VariableFeature(0.0, 0.0, 1.0, 0),) * 3
    g1 = MilpGraph(2, 3, ref, feats_v, feats_w)
    g2 = MilpGraph(2, 3, dict(reversed(list(ref.items()))), feats_v, feats_w)
    assert list(g1.edges) == list(g2.edges) == [(0, 1), (1, 0), (1, 2)]


@pytest.mark.parametrize("kwargs", [
    dict(b=[1.0, 2.0]),
    dict(lower=[2.0, None], upper=[1.0, None]),
    dict(entries=[(0, 5, 1.0)]),
    dict(c=[np.nan, 0.0]),
])
def test_invalid_instances(kwargs):
    base = dict(m=1, n=2, entries=[(0, 0, 1.0)], b=[1.0], senses=[Sense.LE], c=[0.0, 0.0],
                lower=[0.0, None], upper=[1.0, None], integer_mask=[False, True])
    base.update(kwargs)
    with pytest.raises(InvalidInstance):
        MilpInstance(**base)


def test_duplicate_entry_rejected():
    with pytest.raises(InvalidInstance):
        MilpInstance(1, 1, [(0, 0, 1.0), (0, 0, 2.0)], [0], [Sense.EQ], [0], [0], [1], [False])


@settings(max_examples=200, deadline=None)
@given(instances())
def test_decode_encode_round_trip(inst):
    assert decode_graph(encode_graph(inst)) == inst


@settings(max_examples=150, deadline=None)
@given(instances(), st.randoms(use_true_random=False))
def test_encode_commutes_with_permutation(inst, rnd):
    sv = list(range(inst.m))
    sw = list(range(inst.n))
    rnd.shuffle(sv)
    rnd.shuffle(sw)
    p = Permutation(sv, sw)
    assert encode_graph(permute_instance(inst, p)) == apply_permutation(encode_graph(inst), p)


def test_identity_and_inverse(fig2, rng):
    inst = gen_d1(GenConfig(seed=3, count=1))[0]
    g = attach_random_features(encode_graph(inst), sample_random_features(inst.m, inst.n, rng))
    ident = Permutation.identity(g.m, g.n)
    assert apply_permutation(g, ident) == g
    assert permute_instance(inst, ident) == inst
    p = Permutation.random(g.m, g.n, rng)
    assert apply_permutation(apply_permutation(g, p), p.inverse()) == g
    assert permute_instance(permute_instance(inst, p), p.inverse()) == inst


def test_permutation_moves_random_features(rng):
    inst = gen_d1(GenConfig(seed=4, count=1))[0]
    om = sample_random_features(inst.m, inst.n, rng)
    g = attach_random_features(encode_graph(inst), om)
    p = Permutation.random(inst.m, inst.n, rng)
    h = apply_permutation(g, p)
    for j in range(inst.n):
        assert h.random_features[1][p.sigma_w[j]] == om[1][j]
        assert h.w_features[p.sigma_w[j]] == g.w_features[j]


def test_dimension_mismatch(fig2, fig2_graph):
    p = Permutation((0, 1, 2), (0, 1))
    with pytest.raises(ValueError):
        apply_permutation(fig2_graph, p)
    with pytest.raises(ValueError):
        permute_instance(fig2, p)
    with pytest.raises(ValueError):
        Permutation((0, 0), (0, 1))


def test_oracle_label_invariant_under_permutation(rng):
    inst = gen_d1(GenConfig(seed=0, count=2))[1]
    p = Permutation.random(inst.m, inst.n, rng)
    assert solve_milp(inst).feasible == solve_milp(permute_instance(inst, p)).feasible


def test_random_features():
    inst = gen_d1(GenConfig(seed=5, count=1))[0]
    g = encode_graph(inst)
    a = sample_random_features(6, 20, np.random.default_rng(9))
    b = sample_random_features(6, 20, np.random.default_rng(9))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not has_repeated_random_feature(attach_random_features(g, a))
    rv = a[0].copy()
    rv[1] = rv[0]
    assert has_repeated_random_feature(attach_random_features(g, (rv, a[1])))
    with pytest.raises(InvalidInstance):
        attach_random_features(g, (a[0] + 1.0, a[1]))
    with pytest.raises(InvalidInstance):
        attach_random_features(g, (a[0][:3], a[1]))


def test_max_violation(fig2):
    assert fig2.max_violation([0.0, 1.0]) == 0.0
    assert fig2.max_violation([0.0, 0.0]) == 1.0
    assert fig2.max_violation([4.0, 1.0]) == 1.0

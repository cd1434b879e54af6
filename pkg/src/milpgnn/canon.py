"""Canonical variable order for unfoldable MILP graphs.

Vertices start ordered by their features (lexicographic; constraint senses
ordered ``<= < = < >=``; -inf below every real below +inf; an attached random
feature is the last key component). Each refinement round re-keys a vertex by
its current rank followed by the sorted sequence of ``(edge weight, neighbor
rank)`` over nonzero edges, and ranks are recompressed to dense integers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

from .instance import ConstraintFeature, MilpGraph, VariableFeature


class FoldableInput(ValueError):
    """Raised when the order refinement cannot separate every vertex."""


def initial_order_key_v(f: ConstraintFeature, omega=None) -> tuple:
    key = (f.b, int(f.sense))
    return key if omega is None else key + (float(omega),)


def initial_order_key_w(f: VariableFeature, omega=None) -> tuple:
    lo = (0, 0.0) if f.lower is None else (1, f.lower)
    up = (2, 0.0) if f.upper is None else (1, f.upper)
    key = (f.c, lo, up, f.tau)
    return key if omega is None else key + (float(omega),)


@dataclass(frozen=True)
class CanonicalOrder:
    sigma_w: Tuple[int, ...]
    v_rank: Tuple[int, ...]
    w_rank: Tuple[int, ...]
    rounds: int


def _dense_ranks(keys) -> list:
    ranks = {k: r for r, k in enumerate(sorted(set(keys)))}
    return [ranks[k] for k in keys]


def sort_graph(g: MilpGraph) -> CanonicalOrder:
    """Return the canonical order; ``sigma_w[k]`` is the variable ranked ``k``-th."""
    rv, rw = g.random_features if g.random_features is not None else (None, None)
    v_rank = _dense_ranks([
        initial_order_key_v(f, None if rv is None else rv[i]) for i, f in enumerate(g.v_features)
    ])
    w_rank = _dense_ranks([
        initial_order_key_w(f, None if rw is None else rw[j]) for j, f in enumerate(g.w_features)
    ])
    v_adj = [[] for _ in range(g.m)]
    w_adj = [[] for _ in range(g.n)]
    for (i, j), e in g.edges.items():
        v_adj[i].append((j, e))
        w_adj[j].append((i, e))

    limit = g.m + g.n
    rounds = 0
    while True:
        new_v = _dense_ranks([
            (v_rank[i], tuple(sorted((e, w_rank[j]) for j, e in v_adj[i]))) for i in range(g.m)
        ])
        new_w = _dense_ranks([
            (w_rank[j], tuple(sorted((e, v_rank[i]) for i, e in w_adj[j]))) for j in range(g.n)
        ])
        # ranks are order-isomorphic across rounds, so equality means a fixed point
        if new_v == v_rank and new_w == w_rank:
            break
        v_rank, w_rank = new_v, new_w
        rounds += 1
        if rounds > limit:
            raise AssertionError("order refinement did not stabilize within m+n rounds")

    if len(set(v_rank)) < g.m or len(set(w_rank)) < g.n:
        raise FoldableInput("graph is foldable: order refinement leaves ties")
    sigma_w = tuple(sorted(range(g.n), key=lambda j: w_rank[j]))
    return CanonicalOrder(sigma_w, tuple(v_rank), tuple(w_rank), rounds)

"""Color refinement (WL test) on MILP graphs, equivalence tests and foldability.

Hash functions are realized by exact interning: every distinct signature gets
its own dense integer id, assigned in sorted-signature order so that ids never
depend on vertex numbering. A vertex's round-``l`` signature is its previous
color together with, for every neighbor color, the sum of edge weights into
that color class (zero sums dropped). Sums use ``math.fsum`` so they do not
depend on the order in which edges are visited.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .instance import MilpGraph, MilpInstance, encode_graph

__all__ = [
    "ColoringResult",
    "refine_colors",
    "graphs_equivalent",
    "graphs_w_equivalent",
    "is_foldable",
    "check_fold_partition",
]


@dataclass(frozen=True)
class ColoringResult:
    rounds: int
    v_colors: Tuple[int, ...]
    w_colors: Tuple[int, ...]
    v_partition: Tuple[Tuple[int, ...], ...]
    w_partition: Tuple[Tuple[int, ...], ...]
    is_discrete: bool
    history: Tuple[Tuple[Tuple[int, ...], Tuple[int, ...]], ...]

    @property
    def s(self) -> int:
        return len(self.v_partition)

    @property
    def t(self) -> int:
        return len(self.w_partition)


def _bucket(x: float, tol: float):
    if tol > 0:
        return math.floor(x / tol + 0.5)
    return x


def _lower_key(v):
    return (0, 0.0) if v is None else (1, v)


def _upper_key(v):
    return (2, 0.0) if v is None else (1, v)


def _initial_keys(g: MilpGraph, tol: float):
    rv, rw = g.random_features if g.random_features is not None else (None, None)
    vk = []
    for i, f in enumerate(g.v_features):
        omega = -1.0 if rv is None else _bucket(float(rv[i]), tol)
        vk.append((_bucket(f.b, tol), int(f.sense), omega))
    wk = []
    for j, f in enumerate(g.w_features):
        omega = -1.0 if rw is None else _bucket(float(rw[j]), tol)
        lo = _lower_key(None if f.lower is None else _bucket(f.lower, tol))
        up = _upper_key(None if f.upper is None else _bucket(f.upper, tol))
        wk.append((_bucket(f.c, tol), lo, up, f.tau, omega))
    return vk, wk


def _intern(keys: Sequence) -> List[int]:
    ids = {k: c for c, k in enumerate(sorted(set(keys)))}
    return [ids[k] for k in keys]


def _signatures(colors, other_colors, adj, tol):
    out = []
    for k, nbrs in enumerate(adj):
        groups: Dict[int, List[float]] = {}
        for o, w in nbrs:
            groups.setdefault(other_colors[o], []).append(w)
        agg = []
        for col in sorted(groups):
            s = math.fsum(groups[col])
            if s != 0.0:
                agg.append((col, _bucket(s, tol)))
        out.append((colors[k], tuple(agg)))
    return out


class _Union:
    """Disjoint union of same-type graphs, indexed globally."""

    def __init__(self, graphs: Sequence[MilpGraph], tol: float):
        self.graphs = list(graphs)
        self.v_off, self.w_off = [], []
        vk, wk = [], []
        v_adj, w_adj = [], []
        voff = woff = 0
        for g in self.graphs:
            self.v_off.append(voff)
            self.w_off.append(woff)
            gv, gw = _initial_keys(g, tol)
            vk.extend(gv)
            wk.extend(gw)
            va = [[] for _ in range(g.m)]
            wa = [[] for _ in range(g.n)]
            for (i, j), w in g.edges.items():
                va[i].append((woff + j, w))
                wa[j].append((voff + i, w))
            v_adj.extend(va)
            w_adj.extend(wa)
            voff += g.m
            woff += g.n
        self.v_keys, self.w_keys = vk, wk
        self.v_adj, self.w_adj = v_adj, w_adj
        self.n_v, self.n_w = voff, woff

    def run(self, max_rounds: int, tol: float):
        vc = _intern(self.v_keys)
        wc = _intern(self.w_keys)
        history = [(vc, wc)]
        nv, nw = len(set(vc)), len(set(wc))
        rounds = 0
        while rounds < max_rounds and not (nv == self.n_v and nw == self.n_w):
            new_v = _intern(_signatures(vc, wc, self.v_adj, tol))
            new_w = _intern(_signatures(wc, vc, self.w_adj, tol))
            cv, cw = len(set(new_v)), len(set(new_w))
            if cv == nv and cw == nw:
                break
            vc, wc, nv, nw = new_v, new_w, cv, cw
            rounds += 1
            history.append((vc, wc))
        return rounds, history

    def split(self, colors: Sequence[int], k: int, side: str) -> Tuple[int, ...]:
        g = self.graphs[k]
        if side == "v":
            return tuple(colors[self.v_off[k]:self.v_off[k] + g.m])
        return tuple(colors[self.w_off[k]:self.w_off[k] + g.n])


def _partition(colors: Sequence[int]) -> Tuple[Tuple[int, ...], ...]:
    blocks: Dict[int, List[int]] = {}
    for idx, c in enumerate(colors):
        blocks.setdefault(c, []).append(idx)
    return tuple(tuple(blocks[c]) for c in sorted(blocks))


def refine_colors(g: MilpGraph, max_rounds: Optional[int] = None, tol: float = 0.0) -> ColoringResult:
    """Run color refinement on ``g`` until the partition stops changing.

    ``tol`` > 0 buckets real values before comparison; it breaks transitivity of
    equality and is meant for exploration only.
    """
    if max_rounds is None:
        max_rounds = g.m + g.n
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    u = _Union([g], tol)
    rounds, hist = u.run(max_rounds, tol)
    vc, wc = (tuple(c) for c in hist[-1])
    vp, wp = _partition(vc), _partition(wc)
    return ColoringResult(
        rounds=rounds,
        v_colors=vc,
        w_colors=wc,
        v_partition=vp,
        w_partition=wp,
        is_discrete=len(vp) == g.m and len(wp) == g.n,
        history=tuple((tuple(v), tuple(w)) for v, w in hist),
    )


def _joint_final(g1: MilpGraph, g2: MilpGraph, tol: float):
    if (g1.m, g1.n) != (g2.m, g2.n):
        raise ValueError(f"graph sizes differ: ({g1.m}, {g1.n}) vs ({g2.m}, {g2.n})")
    u = _Union([g1, g2], tol)
    _, hist = u.run(u.n_v + u.n_w, tol)
    vc, wc = hist[-1]
    return (u.split(vc, 0, "v"), u.split(wc, 0, "w")), (u.split(vc, 1, "v"), u.split(wc, 1, "w"))


def graphs_equivalent(g1: MilpGraph, g2: MilpGraph, tol: float = 0.0) -> bool:
    """True when WL with shared hash functions cannot tell ``g1`` and ``g2`` apart."""
    (v1, w1), (v2, w2) = _joint_final(g1, g2, tol)
    return sorted(v1) == sorted(v2) and sorted(w1) == sorted(w2)


def graphs_w_equivalent(g1: MilpGraph, g2: MilpGraph, tol: float = 0.0) -> bool:
    """Equivalent, and the final variable colors agree index by index."""
    (v1, w1), (v2, w2) = _joint_final(g1, g2, tol)
    return sorted(v1) == sorted(v2) and sorted(w1) == sorted(w2) and w1 == w2


def is_foldable(g: MilpGraph, tol: float = 0.0) -> bool:
    return not refine_colors(g, tol=tol).is_discrete


def check_fold_partition(inst: MilpInstance, coloring: ColoringResult) -> bool:
    """Check the block conditions directly on the final partitions of ``coloring``.

    Within each block pair every vertex shares its feature, and all row sums and
    all column sums of the corresponding submatrix of A coincide.
    """
    if len(coloring.v_colors) != inst.m or len(coloring.w_colors) != inst.n:
        raise ValueError("coloring does not match the instance dimensions")
    g = encode_graph(inst)
    for block in coloring.v_partition:
        if len({g.v_features[i] for i in block}) != 1:
            return False
    for block in coloring.w_partition:
        if len({g.w_features[j] for j in block}) != 1:
            return False
    a = inst.a
    for rows in coloring.v_partition:
        for cols in coloring.w_partition:
            row_sums = {math.fsum(a[i, j] for j in cols) for i in rows}
            col_sums = {math.fsum(a[i, j] for i in rows) for j in cols}
            if len(row_sums) != 1 or len(col_sums) != 1:
                return False
    return True


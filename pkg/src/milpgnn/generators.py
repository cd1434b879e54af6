"""Dataset generators.

Random numbers come from numpy's PCG64 bit generator; normals use
``Generator.normal`` (ziggurat), which numpy keeps stable across platforms
for a given seed. ``N(mu, s)`` below always means standard deviation ``s``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .instance import MilpInstance, Sense, encode_graph
from .wl import is_foldable


class Variant(str, enum.Enum):
    D1 = "d1"
    D2 = "d2"
    D2_GEN = "d2gen"
    COUNTEREXAMPLE = "counterexample"


class RejectionLimit(RuntimeError):
    pass


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    count: int = 1000
    variant: Variant = Variant.D1
    m: int = 6
    n: int = 20
    nnz: int = 60
    c_std: float = 0.01
    bound_std: float = 10.0
    max_rejections: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.nnz > self.m * self.n:
            raise ValueError("nnz exceeds m*n")
        if self.variant in (Variant.D2, Variant.D2_GEN) and self.count % 2:
            raise ValueError("D2 datasets come in feasible/infeasible pairs; count must be even")
        if self.count < 0:
            raise ValueError("count must be non-negative")


def _sorted_bounds(rng, size, std):
    lo = rng.normal(0.0, std, size)
    up = rng.normal(0.0, std, size)
    return np.minimum(lo, up), np.maximum(lo, up)


def _d1_candidate(cfg: GenConfig, rng: np.random.Generator) -> MilpInstance:
    m, n = cfg.m, cfg.n
    c = rng.normal(0.0, cfg.c_std, n)
    lo, up = _sorted_bounds(rng, n, cfg.bound_std)
    integer = rng.random(n) < 0.5
    senses = [(Sense.LE, Sense.EQ, Sense.GE)[k] for k in rng.integers(0, 3, m)]
    b = rng.normal(0.0, 1.0, m)
    pos = rng.choice(m * n, size=cfg.nnz, replace=False)
    vals = rng.normal(0.0, 1.0, cfg.nnz)
    entries = [(int(p // n), int(p % n), float(v)) for p, v in zip(pos, vals)]
    return MilpInstance(m, n, entries, b, senses, c, lo, up, integer)


def gen_d1(cfg: GenConfig) -> List[MilpInstance]:
    """Random unfoldable MILPs; foldable draws are rejected and resampled."""
    rng = np.random.default_rng(cfg.seed)
    out = []
    while len(out) < cfg.count:
        for _ in range(cfg.max_rejections):
            inst = _d1_candidate(cfg, rng)
            if not is_foldable(encode_graph(inst)):
                out.append(inst)
                break
        else:
            raise RejectionLimit(f"{cfg.max_rejections} consecutive foldable draws")
    return out


def cycle_systems() -> Tuple[List[Tuple[int, int]], List[Tuple[int, int]]]:
    """Index pairs of the single 6-cycle system and the two 3-cycle system."""
    six = [(k, (k + 1) % 6) for k in range(6)]
    two_three = [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]
    return six, two_three


def _pair_instance(n, J, pairs, c_value, lo, up):
    m = len(pairs)
    entries = []
    for i, (p, q) in enumerate(pairs):
        entries += [(i, J[p], 1.0), (i, J[q], 1.0)]
    integer = np.zeros(n, dtype=bool)
    integer[J] = True
    lo = lo.copy()
    up = up.copy()
    lo[J], up[J] = 0.0, 1.0
    return MilpInstance(m, n, entries, np.ones(m), [Sense.EQ] * m, np.full(n, c_value), lo, up, integer)


def gen_d2(cfg: GenConfig) -> List[MilpInstance]:
    """Foldable pairs: odd positions feasible (6-cycle), even positions infeasible (two 3-cycles)."""
    if cfg.variant not in (Variant.D2, Variant.D2_GEN):
        raise ValueError("gen_d2 expects the d2 or d2gen variant")
    if cfg.m != 6:
        raise ValueError("the cycle systems have exactly 6 constraints")
    rng = np.random.default_rng(cfg.seed)
    c_value = 0.0 if cfg.variant is Variant.D2 else 0.01
    six, two_three = cycle_systems()
    out = []
    for _ in range(cfg.count // 2):
        J = rng.choice(cfg.n, size=6, replace=False)
        lo, up = _sorted_bounds(rng, cfg.n, cfg.bound_std)
        out.append(_pair_instance(cfg.n, J, six, c_value, lo, up))
        out.append(_pair_instance(cfg.n, J, two_three, c_value, lo, up))
    return out


def gen_counterexample() -> Tuple[MilpInstance, MilpInstance]:
    """The 6-variable pair: feasible 6-cycle vs infeasible pair of triangles."""
    six, two_three = cycle_systems()
    J, zeros, ones = np.arange(6), np.zeros(6), np.ones(6)
    return (_pair_instance(6, J, six, 1.0, zeros, ones),
            _pair_instance(6, J, two_three, 1.0, zeros, ones))


def generate(cfg: GenConfig) -> List[MilpInstance]:
    if cfg.variant is Variant.D1:
        return gen_d1(cfg)
    if cfg.variant is Variant.COUNTEREXAMPLE:
        return list(gen_counterexample())
    return gen_d2(cfg)

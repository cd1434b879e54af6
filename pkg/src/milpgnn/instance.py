"""MILP instances, their bipartite graph encoding and permutation actions.

Infinite variable bounds are stored as ``None`` (``lower=None`` means -inf,
``upper=None`` means +inf) so no infinity sentinel ever reaches arithmetic.
"""

from __future__ import annotations

import enum
import functools
import types
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np


class Sense(enum.IntEnum):
    """Constraint sense; the integer value is the order index used for sorting."""

    LE = -1
    EQ = 0
    GE = 1

    @property
    def symbol(self) -> str:
        return _SENSE_SYMBOLS[self]

    @classmethod
    def parse(cls, text: str) -> "Sense":
        try:
            return _SYMBOL_SENSES[text.strip()]
        except KeyError:
            raise ValueError(f"unknown constraint sense {text!r}") from None


_SENSE_SYMBOLS = {Sense.LE: "<=", Sense.EQ: "=", Sense.GE: ">="}
_SYMBOL_SENSES = {"<=": Sense.LE, "=": Sense.EQ, "==": Sense.EQ, ">=": Sense.GE}

Bound = Optional[float]
Entry = Tuple[int, int, float]


class InvalidInstance(ValueError):
    pass


def _canonical_entries(entries: Iterable[Entry], m: int, n: int) -> Tuple[Entry, ...]:
    seen = {}
    for i, j, v in entries:
        i, j, v = int(i), int(j), float(v)
        if not (0 <= i < m and 0 <= j < n):
            raise InvalidInstance(f"entry ({i}, {j}) outside a {m}x{n} matrix")
        if not np.isfinite(v):
            raise InvalidInstance(f"entry ({i}, {j}) is not finite")
        if (i, j) in seen:
            raise InvalidInstance(f"duplicate entry ({i}, {j})")
        seen[(i, j)] = v
    # zero coefficients mean "no edge"
    return tuple((i, j, v) for (i, j), v in sorted(seen.items()) if v != 0.0)


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MilpInstance:
    """``min c.x  s.t.  A x (senses) b,  lower <= x <= upper,  x_j integer for j in I``."""

    m: int
    n: int
    entries: Tuple[Entry, ...]
    b: np.ndarray
    senses: Tuple[Sense, ...]
    c: np.ndarray
    lower: Tuple[Bound, ...]
    upper: Tuple[Bound, ...]
    integer_mask: np.ndarray

    def __init__(self, m, n, entries, b, senses, c, lower, upper, integer_mask):
        m, n = int(m), int(n)
        if m < 1 or n < 1:
            raise InvalidInstance("m and n must be positive")
        if isinstance(entries, Mapping):
            entries = [(i, j, v) for (i, j), v in entries.items()]
        set_ = object.__setattr__
        set_(self, "m", m)
        set_(self, "n", n)
        set_(self, "entries", _canonical_entries(entries, m, n))
        set_(self, "b", _frozen(b, float))
        set_(self, "senses", tuple(Sense(s) for s in senses))
        set_(self, "c", _frozen(c, float))
        set_(self, "lower", tuple(None if v is None else float(v) for v in lower))
        set_(self, "upper", tuple(None if v is None else float(v) for v in upper))
        set_(self, "integer_mask", _frozen(integer_mask, bool))
        self._validate()

    def _validate(self):
        m, n = self.m, self.n
        if self.b.shape != (m,) or len(self.senses) != m:
            raise InvalidInstance("b and senses must have length m")
        if self.c.shape != (n,) or len(self.lower) != n or len(self.upper) != n:
            raise InvalidInstance("c, lower and upper must have length n")
        if self.integer_mask.shape != (n,):
            raise InvalidInstance("integer_mask must have length n")
        if not (np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.c))):
            raise InvalidInstance("b and c must be finite")
        for j, (lo, up) in enumerate(zip(self.lower, self.upper)):
            if (lo is not None and not np.isfinite(lo)) or (up is not None and not np.isfinite(up)):
                raise InvalidInstance(f"bound of variable {j} must be a finite number or None")
            if lo is not None and up is not None and lo > up:
                raise InvalidInstance(f"variable {j}: lower {lo} > upper {up}")

    @classmethod
    def from_dense(cls, a, b, senses, c, lower, upper, integer_mask) -> "MilpInstance":
        a = np.asarray(a, dtype=float)
        m, n = a.shape
        rows, cols = np.nonzero(a)
        return cls(m, n, zip(rows, cols, a[rows, cols]), b, senses, c, lower, upper, integer_mask)

    @property
    def integer_indices(self) -> Tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.integer_mask))

    @property
    def has_finite_bounds(self) -> bool:
        return all(v is not None for v in self.lower) and all(v is not None for v in self.upper)

    @functools.cached_property
    def a(self) -> np.ndarray:
        """Read-only dense coefficient matrix."""
        a = np.zeros((self.m, self.n))
        for i, j, v in self.entries:
            a[i, j] = v
        a.setflags(write=False)
        return a

    def dense(self) -> np.ndarray:
        return self.a.copy()

    def replace(self, **changes) -> "MilpInstance":
        fields = dict(
            m=self.m, n=self.n, entries=self.entries, b=self.b, senses=self.senses,
            c=self.c, lower=self.lower, upper=self.upper, integer_mask=self.integer_mask,
        )
        fields.update(changes)
        return MilpInstance(**fields)

    def __eq__(self, other):
        if not isinstance(other, MilpInstance):
            return NotImplemented
        return (
            self.m == other.m and self.n == other.n and self.entries == other.entries
            and np.array_equal(self.b, other.b) and self.senses == other.senses
            and np.array_equal(self.c, other.c) and self.lower == other.lower
            and self.upper == other.upper
            and np.array_equal(self.integer_mask, other.integer_mask)
        )

    __hash__ = None

    def max_violation(self, x) -> float:
        """Largest violation of any constraint or bound at ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        ax = self.a @ x
        worst = 0.0
        for i, s in enumerate(self.senses):
            r = ax[i] - self.b[i]
            if s is Sense.LE:
                worst = max(worst, r)
            elif s is Sense.GE:
                worst = max(worst, -r)
            else:
                worst = max(worst, abs(r))
        for j in range(self.n):
            if self.lower[j] is not None:
                worst = max(worst, self.lower[j] - x[j])
            if self.upper[j] is not None:
                worst = max(worst, x[j] - self.upper[j])
        return float(worst)


@dataclass(frozen=True)
class ConstraintFeature:
    b: float
    sense: Sense


@dataclass(frozen=True)
class VariableFeature:
    c: float
    lower: Bound
    upper: Bound
    tau: int


@dataclass(frozen=True, eq=False)
class MilpGraph:
    """Weighted bipartite constraint/variable graph with vertex features.

    ``edges`` maps ``(i, j)`` to ``A[i, j]``; iteration is row-major.
    ``random_features`` is ``None`` or a pair of arrays (length m and n) in [0, 1].
    """

    m: int
    n: int
    edges: Mapping[Tuple[int, int], float]
    v_features: Tuple[ConstraintFeature, ...]
    w_features: Tuple[VariableFeature, ...]
    random_features: Optional[Tuple[np.ndarray, np.ndarray]] = field(default=None)

    def __post_init__(self):
        edges = {(int(i), int(j)): float(v) for (i, j), v in sorted(self.edges.items()) if v != 0.0}
        object.__setattr__(self, "edges", types.MappingProxyType(edges))
        if len(self.v_features) != self.m or len(self.w_features) != self.n:
            raise InvalidInstance("feature sequences do not match (m, n)")
        if self.random_features is not None:
            rv, rw = (np.array(r, dtype=float) for r in self.random_features)
            if rv.shape != (self.m,) or rw.shape != (self.n,):
                raise InvalidInstance("random features must have shapes (m,) and (n,)")
            if np.any((rv < 0) | (rv > 1)) or np.any((rw < 0) | (rw > 1)):
                raise InvalidInstance("random features must lie in [0, 1]")
            rv.setflags(write=False)
            rw.setflags(write=False)
            object.__setattr__(self, "random_features", (rv, rw))

    def dense(self) -> np.ndarray:
        a = np.zeros((self.m, self.n))
        for (i, j), v in self.edges.items():
            a[i, j] = v
        return a

    def __eq__(self, other):
        if not isinstance(other, MilpGraph):
            return NotImplemented
        if (self.random_features is None) != (other.random_features is None):
            return False
        if self.random_features is not None and not all(
            np.array_equal(x, y) for x, y in zip(self.random_features, other.random_features)
        ):
            return False
        return (
            self.m == other.m and self.n == other.n
            and list(self.edges.items()) == list(other.edges.items())
            and self.v_features == other.v_features and self.w_features == other.w_features
        )

    __hash__ = None


def _check_bijection(p: Sequence[int], size: int, name: str) -> Tuple[int, ...]:
    p = tuple(int(k) for k in p)
    if sorted(p) != list(range(size)):
        raise ValueError(f"{name} is not a bijection on 0..{size - 1}")
    return p


@dataclass(frozen=True)
class Permutation:
    """Relabeling ``(sigma_v, sigma_w)``: old constraint ``i`` becomes ``sigma_v[i]``."""

    sigma_v: Tuple[int, ...]
    sigma_w: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "sigma_v", _check_bijection(self.sigma_v, len(self.sigma_v), "sigma_v"))
        object.__setattr__(self, "sigma_w", _check_bijection(self.sigma_w, len(self.sigma_w), "sigma_w"))

    @classmethod
    def identity(cls, m: int, n: int) -> "Permutation":
        return cls(tuple(range(m)), tuple(range(n)))

    @classmethod
    def random(cls, m: int, n: int, rng: np.random.Generator) -> "Permutation":
        return cls(tuple(rng.permutation(m)), tuple(rng.permutation(n)))

    def inverse(self) -> "Permutation":
        return Permutation(tuple(np.argsort(self.sigma_v)), tuple(np.argsort(self.sigma_w)))

    def permute_w(self, values):
        """Move ``values[j]`` to position ``sigma_w[j]``."""
        values = np.asarray(values)
        out = np.empty_like(values)
        out[list(self.sigma_w)] = values
        return out

    def permute_v(self, values):
        values = np.asarray(values)
        out = np.empty_like(values)
        out[list(self.sigma_v)] = values
        return out

    def _check(self, m: int, n: int):
        if len(self.sigma_v) != m or len(self.sigma_w) != n:
            raise ValueError(
                f"permutation of size ({len(self.sigma_v)}, {len(self.sigma_w)}) "
                f"does not match ({m}, {n})"
            )


def _reorder(seq, sigma):
    out = [None] * len(seq)
    for old, new in enumerate(sigma):
        out[new] = seq[old]
    return out


def encode_graph(inst: MilpInstance) -> MilpGraph:
    v_features = tuple(ConstraintFeature(float(bi), s) for bi, s in zip(inst.b, inst.senses))
    w_features = tuple(
        VariableFeature(float(cj), lo, up, int(t))
        for cj, lo, up, t in zip(inst.c, inst.lower, inst.upper, inst.integer_mask)
    )
    edges = {(i, j): v for i, j, v in inst.entries}
    return MilpGraph(inst.m, inst.n, edges, v_features, w_features)


def decode_graph(g: MilpGraph) -> MilpInstance:
    """Inverse of :func:`encode_graph` (random features are dropped)."""
    return MilpInstance(
        g.m, g.n, [(i, j, v) for (i, j), v in g.edges.items()],
        [f.b for f in g.v_features], [f.sense for f in g.v_features],
        [f.c for f in g.w_features], [f.lower for f in g.w_features],
        [f.upper for f in g.w_features], [bool(f.tau) for f in g.w_features],
    )


def apply_permutation(g: MilpGraph, p: Permutation) -> MilpGraph:
    p._check(g.m, g.n)
    sv, sw = p.sigma_v, p.sigma_w
    edges = {(sv[i], sw[j]): v for (i, j), v in g.edges.items()}
    rf = None
    if g.random_features is not None:
        rf = (p.permute_v(g.random_features[0]), p.permute_w(g.random_features[1]))
    return MilpGraph(
        g.m, g.n, edges, tuple(_reorder(g.v_features, sv)), tuple(_reorder(g.w_features, sw)), rf
    )


def permute_instance(inst: MilpInstance, p: Permutation) -> MilpInstance:
    p._check(inst.m, inst.n)
    sv, sw = p.sigma_v, p.sigma_w
    return MilpInstance(
        inst.m, inst.n, [(sv[i], sw[j], v) for i, j, v in inst.entries],
        _reorder(list(inst.b), sv), _reorder(list(inst.senses), sv),
        _reorder(list(inst.c), sw), _reorder(list(inst.lower), sw),
        _reorder(list(inst.upper), sw), _reorder(list(inst.integer_mask), sw),
    )


def attach_random_features(g: MilpGraph, omega) -> MilpGraph:
    """Copy of ``g`` carrying the per-vertex random scalars ``omega = (omega_v, omega_w)``."""
    omega_v, omega_w = omega
    return MilpGraph(g.m, g.n, g.edges, g.v_features, g.w_features, (omega_v, omega_w))


def sample_random_features(m: int, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    return rng.uniform(0.0, 1.0, size=m), rng.uniform(0.0, 1.0, size=n)


def has_repeated_random_feature(g: MilpGraph) -> bool:
    """True when the attached random vector lies in the degenerate set (a repeated coordinate)."""
    if g.random_features is None:
        return False
    rv, rw = g.random_features
    return len(np.unique(rv)) < len(rv) or len(np.unique(rw)) < len(rw)

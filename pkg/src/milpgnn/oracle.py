"""Exact MILP labels: feasibility, optimal objective, canonical optimal solution."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .canon import sort_graph
from .instance import MilpInstance, attach_random_features, encode_graph
from .lp import LpStatus, bounds_arrays, sense_codes, solve_lp_arrays


@dataclass(frozen=True)
class Tolerances:
    feas: float = 1e-7
    int_: float = 1e-6
    obj_rel: float = 1e-9
    fix: float = 1e-7

    def obj(self, z: float) -> float:
        return self.obj_rel * max(1.0, abs(z))


DEFAULT_TOL = Tolerances()


class UnboundedDomain(ValueError):
    pass


class NodeLimit(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleLabel:
    feasible: bool
    objective: float  # math.inf when infeasible
    solution: Optional[Tuple[float, ...]]
    node_count: int


HALF_CAP = 2_000_000  # grid points per half at the root
NODE_HALF_CAP = 5_000  # and inside the tree


def _grid(coefs, lo, sizes):
    """All partial sums over a box, with the offset index of every point."""
    vals = np.zeros(1)
    idx = np.zeros((1, 0), dtype=np.int64)
    for a, l, size in zip(coefs, lo, sizes):
        steps = np.arange(size)
        vals = (vals[:, None] + a * (l + steps)[None, :]).ravel()
        idx = np.hstack([np.repeat(idx, size, axis=0), np.tile(steps, len(idx))[:, None]])
    return vals, idx


def _row_hull(coefs, lo, sizes, t_lo, t_hi, half_cap):
    """Hull of the box points whose weighted sum lies in ``[t_lo, t_hi]`` (meet in the middle).

    Returns ``None`` when a half-grid would exceed ``half_cap`` points, otherwise
    ``(count, min_offset, max_offset)`` with offsets measured from ``lo``.
    """
    left, right, p_left, p_right = [], [], 1, 1
    for k in np.argsort(sizes, kind="stable")[::-1]:  # greedy balance of the two half-grids
        if p_left <= p_right:
            left.append(k)
            p_left *= int(sizes[k])
        else:
            right.append(k)
            p_right *= int(sizes[k])
    if max(p_left, p_right) > half_cap:
        return None
    va, ia = _grid(coefs[left], lo[left], sizes[left])
    vb, ib = _grid(coefs[right], lo[right], sizes[right])
    order = np.argsort(va, kind="stable")
    va, ia = va[order], ia[order]
    first = np.searchsorted(va, t_lo - vb, side="left")
    last = np.searchsorted(va, t_hi - vb, side="right")
    hit = last > first
    count = int(np.sum(last - first))
    if count == 0:
        return 0, None, None
    # left-half points covered by at least one matching range
    cover = np.zeros(len(va) + 1, dtype=np.int64)
    np.add.at(cover, first[hit], 1)
    np.add.at(cover, last[hit], -1)
    used = np.cumsum(cover[:-1]) > 0
    lo_off = np.empty(len(coefs), dtype=np.int64)
    up_off = np.empty(len(coefs), dtype=np.int64)
    lo_off[left], up_off[left] = ia[used].min(axis=0), ia[used].max(axis=0)
    lo_off[right], up_off[right] = ib[hit].min(axis=0), ib[hit].max(axis=0)
    return count, lo_off, up_off


def _enumerate_equalities(a, b, senses, lo, up, int_mask, tol, half_cap=HALF_CAP):
    """Exact feasibility filter for equality rows, by enumerating their integer part.

    For each equality row, the integer points of the row's integer variables
    are searched for those the continuous terms can complete to within
    ``tol.feas``. No such point proves infeasibility; otherwise integer bounds
    shrink to the hull of the surviving points. Rows whose search would be
    too large are skipped.
    """
    changed = True
    while changed:
        changed = False
        for i in np.flatnonzero(senses == 0):
            row = a[i]
            nz = np.flatnonzero(row)
            kint = np.array([k for k in nz if int_mask[k]], dtype=int)
            if kint.size == 0:
                continue
            kcon = [k for k in nz if not int_mask[k]]
            cmin = math.fsum(min(row[k] * lo[k], row[k] * up[k]) for k in kcon)
            cmax = math.fsum(max(row[k] * lo[k], row[k] * up[k]) for k in kcon)
            # a hair of slack so summation order never prunes an accepted point
            slack = tol.feas + 1e-12 * (1.0 + abs(b[i]) + float(np.abs(row) @ np.maximum(np.abs(lo), np.abs(up))))
            sizes = (up[kint] - lo[kint]).astype(np.int64) + 1
            hull = _row_hull(row[kint], lo[kint], sizes, b[i] - cmax - slack, b[i] - cmin + slack, half_cap)
            if hull is None:
                continue
            count, lo_off, up_off = hull
            if count == 0:
                return False
            new_lo = lo[kint] + lo_off
            new_up = lo[kint] + up_off
            if np.any(new_lo > lo[kint]) or np.any(new_up < up[kint]):
                lo[kint], up[kint] = new_lo, new_up
                changed = True
    return True


def _propagate(a, b, senses, lo, up, int_mask, tol, rounds=20):
    """Activity-based tightening of integer bounds; False if some row cannot hold.

    Bounds derived from a row are relaxed by ``tol.feas`` before rounding, so no
    point that satisfies the rows within tolerance is cut off.
    """
    pos, neg = np.maximum(a, 0.0), np.minimum(a, 0.0)
    ints = np.flatnonzero(int_mask)
    for _ in range(rounds):
        amin = pos @ lo + neg @ up
        amax = pos @ up + neg @ lo
        if np.any((senses <= 0) & (amin > b + tol.feas)) or np.any((senses >= 0) & (amax < b - tol.feas)):
            return False
        changed = False
        for i in range(a.shape[0]):
            for k in ints:
                aik = a[i, k]
                if aik == 0.0 or lo[k] == up[k]:
                    continue
                own_min = aik * (lo[k] if aik > 0 else up[k])
                own_max = aik * (up[k] if aik > 0 else lo[k])
                if senses[i] <= 0:  # a_ik x_k <= b - (rest min)
                    room = b[i] + tol.feas - (amin[i] - own_min)
                    if aik > 0:
                        new = math.floor(room / aik + tol.int_)
                        if new < up[k]:
                            up[k], changed = new, True
                    else:
                        new = math.ceil(room / aik - tol.int_)
                        if new > lo[k]:
                            lo[k], changed = new, True
                if senses[i] >= 0:  # a_ik x_k >= b - (rest max)
                    room = b[i] - tol.feas - (amax[i] - own_max)
                    if aik > 0:
                        new = math.ceil(room / aik - tol.int_)
                        if new > lo[k]:
                            lo[k], changed = new, True
                    else:
                        new = math.floor(room / aik + tol.int_)
                        if new < up[k]:
                            up[k], changed = new, True
                if lo[k] > up[k]:
                    return False
                amin = pos @ lo + neg @ up
                amax = pos @ up + neg @ lo
        if not changed:
            return True
    return True


def _tighten(a, b, senses, lo, up, int_mask, tol, half_cap):
    return (_propagate(a, b, senses, lo, up, int_mask, tol)
            and _enumerate_equalities(a, b, senses, lo, up, int_mask, tol, half_cap))


def _branch_and_bound(a, b, senses, c, lo, up, int_mask, tol, node_limit):
    """Best-bound B&B with most-fractional branching. Returns (objective, x, nodes)."""
    n = len(c)
    lo, up = lo.copy(), up.copy()
    has = np.ones(n, dtype=bool)
    ints = np.flatnonzero(int_mask)
    lo[ints] = np.ceil(lo[ints] - tol.int_)
    up[ints] = np.floor(up[ints] + tol.int_)
    if np.any(lo > up):
        return math.inf, None, 0
    if not _tighten(a, b, senses, lo, up, int_mask, tol, HALF_CAP):
        return math.inf, None, 0
    continuous = not int_mask.all()

    best_obj, best_x = math.inf, None
    counter = itertools.count()
    heap = [(-math.inf, next(counter), lo, up)]
    nodes = 0
    while heap:
        bound, _, nlo, nup = heapq.heappop(heap)
        if bound >= best_obj - tol.obj(best_obj if best_obj < math.inf else 0.0):
            continue
        if nodes >= node_limit:
            raise NodeLimit(f"branch and bound exceeded {node_limit} nodes")
        nodes += 1
        if nodes > 1 and not _tighten(a, b, senses, nlo, nup, int_mask, tol, NODE_HALF_CAP):
            continue
        res = solve_lp_arrays(a, b, senses, c, nlo, nup, has, has)
        if res.status is not LpStatus.OPTIMAL:
            continue
        if best_obj < math.inf and res.objective >= best_obj - tol.obj(best_obj):
            continue
        x = res.point
        frac = np.abs(x[ints] - np.round(x[ints]))
        if frac.size == 0 or frac.max() <= tol.int_:
            cand = x.copy()
            cand[ints] = np.round(x[ints])
            if continuous and frac.size:
                flo, fup = nlo.copy(), nup.copy()
                flo[ints] = fup[ints] = cand[ints]
                fixed = solve_lp_arrays(a, b, senses, c, flo, fup, has, has)
                if fixed.status is not LpStatus.OPTIMAL:
                    continue
                cand = fixed.point.copy()
                cand[ints] = np.round(cand[ints])
            obj = float(np.dot(c, cand))
            if obj < best_obj and _violation(a, b, senses, cand, nlo, nup) <= tol.feas:
                best_obj, best_x = obj, cand
            continue
        k = int(ints[np.argmax(frac)])  # first index among ties
        v = x[k]
        down_up = nup.copy()
        down_up[k] = math.floor(v)
        up_lo = nlo.copy()
        up_lo[k] = math.ceil(v)
        heapq.heappush(heap, (res.objective, next(counter), nlo, down_up))
        heapq.heappush(heap, (res.objective, next(counter), up_lo, nup))
    return best_obj, best_x, nodes


def _violation(a, b, senses, x, lo, up) -> float:
    r = a @ x - b
    viol = np.where(senses < 0, r, np.where(senses > 0, -r, np.abs(r)))
    worst = max(float(viol.max(initial=0.0)), float(np.max(lo - x, initial=0.0)),
                float(np.max(x - up, initial=0.0)))
    return worst


def solve_milp(inst: MilpInstance, node_limit: int = 10**6, tol: Tolerances = DEFAULT_TOL) -> OracleLabel:
    """Solve ``inst`` exactly (up to tolerances) by branch and bound.

    All variable bounds must be finite.
    """
    if not inst.has_finite_bounds:
        raise UnboundedDomain("branch and bound requires finite bounds on every variable")
    lo, up, _, _ = bounds_arrays(inst)
    obj, x, nodes = _branch_and_bound(
        inst.a, inst.b, sense_codes(inst), inst.c, lo, up, inst.integer_mask, tol, node_limit
    )
    if x is None:
        return OracleLabel(False, math.inf, None, nodes)
    return OracleLabel(True, obj, tuple(float(v) for v in x), nodes)


def canonical_order(inst: MilpInstance, random_features=None) -> Tuple[int, ...]:
    g = encode_graph(inst)
    if random_features is not None:
        g = attach_random_features(g, random_features)
    return sort_graph(g).sigma_w


def canonical_solution(inst: MilpInstance, order: Optional[Sequence[int]] = None,
                       random_features=None, label: Optional[OracleLabel] = None,
                       node_limit: int = 10**6, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Lexicographically smallest optimal solution, coordinates taken in canonical order.

    ``order`` defaults to the canonical variable order of the instance graph
    (with ``random_features`` attached when given).
    """
    if not inst.has_finite_bounds:
        raise UnboundedDomain("canonical solution requires finite bounds")
    if order is None:
        order = canonical_order(inst, random_features)
    if label is None:
        label = solve_milp(inst, node_limit, tol)
    if not label.feasible:
        raise ValueError("instance is infeasible; no optimal solution exists")

    z_star = label.objective
    a = np.vstack([inst.a, inst.c[None, :]])
    b = np.append(inst.b, z_star + tol.obj(z_star))
    senses = np.append(sense_codes(inst), -1)
    lo, up, _, _ = bounds_arrays(inst)
    ints = inst.integer_mask
    lo[ints] = np.ceil(lo[ints] - tol.int_)
    up[ints] = np.floor(up[ints] + tol.int_)

    x_cur = np.array(label.solution)
    result = np.empty(inst.n)
    for j in order:
        if x_cur[j] <= lo[j] + tol.fix:
            value = lo[j]
        else:
            cost = np.zeros(inst.n)
            cost[j] = 1.0
            value, x, _ = _branch_and_bound(a, b, senses, cost, lo, up, ints, tol, node_limit)
            if x is None:
                raise RuntimeError("lexicographic step lost feasibility; loosen tolerances")
            x_cur = x
        if ints[j]:
            value = float(round(value))
            lo[j] = up[j] = value
        else:
            lo[j] = value
            up[j] = min(up[j], value + tol.fix)
        result[j] = value
    return result

"""Bounded-variable primal simplex for the LP relaxation.

Every constraint row gets a slack ``s_i = A_i x`` whose bounds carry the sense
(``<=``: s <= b, ``>=``: s >= b, ``=``: s fixed at b), so equalities cost no
extra rows. Phase 1 minimizes the sum of artificials added only for rows whose
starting slack value is out of bounds. Pricing is Dantzig's rule until
``bland_after`` pivots have been spent, then Bland's smallest-index rule,
which cannot cycle.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .instance import MilpInstance, Sense


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class IterationLimit(RuntimeError):
    pass


@dataclass(frozen=True)
class LpResult:
    status: LpStatus
    objective: Optional[float] = None
    point: Optional[np.ndarray] = None
    iterations: int = 0


HARD_PIVOT_CAP = 10**6
_PIVOT_TOL = 1e-9
_DUAL_TOL = 1e-9
_PRIMAL_TOL = 1e-9
# Harris overshoot; kept far below _PRIMAL_TOL because later basis changes
# (dropping artificials) divide residuals by pivots that can be ~1e-2
_HARRIS_TOL = 1e-11


def bounds_arrays(inst: MilpInstance):
    """Bounds as float arrays plus finiteness masks (values under a False mask are unused)."""
    lo = np.array([0.0 if v is None else v for v in inst.lower])
    up = np.array([0.0 if v is None else v for v in inst.upper])
    has_lo = np.array([v is not None for v in inst.lower])
    has_up = np.array([v is not None for v in inst.upper])
    return lo, up, has_lo, has_up


def sense_codes(inst: MilpInstance) -> np.ndarray:
    return np.array([int(s) for s in inst.senses], dtype=int)


class _Simplex:
    def __init__(self, a, b, senses, lo, up, has_lo, has_up, bland_after):
        m, n = a.shape
        self.m, self.n = m, n
        self.bland_after = bland_after
        N = n + 2 * m
        self.N = N
        M = np.zeros((m, N))
        M[:, :n] = a
        M[:, n:n + m] = -np.eye(m)
        self.M = M

        self.lo = np.zeros(N)
        self.up = np.zeros(N)
        self.has_lo = np.zeros(N, dtype=bool)
        self.has_up = np.zeros(N, dtype=bool)
        self.lo[:n], self.up[:n] = lo, up
        self.has_lo[:n], self.has_up[:n] = has_lo, has_up
        for i in range(m):
            k = n + i
            if senses[i] <= 0:  # <= or =
                self.up[k], self.has_up[k] = b[i], True
            if senses[i] >= 0:  # >= or =
                self.lo[k], self.has_lo[k] = b[i], True

        z = np.zeros(N)
        z[:n] = np.where(has_lo, lo, np.where(has_up, up, 0.0))
        r = a @ z[:n]
        basis = []
        art = n + m
        for i in range(m):
            k, ak = n + i, art + i
            # artificial bounds default to fixed at zero
            self.has_lo[ak] = self.has_up[ak] = True
            below = self.has_lo[k] and r[i] < self.lo[k] - _PRIMAL_TOL
            above = self.has_up[k] and r[i] > self.up[k] + _PRIMAL_TOL
            if not (below or above):
                basis.append(k)
                z[k] = r[i]
            else:
                beta = self.lo[k] if below else self.up[k]
                z[k] = beta
                d = 1.0 if beta > r[i] else -1.0
                M[i, ak] = d
                self.has_up[ak] = False  # artificial in [0, inf) during phase 1
                z[ak] = abs(beta - r[i])
                basis.append(ak)
        self.z = z
        self.basis = basis
        self.iterations = 0

    def _basic_values(self, b_inv=None):
        nonbasic = np.ones(self.N, dtype=bool)
        nonbasic[self.basis] = False
        rhs = -(self.M[:, nonbasic] @ self.z[nonbasic])
        if b_inv is None:
            self.z[self.basis] = np.linalg.solve(self.M[:, self.basis], rhs)
        else:
            self.z[self.basis] = b_inv @ rhs

    def run(self, cost) -> LpStatus:
        m = self.m
        while True:
            if self.iterations >= HARD_PIVOT_CAP:
                raise IterationLimit(f"simplex exceeded {HARD_PIVOT_CAP} pivots")
            # the basis is at most m x m with m small: one explicit inverse per pivot
            b_inv = np.linalg.inv(self.M[:, self.basis])
            self._basic_values(b_inv)
            y = cost[self.basis] @ b_inv
            d = cost - y @ self.M
            bland = self.iterations >= self.bland_after

            in_basis = np.zeros(self.N, dtype=bool)
            in_basis[self.basis] = True
            z, lo, up = self.z, self.lo, self.up
            at_lo = self.has_lo & (z <= lo)
            at_up = self.has_up & (z >= up)
            can_inc = ~in_basis & ~at_up
            can_dec = ~in_basis & ~at_lo
            eligible_inc = can_inc & (d < -_DUAL_TOL)
            eligible_dec = can_dec & (d > _DUAL_TOL)
            eligible = eligible_inc | eligible_dec
            if not eligible.any():
                return LpStatus.OPTIMAL
            idx = np.flatnonzero(eligible)
            j = int(idx[0]) if bland else int(idx[np.argmax(np.abs(d[idx]))])
            direction = 1.0 if eligible_inc[j] else -1.0

            alpha = b_inv @ self.M[:, j]
            rate = -direction * alpha
            zb = z[self.basis]

            flip = np.inf
            if direction > 0 and self.has_up[j]:
                flip = up[j] - z[j]
            elif direction < 0 and self.has_lo[j]:
                flip = z[j] - lo[j]
            blocking = []  # (row, slack to the bound, |rate|)
            for k in range(m):
                var = self.basis[k]
                rk = rate[k]
                if rk < -_PIVOT_TOL and self.has_lo[var]:
                    blocking.append((k, zb[k] - lo[var], -rk))
                elif rk > _PIVOT_TOL and self.has_up[var]:
                    blocking.append((k, up[var] - zb[k], rk))
            if bland:
                # exact minimum ratio, ties to the smallest variable index
                theta, leave = flip, -1
                for k, slack, rk in blocking:
                    t = max(slack / rk, 0.0)
                    if t < theta or (t == theta and leave >= 0 and self.basis[k] < self.basis[leave]):
                        theta, leave = t, k
            else:
                # Harris two-pass test: no basic variable ends more than _HARRIS_TOL past its bound
                cap = min([flip] + [max((slack + _HARRIS_TOL) / rk, 0.0) for _, slack, rk in blocking])
                theta, leave = flip, -1
                if flip > cap:
                    best = -1.0
                    for k, slack, rk in blocking:
                        t = max(slack / rk, 0.0)
                        if t <= cap and rk > best:
                            best, leave, theta = rk, k, t
            if not np.isfinite(theta):
                return LpStatus.UNBOUNDED

            self.iterations += 1
            if leave < 0:
                # bound flip of the entering variable
                z[j] = up[j] if direction > 0 else lo[j]
                continue
            var = self.basis[leave]
            z[j] += direction * theta
            z[var] = lo[var] if rate[leave] < 0 else up[var]
            self.basis[leave] = j

    def drop_artificials(self):
        """Fix artificials at zero and pivot basic ones out where possible."""
        n, m = self.n, self.m
        art = range(n + m, n + 2 * m)
        self.has_lo[n + m:] = self.has_up[n + m:] = True
        self.lo[n + m:] = self.up[n + m:] = 0.0
        for k in range(m):
            if self.basis[k] not in art:
                continue
            B = self.M[:, self.basis]
            row = np.linalg.solve(B.T, np.eye(m)[k])  # k-th row of B^-1
            # largest pivot: the artificial's residual moves the new basis least
            piv = np.abs(row @ self.M[:, :n + m])
            piv[[v for v in self.basis if v < n + m]] = 0.0
            j = int(np.argmax(piv))
            if piv[j] > 1e-7:
                self.z[self.basis[k]] = 0.0
                self.basis[k] = j
        self._basic_values()


def solve_lp_arrays(a, b, senses, c, lo, up, has_lo, has_up, bland_after=None) -> LpResult:
    """Solve ``min c.x`` over ``a x (senses) b`` and the given bounds.

    ``senses`` holds -1 / 0 / 1 for ``<=`` / ``=`` / ``>=``.
    """
    a = np.asarray(a, dtype=float)
    m, n = a.shape
    if bland_after is None:
        bland_after = 50 * (m + n)
    if np.any(has_lo & has_up & (lo > up)):
        return LpResult(LpStatus.INFEASIBLE)
    sx = _Simplex(a, np.asarray(b, float), senses, lo, up, has_lo, has_up, bland_after)

    art = np.arange(n + m, n + 2 * m)
    if any(k >= n + m for k in sx.basis):
        cost1 = np.zeros(sx.N)
        cost1[art] = 1.0
        sx.run(cost1)
        sx._basic_values()
        infeas = float(np.sum(np.abs(sx.z[art])))
        scale = max(1.0, float(np.max(np.abs(b))) if m else 1.0)
        if infeas > 1e-9 * scale:
            return LpResult(LpStatus.INFEASIBLE, iterations=sx.iterations)
        sx.drop_artificials()
    else:
        sx.has_up[art] = True

    cost2 = np.zeros(sx.N)
    cost2[:n] = c
    status = sx.run(cost2)
    if status is LpStatus.UNBOUNDED:
        return LpResult(LpStatus.UNBOUNDED, iterations=sx.iterations)
    sx._basic_values()
    x = sx.z[:n].copy()
    return LpResult(LpStatus.OPTIMAL, float(np.dot(c, x)), x, sx.iterations)


def solve_lp(inst: MilpInstance, bland_after: Optional[int] = None) -> LpResult:
    """LP relaxation of ``inst`` (integrality ignored)."""
    lo, up, has_lo, has_up = bounds_arrays(inst)
    return solve_lp_arrays(inst.a, inst.b, sense_codes(inst), inst.c, lo, up, has_lo, has_up,
                           bland_after)

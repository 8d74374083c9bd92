"""Dense bounded-variable primal simplex for small linear programs.

Solves::

    minimize    c @ x
    subject to  row_lo <= A @ x <= row_hi
                col_lo <=     x <= col_hi

Each row gets a slack ``s = A @ x`` carrying the row bounds, so the working
system is ``[A, -I] z = 0`` with every variable boxed. Phase one starts from an
all-artificial basis and minimises the artificial sum; phase two fixes the
artificials at zero. The basis inverse is kept explicitly (problems here have
at most a few hundred rows) with product-form updates and periodic
refactorisation. A Harris two-pass ratio test is used, switching to Bland's
rule when the objective stalls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

INF = np.inf


class LPError(RuntimeError):
    pass


class Infeasible(LPError):
    """No point satisfies the constraints; ``rows`` lists the violated ones."""

    def __init__(self, message: str, rows: list[int], violation: np.ndarray):
        super().__init__(message)
        self.rows = rows
        self.violation = violation


class Unbounded(LPError):
    pass


@dataclass
class LPResult:
    x: np.ndarray
    objective: float
    iterations: int
    max_row_residual: float
    max_bound_residual: float
    basis: np.ndarray = field(repr=False)


class _Simplex:
    def __init__(self, M, lo, hi, basis, x, tol_primal, tol_dual, max_iter):
        self.M = M
        self.lo = lo
        self.hi = hi
        self.basis = basis
        self.x = x
        self.m, self.ncols = M.shape
        self.tp = tol_primal
        self.td = tol_dual
        self.max_iter = max_iter
        self.iterations = 0
        self.is_basic = np.zeros(self.ncols, dtype=bool)
        self.is_basic[basis] = True
        self.refactor()

    def refactor(self):
        B = self.M[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
            raise LPError("singular basis") from exc
        nonbasic = ~self.is_basic
        rhs = -self.M[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ rhs
        self.since_refactor = 0

    def run(self, c):
        stall = 0
        best = np.inf
        bland = False
        while True:
            if self.iterations >= self.max_iter:
                raise LPError(f"simplex iteration limit {self.max_iter} reached")
            y = c[self.basis] @ self.Binv
            d = c - y @ self.M
            x = self.x
            at_lo = x <= self.lo + self.tp
            at_hi = x >= self.hi - self.tp
            fixed = self.hi == self.lo
            can_up = ~self.is_basic & ~fixed & ~at_hi & (d < -self.td)
            can_dn = ~self.is_basic & ~fixed & ~at_lo & (d > self.td)
            eligible = can_up | can_dn
            if not eligible.any():
                return
            if bland:
                q = int(np.flatnonzero(eligible)[0])
            else:
                score = np.where(eligible, np.abs(d), -1.0)
                q = int(np.argmax(score))
            direction = 1.0 if can_up[q] else -1.0
            w = self.Binv @ self.M[:, q]
            self._step(q, direction, w, bland)
            self.iterations += 1
            obj = float(c @ self.x)
            if obj < best - 1e-14 * max(1.0, abs(best)):
                best = obj
                stall = 0
            else:
                stall += 1
                if stall > 50:
                    bland = True

    def _step(self, q, direction, w, bland):
        xb = self.x[self.basis]
        lob = self.lo[self.basis]
        hib = self.hi[self.basis]
        # basic variables move by -direction * t * w
        move = -direction * w
        piv_tol = max(1e-11, 1e-9 * np.abs(w).max())
        dec = move < -piv_tol
        inc = move > piv_tol
        with np.errstate(divide="ignore", invalid="ignore"):
            room = np.full(self.m, INF)
            room[dec] = (xb[dec] - lob[dec]) / -move[dec]
            room[inc] = (hib[inc] - xb[inc]) / move[inc]
            room = np.maximum(room, 0.0)
        flip = self.hi[q] - self.x[q] if direction > 0 else self.x[q] - self.lo[q]
        if bland:
            t = room.min() if self.m else INF
            if t < INF:
                cands = np.flatnonzero(room <= t + 1e-15)
                r = int(cands[np.argmin(self.basis[cands])])
            else:
                r = -1
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                relaxed = np.full(self.m, INF)
                relaxed[dec] = (xb[dec] - lob[dec] + self.tp) / -move[dec]
                relaxed[inc] = (hib[inc] - xb[inc] + self.tp) / move[inc]
            tmax = max(relaxed.min(), 0.0) if self.m else INF
            if tmax < INF:
                cands = np.flatnonzero(room <= tmax)
                if cands.size == 0:
                    cands = np.flatnonzero(room <= room.min())
                r = int(cands[np.argmax(np.abs(move[cands]))])
                t = room[r]
            else:
                r, t = -1, INF
        if flip <= t and flip < INF:
            # entering variable reaches its opposite bound first
            self.x[q] = self.hi[q] if direction > 0 else self.lo[q]
            self.x[self.basis] = xb + move * flip
            return
        if r < 0:
            raise Unbounded("objective unbounded below")
        self.x[self.basis] = xb + move * t
        self.x[q] = self.x[q] + direction * t
        leaving = self.basis[r]
        self.x[leaving] = self.lo[leaving] if move[r] < 0 else self.hi[leaving]
        # product-form update of the inverse
        wr = w[r]
        row = self.Binv[r] / wr
        self.Binv -= np.outer(w, row)
        self.Binv[r] = row
        self.basis[r] = q
        self.is_basic[leaving] = False
        self.is_basic[q] = True
        self.since_refactor += 1
        if self.since_refactor >= 40:
            self.refactor()


def solve(
    c,
    A,
    row_lo,
    row_hi,
    col_lo,
    col_hi,
    *,
    tol_primal: float = 1e-11,
    tol_dual: float = 1e-11,
    feasibility_tol: float = 1e-9,
    max_iter: int = 50_000,
    scale: bool = True,
) -> LPResult:
    """Minimise ``c @ x`` over the box- and range-constrained polytope.

    Raises :class:`Infeasible` when phase one cannot drive the artificial
    variables to zero (the offending rows are attached) and
    :class:`Unbounded` for an unbounded objective.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    c = np.asarray(c, dtype=float)
    row_lo = np.asarray(row_lo, dtype=float)
    row_hi = np.asarray(row_hi, dtype=float)
    col_lo = np.asarray(col_lo, dtype=float)
    col_hi = np.asarray(col_hi, dtype=float)
    if np.any(row_lo > row_hi) or np.any(col_lo > col_hi):
        raise Infeasible("crossed bounds", [int(i) for i in np.flatnonzero(row_lo > row_hi)], np.zeros(m))

    if scale and m:
        # rows with a nonzero finite bound are scaled so that bound is O(1),
        # making the primal tolerance relative; other rows get unit max-norm.
        # Column scaling would squeeze small boxes below the tolerance.
        peak = np.abs(A).max(axis=1)
        bound = np.fmax(np.where(np.isfinite(row_lo), np.abs(row_lo), 0.0), np.where(np.isfinite(row_hi), np.abs(row_hi), 0.0))
        # near-zero bounds (empty decoy cells) would blow coefficients up
        ref = np.where(bound > 0, np.fmax(bound, 1e-9 * peak), peak)
        rs = np.where(ref > 0, 2.0 ** -np.round(np.log2(np.where(ref > 0, ref, 1.0))), 1.0)
        cs = np.ones(n)
    else:
        rs, cs = np.ones(m), np.ones(n)
    As = A * rs[:, None] * cs[None, :]
    lo_x, hi_x = col_lo / cs, col_hi / cs
    lo_s, hi_s = row_lo * rs, row_hi * rs
    cost = c * cs

    # initial nonbasic point: finite bound nearest zero
    x0 = np.where(np.isfinite(lo_x), lo_x, np.where(np.isfinite(hi_x), hi_x, 0.0))
    ax = As @ x0
    # nonbasic slacks must sit on a bound; the nearer finite one
    near_lo = np.abs(ax - lo_s) <= np.abs(ax - hi_s)
    s0 = np.where(np.isfinite(lo_s) & (near_lo | ~np.isfinite(hi_s)), lo_s, hi_s)
    s0 = np.where(np.isfinite(s0), s0, 0.0)
    resid = s0 - ax  # = D a
    sign = np.where(resid >= 0, 1.0, -1.0)
    M = np.hstack([As, -np.eye(m), np.diag(sign)])
    lo = np.concatenate([lo_x, lo_s, np.zeros(m)])
    hi = np.concatenate([hi_x, hi_s, np.full(m, INF)])
    z = np.concatenate([x0, s0, np.abs(resid)])
    basis = np.arange(n + m, n + 2 * m)

    simplex = _Simplex(M, lo, hi, basis, z, tol_primal, tol_dual, max_iter)
    phase1 = np.concatenate([np.zeros(n + m), np.ones(m)])
    simplex.run(phase1)
    simplex.refactor()
    art = simplex.x[n + m :]
    if art.sum() > feasibility_tol * max(1, m) * 1e-2 or np.any(art > feasibility_tol):
        rows = [int(i) for i in np.flatnonzero(art > feasibility_tol)]
        raise Infeasible(f"no feasible point; rows {rows} cannot be satisfied", rows, art / rs)

    simplex.hi[n + m :] = 0.0
    simplex.x[n + m :] = np.minimum(simplex.x[n + m :], 0.0)
    simplex.refactor()
    simplex.run(np.concatenate([cost, np.zeros(2 * m)]))
    simplex.refactor()

    xs = simplex.x[:n]
    x = np.clip(xs * cs, col_lo, col_hi)
    ax = A @ x
    row_res = np.maximum(np.maximum(row_lo - ax, ax - row_hi), 0.0)
    bound_res = np.maximum(np.maximum(col_lo - xs * cs, xs * cs - col_hi), 0.0)
    return LPResult(
        x=x,
        objective=float(c @ x),
        iterations=simplex.iterations,
        max_row_residual=float(row_res.max()) if m else 0.0,
        max_bound_residual=float(bound_res.max()) if n else 0.0,
        basis=simplex.basis.copy(),
    )

"""Box-constrained convex QP solver with optional general inequality rows.

Solves  min 1/2 v'Hv + g'v  s.t.  lo <= v <= hi,  Av >= b
by a primal active-set iteration. Problems here are tiny (dof <= ~20,
k <= ~4), so dense linear algebra per iteration is the right trade.

The returned point never violates the box, whatever the status.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CONVERGED = "converged"
ITERATION_CAPPED = "iteration_capped"

_TIE_TOL = 1e-12


class QpError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class QpInfeasibleError(QpError):
    """General rows admit no point inside the box."""

    def __init__(self, message: str):
        super().__init__("infeasible", message)


@dataclass
class QpResult:
    x: np.ndarray
    status: str
    iterations: int
    kkt_residual: float
    # active constraints at the solution: ("lo", i) / ("hi", i) / ("row", j)
    active: list[tuple[str, int]] = field(default_factory=list)


def _feasible_start(lo: np.ndarray, hi: np.ndarray,
                    A: np.ndarray, b: np.ndarray,
                    max_iter: int = 200) -> np.ndarray:
    """Alternating projection onto the box and the halfspaces Av >= b."""
    x = np.clip(np.zeros_like(lo), lo, hi)
    if A.shape[0] == 0:
        return x
    row_sq = np.sum(A * A, axis=1)
    for j in range(A.shape[0]):
        if row_sq[j] < 1e-300 and b[j] > 1e-12:
            raise QpInfeasibleError(f"zero row {j} with positive bound {b[j]:.3e}")
    for _ in range(max_iter):
        worst = float(np.min(A @ x - b))
        if worst >= -1e-12:
            return x
        for j in range(A.shape[0]):
            if row_sq[j] < 1e-300:
                continue
            viol = b[j] - float(A[j] @ x)
            if viol > 0:
                x = x + A[j] * (viol / row_sq[j])
        x = np.clip(x, lo, hi)
    raise QpInfeasibleError(
        f"no box point satisfies the general rows (residual {worst:.3e})")


def solve_qp(H: np.ndarray, g: np.ndarray,
             lo: np.ndarray, hi: np.ndarray,
             A: np.ndarray | None = None, b: np.ndarray | None = None,
             max_iter: int = 200, tol: float = 1e-8) -> QpResult:
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = g.shape[0]
    A = np.zeros((0, n)) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
    b = np.zeros(0) if b is None else np.atleast_1d(np.asarray(b, dtype=float))
    k = A.shape[0]

    for name, arr in (("H", H), ("g", g), ("lo", lo), ("hi", hi), ("A", A), ("b", b)):
        if not np.all(np.isfinite(arr)):
            raise QpError("nan-input", f"non-finite values in {name}")
    if np.any(lo > hi):
        raise QpError("bad-bounds", "lo > hi")
    if not np.allclose(H, H.T, atol=1e-10):
        raise QpError("not-spd", "H is not symmetric")
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise QpError("not-spd", "H is not positive definite") from None

    x = _feasible_start(lo, hi, A, b)

    # Working set: fixed box coordinates (+1 at hi, -1 at lo) and active rows.
    box_state = np.zeros(n, dtype=int)
    box_state[np.abs(x - lo) < _TIE_TOL] = -1
    box_state[np.abs(x - hi) < _TIE_TOL] = +1
    row_active = np.zeros(k, dtype=bool)
    row_active[:] = np.abs(A @ x - b) < _TIE_TOL if k else False

    status = ITERATION_CAPPED
    it = 0
    for it in range(1, max_iter + 1):
        free = box_state == 0
        r = H @ x + g
        act_rows = np.where(row_active)[0]
        nf = int(free.sum())

        # Step restricted to the working set: minimize on the null space of
        # the active rows over the free coordinates. An exactly-zero step
        # (rather than lstsq noise) is what makes the stationarity test firm.
        p = np.zeros(n)
        if nf:
            Hff = H[np.ix_(free, free)]
            rf = r[free]
            if len(act_rows) == 0:
                p[free] = np.linalg.solve(Hff, -rf)
            else:
                Af = A[act_rows][:, free]
                _u, s, vt = np.linalg.svd(Af, full_matrices=True)
                rank = int(np.sum(s > 1e-10 * max(s[0], 1.0))) if s.size else 0
                Z = vt[rank:].T
                if Z.shape[1]:
                    y = np.linalg.solve(Z.T @ Hff @ Z, -(Z.T @ rf))
                    p[free] = Z @ y

        if np.max(np.abs(p), initial=0.0) <= 1e-11 * (1.0 + np.max(np.abs(x), initial=0.0)):
            # Stationary on the working set; recover multipliers jointly:
            # r = sum(lambda_i * (+-e_i)) + sum(mu_j * a_j), all >= 0.
            cols: list[np.ndarray] = []
            labels: list[tuple[str, int]] = []
            for i in range(n):
                if box_state[i] == -1:
                    e = np.zeros(n)
                    e[i] = 1.0
                    cols.append(e)
                    labels.append(("lo", i))
                elif box_state[i] == +1:
                    e = np.zeros(n)
                    e[i] = -1.0
                    cols.append(e)
                    labels.append(("hi", i))
            for j in act_rows:
                cols.append(A[j])
                labels.append(("row", int(j)))
            if not cols:
                status = CONVERGED
                break
            lam = np.linalg.lstsq(np.array(cols).T, r, rcond=None)[0]
            worst_idx = int(np.argmin(lam))
            if lam[worst_idx] >= -tol * (1.0 + float(np.linalg.norm(r))):
                status = CONVERGED
                break
            kind, idx = labels[worst_idx]
            if kind == "row":
                row_active[idx] = False
            else:
                box_state[idx] = 0
            continue

        # Step length to the nearest blocking constraint outside the set.
        alpha = 1.0
        block: tuple[str, int] | None = None
        for i in np.where(free)[0]:
            if p[i] > _TIE_TOL:
                a_i = (hi[i] - x[i]) / p[i]
                if a_i < alpha - _TIE_TOL:
                    alpha, block = a_i, ("hi", i)
            elif p[i] < -_TIE_TOL:
                a_i = (lo[i] - x[i]) / p[i]
                if a_i < alpha - _TIE_TOL:
                    alpha, block = a_i, ("lo", i)
        for j in range(k):
            if row_active[j]:
                continue
            ap = float(A[j] @ p)
            if ap < -_TIE_TOL:
                a_j = (b[j] - float(A[j] @ x)) / ap
                if a_j < alpha - _TIE_TOL:
                    alpha, block = a_j, ("row", j)

        x = x + max(alpha, 0.0) * p
        if block is not None:
            kind, idx = block
            if kind == "row":
                row_active[idx] = True
            elif kind == "hi":
                box_state[idx] = +1
                x[idx] = hi[idx]
            else:
                box_state[idx] = -1
                x[idx] = lo[idx]

    x = np.clip(x, lo, hi)  # exact box compliance, independent of status

    active = [("lo", int(i)) for i in range(n) if box_state[i] == -1]
    active += [("hi", int(i)) for i in range(n) if box_state[i] == +1]
    active += [("row", int(j)) for j in range(k) if row_active[j]]
    return QpResult(x, status, it, _kkt_residual(H, g, lo, hi, A, b, x), active)


def _kkt_residual(H, g, lo, hi, A, b, x) -> float:
    """Measure of optimality: stationarity with recovered nonnegative
    multipliers over every active constraint, plus primal violation.
    """
    n = len(x)
    r = H @ x + g
    viol = 0.0
    cols = []
    for i in range(n):
        if x[i] - lo[i] < 1e-9:
            e = np.zeros(n)
            e[i] = 1.0
            cols.append(e)
        elif hi[i] - x[i] < 1e-9:
            e = np.zeros(n)
            e[i] = -1.0
            cols.append(e)
    if A.shape[0]:
        slack = A @ x - b
        viol = float(max(0.0, np.max(-slack, initial=0.0)))
        cols.extend(A[j] for j in np.where(slack < 1e-9)[0])
    if cols:
        C = np.array(cols).T
        lam, *_ = np.linalg.lstsq(C, r, rcond=None)
        r = r - C @ np.maximum(lam, 0.0)
    return float(max(np.max(np.abs(r), initial=0.0), viol))

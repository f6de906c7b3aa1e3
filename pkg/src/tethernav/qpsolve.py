"""Dense primal active-set solver for small strictly convex diagonal QPs.

Solves
    minimize    (x - goal)^T diag(weights) (x - goal)
    subject to  A x <= b
with all weights strictly positive, so the minimizer is unique. Constraint
rows are unit-normalized internally, which makes slack values metric and
tolerances meaningful. A Phase-I slack-minimizing LP provides a certified
feasible start (or an infeasibility certificate); Phase II then runs a
null-space active-set iteration with lowest-index (Bland) tie-breaking so
runs are deterministic and terminate.

Everything is pure and reentrant; concurrent solves are safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, nnls


class QpError(ValueError):
    """Malformed QP problem."""


class QpInternalError(RuntimeError):
    """The active-set iteration failed to terminate (should not happen)."""


@dataclass(frozen=True)
class QpProblem:
    """Diagonal-Hessian QP data. weights > 0, A is (p, n), b is (p,)."""

    weights: np.ndarray
    goal: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        g = np.asarray(self.goal, dtype=float).ravel()
        if w.shape != g.shape:
            raise QpError("weights and goal dimensions differ")
        if w.size == 0:
            raise QpError("empty problem")
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            raise QpError("weights must be finite and strictly positive")
        if not np.all(np.isfinite(g)):
            raise QpError("goal must be finite")
        A = np.asarray(self.A, dtype=float).reshape(-1, w.size)
        b = np.asarray(self.b, dtype=float).ravel()
        if A.shape[0] != b.shape[0]:
            raise QpError("A and b row counts differ")
        if not np.all(np.isfinite(A)) or not np.all(np.isfinite(b)):
            raise QpError("constraint data must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "goal", g)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.weights.size

    def cost(self, x) -> float:
        d = np.asarray(x, dtype=float) - self.goal
        return float(d @ (self.weights * d))


@dataclass(frozen=True)
class QpResult:
    """Solve outcome. x and multipliers are None when infeasible.

    ``residual`` is max(A x* - b) over the original rows (0.0 if no rows);
    ``multipliers`` are KKT multipliers for the original rows.
    """

    status: str
    x: np.ndarray | None
    residual: float
    multipliers: np.ndarray | None = None
    iterations: int = 0


_FEAS_TOL = 1e-8


def _row_tols(b):
    return _FEAS_TOL * np.maximum(1.0, np.abs(b))


def solve(problem: QpProblem) -> QpResult:
    """Minimize the QP; returns the unique optimum or an infeasible flag."""
    n = problem.n
    A0, b0 = problem.A, problem.b
    p0 = A0.shape[0]
    if p0 == 0:
        return QpResult("optimal", problem.goal.copy(), 0.0,
                        np.zeros(0), 0)

    scales = np.linalg.norm(A0, axis=1)
    nz = scales > 1e-12
    # zero rows: vacuous if b >= 0 (to tolerance), otherwise contradictory
    if np.any(~nz):
        bad = (~nz) & (b0 < -_row_tols(b0))
        if np.any(bad):
            return QpResult("infeasible", None, float(np.max(-b0[bad])), None, 0)
    keep = np.nonzero(nz)[0]
    A = A0[keep] / scales[keep, None]
    b = b0[keep] / scales[keep]
    p = A.shape[0]
    if p == 0:
        x = problem.goal.copy()
        return QpResult("optimal", x, _max_violation(A0, b0, x), np.zeros(p0), 0)

    tols = _row_tols(b)

    x0 = problem.goal.copy()
    if np.any(A @ x0 - b > tols):
        x0, feasible = _phase1(A, b, tols)
        if not feasible:
            return QpResult("infeasible", None,
                            float(np.max(A @ x0 - b)) if x0 is not None else np.inf,
                            None, 0)

    x, mu_n, iters = _active_set(problem.weights, problem.goal, A, b, tols, x0)

    multipliers = np.zeros(p0)
    multipliers[keep] = mu_n / scales[keep]
    return QpResult("optimal", x, _max_violation(A0, b0, x), multipliers, iters)


def _max_violation(A, b, x) -> float:
    if A.shape[0] == 0:
        return 0.0
    return float(np.max(A @ x - b))


def _phase1(A, b, tols):
    """min s subject to A x - s <= b, s >= 0. Certifies (in)feasibility."""
    p, n = A.shape
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([A, -np.ones((p, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=b,
                  bounds=[(None, None)] * n + [(0.0, None)], method="highs")
    if res.status == 2:
        return None, False
    if res.status != 0:
        raise QpInternalError(f"phase-I LP failed: {res.message}")
    x = res.x[:n]
    s = res.x[-1]
    if s > float(np.max(tols)) * 10 + 1e-12:
        return x, False
    return x, True


def _null_space(M, rcond=1e-11):
    if M.shape[0] == 0:
        return np.eye(M.shape[1])
    _, sv, vh = np.linalg.svd(M)
    rank = int(np.sum(sv > rcond * max(M.shape)))
    return vh[rank:].T


def _active_set(w, goal, A, b, tols, x0):
    """Null-space primal active-set iteration from a feasible x0."""
    n = goal.size
    p = A.shape[0]
    H = 2.0 * w
    x = x0.copy()
    work: list[int] = []
    max_iter = 60 * (p + n) + 100

    for it in range(max_iter):
        g = H * (x - goal)
        Aw = A[work] if work else np.zeros((0, n))
        Z = _null_space(Aw)
        if Z.shape[1] > 0:
            M = Z.T @ (H[:, None] * Z)
            y = np.linalg.solve(M, -(Z.T @ g))
            step = Z @ y
        else:
            step = np.zeros(n)

        if np.max(np.abs(step)) <= 1e-11 * (1.0 + np.max(np.abs(x))):
            # stationary on the working set: certify optimality via NNLS
            if not work:
                return x, np.zeros(p), it
            mu_w, rnorm = nnls(Aw.T, -g)
            if rnorm <= 1e-7 * (1.0 + np.linalg.norm(g)):
                mu = np.zeros(p)
                mu[work] = mu_w
                return x, mu, it
            # not optimal: drop the lowest-index constraint with a negative
            # least-squares multiplier (Bland)
            lam, *_ = np.linalg.lstsq(Aw.T, -g, rcond=None)
            neg = [k for k, v in enumerate(lam) if v < -1e-9]
            if not neg:
                neg = [int(np.argmin(lam))]
            drop = min(neg, key=lambda k: work[k])
            work.pop(drop)
            continue

        # longest feasible step along `step`, lowest-index blocking row
        alpha = 1.0
        blocker = -1
        Ax = A @ x
        Astep = A @ step
        for i in range(p):
            if i in work or Astep[i] <= 1e-12:
                continue
            ai = (b[i] - Ax[i]) / Astep[i]
            if ai < alpha - 1e-12:
                alpha = max(ai, 0.0)
                blocker = i
        x = x + alpha * step
        if blocker >= 0:
            work.append(blocker)
            work.sort()

    raise QpInternalError("active-set iteration limit exceeded")


def project(point, A, b) -> QpResult:
    """Euclidean projection of a point onto {x: A x <= b} (unit weights)."""
    q = np.asarray(point, dtype=float).ravel()
    prob = QpProblem(np.ones(q.size), q, A, b)
    return solve(prob)


def kkt_residuals(problem: QpProblem, result: QpResult) -> dict:
    """Stationarity / complementary-slackness / primal residuals at x*."""
    if result.status != "optimal":
        raise QpError("KKT check requires an optimal result")
    x = result.x
    mu = result.multipliers
    g = 2.0 * problem.weights * (x - problem.goal)
    if problem.A.shape[0]:
        stat = float(np.max(np.abs(g + problem.A.T @ mu)))
        slack = problem.b - problem.A @ x
        comp = float(np.max(np.abs(mu * slack)))
        primal = float(np.max(-slack.clip(max=0.0), initial=0.0))
        dual = float(np.max(-mu, initial=0.0))
    else:
        stat = float(np.max(np.abs(g)))
        comp = 0.0
        primal = 0.0
        dual = 0.0
    return {"stationarity": stat, "complementarity": comp,
            "primal": primal, "dual": dual}

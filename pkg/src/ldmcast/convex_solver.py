"""Convex subproblem engine for the two problem classes the solvers need.

* linear objective over affine and second-order-cone constraints;
* concave ``sum_k d_k log2(1 + a_k(x))`` objective (plus a linear part) over
  the same constraint classes, lowered to exponential cones.

The interior-point work is done by Clarabel.  Every status it reports is
re-checked here: ``OPTIMAL`` requires our own measured relative gap and
constraint violation to be within tolerance, and ``INFEASIBLE`` requires a
Farkas ray that survives projection onto the dual cone and certifies
infeasibility over the variable box (see :func:`_certify_infeasible`).
Anything else is reported as ``NUMERICAL_FAILURE``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum

import clarabel
import numpy as np
import scipy.sparse as sp

LN2 = math.log(2.0)


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITER_LIMIT = "iter_limit"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class Linear:
    c: np.ndarray
    constant: float = 0.0
    maximize: bool = False


@dataclass
class LogSum:
    """Maximize ``sum_k weights[k] * log2(1 + A[k] @ x + b[k]) + linear @ x``."""

    weights: np.ndarray
    A: np.ndarray
    b: np.ndarray
    linear: np.ndarray | None = None
    constant: float = 0.0


@dataclass
class SecondOrderCone:
    """``||A @ x + b||_2 <= c @ x + d``."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float


@dataclass
class ConicProgram:
    n: int
    objective: Linear | LogSum
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    cones: list[SecondOrderCone] = field(default_factory=list)
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        n = self.n
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, float)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, float)
        self.A_eq, self.b_eq = _affine(self.A_eq, self.b_eq, n)
        self.A_ub, self.b_ub = _affine(self.A_ub, self.b_ub, n)
        if np.any(self.lb > self.ub):
            raise ValueError("variable bounds cross")
        for cone in self.cones:
            cone.A = np.atleast_2d(np.asarray(cone.A, float))
            cone.b = np.asarray(cone.b, float).reshape(-1)
            cone.c = np.asarray(cone.c, float).reshape(-1)
            if cone.A.shape != (cone.b.size, n) or cone.c.size != n:
                raise ValueError("second-order cone dimensions are inconsistent")
        obj = self.objective
        if isinstance(obj, Linear):
            obj.c = np.asarray(obj.c, float).reshape(-1)
            if obj.c.size != n:
                raise ValueError("objective length mismatch")
        else:
            obj.weights = np.asarray(obj.weights, float).reshape(-1)
            obj.A = np.atleast_2d(np.asarray(obj.A, float))
            obj.b = np.asarray(obj.b, float).reshape(-1)
            if np.any(obj.weights < 0):
                raise ValueError("log weights must be nonnegative")
            if obj.A.shape != (obj.weights.size, n) or obj.b.size != obj.weights.size:
                raise ValueError("log-sum dimensions are inconsistent")
            if obj.linear is not None:
                obj.linear = np.asarray(obj.linear, float).reshape(-1)

    def objective_value(self, x: np.ndarray) -> float:
        obj = self.objective
        if isinstance(obj, Linear):
            return float(obj.c @ x + obj.constant)
        arg = np.maximum(obj.A @ x + obj.b, 0.0)
        val = float(obj.weights @ np.log2(1.0 + arg) + obj.constant)
        if obj.linear is not None:
            val += float(obj.linear @ x)
        return val

    def max_violation(self, x: np.ndarray) -> float:
        """Largest constraint violation, each scaled by ``1 + |rhs|``."""
        worst = 0.0
        if self.A_eq.shape[0]:
            worst = max(worst, float(np.max(np.abs(self.A_eq @ x - self.b_eq) / (1 + np.abs(self.b_eq)))))
        if self.A_ub.shape[0]:
            worst = max(worst, float(np.max((self.A_ub @ x - self.b_ub) / (1 + np.abs(self.b_ub)))))
        with np.errstate(invalid="ignore"):
            lo = np.where(np.isfinite(self.lb), (self.lb - x) / (1 + np.abs(self.lb)), 0.0)
            hi = np.where(np.isfinite(self.ub), (x - self.ub) / (1 + np.abs(self.ub)), 0.0)
        worst = max(worst, float(np.max(lo, initial=0.0)), float(np.max(hi, initial=0.0)))
        for cone in self.cones:
            gap = np.linalg.norm(cone.A @ x + cone.b) - (cone.c @ x + cone.d)
            worst = max(worst, gap / (1 + abs(cone.d) + np.linalg.norm(cone.b)))
        if isinstance(self.objective, LogSum):
            arg = self.objective.A @ x + self.objective.b
            worst = max(worst, float(np.max(-arg / (1 + np.abs(self.objective.b)), initial=0.0)))
        return max(worst, 0.0)


def _affine(A, b, n):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A.toarray() if sp.issparse(A) else A, float))
    b = np.asarray(b, float).reshape(-1)
    if A.shape != (b.size, n):
        raise ValueError("affine block dimensions are inconsistent")
    return A, b


@dataclass
class ConicResult:
    status: Status
    x: np.ndarray | None
    objective: float
    gap: float = math.inf
    violation: float = math.inf
    iterations: int = 0
    solve_time: float = 0.0
    duals: np.ndarray | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass
class _Lowered:
    P: sp.csc_matrix
    q: np.ndarray
    A: np.ndarray
    b: np.ndarray
    cones: list
    blocks: list  # (kind, start, size) for dual-cone checks
    free: np.ndarray
    x_fixed: np.ndarray
    n_aux: int
    radius: float


def _lower(prog: ConicProgram) -> _Lowered:
    n = prog.n
    fixed = prog.lb == prog.ub
    free = ~fixed
    x_fixed = np.where(fixed, prog.lb, 0.0)
    nf = int(free.sum())
    obj = prog.objective
    n_log = obj.weights.size if isinstance(obj, LogSum) else 0
    nv = nf + n_log

    def split(A, b):
        # rows of the form ``A x (<=, =) b``: fixed terms move to the right side
        return A[:, free], b - A[:, fixed] @ x_fixed[fixed]

    def shift(A, b):
        # affine terms ``A x + b``: fixed terms fold into the constant
        return A[:, free], b + A[:, fixed] @ x_fixed[fixed]

    rows, rhs, cones, blocks = [], [], [], []

    def pad(A):
        return np.hstack([A, np.zeros((A.shape[0], n_log))]) if n_log else A

    # zero cone
    Aeq, beq = split(prog.A_eq, prog.b_eq)
    keep = np.any(Aeq != 0, axis=1) | (np.abs(beq) > 0)
    Aeq, beq = Aeq[keep], beq[keep]
    if Aeq.shape[0]:
        rows.append(pad(Aeq))
        rhs.append(beq)
        cones.append(clarabel.ZeroConeT(Aeq.shape[0]))
        blocks.append(("zero", Aeq.shape[0]))

    # nonnegative cone: inequalities, bounds, degenerate cones, log domains
    nn_rows, nn_rhs = [], []
    Aub, bub = split(prog.A_ub, prog.b_ub)
    nn_rows.append(pad(Aub))
    nn_rhs.append(bub)
    lbf, ubf = prog.lb[free], prog.ub[free]
    eye = np.eye(nf)
    has_lb, has_ub = np.isfinite(lbf), np.isfinite(ubf)
    nn_rows.append(pad(-eye[has_lb]))
    nn_rhs.append(-lbf[has_lb])
    nn_rows.append(pad(eye[has_ub]))
    nn_rhs.append(ubf[has_ub])
    soc_parts = []
    for cone in prog.cones:
        A_c, b_c = shift(cone.A, cone.b)
        c_f = cone.c[free]
        d = cone.d + cone.c[fixed] @ x_fixed[fixed]
        live = np.any(A_c != 0, axis=1) | (b_c != 0)
        A_c, b_c = A_c[live], b_c[live]
        if A_c.shape[0] == 0:
            nn_rows.append(pad(-c_f[None, :]))
            nn_rhs.append(np.array([d]))
        else:
            soc_parts.append((np.vstack([-c_f[None, :], -A_c]), np.concatenate([[d], b_c])))
    if n_log:
        G, g0 = shift(obj.A, obj.b)
        nn_rows.append(pad(-G))
        nn_rhs.append(g0)
    nn_A = np.vstack(nn_rows)
    nn_b = np.concatenate(nn_rhs)
    if nn_A.shape[0]:
        rows.append(nn_A)
        rhs.append(nn_b)
        cones.append(clarabel.NonnegativeConeT(nn_A.shape[0]))
        blocks.append(("nonneg", nn_A.shape[0]))
    for A_s, b_s in soc_parts:
        rows.append(pad(A_s))
        rhs.append(b_s)
        cones.append(clarabel.SecondOrderConeT(A_s.shape[0]))
        blocks.append(("soc", A_s.shape[0]))
    q = np.zeros(nv)
    if n_log:
        for k in range(n_log):
            blk = np.zeros((3, nv))
            blk[0, nf + k] = -1.0
            blk[2, :nf] = -G[k]
            rows.append(blk)
            rhs.append(np.array([0.0, 1.0, 1.0 + g0[k]]))
            cones.append(clarabel.ExponentialConeT())
            blocks.append(("exp", 3))
        q[nf:] = -obj.weights / LN2
        if obj.linear is not None:
            q[:nf] = -obj.linear[free]
    else:
        q[:nf] = -obj.c[free] if obj.maximize else obj.c[free]
    A = np.vstack(rows) if rows else np.zeros((0, nv))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    bound = np.maximum(np.abs(lbf), np.abs(ubf))
    radius = float(np.linalg.norm(bound)) if n_log == 0 else math.inf
    return _Lowered(sp.csc_matrix((nv, nv)), q, A, b, cones, blocks, free, x_fixed, n_log, radius)


def _project_soc(v):
    t, x = v[0], v[1:]
    nx = np.linalg.norm(x)
    if nx <= t:
        return v
    if nx <= -t:
        return np.zeros_like(v)
    a = (t + nx) / 2.0
    return np.concatenate([[a], a * x / nx])


def _in_exp_dual(v, tol=1e-9):
    u, v2, w = v
    if u < -tol:
        return -u * math.exp(v2 / u) <= math.e * w + tol
    return abs(u) <= tol and v2 >= -tol and w >= -tol


def _certify_infeasible(low: _Lowered, z: np.ndarray) -> bool:
    """Check a Farkas ray ``y in K*, A^T y ~ 0, b^T y < 0``.

    For any feasible x the slack ``b - A x`` lies in K, so
    ``0 <= y^T (b - A x) <= b^T y + ||A^T y|| * ||x||``.  With the ray scaled
    to ``b^T y = -1`` the system is provably infeasible whenever
    ``||A^T y|| * R < 1``, where R bounds ``||x||`` over the variable box.
    """
    if z is None or not np.all(np.isfinite(z)):
        return False
    bz = float(low.b @ z)
    if not bz < 0:
        return False
    y = z / -bz
    out = np.empty_like(y)
    pos = 0
    for kind, size in low.blocks:
        seg = y[pos:pos + size]
        if kind == "nonneg":
            seg = np.maximum(seg, 0.0)
        elif kind == "soc":
            seg = _project_soc(seg)
        elif kind == "exp" and not _in_exp_dual(seg):
            return False
        out[pos:pos + size] = seg
        pos += size
    by = float(low.b @ out)
    if not by < 0:
        return False
    resid = float(np.linalg.norm(low.A.T @ out))
    if math.isfinite(low.radius):
        return resid * low.radius < -by * (1 - 1e-9)
    return resid <= 1e-9 * -by


# Clarabel settings tried in order when an answer fails verification.  Short
# steps and stronger regularization rescue the occasional stalled solve on
# badly scaled exponential-cone programs.
RETRY_SETTINGS = (
    {},
    {"max_step_fraction": 0.9},
    {"max_step_fraction": 0.8},
    {"static_regularization_constant": 1e-7},
)
# Clarabel measures residuals in its own scaling; asking it for a margin below
# our verification tolerances avoids rejecting answers that sit on the edge.
INTERNAL_MARGIN = 0.1


def solve(prog: ConicProgram, eps_sub: float = 1e-8, feas_tol: float = 1e-8, max_iter: int = 200) -> ConicResult:
    if eps_sub <= 0 or feas_tol <= 0:
        raise ValueError("tolerances must be positive")
    t0 = time.perf_counter()
    low = _lower(prog)
    nf = int(low.free.sum())
    if nf == 0 and low.n_aux == 0:
        x = low.x_fixed.copy()
        viol = prog.max_violation(x)
        status = Status.OPTIMAL if viol <= feas_tol else Status.INFEASIBLE
        return ConicResult(status, x, prog.objective_value(x), 0.0, viol, 0, time.perf_counter() - t0)
    result = None
    for extra in RETRY_SETTINGS:
        result = _solve_once(prog, low, eps_sub, feas_tol, max_iter, extra)
        if result.status in (Status.OPTIMAL, Status.INFEASIBLE, Status.UNBOUNDED):
            break
    result.solve_time = time.perf_counter() - t0
    return result


def _solve_once(prog: ConicProgram, low: _Lowered, eps_sub: float, feas_tol: float, max_iter: int,
                extra: dict) -> ConicResult:
    t0 = time.perf_counter()
    nf = int(low.free.sum())
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = max_iter
    settings.tol_gap_abs = INTERNAL_MARGIN * eps_sub
    settings.tol_gap_rel = INTERNAL_MARGIN * eps_sub
    settings.tol_feas = INTERNAL_MARGIN * feas_tol
    settings.tol_infeas_abs = feas_tol
    settings.tol_infeas_rel = feas_tol
    settings.presolve_enable = False
    for key, value in extra.items():
        setattr(settings, key, value)
    try:
        solver = clarabel.DefaultSolver(low.P, low.q, sp.csc_matrix(low.A), low.b, low.cones, settings)
        sol = solver.solve()
    except Exception as exc:  # pragma: no cover - solver-side failure
        return ConicResult(Status.NUMERICAL_FAILURE, None, math.nan, detail=str(exc),
                           solve_time=time.perf_counter() - t0)
    raw = str(sol.status)
    z = np.asarray(sol.z)
    elapsed = time.perf_counter() - t0
    iters = int(sol.iterations)

    if raw in ("Solved", "AlmostSolved", "MaxIterations", "InsufficientProgress"):
        xv = np.asarray(sol.x)
        x = low.x_fixed.copy()
        x[low.free] = xv[:nf]
        viol = prog.max_violation(x)
        p, d = float(sol.obj_val), float(sol.obj_val_dual)
        gap = abs(p - d) / max(1.0, abs(p))
        if viol <= feas_tol and gap <= eps_sub:
            return ConicResult(Status.OPTIMAL, x, prog.objective_value(x), gap, viol, iters, elapsed, z, raw)
        status = Status.ITER_LIMIT if raw == "MaxIterations" else Status.NUMERICAL_FAILURE
        return ConicResult(status, x, prog.objective_value(x), gap, viol, iters, elapsed, z, raw)
    if raw in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        if _certify_infeasible(low, z):
            return ConicResult(Status.INFEASIBLE, None, math.nan, iterations=iters, solve_time=elapsed,
                               duals=z, detail=raw)
        return ConicResult(Status.NUMERICAL_FAILURE, None, math.nan, iterations=iters, solve_time=elapsed,
                           duals=z, detail=raw + " (certificate rejected)")
    if raw in ("DualInfeasible", "AlmostDualInfeasible"):
        return ConicResult(Status.UNBOUNDED, None, math.nan, iterations=iters, solve_time=elapsed, detail=raw)
    if raw == "MaxTime":
        return ConicResult(Status.ITER_LIMIT, None, math.nan, iterations=iters, solve_time=elapsed, detail=raw)
    return ConicResult(Status.NUMERICAL_FAILURE, None, math.nan, iterations=iters, solve_time=elapsed, detail=raw)


class ProgramBuilder:
    """Incremental assembly of a :class:`ConicProgram` from dense rows."""

    def __init__(self, n: int):
        self.n = n
        self.eq_rows: list[np.ndarray] = []
        self.eq_rhs: list[float] = []
        self.ub_rows: list[np.ndarray] = []
        self.ub_rhs: list[float] = []
        self.cones: list[SecondOrderCone] = []
        self.lb = np.full(n, -np.inf)
        self.ub = np.full(n, np.inf)

    def eq(self, row, rhs: float):
        self.eq_rows.append(np.asarray(row, float))
        self.eq_rhs.append(float(rhs))

    def le(self, row, rhs: float):
        self.ub_rows.append(np.asarray(row, float))
        self.ub_rhs.append(float(rhs))

    def ge(self, row, rhs: float):
        self.le(-np.asarray(row, float), -rhs)

    def soc(self, A, b, c, d: float):
        self.cones.append(SecondOrderCone(np.asarray(A, float), np.asarray(b, float), np.asarray(c, float), float(d)))

    def quad_le(self, A, b, c, d: float):
        """``||A x + b||^2 <= c @ x + d`` as a rotated cone."""
        A = np.atleast_2d(np.asarray(A, float))
        b = np.asarray(b, float)
        c = np.asarray(c, float)
        # ||(2(Ax+b), u-1)|| <= u+1  with u = c x + d
        self.soc(np.vstack([2 * A, c[None, :]]), np.concatenate([2 * b, [d - 1.0]]), c, d + 1.0)

    def build(self, objective) -> ConicProgram:
        n = self.n
        A_eq = np.vstack(self.eq_rows) if self.eq_rows else None
        A_ub = np.vstack(self.ub_rows) if self.ub_rows else None
        return ConicProgram(
            n, objective,
            A_eq, np.array(self.eq_rhs) if self.eq_rows else None,
            A_ub, np.array(self.ub_rhs) if self.ub_rows else None,
            self.cones, self.lb.copy(), self.ub.copy(),
        )

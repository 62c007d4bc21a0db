"""Low-complexity local solver: smoothed l0 clustering plus the convex-concave procedure.

Stage one replaces the binary clustering by ``s >= f_theta(||w_{k,n}||^2)``
with the concave surrogate ``f_theta(x) = (2/pi) arctan(x / theta)``, writes
every bilinear or ratio term as a difference of convex functions and
iterates convex subproblems in which the concave parts are linearized at the
current point.  Stage two fixes the links whose power is above a threshold
and runs the same procedure on the resulting fixed-cluster problem with the
exact backhaul rows.

Quantities inside the subproblems are normalized the same way as in the
branch-and-bound solver (unit noise, powers over ``max_n P_n``, capacities
over the bandwidth), so rates are in bit/s/Hz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .convex_solver import LogSum, ProgramBuilder, Status, solve
from .envelopes import InnerProducts, Layout
from .model import (
    BeamformerSet,
    ClusterAssignment,
    ProblemInstance,
    Solution,
    achieved_rates,
    backhaul_scale,
    drop_idle_links,
    make_solution,
    rate_upper_bounds,
    zero_solution,
)
from .scenario import dbm_to_watts

LN2 = math.log(2.0)
GAMMA_FLOOR = 1e-9
T_FLOOR = math.log2(1.0 + GAMMA_FLOOR)
# Messages whose final rate is at or below this (bit/s/Hz) only exist because
# of the SINR floor; they are switched off in the reported solution.
IDLE_RATE = 1e-6


@dataclass(frozen=True)
class CcpOptions:
    theta: float = 1e-6  # W
    power_threshold: float = float(dbm_to_watts(-30.0))  # W
    rel_tol: float = 1e-3
    max_iter: int = 40
    restarts: int = 3
    seed: int = 0
    eps_sub: float = 1e-8

    def __post_init__(self):
        for name in ("theta", "power_threshold", "rel_tol", "max_iter", "restarts", "eps_sub"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def smooth_l0(x, theta: float):
    """Concave surrogate ``(2/pi) arctan(x/theta)`` of the indicator ``1{x > 0}``."""
    x = np.asarray(x, float)
    if np.any(x < 0):
        raise ValueError("smooth_l0 is defined for x >= 0")
    if not theta > 0:
        raise ValueError("theta must be positive")
    out = (2.0 / math.pi) * np.arctan(x / theta)
    return float(out) if out.ndim == 0 else out


def smooth_l0_grad(x, theta: float):
    x = np.asarray(x, float)
    if np.any(x < 0):
        raise ValueError("smooth_l0 is defined for x >= 0")
    out = (2.0 / math.pi) * theta / (theta * theta + x * x)
    return float(out) if out.ndim == 0 else out


@dataclass
class CcpPoint:
    """Iterate of the smoothed problem in normalized units.

    ``w`` is ``(K+1, N*L)``; ``gamma`` and ``t`` have length ``K+1``; ``s`` and
    ``alpha`` are ``(K+1, N)``.
    """

    w: np.ndarray
    gamma: np.ndarray
    t: np.ndarray
    s: np.ndarray
    alpha: np.ndarray
    objective: float = 0.0
    stalled: bool = False


class CcpContext:
    """Normalized data shared by the subproblems of one instance.

    ``enabled`` (length ``K+1``) switches messages off: a disabled message keeps
    a zero beamformer and zero rate throughout.
    """

    def __init__(self, instance: ProblemInstance, opts: CcpOptions | None = None, enabled=None):
        self.instance = instance
        self.opts = opts or CcpOptions()
        K, N, L = instance.K, instance.N, instance.L
        self.K, self.N, self.L, self.M = K, N, L, K + 1
        self.p_ref = float(instance.bs_power.max())
        self.H = instance.channels * math.sqrt(self.p_ref) / np.sqrt(instance.noise)[:, None]
        self.Hb = self.H.reshape(K, N, L)
        self.P = instance.bs_power / self.p_ref
        # capacity above the sum of the rate caps never binds; clamping it keeps the subproblems well scaled
        self.C = np.minimum(instance.backhaul / instance.bandwidth, rate_upper_bounds(instance).r.sum() + 1.0)
        self.theta = self.opts.theta / self.p_ref
        self.active = self.C > 0
        self.enabled = np.ones(self.M, bool) if enabled is None else np.asarray(enabled, bool).copy()
        if self.enabled.shape != (self.M,):
            raise ValueError("enabled must have one entry per message")
        self.weights = np.full(self.M, 1.0 - instance.eta)
        self.weights[0] = instance.eta
        MN = self.M * N
        self.layout = Layout(K, N, L, {"gamma": self.M, "t": self.M, "s": MN, "alpha": MN})
        self.ip = InnerProducts(self.layout, self.H)

    def inner(self, w: np.ndarray) -> np.ndarray:
        """``Z[k, m] = h_k^H w_m`` for normalized beamformers."""
        return np.conj(self.H) @ w.T

    def sinr(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g = np.abs(self.inner(w)) ** 2
        total = g[:, 1:].sum(axis=1)
        sig = g[np.arange(self.K), np.arange(1, self.K + 1)]
        return g[:, 0] / (total + 1.0), sig / (total - sig + 1.0)

    def block_power(self, w: np.ndarray) -> np.ndarray:
        return np.sum(np.abs(w.reshape(self.M, self.N, self.L)) ** 2, axis=2)

    def objective(self, gamma: np.ndarray) -> float:
        return float(self.weights @ np.log2(1.0 + np.maximum(gamma, 0.0)))

    def to_physical(self, w: np.ndarray) -> BeamformerSet:
        return BeamformerSet(w * math.sqrt(self.p_ref), self.L)


def _scale_power(ctx: CcpContext, w: np.ndarray, fill: bool) -> np.ndarray:
    """Scale each BS's beams to its budget (``fill``: use the full budget)."""
    blocks = w.reshape(ctx.M, ctx.N, ctx.L).copy()
    load = np.sum(np.abs(blocks) ** 2, axis=(0, 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.sqrt(ctx.P / load)
    factor = np.where(load > 0, factor, 0.0)
    if not fill:
        factor = np.minimum(factor, 1.0)
    blocks *= factor[None, :, None]
    return blocks.reshape(ctx.M, -1)


def _fit_rates(t: np.ndarray, weights: np.ndarray, capacity: np.ndarray) -> np.ndarray:
    """Shrink ``t`` towards the floor until ``weights.T @ t <= capacity`` per BS.

    ``weights`` is ``(M, N)``; only the part of ``t`` above the floor is scaled.
    """
    base = weights.T @ np.full(t.shape, T_FLOOR)
    excess = weights.T @ np.maximum(t - T_FLOOR, 0.0)
    lam = 1.0
    for cap, b, e in zip(capacity, base, excess):
        if e > 0 and b + e > cap:
            lam = min(lam, max(cap - b, 0.0) / e)
    # absorb rounding so the rows hold exactly in floating point
    lam *= 1.0 - 1e-12
    return T_FLOOR + lam * np.maximum(t - T_FLOOR, 0.0)


def feasible_init(instance: ProblemInstance, seed: int = 0, opts: CcpOptions | None = None,
                  ctx: CcpContext | None = None) -> CcpPoint:
    """Random feasible starting point for the smoothed problem."""
    ctx = ctx or CcpContext(instance, opts)
    rng = np.random.default_rng(seed)
    M, N, L = ctx.M, ctx.N, ctx.L
    if not np.any(ctx.active) or not np.any(ctx.enabled):
        return _zero_point(ctx)
    for _ in range(16):
        w = (rng.standard_normal((M, N, L)) + 1j * rng.standard_normal((M, N, L))) / math.sqrt(2.0)
        w[:, ~ctx.active, :] = 0.0
        w[~ctx.enabled] = 0.0
        w = _scale_power(ctx, w.reshape(M, -1), fill=True)
        sm, su = ctx.sinr(w)
        gamma = np.where(ctx.enabled, np.concatenate([[sm.min()], su]), 0.0)
        if np.all(gamma[ctx.enabled] >= 10 * GAMMA_FLOOR):
            break
    else:  # pragma: no cover - only with pathological channels
        return _zero_point(ctx)
    alpha = ctx.block_power(w)
    s = smooth_l0(alpha, ctx.theta)
    t = _fit_rates(np.log2(1.0 + gamma), s, ctx.C)
    gamma = np.minimum(np.exp2(t) - 1.0, gamma)
    t = np.log2(1.0 + gamma)
    return CcpPoint(w, gamma, t, s, alpha, ctx.objective(gamma))


def _zero_point(ctx: CcpContext) -> CcpPoint:
    M, N = ctx.M, ctx.N
    return CcpPoint(np.zeros((M, N * ctx.L), complex), np.zeros(M), np.zeros(M), np.zeros((M, N)),
                    np.zeros((M, N)), 0.0)


def pdc_violation(ctx: CcpContext, p: CcpPoint) -> float:
    """Largest relative violation of the smoothed (difference-of-convex) constraints."""
    worst = 0.0
    g = np.abs(ctx.inner(p.w)) ** 2
    total = g[:, 1:].sum(axis=1)
    sig = g[np.arange(ctx.K), np.arange(1, ctx.K + 1)]
    mc = p.gamma[0] * (total + 1.0) - g[:, 0]
    uc = p.gamma[1:] * (total - sig + 1.0) - sig
    worst = max(worst, float(np.max(mc / (1.0 + g[:, 0]))), float(np.max(uc / (1.0 + sig))))
    bp = ctx.block_power(p.w)
    worst = max(worst, float(np.max((bp.sum(axis=0) - ctx.P) / ctx.P)))
    worst = max(worst, float(np.max(bp - p.alpha)))
    worst = max(worst, float(np.max(smooth_l0(np.maximum(p.alpha, 0.0), ctx.theta) - p.s)))
    worst = max(worst, float(np.max(np.log2(1.0 + np.maximum(p.gamma, 0.0)) - p.t)))
    load = np.einsum("mn,m->n", p.s, p.t)
    worst = max(worst, float(np.max((load - ctx.C) / (1.0 + ctx.C))))
    if np.any(~ctx.active):
        worst = max(worst, float(np.max(bp[:, ~ctx.active])), float(np.max(p.s[:, ~ctx.active])))
    return max(worst, 0.0)


def _sinr_rows(b: ProgramBuilder, ctx: CcpContext, w: np.ndarray, gamma: np.ndarray, live: np.ndarray):
    """Linearized SINR rows for the live messages.

    ``interference + 1 <= |z|^2 / gamma`` with the convex quadratic-over-linear
    right side replaced by its tangent at ``(z_t, gamma_t)``.
    """
    lay, ip = ctx.layout, ctx.ip
    Z = ctx.inner(w)
    ig = lay.slices["gamma"].start
    for m in range(ctx.M):
        if not live[m]:
            continue
        users = range(ctx.K) if m == 0 else [m - 1]
        gt = max(gamma[m], GAMMA_FLOOR)
        for k in users:
            interferers = [j for j in range(1, ctx.M) if j != m and live[j]]
            A = ip.interference(k, interferers)
            A = np.vstack([A, np.zeros((1, lay.n))])
            bvec = np.zeros(A.shape[0])
            bvec[-1] = 1.0
            z = Z[k, m]
            c = 2.0 * (z.real * ip.re[k, m] + z.imag * ip.im[k, m]) / gt
            c[ig + m] -= abs(z) ** 2 / gt ** 2
            # divide by the tangent's value at the expansion point so the cone is O(1)
            kappa = max(1.0, abs(z) ** 2 / gt)
            b.quad_le(A / math.sqrt(kappa), bvec / math.sqrt(kappa), c / kappa, 0.0)


def _log_tangent(gamma_t: float) -> tuple[float, float]:
    """``(value, slope)`` of ``log2(1 + gamma)`` at ``gamma_t``."""
    return math.log2(1.0 + gamma_t), 1.0 / ((1.0 + gamma_t) * LN2)


def _common_bounds(b: ProgramBuilder, ctx: CcpContext, allowed: np.ndarray, live: np.ndarray):
    lay = ctx.layout
    for m in range(ctx.M):
        for n in range(ctx.N):
            amp = math.sqrt(ctx.P[n]) if allowed[m, n] else 0.0
            re, im = lay.block(m, n)
            b.lb[re], b.ub[re] = -amp, amp
            b.lb[im], b.ub[im] = -amp, amp
    ig = lay.slices["gamma"]
    b.lb[ig] = np.where(live, GAMMA_FLOOR, 0.0)
    b.ub[ig] = np.where(live, np.inf, 0.0)
    for n in range(ctx.N):
        if not allowed[:, n].any():
            continue
        rows = []
        for m in range(ctx.M):
            re, im = lay.block(m, n)
            for idx in (re, im):
                r = np.zeros((ctx.L, lay.n))
                r[np.arange(ctx.L), idx] = 1.0
                rows.append(r)
        b.soc(np.vstack(rows), np.zeros(2 * ctx.M * ctx.L), np.zeros(lay.n), math.sqrt(ctx.P[n]))


def _unpack(ctx: CcpContext, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lay = ctx.layout
    return lay.unpack_w(x), x[lay.slices["gamma"]].copy()


def _objective(ctx: CcpContext, live: np.ndarray) -> LogSum:
    lay = ctx.layout
    A = np.zeros((ctx.M, lay.n))
    A[np.arange(ctx.M), lay.slices["gamma"].start + np.arange(ctx.M)] = 1.0
    return LogSum(np.where(live, ctx.weights, 0.0), A, np.zeros(ctx.M))


def build_subproblem(ctx: CcpContext, p: CcpPoint):
    """Convex subproblem of the smoothed problem linearized at ``p``."""
    lay = ctx.layout
    M, N = ctx.M, ctx.N
    b = ProgramBuilder(lay.n)
    allowed = ctx.active[None, :] & ctx.enabled[:, None]
    live = ctx.enabled
    _common_bounds(b, ctx, allowed, live)
    it, is_, ia = (lay.slices[name].start for name in ("t", "s", "alpha"))
    ig = lay.slices["gamma"].start
    b.lb[it:it + M] = 0.0
    b.ub[it:it + M] = np.where(live, np.inf, 0.0)
    for m in range(M):
        for n in range(N):
            j = m * N + n
            if allowed[m, n]:
                b.lb[is_ + j] = 0.0  # s <= 1 is implied and left out for conditioning
                b.lb[ia + j], b.ub[ia + j] = 0.0, ctx.P[n]
            else:
                b.lb[is_ + j] = b.ub[is_ + j] = 0.0
                b.lb[ia + j] = b.ub[ia + j] = 0.0
    _sinr_rows(b, ctx, p.w, p.gamma, live)
    for m in range(M):
        val, slope = _log_tangent(max(p.gamma[m], 0.0))
        row = np.zeros(lay.n)
        row[ig + m] = slope
        row[it + m] = -1.0
        b.le(row, slope * p.gamma[m] - val)
    for n in np.flatnonzero(ctx.active):
        for m in range(M):
            j = m * N + n
            re, im = lay.block(m, n)
            A = np.zeros((2 * ctx.L, lay.n))
            A[np.arange(ctx.L), re] = 1.0
            A[np.arange(ctx.L, 2 * ctx.L), im] = 1.0
            c = np.zeros(lay.n)
            c[ia + j] = 1.0
            b.quad_le(A, np.zeros(2 * ctx.L), c, 0.0)
            a_t = max(p.alpha[m, n], 0.0)
            f, df = smooth_l0(a_t, ctx.theta), smooth_l0_grad(a_t, ctx.theta)
            row = np.zeros(lay.n)
            row[ia + j] = df
            row[is_ + j] = -1.0
            b.le(row, df * a_t - f)
        A = np.zeros((M, lay.n))
        c = np.zeros(lay.n)
        d = 4.0 * ctx.C[n]
        for m in range(M):
            j = m * N + n
            A[m, is_ + j] = 1.0
            A[m, it + m] = 1.0
            dm = p.s[m, n] - p.t[m]
            c[is_ + j] += 2.0 * dm
            c[it + m] -= 2.0 * dm
            d -= dm * dm
        b.quad_le(A, np.zeros(M), c, d)
    return b.build(_objective(ctx, live))


def ccp_iterate(instance: ProblemInstance, point: CcpPoint, opts: CcpOptions | None = None,
                ctx: CcpContext | None = None) -> CcpPoint:
    """One convexified step; returns the input (flagged ``stalled``) if the solve fails."""
    ctx = ctx or CcpContext(instance, opts)
    prog = build_subproblem(ctx, point)
    res = solve(prog, eps_sub=ctx.opts.eps_sub)
    if res.status is not Status.OPTIMAL:
        return CcpPoint(point.w, point.gamma, point.t, point.s, point.alpha, point.objective, True)
    lay = ctx.layout
    x = res.x
    w, gamma = _unpack(ctx, x)
    M, N = ctx.M, ctx.N
    return CcpPoint(
        w, gamma, x[lay.slices["t"]].copy(),
        x[lay.slices["s"]].reshape(M, N).copy(), x[lay.slices["alpha"]].reshape(M, N).copy(),
        ctx.objective(gamma),
    )


@dataclass
class CcpRun:
    point: CcpPoint
    trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _relative_increase(new: float, old: float) -> float:
    return (new - old) / max(abs(old), 1e-12)


def run_ccp(ctx: CcpContext, start: CcpPoint) -> CcpRun:
    """Iterate from ``start`` until the relative increase drops below ``rel_tol``."""
    opts = ctx.opts
    run = CcpRun(start, [start.objective])
    p = start
    for _ in range(opts.max_iter):
        nxt = ccp_iterate(ctx.instance, p, ctx=ctx)
        if nxt.stalled:
            break
        run.iterations += 1
        run.trace.append(nxt.objective)
        done = _relative_increase(nxt.objective, p.objective) < opts.rel_tol
        p = nxt
        if done:
            run.converged = True
            break
    run.point = p
    return run


def _refine_subproblem(ctx: CcpContext, S: np.ndarray, live: np.ndarray, w: np.ndarray, gamma: np.ndarray):
    lay = ctx.layout
    b = ProgramBuilder(lay.n)
    allowed = S.astype(bool) & live[:, None]
    _common_bounds(b, ctx, allowed, live)
    for name in ("t", "s", "alpha"):
        sl = lay.slices[name]
        b.lb[sl] = b.ub[sl] = 0.0
    _sinr_rows(b, ctx, w, gamma, live)
    ig = lay.slices["gamma"].start
    for n in range(ctx.N):
        msgs = [m for m in range(ctx.M) if allowed[m, n]]
        if not msgs:
            continue
        row = np.zeros(lay.n)
        rhs = ctx.C[n]
        for m in msgs:
            val, slope = _log_tangent(gamma[m])
            row[ig + m] += slope
            rhs -= val - slope * gamma[m]
        b.le(row, rhs)
    return b.build(_objective(ctx, live))


def _refine_start(ctx: CcpContext, S: np.ndarray, w_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Truncate ``w_hat`` to ``S`` and return a feasible ``(w, gamma, live)``."""
    M, N, L = ctx.M, ctx.N, ctx.L
    live = S.any(axis=1) & ~np.any(S & ~ctx.active[None, :], axis=1) & ctx.enabled
    w = w_hat.reshape(M, N, L) * (S & live[:, None])[:, :, None]
    w = _scale_power(ctx, w.reshape(M, -1), fill=False)
    sm, su = ctx.sinr(w)
    gamma = np.concatenate([[sm.min()], su])
    live &= gamma >= GAMMA_FLOOR
    w = (w.reshape(M, N, L) * live[:, None, None]).reshape(M, -1)
    sm, su = ctx.sinr(w)
    gamma = np.where(live, np.concatenate([[sm.min()], su]), 0.0)
    t = _fit_rates(np.log2(1.0 + gamma), (S & live[:, None]).astype(float), ctx.C)
    gamma = np.where(live, np.minimum(np.exp2(t) - 1.0, gamma), 0.0)
    return w, gamma, live


def _finalize(ctx: CcpContext, S: np.ndarray, live: np.ndarray, w: np.ndarray, gamma: np.ndarray,
              meta: dict) -> Solution:
    inst = ctx.instance
    bf = ctx.to_physical(w)
    r = np.where(live, np.minimum(np.log2(1.0 + np.maximum(gamma, 0.0)), achieved_rates(inst, bf).r), 0.0)
    r = np.maximum(r, 0.0) * backhaul_scale(inst, S, r)
    return make_solution(inst, bf, ClusterAssignment(S.astype(np.int8)), r, meta)


def refine_clusters(instance: ProblemInstance, clusters, w_init, opts: CcpOptions | None = None,
                    ctx: CcpContext | None = None) -> Solution:
    """Solve the fixed-cluster problem by CCP from ``w_init`` (physical beamformers)."""
    ctx = ctx or CcpContext(instance, opts)
    S = np.asarray(clusters.s if isinstance(clusters, ClusterAssignment) else clusters).astype(bool)
    if not S.any():
        return zero_solution(instance, {"solver": "refine", "trace": [0.0], "iterations": 0})
    w0 = np.asarray(w_init.w if isinstance(w_init, BeamformerSet) else w_init, complex) / math.sqrt(ctx.p_ref)
    w, gamma, live = _refine_start(ctx, S, w0)
    trace = [ctx.objective(gamma)]
    iterations, converged = 0, False
    if live.any():
        for _ in range(ctx.opts.max_iter):
            res = solve(_refine_subproblem(ctx, S, live, w, gamma), eps_sub=ctx.opts.eps_sub)
            if res.status is not Status.OPTIMAL:
                break
            w_new, g_new = _unpack(ctx, res.x)
            g_new = np.where(live, np.maximum(g_new, 0.0), 0.0)
            obj = ctx.objective(g_new)
            iterations += 1
            trace.append(obj)
            done = _relative_increase(obj, trace[-2]) < ctx.opts.rel_tol
            w, gamma = w_new, g_new
            if done:
                converged = True
                break
    return _finalize(ctx, S, live, w, gamma,
                     {"solver": "refine", "trace": trace, "iterations": iterations, "converged": converged})


def refine(instance: ProblemInstance, w_hat: BeamformerSet, power_threshold: float | None = None,
           opts: CcpOptions | None = None, ctx: CcpContext | None = None) -> Solution:
    """Keep links with ``||w_hat_{k,n}||^2 >= power_threshold`` (watts) and re-solve."""
    ctx = ctx or CcpContext(instance, opts)
    eps_p = ctx.opts.power_threshold if power_threshold is None else power_threshold
    if not isinstance(w_hat, BeamformerSet):
        w_hat = BeamformerSet(w_hat, instance.L)
    S = w_hat.block_power() >= eps_p
    return refine_clusters(instance, S, w_hat, ctx=ctx)


def solve_ccp(instance: ProblemInstance, opts: CcpOptions | None = None, enabled=None) -> Solution:
    """Best refined solution over ``opts.restarts`` random starts.

    ``enabled`` optionally switches messages off (see :class:`CcpContext`).
    """
    ctx = CcpContext(instance, opts, enabled)
    opts = ctx.opts
    best: Solution | None = None
    runs = []
    for r in range(opts.restarts):
        start = feasible_init(instance, opts.seed + r, ctx=ctx)
        run = run_ccp(ctx, start)
        sol = refine(instance, ctx.to_physical(run.point.w), ctx=ctx)
        runs.append({
            "seed": opts.seed + r,
            "trace": run.trace,
            "iterations": run.iterations,
            "converged": run.converged,
            "refine_trace": sol.meta.get("trace", []),
            "objective": sol.objective,
        })
        if best is None or sol.objective > best.objective:
            best = sol
    assert best is not None
    tidy = make_solution(instance, best.beamformers, best.clustering, best.rates, {"solver": "ccp", "runs": runs})
    return drop_idle_links(instance, tidy, IDLE_RATE)

"""Globally optimal branch-and-bound over the box ``q = [s, r, phi]``.

Every box is bounded from above by an SOCP relaxation and from below by
switching off weak links of the relaxed beamformers.  The search is
best-first on the upper bound and stops once the gap on the per-Hz objective
``eta*r_0 + (1-eta)*sum_k r_k`` is at most ``eps``.

Internally all quantities are normalized: channels are scaled by
``sqrt(P_ref)/sigma_k`` (unit noise), powers by ``P_ref = max_n P_n`` and
backhaul capacities by the bandwidth, so rates are in bit/s/Hz.
"""
from __future__ import annotations

import csv
import heapq
import itertools
import math
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import kernels
from .convex_solver import Linear, ProgramBuilder, Status, solve
from .envelopes import (
    InnerProducts,
    Layout,
    McCormick,
    PhaseInterval,
    multicast_envelope,
    multicast_soc_anchor,
    perspective_power,
    unicast_soc,
)
from .model import ProblemInstance, Solution, drop_idle_links, make_solution, rate_upper_bounds, zero_solution

TWO_PI = 2.0 * math.pi
BINARY_FIRST_SLACK = 0.9


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, float)
        hi = np.array(self.upper, float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box vertices must be vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("box lower vertex exceeds upper vertex")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def with_coord(self, j: int, lo: float | None = None, hi: float | None = None) -> "Box":
        a, b = self.lower.copy(), self.upper.copy()
        if lo is not None:
            a[j] = lo
        if hi is not None:
            b[j] = hi
        return Box(a, b)


@dataclass(frozen=True)
class BoxIndex:
    """Slices of the s-, r- and phi-blocks for a (K, N) network."""

    K: int
    N: int

    @property
    def n_s(self) -> int:
        return (self.K + 1) * self.N

    @property
    def size(self) -> int:
        return self.n_s + (self.K + 1) + (self.K - 1)

    @property
    def s(self) -> slice:
        return slice(0, self.n_s)

    @property
    def r(self) -> slice:
        return slice(self.n_s, self.n_s + self.K + 1)

    @property
    def phi(self) -> slice:
        return slice(self.n_s + self.K + 1, self.size)


@dataclass(frozen=True)
class RelaxedPoint:
    """Normalized relaxation optimum: beamformers, rates, clustering, soft powers."""

    w: np.ndarray
    r: np.ndarray
    s: np.ndarray
    v: np.ndarray


@dataclass(frozen=True, eq=False)
class BoundedBox:
    box: Box
    upper_bound: float  # bit/s/Hz, -inf when the relaxation is infeasible
    relaxed_solution: RelaxedPoint | None = None
    status: Status = Status.OPTIMAL


@dataclass
class BBCertificate:
    best_solution: Solution
    global_upper: float  # bit/s
    global_lower: float  # bit/s
    iterations: int
    boxes_explored: int
    wall_time: float
    status: str = "converged"  # or "iteration_limit" / "time_limit"
    eps: float = 0.0
    bandwidth: float = 1.0
    trace: list[tuple[int, float, float, int, float]] = field(default_factory=list)
    pruned_upper: list[float] = field(default_factory=list)  # bit/s
    solver_failures: int = 0

    @property
    def gap_per_hz(self) -> float:
        return (self.global_upper - self.global_lower) / self.bandwidth

    @property
    def converged(self) -> bool:
        return self.status == "converged"


class RelaxationContext:
    """Normalized data and cached linear functionals of one instance."""

    def __init__(self, instance: ProblemInstance):
        self.instance = instance
        K, N, L = instance.K, instance.N, instance.L
        self.index = BoxIndex(K, N)
        self.p_ref = float(instance.bs_power.max())
        self.H = instance.channels * math.sqrt(self.p_ref) / np.sqrt(instance.noise)[:, None]
        self.P = instance.bs_power / self.p_ref
        # capacity above the sum of the rate caps never binds; clamping it keeps the relaxations well scaled
        self.C = np.minimum(instance.backhaul / instance.bandwidth, rate_upper_bounds(instance).r.sum() + 1.0)
        M = K + 1
        self.layout = Layout(K, N, L, {"r": M, "s": M * N, "v": M * N, "m": M * N})
        self.ip = InnerProducts(self.layout, self.H)
        self.weights = np.full(M, 1.0 - instance.eta)
        self.weights[0] = instance.eta
        self.Hb = self.H.reshape(K, N, L)

    def per_hz(self, r: np.ndarray) -> float:
        return float(self.weights @ r)


def initial_box(instance: ProblemInstance) -> Box:
    idx = BoxIndex(instance.K, instance.N)
    upper = np.empty(idx.size)
    upper[idx.s] = 1.0
    upper[idx.r] = rate_upper_bounds(instance).r
    upper[idx.phi] = TWO_PI
    return Box(np.zeros(idx.size), upper)


def branch(box: Box, n_s: int | None = None, binary_first: bool = False,
           scores: np.ndarray | None = None) -> tuple[Box, Box]:
    """Split along the longest edge (smallest index on ties).

    ``n_s`` is the length of the leading s-block; s-coordinates are split by
    fixing them to their lower and upper values, all others at the midpoint.
    With ``binary_first`` an s-edge is preferred whenever its width is within
    10% of the longest edge.  ``scores`` replaces the widths as the selection
    key (see :func:`gap_scores`); only edges of positive width are eligible.
    """
    widths = box.widths
    if not np.any(widths > 0):
        raise ValueError("cannot branch a zero-volume box")
    key = widths if scores is None else np.where(widths > 0, scores, -np.inf)
    j = int(np.argmax(key))
    if binary_first and n_s:
        ws = widths[:n_s]
        if ws.size and ws.max() > 0 and ws.max() >= BINARY_FIRST_SLACK * widths[j]:
            j = int(np.argmax(ws))
    if n_s is not None and j < n_s:
        return box.with_coord(j, hi=box.lower[j]), box.with_coord(j, lo=box.upper[j])
    mid = 0.5 * (box.lower[j] + box.upper[j])
    return box.with_coord(j, hi=mid), box.with_coord(j, lo=mid)


def gap_scores(box: Box, index: BoxIndex, weights: np.ndarray, eps: float) -> np.ndarray:
    """Per-edge contribution to the bound gap of ``box``.

    Rate edges count ``weight * width``; phase edges count the envelope loss
    ``-2 eta log2(cos(width / 2))`` (unbounded once the envelope is dropped at
    widths above pi); binary edges get ``eps / 10`` so they are split once the
    continuous edges no longer dominate.
    """
    widths = box.widths
    out = np.zeros_like(widths)
    out[index.s] = np.where(widths[index.s] > 0, eps / 10.0, 0.0)
    out[index.r] = weights * widths[index.r]
    ph = widths[index.phi]
    with np.errstate(divide="ignore"):
        loss = -2.0 * weights[0] * np.log2(np.cos(np.minimum(ph, math.pi) / 2.0))
    out[index.phi] = np.where(ph >= math.pi, np.inf, loss)
    return out


BRANCH_RULES = ("longest", "gap")


def _trivial_bound(ctx: RelaxationContext, box: Box) -> float:
    return ctx.per_hz(box.upper[ctx.index.r])


def build_relaxation(ctx: RelaxationContext, box: Box):
    """Assemble the SOCP relaxation of the box; returns a ``ConicProgram``."""
    K, N = ctx.layout.K, ctx.layout.N
    M = K + 1
    lay, ip, idx = ctx.layout, ctx.ip, ctx.index
    lo, hi = box.lower, box.upper
    s_lo, s_hi = lo[idx.s], hi[idx.s]
    r_lo, r_hi = lo[idx.r], hi[idx.r]
    ph_lo, ph_hi = lo[idx.phi], hi[idx.phi]

    b = ProgramBuilder(lay.n)
    rs, ss, vs, ms = (lay.slices[name] for name in ("r", "s", "v", "m"))
    b.lb[rs], b.ub[rs] = r_lo, r_hi
    b.lb[ss], b.ub[ss] = s_lo, s_hi
    for m in range(M):
        for n in range(N):
            j = m * N + n
            amp = math.sqrt(ctx.P[n]) if s_hi[j] > 0 else 0.0
            re, im = lay.block(m, n)
            b.lb[re], b.ub[re] = -amp, amp
            b.lb[im], b.ub[im] = -amp, amp
            b.lb[vs.start + j] = 0.0
            b.ub[vs.start + j] = ctx.P[n] if s_hi[j] > 0 else 0.0
            b.lb[ms.start + j] = 0.0
            b.ub[ms.start + j] = max(ctx.C[n], 0.0)

    for k in range(1, K + 1):
        unicast_soc(ip, k, r_lo[k]).apply(b)
    multicast_soc_anchor(ip, r_lo[0]).apply(b)
    for k in range(1, K):
        env = multicast_envelope(ip, k, r_lo[0], PhaseInterval(ph_lo[k - 1], ph_hi[k - 1]))
        if env is not None:
            env.apply(b)
    for n in range(N):
        total = np.zeros(lay.n)
        for m in range(M):
            j = m * N + n
            env = McCormick(s_lo[j], s_hi[j], r_lo[m], r_hi[m])
            for row, rhs in env.rows(lay.n, ss.start + j, rs.start + m, ms.start + j):
                b.le(row, rhs)
            total[ms.start + j] = 1.0
        b.le(total, ctx.C[n])
        perspective_power(lay, n, ctx.P[n]).apply(b)

    c = np.zeros(lay.n)
    c[rs] = ctx.weights
    return b.build(Linear(c, maximize=True))


def upper_bound(instance: ProblemInstance, box: Box, ctx: RelaxationContext | None = None,
                parent_bound: float | None = None) -> BoundedBox:
    """Relaxation bound of ``box`` in bit/s/Hz.

    On a solver failure the box keeps a conservative bound: the parent's
    bound, or the objective at the box's upper rate vertex, whichever is
    smaller.  Boxes are only ever discarded on a certified infeasibility.
    """
    ctx = ctx or RelaxationContext(instance)
    prog = build_relaxation(ctx, box)
    res = solve(prog)
    if res.status is Status.INFEASIBLE:
        return BoundedBox(box, -math.inf, None, res.status)
    fallback = _trivial_bound(ctx, box)
    if parent_bound is not None:
        fallback = min(fallback, parent_bound)
    point = None
    if res.x is not None and np.all(np.isfinite(res.x)):
        lay = ctx.layout
        point = RelaxedPoint(lay.unpack_w(res.x), res.x[lay.slices["r"]].copy(),
                             res.x[lay.slices["s"]].copy(), res.x[lay.slices["v"]].copy())
    if res.status is not Status.OPTIMAL:
        return BoundedBox(box, fallback, point, res.status)
    bound = res.objective + res.gap * max(1.0, abs(res.objective))
    return BoundedBox(box, min(bound, fallback), point, res.status)


def _feasible_power(ctx: RelaxationContext, w: np.ndarray) -> np.ndarray:
    """Scale each BS's beams down so its total power is within budget."""
    K, N, L = ctx.layout.K, ctx.layout.N, ctx.layout.L
    blocks = w.reshape(K + 1, N, L).copy()
    load = np.sum(np.abs(blocks) ** 2, axis=(0, 2))
    factor = np.where(load > ctx.P, np.sqrt(ctx.P / np.maximum(load, 1e-300)), 1.0)
    blocks *= factor[None, :, None]
    return blocks


def lower_bound(instance: ProblemInstance, bounded: BoundedBox,
                ctx: RelaxationContext | None = None) -> tuple[float, Solution] | None:
    """Best link-pruned feasible point derived from the relaxed beamformers.

    Returns ``(objective in bit/s, Solution)`` or ``None`` without a relaxed point.
    """
    if bounded.relaxed_solution is None:
        return None
    ctx = ctx or RelaxationContext(instance)
    blocks = _feasible_power(ctx, bounded.relaxed_solution.w)  # (M, N, L)
    power = np.sum(np.abs(blocks) ** 2, axis=2)
    if not np.any(power > 0):
        sol = zero_solution(instance, {"solver": "bb"})
        return sol.objective, sol
    Z = np.einsum("knl,mnl->kmn", np.conj(ctx.Hb), blocks)
    _, mask, rates = kernels.link_prune_sweep(
        np.ascontiguousarray(Z), np.ones(instance.K), np.ascontiguousarray(power), ctx.C, instance.eta
    )
    mask = np.asarray(mask, np.int8)
    w = (blocks * mask[:, :, None]).reshape(instance.K + 1, -1) * math.sqrt(ctx.p_ref)
    sol = make_solution(instance, w, mask, np.maximum(rates, 0.0), {"solver": "bb"})
    return sol.objective, sol


def solve_bb(instance: ProblemInstance, eps: float = 1e-2, max_iter: int = 100_000, max_time: float = 3600.0,
             *, box: Box | None = None, binary_first: bool = False, rule: str = "longest") -> BBCertificate:
    """Run branch and bound until the per-Hz gap is at most ``eps``.

    ``box`` restricts the search (used by the baselines to switch messages
    off).  ``rule`` picks the branching edge: ``"longest"`` splits the widest
    edge, ``"gap"`` the edge with the largest :func:`gap_scores` entry.
    Resource-limit termination is reported in ``status``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if rule not in BRANCH_RULES:
        raise ValueError(f"rule must be one of {BRANCH_RULES}")
    t0 = time.perf_counter()
    ctx = RelaxationContext(instance)
    B = instance.bandwidth
    n_s = ctx.index.n_s
    root = box if box is not None else initial_box(instance)
    if root.lower.size != ctx.index.size:
        raise ValueError("box dimension does not match the instance")

    best = zero_solution(instance, {"solver": "bb"})
    lower = best.objective / B
    failures = 0
    pruned: list[float] = []
    counter = itertools.count()
    heap: list[tuple[float, int, BoundedBox]] = []

    def consider(bounded: BoundedBox):
        nonlocal best, lower
        cand = lower_bound(instance, bounded, ctx)
        if cand is not None and cand[0] / B > lower:
            best = cand[1]
            lower = best.objective / B

    rb = upper_bound(instance, root, ctx)
    failures += rb.status not in (Status.OPTIMAL, Status.INFEASIBLE)
    explored = 1
    if rb.upper_bound > -math.inf:
        consider(rb)
        heapq.heappush(heap, (-rb.upper_bound, next(counter), rb))
    upper = max(rb.upper_bound, lower)
    trace = [(0, upper * B, lower * B, len(heap), time.perf_counter() - t0)]
    iteration = 0
    status = "converged"
    while heap:
        if upper - lower <= eps:
            break
        if iteration >= max_iter:
            status = "iteration_limit"
            break
        if time.perf_counter() - t0 >= max_time:
            status = "time_limit"
            break
        _, _, node = heapq.heappop(heap)
        iteration += 1
        try:
            scores = gap_scores(node.box, ctx.index, ctx.weights, eps) if rule == "gap" else None
            children = branch(node.box, n_s, binary_first, scores)
        except ValueError:
            children = ()
        bounded = []
        for child in children:
            cb = upper_bound(instance, child, ctx, parent_bound=node.upper_bound)
            explored += 1
            failures += cb.status not in (Status.OPTIMAL, Status.INFEASIBLE)
            if cb.upper_bound > node.upper_bound:
                cb = replace(cb, upper_bound=node.upper_bound)
            if cb.upper_bound > -math.inf:
                consider(cb)
            bounded.append(cb)
        previous_lower = trace[-1][2] / B
        for cb in bounded:
            if cb.upper_bound < lower:
                if cb.upper_bound > -math.inf:
                    pruned.append(cb.upper_bound * B)
            else:
                heapq.heappush(heap, (-cb.upper_bound, next(counter), cb))
        if lower > previous_lower and heap and -heap[0][0] >= lower:
            keep = [item for item in heap if -item[0] >= lower]
            pruned.extend(-item[0] * B for item in heap if -item[0] < lower)
            heap = keep
            heapq.heapify(heap)
        frontier = -heap[0][0] if heap else lower
        upper = min(upper, max(frontier, lower))
        trace.append((iteration, upper * B, lower * B, len(heap), time.perf_counter() - t0))

    if heap and upper - lower > eps and status == "converged":
        status = "iteration_limit"
    best.meta.update({"solver": "bb", "status": status, "iterations": iteration, "rule": rule})
    best = drop_idle_links(instance, best)
    return BBCertificate(
        best_solution=best,
        global_upper=max(upper, lower) * B,
        global_lower=best.objective,
        iterations=iteration,
        boxes_explored=explored,
        wall_time=time.perf_counter() - t0,
        status=status,
        eps=eps,
        bandwidth=B,
        trace=trace,
        pruned_upper=pruned,
        solver_failures=failures,
    )


TRACE_HEADER = ("iteration", "upper_bound_bps", "lower_bound_bps", "active_boxes", "time_s")


def write_trace_csv(cert: BBCertificate, path, extra: dict | None = None) -> None:
    """Bound trace in bit/s, one row per iteration; ``extra`` columns are repeated on every row."""
    extra = dict(extra or {})
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER + tuple(extra))
        for it, ub, lb, active, t in cert.trace:
            writer.writerow([it, repr(ub), repr(lb), active, f"{t:.6f}", *extra.values()])


def _g(delta: float, K: int, eta: float, B: float) -> float:
    return K * B * delta - 2.0 * eta * K * B * math.log2(math.cos(delta / 2.0))


def delta_for_gap(eps: float, K: int, eta: float, bandwidth: float = 1.0) -> float:
    """Largest ``delta`` in (0, 1] with ``g(delta) <= eps``, found by bisection."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if _g(1.0, K, eta, bandwidth) <= eps:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _g(mid, K, eta, bandwidth) <= eps:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16:
            break
    return lo


# pi to 60 digits; the float constant shifts the ceiling once the bound exceeds about 1e15
_PI = Fraction("3.14159265358979323846264338327950288419716939937510582097494459")


def iteration_bound_from(delta: float, K: int, N: int, r_max) -> int:
    """Exact ``2^((K+1)N) * ceil((2pi/(delta/2))^(K-1) * prod_k r_max^k/(delta/2))``."""
    half = Fraction(delta) / 2
    value = (2 * _PI / half) ** (K - 1)
    for r in r_max:
        value *= Fraction(float(r)) / half
    return 2 ** ((K + 1) * N) * math.ceil(value)


def max_iterations_bound(instance: ProblemInstance, eps: float, eta: float | None = None,
                         bandwidth: float = 1.0) -> int:
    """Worst-case iteration count for an ``eps``-optimal answer.

    ``eps`` is on the per-Hz objective, hence ``bandwidth`` defaults to 1.
    """
    eta = instance.eta if eta is None else eta
    delta = delta_for_gap(eps, instance.K, eta, bandwidth)
    return iteration_bound_from(delta, instance.K, instance.N, rate_upper_bounds(instance).r)

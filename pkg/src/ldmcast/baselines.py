"""Reference schemes: pure unicast, pure multicast, time sharing and static clusters."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bb_solver import BoxIndex, initial_box, solve_bb
from .ccp_solver import CcpContext, CcpOptions, refine_clusters, solve_ccp
from .model import BeamformerSet, ClusterAssignment, ProblemInstance, Solution, zero_solution

SOLVERS = ("bb", "ccp")


def _check_solver(solver: str) -> str:
    solver = solver.lower()
    if solver not in SOLVERS:
        raise ValueError(f"solver must be one of {SOLVERS}, got {solver!r}")
    return solver


def _restricted_box(instance: ProblemInstance, keep_multicast: bool, keep_unicast: bool):
    box = initial_box(instance)
    idx = BoxIndex(instance.K, instance.N)
    lo, hi = box.lower.copy(), box.upper.copy()
    N = instance.N
    r0 = idx.r.start
    if not keep_multicast:
        hi[:N] = 0.0
        hi[r0] = 0.0
        hi[idx.phi] = 0.0
    if not keep_unicast:
        hi[N:idx.n_s] = 0.0
        hi[r0 + 1:idx.r.stop] = 0.0
    return type(box)(lo, hi)


def _solve_restricted(instance: ProblemInstance, solver: str, keep_multicast: bool, keep_unicast: bool,
                      ccp_options: CcpOptions | None, bb_options: dict | None) -> Solution:
    solver = _check_solver(solver)
    if solver == "bb":
        box = _restricted_box(instance, keep_multicast, keep_unicast)
        cert = solve_bb(instance, box=box, **(bb_options or {}))
        sol = cert.best_solution
        sol.meta.update({"global_upper": cert.global_upper, "gap_per_hz": cert.gap_per_hz})
        return sol
    enabled = np.array([keep_multicast] + [keep_unicast] * instance.K)
    return solve_ccp(instance, ccp_options, enabled=enabled)


def solve_unicast_only(instance: ProblemInstance, solver: str = "ccp", *, ccp_options: CcpOptions | None = None,
                       bb_options: dict | None = None) -> Solution:
    """Weighted problem with ``eta = 0`` and the multicast beamformer held at zero."""
    inst = instance.replace(eta=0.0)
    sol = _solve_restricted(inst, solver, False, True, ccp_options, bb_options)
    sol.meta["scheme"] = "unicast_only"
    return sol


def solve_multicast_only(instance: ProblemInstance, solver: str = "ccp", *, ccp_options: CcpOptions | None = None,
                         bb_options: dict | None = None) -> Solution:
    """Maximize the multicast rate alone; unicast beamformers are held at zero."""
    inst = instance.replace(eta=1.0)
    sol = _solve_restricted(inst, solver, True, False, ccp_options, bb_options)
    sol.meta["scheme"] = "multicast_only"
    return sol


@dataclass(frozen=True)
class TdmEndpoints:
    """Pure-solve rates in bit/s: ``multicast`` = B r_0*, ``unicast`` = B sum_k r_k*."""

    multicast: float
    unicast: float

    def point(self, t_m: float) -> tuple[float, float]:
        if not 0.0 <= t_m <= 1.0:
            raise ValueError("t_m must lie in [0, 1]")
        return t_m * self.multicast, (1.0 - t_m) * self.unicast


def tdm_endpoints(instance: ProblemInstance, solver: str = "ccp", **kwargs) -> TdmEndpoints:
    mc = solve_multicast_only(instance, solver, **kwargs)
    uc = solve_unicast_only(instance, solver, **kwargs)
    return TdmEndpoints(mc.multicast_rate_bps(instance), uc.unicast_rate_bps(instance))


def solve_tdm(instance: ProblemInstance, t_m: float, solver: str = "ccp", *,
              endpoints: TdmEndpoints | None = None, **kwargs) -> tuple[float, float]:
    """Rate pair ``(R_M, R_U)`` in bit/s of orthogonal time sharing with multicast share ``t_m``."""
    if not 0.0 <= t_m <= 1.0:
        raise ValueError("t_m must lie in [0, 1]")
    endpoints = endpoints or tdm_endpoints(instance, solver, **kwargs)
    return endpoints.point(t_m)


def static_cluster(instance: ProblemInstance, M: int, mode: str = "gain") -> ClusterAssignment:
    """Full multicast cooperation; each user served by its ``M`` closest BSs.

    ``mode="gain"`` ranks BSs by large-scale gain (falling back to the channel
    energy ``||h_{k,n}||^2`` when the instance carries no gains);
    ``mode="distance"`` ranks by geometric distance and needs positions.
    """
    N, K = instance.N, instance.K
    if not 1 <= M <= N:
        raise ValueError(f"M must lie in 1..{N}")
    if mode == "gain":
        if instance.large_scale_gain is not None:
            score = np.asarray(instance.large_scale_gain, float)
        else:
            score = np.sum(np.abs(instance.channel_blocks()) ** 2, axis=2)
    elif mode == "distance":
        if instance.user_positions is None or instance.bs_positions is None:
            raise ValueError("distance mode needs user and BS positions")
        d = np.linalg.norm(instance.user_positions[:, None, :] - instance.bs_positions[None, :, :], axis=2)
        score = -d
    else:
        raise ValueError("mode must be 'gain' or 'distance'")
    s = np.zeros((K + 1, N), np.int8)
    s[0] = 1
    order = np.argsort(-score, axis=1, kind="stable")
    for k in range(K):
        s[k + 1, order[k, :M]] = 1
    return ClusterAssignment(s)


def mrt_beamformers(instance: ProblemInstance, clusters: ClusterAssignment) -> BeamformerSet:
    """Matched-filter start: unit-norm channel directions, power split evenly per BS."""
    K, N, L = instance.K, instance.N, instance.L
    S = np.asarray(clusters.s, bool)
    h = instance.channel_blocks()  # (K, N, L)
    norms = np.linalg.norm(h, axis=2, keepdims=True)
    unit = np.divide(h, norms, out=np.zeros_like(h), where=norms > 0)
    w = np.zeros((K + 1, N, L), complex)
    w[0] = unit.sum(axis=0)
    w[1:] = unit
    blk = np.linalg.norm(w, axis=2, keepdims=True)
    w = np.divide(w, blk, out=np.zeros_like(w), where=blk > 0)
    count = S.sum(axis=0)
    for n in range(N):
        if count[n]:
            w[:, n, :] *= math.sqrt(instance.bs_power[n] / count[n])
    w *= S[:, :, None]
    return BeamformerSet(w.reshape(K + 1, N * L), L)


def solve_fixed_cluster(instance: ProblemInstance, clusters, eta: float | None = None,
                        opts: CcpOptions | None = None) -> Solution:
    """Fixed-cluster weighted sum rate by CCP from a matched-filter start."""
    if eta is not None:
        instance = instance.replace(eta=eta)
    if not isinstance(clusters, ClusterAssignment):
        clusters = ClusterAssignment(np.asarray(clusters, np.int8))
    if not np.any(clusters.s):
        return zero_solution(instance, {"solver": "fixed_cluster"})
    ctx = CcpContext(instance, opts)
    sol = refine_clusters(instance, clusters, mrt_beamformers(instance, clusters), ctx=ctx)
    sol.meta["solver"] = "fixed_cluster"
    return sol


@dataclass(frozen=True)
class TradeoffPoint:
    """One LDM solve on the multicast/unicast trade-off, rates in bit/s."""

    eta: float
    multicast: float
    unicast: float
    solution: Solution | None = None


def ldm_tradeoff(instance: ProblemInstance, shares, endpoints: TdmEndpoints | None = None, *,
                 ccp_options: CcpOptions | None = None, steps: int = 8) -> list[TradeoffPoint]:
    """Place one LDM weighted-sum solve per requested multicast share.

    For every share ``t`` the weight ``eta`` is bisected (``steps`` halvings)
    for the smallest value whose CCP solution carries at least
    ``t * multicast`` endpoint rate; shares 0 and 1 are the pure solves.  A
    uniform ``eta`` grid tends to skip the stretch of the boundary where the
    rate trade-off is close to linear, since the weighted optimum jumps across
    it between neighbouring weights; placing the weights by rate share keeps
    the points spread along the whole boundary.
    """
    mc = solve_multicast_only(instance, "ccp", ccp_options=ccp_options)
    uc = solve_unicast_only(instance, "ccp", ccp_options=ccp_options)
    if endpoints is None:
        endpoints = TdmEndpoints(mc.multicast_rate_bps(instance), uc.unicast_rate_bps(instance))
    cache: dict[float, TradeoffPoint] = {}

    def probe(eta: float) -> TradeoffPoint:
        if eta not in cache:
            sol = solve_ccp(instance.replace(eta=eta), ccp_options)
            cache[eta] = TradeoffPoint(eta, sol.multicast_rate_bps(instance), sol.unicast_rate_bps(instance), sol)
        return cache[eta]

    pure_u = TradeoffPoint(0.0, 0.0, uc.unicast_rate_bps(instance), uc)
    pure_m = TradeoffPoint(1.0, mc.multicast_rate_bps(instance), 0.0, mc)
    out = []
    lo = 0.0
    for t in sorted(float(x) for x in shares):
        if not 0.0 <= t <= 1.0:
            raise ValueError("shares must lie in [0, 1]")
        if t == 0.0:
            out.append(pure_u)
            continue
        if t == 1.0:
            out.append(pure_m)
            continue
        a, b, found = lo, 1.0, None
        for _ in range(steps):
            mid = 0.5 * (a + b)
            point = probe(mid)
            if point.multicast >= t * endpoints.multicast:
                b, found = mid, point
            else:
                a = mid
        out.append(found if found is not None else pure_m)
        lo = a
    return out

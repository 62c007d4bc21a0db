"""Domain types and exact evaluation of the joint clustering/beamforming problem.

Indexing convention: message ``0`` is the multicast message and message ``k``
(``1 <= k <= K``) is the unicast message of user ``k``.  User ``k`` owns row
``k - 1`` of :attr:`ProblemInstance.channels`.  Beamformers are stored as a
``(K + 1, N * L)`` complex array whose row ``m`` is the network-wide vector of
message ``m``; the length-``L`` slice ``[n * L, (n + 1) * L)`` is the block sent
by BS ``n``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import kernels


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """One network draw.  All quantities in linear scale (W, bit/s, Hz)."""

    channels: np.ndarray  # (K, N*L) complex, row k-1 is h_k
    bs_power: np.ndarray  # (N,) W
    backhaul: np.ndarray  # (N,) bit/s
    noise: np.ndarray  # (K,) W
    bandwidth: float
    eta: float
    n_antennas: int
    large_scale_gain: np.ndarray | None = None  # (K, N) linear, fading excluded
    bs_positions: np.ndarray | None = None  # (N, 2) m
    user_positions: np.ndarray | None = None  # (K, 2) m
    seed: int | None = None

    def __post_init__(self):
        ch = _frozen(self.channels, complex)
        if ch.ndim != 2:
            raise ValueError("channels must be a (K, N*L) array")
        object.__setattr__(self, "channels", ch)
        L = int(self.n_antennas)
        if L < 1 or ch.shape[1] % L:
            raise ValueError(f"channel length {ch.shape[1]} is not a multiple of L={L}")
        object.__setattr__(self, "n_antennas", L)
        N = ch.shape[1] // L
        K = ch.shape[0]
        for name, size in (("bs_power", N), ("backhaul", N), ("noise", K)):
            arr = _frozen(self.__dict__[name])
            if arr.shape != (size,):
                raise ValueError(f"{name} must have shape ({size},), got {arr.shape}")
            object.__setattr__(self, name, arr)
        if np.any(self.bs_power <= 0) or np.any(self.noise <= 0):
            raise ValueError("bs_power and noise must be strictly positive")
        # Zero backhaul is allowed: such a BS simply cannot serve any message.
        if np.any(self.backhaul < 0):
            raise ValueError("backhaul must be nonnegative")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        object.__setattr__(self, "bandwidth", float(self.bandwidth))
        object.__setattr__(self, "eta", float(self.eta))
        if self.large_scale_gain is not None:
            g = _frozen(self.large_scale_gain)
            if g.shape != (K, N):
                raise ValueError(f"large_scale_gain must have shape ({K}, {N})")
            object.__setattr__(self, "large_scale_gain", g)
        for name, rows in (("bs_positions", N), ("user_positions", K)):
            val = self.__dict__[name]
            if val is not None:
                arr = _frozen(val)
                if arr.shape != (rows, 2):
                    raise ValueError(f"{name} must have shape ({rows}, 2)")
                object.__setattr__(self, name, arr)

    @property
    def N(self) -> int:
        return self.channels.shape[1] // self.n_antennas

    @property
    def K(self) -> int:
        return self.channels.shape[0]

    @property
    def L(self) -> int:
        return self.n_antennas

    def channel(self, k: int) -> np.ndarray:
        """Network-wide channel of user ``k`` (1-based)."""
        return self.channels[k - 1]

    def channel_blocks(self) -> np.ndarray:
        """Channels reshaped to ``(K, N, L)``."""
        return self.channels.reshape(self.K, self.N, self.L)

    def channels_independent(self) -> bool:
        return int(np.linalg.matrix_rank(self.channels)) == self.K

    def replace(self, **changes) -> "ProblemInstance":
        fields = {
            name: getattr(self, name)
            for name in (
                "channels", "bs_power", "backhaul", "noise", "bandwidth", "eta",
                "n_antennas", "large_scale_gain", "bs_positions", "user_positions", "seed",
            )
        }
        fields.update(changes)
        return ProblemInstance(**fields)


@dataclass(frozen=True, eq=False)
class BeamformerSet:
    w: np.ndarray  # (K+1, N*L) complex
    n_antennas: int

    def __post_init__(self):
        w = _frozen(self.w, complex)
        if w.ndim != 2 or w.shape[1] % self.n_antennas:
            raise ValueError("beamformers must be a (K+1, N*L) array")
        object.__setattr__(self, "w", w)

    @classmethod
    def zeros(cls, instance: ProblemInstance) -> "BeamformerSet":
        return cls(np.zeros((instance.K + 1, instance.N * instance.L), complex), instance.L)

    @property
    def n_bs(self) -> int:
        return self.w.shape[1] // self.n_antennas

    def block(self, k: int, n: int) -> np.ndarray:
        L = self.n_antennas
        return self.w[k, n * L:(n + 1) * L]

    def blocks(self) -> np.ndarray:
        return self.w.reshape(self.w.shape[0], self.n_bs, self.n_antennas)

    def block_power(self) -> np.ndarray:
        """``||w_{k,n}||^2`` as a ``(K+1, N)`` array."""
        return np.sum(np.abs(self.blocks()) ** 2, axis=2)


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    s: np.ndarray  # (K+1, N) in {0, 1}

    def __post_init__(self):
        s = np.asarray(self.s)
        if not np.all((s == 0) | (s == 1)):
            raise ValueError("cluster assignment entries must be 0 or 1")
        object.__setattr__(self, "s", _frozen(s, np.int8))

    @classmethod
    def from_beamformers(cls, bf: BeamformerSet) -> "ClusterAssignment":
        return cls((bf.block_power() > 0).astype(np.int8))

    def multicast_size(self) -> int:
        return int(self.s[0].sum())

    def mean_unicast_size(self) -> float:
        return float(self.s[1:].sum()) / max(self.s.shape[0] - 1, 1)


@dataclass(frozen=True, eq=False)
class RateVector:
    r: np.ndarray  # (K+1,) bit/s/Hz

    def __post_init__(self):
        r = _frozen(self.r)
        if np.any(r < 0):
            raise ValueError("rates must be nonnegative")
        object.__setattr__(self, "r", r)

    @property
    def multicast(self) -> float:
        return float(self.r[0])

    @property
    def unicast(self) -> np.ndarray:
        return self.r[1:]


@dataclass(frozen=True, eq=False)
class Solution:
    beamformers: BeamformerSet
    clustering: ClusterAssignment
    rates: RateVector
    objective: float  # bit/s
    meta: dict[str, Any] = field(default_factory=dict)

    def multicast_rate_bps(self, instance: ProblemInstance) -> float:
        return instance.bandwidth * self.rates.multicast

    def unicast_rate_bps(self, instance: ProblemInstance) -> float:
        return instance.bandwidth * float(self.rates.unicast.sum())


def make_solution(instance, beamformers, clustering, rates, meta=None) -> Solution:
    """Bundle a solution, recomputing the objective from the rates."""
    if not isinstance(beamformers, BeamformerSet):
        beamformers = BeamformerSet(beamformers, instance.L)
    if not isinstance(clustering, ClusterAssignment):
        clustering = ClusterAssignment(clustering)
    if not isinstance(rates, RateVector):
        rates = RateVector(np.maximum(np.asarray(rates, float), 0.0))
    return Solution(beamformers, clustering, rates, objective(instance, rates), dict(meta or {}))


def zero_solution(instance, meta=None) -> Solution:
    K, N = instance.K, instance.N
    return make_solution(
        instance, BeamformerSet.zeros(instance), np.zeros((K + 1, N), np.int8), np.zeros(K + 1), meta
    )


def drop_idle_links(instance, sol: Solution, rate_tol: float = 0.0) -> Solution:
    """Remove links that carry nothing.

    A message with rate at most ``rate_tol`` (bit/s/Hz) gets rate 0 and a zero
    beamformer, which only lowers the interference seen by everyone else, and
    leaves every cluster.  A link whose block is exactly zero leaves its
    cluster as well, which only lowers the backhaul load.  Feasibility is
    preserved; the objective drops by at most ``rate_tol * B`` per message.
    """
    w = sol.beamformers.w.copy()
    r = sol.rates.r.copy()
    idle = r <= rate_tol
    w[idle] = 0.0
    r[idle] = 0.0
    bf = BeamformerSet(w, instance.L)
    s = np.asarray(sol.clustering.s).copy()
    s[bf.block_power() == 0.0] = 0
    return make_solution(instance, bf, s, r, sol.meta)


def _w_array(bf) -> np.ndarray:
    return bf.w if isinstance(bf, BeamformerSet) else np.asarray(bf, complex)


def sinr_all(instance: ProblemInstance, bf) -> tuple[np.ndarray, np.ndarray]:
    """Multicast and unicast SINRs of every user, each a length-K array."""
    return kernels.sinr_pair(instance.channels, _w_array(bf), instance.noise)


def sinr_multicast(instance: ProblemInstance, bf, k: int) -> float:
    if not 1 <= k <= instance.K:
        raise IndexError(f"user index {k} outside 1..{instance.K}")
    h = instance.channel(k)
    w = _w_array(bf)
    g = np.abs(np.conj(h) @ w.T) ** 2
    return float(g[0] / (g[1:].sum() + instance.noise[k - 1]))


def sinr_unicast(instance: ProblemInstance, bf, k: int) -> float:
    if not 1 <= k <= instance.K:
        raise IndexError(f"user index {k} outside 1..{instance.K}")
    h = instance.channel(k)
    w = _w_array(bf)
    g = np.abs(np.conj(h) @ w.T) ** 2
    interference = g[1:].sum() - g[k]
    return float(g[k] / (interference + instance.noise[k - 1]))


def objective(instance: ProblemInstance, rates) -> float:
    r = rates.r if isinstance(rates, RateVector) else np.asarray(rates, float)
    B, eta = instance.bandwidth, instance.eta
    return float(eta * B * r[0] + (1.0 - eta) * B * np.sum(r[1:]))


def achieved_rates(instance: ProblemInstance, bf) -> RateVector:
    """Rates actually supported by ``bf`` (multicast limited by the weakest user)."""
    sm, su = sinr_all(instance, bf)
    r = np.empty(instance.K + 1)
    r[0] = np.log2(1.0 + sm.min())
    r[1:] = np.log2(1.0 + su)
    return RateVector(np.maximum(r, 0.0))


def backhaul_scale(instance: ProblemInstance, s: np.ndarray, r: np.ndarray) -> float:
    """Largest factor in [0, 1] that makes ``s, factor * r`` backhaul feasible."""
    load = instance.bandwidth * (np.asarray(s, float).T @ np.asarray(r, float))
    factor = 1.0
    for c, x in zip(instance.backhaul, load):
        if x > 0:
            factor = min(factor, c / x)
    return max(factor, 0.0)


def rate_upper_bounds(instance: ProblemInstance) -> RateVector:
    """Per-message rate caps used to size the initial search box."""
    p_total = float(instance.bs_power.sum())
    gain = np.sum(np.abs(instance.channels) ** 2, axis=1)
    snr_cap = np.log2(1.0 + p_total * gain / instance.noise)
    backhaul_cap = float(instance.backhaul.max()) / instance.bandwidth
    r = np.empty(instance.K + 1)
    r[1:] = np.minimum(backhaul_cap, snr_cap)
    r[0] = r[1:].min()
    return RateVector(r)


@dataclass(frozen=True)
class FeasibilityReport:
    """Worst normalized violation per constraint family (0 means satisfied).

    SINR rows are normalized by ``max(2^r - 1, 1)``, power and cluster-link rows
    by ``P_n`` and backhaul rows by ``max(C_n, B)``.
    """

    multicast_sinr: float
    unicast_sinr: float
    power: float
    cluster_link: float
    backhaul: float
    binary: float

    def as_dict(self) -> dict[str, float]:
        return {
            "multicast_sinr": self.multicast_sinr,
            "unicast_sinr": self.unicast_sinr,
            "power": self.power,
            "cluster_link": self.cluster_link,
            "backhaul": self.backhaul,
            "binary": self.binary,
        }

    @property
    def max_violation(self) -> float:
        return max(self.as_dict().values())

    def feasible(self, tol: float = 1e-6) -> bool:
        return all(v <= tol for v in self.as_dict().values())


def check_feasibility(instance: ProblemInstance, sol: Solution, tol: float = 1e-6) -> FeasibilityReport:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    w = sol.beamformers
    s = np.asarray(sol.clustering.s, float)
    r = sol.rates.r
    sm, su = sinr_all(instance, w)

    def sinr_violation(required, achieved):
        return float(np.max(np.maximum(required - achieved, 0.0) / np.maximum(required, 1.0), initial=0.0))

    req0 = np.full(instance.K, 2.0 ** r[0] - 1.0)
    reqk = 2.0 ** r[1:] - 1.0
    bp = w.block_power()
    P = instance.bs_power
    power = np.max(np.maximum(bp.sum(axis=0) - P, 0.0) / P)
    link = np.max(np.maximum(bp - s * P[None, :], 0.0) / P[None, :])
    load = instance.bandwidth * (s.T @ r)
    backhaul = np.max(
        np.maximum(load - instance.backhaul, 0.0) / np.maximum(instance.backhaul, instance.bandwidth)
    )
    binary = float(np.max(np.minimum(np.abs(s), np.abs(s - 1.0))))
    return FeasibilityReport(
        multicast_sinr=sinr_violation(req0, sm),
        unicast_sinr=sinr_violation(reqk, su),
        power=float(power),
        cluster_link=float(link),
        backhaul=float(backhaul),
        binary=binary,
    )

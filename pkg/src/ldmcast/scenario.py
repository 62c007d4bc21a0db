"""Seeded generation of hexagonal multi-cell network instances.

Randomness comes from ``numpy.random.Generator(PCG64(seed))``.  The draw
order is fixed: user positions (rejection sampling), then one log-normal
shadowing value per (user, BS) link, then Rayleigh fading blocks (redrawn if
the channel matrix is rank deficient).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .model import ProblemInstance

MAX_FADING_RETRIES = 16


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, float) / 10.0)


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, float)) + 30.0


def path_loss_db(d_km):
    """Macro-cell path loss in dB for a distance in km."""
    d = np.asarray(d_km, float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = 148.1 + 37.6 * np.log10(d)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ScenarioConfig:
    N: int
    K: int
    L: int
    bs_power_dbm: float
    backhaul_mbps: float
    seed: int = 0
    inter_site_distance: float = 500.0
    exclusion_radius: float = 50.0
    bandwidth_hz: float = 1e7
    antenna_gain_dbi: float = 9.0
    shadowing_std_db: float = 8.0
    noise_psd_dbm_hz: float = -174.0
    eta: float = 0.9

    REQUIRED = ("N", "K", "L", "bs_power_dbm", "backhaul_mbps")

    def __post_init__(self):
        if self.N not in HEX_LAYOUTS:
            raise ValueError(f"N must be one of {sorted(HEX_LAYOUTS)}, got {self.N}")
        if self.K < 1 or self.L < 1:
            raise ValueError("K and L must be positive")
        if self.K > self.N * self.L:
            raise ValueError("K > N*L: channels cannot be linearly independent")
        for name in ("inter_site_distance", "exclusion_radius", "bandwidth_hz", "shadowing_std_db"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.backhaul_mbps < 0:
            raise ValueError("backhaul_mbps must be nonnegative")
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        missing = [name for name in cls.REQUIRED if name not in data]
        if missing:
            raise KeyError(f"missing config field: {missing[0]}")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise KeyError(f"unknown config field: {unknown[0]}")
        kwargs = dict(data)
        for name in ("N", "K", "L", "seed"):
            if name in kwargs:
                kwargs[name] = int(kwargs[name])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


def _ring(isd: float) -> list[tuple[float, float]]:
    return [(isd * math.cos(math.pi / 3 * i), isd * math.sin(math.pi / 3 * i)) for i in range(6)]


# BS coordinates in units of the inter-site distance.  All layouts sit on the
# same hexagonal lattice, so every cell is a hexagon with apothem ISD/2 whose
# edge normals point along multiples of 60 degrees.
HEX_LAYOUTS = {
    1: [(0.0, 0.0)],
    2: [(0.0, 0.0), (1.0, 0.0)],
    3: [(0.0, 0.0), (1.0, 0.0), (0.5, math.sqrt(3) / 2)],
    7: [(0.0, 0.0)] + _ring(1.0),
}

_NORMALS = np.array([(math.cos(math.pi / 3 * i), math.sin(math.pi / 3 * i)) for i in range(6)])


def bs_positions(N: int, isd: float) -> np.ndarray:
    return isd * np.array(HEX_LAYOUTS[N], float)


def in_network(points: np.ndarray, bs: np.ndarray, isd: float) -> np.ndarray:
    """True for points inside the union of the hexagonal cells."""
    rel = points[:, None, :] - bs[None, :, :]  # (P, N, 2)
    proj = rel @ _NORMALS.T  # (P, N, 6)
    inside = np.all(proj <= isd / 2 + 1e-12, axis=2)
    return inside.any(axis=1)


def drop_users(rng: np.random.Generator, K: int, bs: np.ndarray, isd: float, exclusion: float) -> np.ndarray:
    circum = isd / math.sqrt(3)
    lo = bs.min(axis=0) - circum
    hi = bs.max(axis=0) + circum
    users = []
    while len(users) < K:
        cand = rng.uniform(lo, hi, size=(4 * K, 2))
        dist = np.linalg.norm(cand[:, None, :] - bs[None, :, :], axis=2)
        ok = in_network(cand, bs, isd) & np.all(dist >= exclusion, axis=1)
        users.extend(cand[ok][: K - len(users)])
    return np.array(users)


def large_scale_gain_db(config: ScenarioConfig, users: np.ndarray, bs: np.ndarray, rng) -> np.ndarray:
    d_km = np.linalg.norm(users[:, None, :] - bs[None, :, :], axis=2) / 1000.0
    shadow = rng.normal(0.0, config.shadowing_std_db, size=d_km.shape)
    return config.antenna_gain_dbi - path_loss_db(d_km) - shadow


def rayleigh_blocks(rng: np.random.Generator, gain_linear: np.ndarray, L: int) -> np.ndarray:
    """Per-link channel blocks ``sqrt(gain) * CN(0, I_L)`` flattened to ``(K, N*L)``."""
    K, N = gain_linear.shape
    fading = (rng.standard_normal((K, N, L)) + 1j * rng.standard_normal((K, N, L))) / math.sqrt(2.0)
    return (np.sqrt(gain_linear)[:, :, None] * fading).reshape(K, N * L)


def noise_power_watts(noise_psd_dbm_hz: float, bandwidth_hz: float) -> float:
    return float(dbm_to_watts(noise_psd_dbm_hz + 10.0 * math.log10(bandwidth_hz)))


def generate(config: ScenarioConfig) -> ProblemInstance:
    rng = np.random.Generator(np.random.PCG64(config.seed))
    bs = bs_positions(config.N, config.inter_site_distance)
    users = drop_users(rng, config.K, bs, config.inter_site_distance, config.exclusion_radius)
    gain = db_to_linear(large_scale_gain_db(config, users, bs, rng))
    for _ in range(MAX_FADING_RETRIES):
        channels = rayleigh_blocks(rng, gain, config.L)
        if np.linalg.matrix_rank(channels) == config.K:
            break
    else:
        raise RuntimeError("could not draw linearly independent channels")
    return ProblemInstance(
        channels=channels,
        bs_power=np.full(config.N, float(dbm_to_watts(config.bs_power_dbm))),
        backhaul=np.full(config.N, config.backhaul_mbps * 1e6),
        noise=np.full(config.K, noise_power_watts(config.noise_psd_dbm_hz, config.bandwidth_hz)),
        bandwidth=config.bandwidth_hz,
        eta=config.eta,
        n_antennas=config.L,
        large_scale_gain=gain,
        bs_positions=bs,
        user_positions=users,
        seed=config.seed,
    )

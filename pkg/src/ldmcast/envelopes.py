"""Convex constraint builders for the relaxations used by the solvers.

Complex inner products ``h^H w_m`` are lowered to two real linear functionals
over a stacked real variable vector.  The beamformer part of that vector holds
all real parts first, then all imaginary parts, each ordered message-major,
then BS, then antenna (see :class:`Layout`).  With ``h = a + ib`` and
``w = u + iv``::

    Re{h^H w} = a.u + b.v        Im{h^H w} = a.v - b.u
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .convex_solver import ProgramBuilder, SecondOrderCone

TWO_PI = 2.0 * math.pi
DEGENERATE_CHORD = 1e-12


class Layout:
    """Index map of the real variable vector ``[w_re, w_im, extra blocks...]``."""

    def __init__(self, K: int, N: int, L: int, extra: dict[str, int] | None = None):
        self.K, self.N, self.L = K, N, L
        self.n_w = (K + 1) * N * L
        self.slices: dict[str, slice] = {"w_re": slice(0, self.n_w), "w_im": slice(self.n_w, 2 * self.n_w)}
        pos = 2 * self.n_w
        for name, size in (extra or {}).items():
            self.slices[name] = slice(pos, pos + size)
            pos += size
        self.n = pos

    def index(self, name: str, i: int = 0) -> int:
        return self.slices[name].start + i

    def block(self, m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Indices of the real and imaginary parts of ``w_{m,n}``."""
        start = (m * self.N + n) * self.L
        re = np.arange(start, start + self.L)
        return re, re + self.n_w

    def message(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        start = m * self.N * self.L
        re = np.arange(start, start + self.N * self.L)
        return re, re + self.n_w

    def inner_rows(self, h: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Rows giving ``Re{h^H w_m}`` and ``Im{h^H w_m}``."""
        re_idx, im_idx = self.message(m)
        a, b = h.real, h.imag
        re_row = np.zeros(self.n)
        im_row = np.zeros(self.n)
        re_row[re_idx] = a
        re_row[im_idx] = b
        im_row[re_idx] = -b
        im_row[im_idx] = a
        return re_row, im_row

    def unpack_w(self, x: np.ndarray) -> np.ndarray:
        w = x[: self.n_w] + 1j * x[self.n_w: 2 * self.n_w]
        return w.reshape(self.K + 1, self.N * self.L)

    def pack_w(self, w: np.ndarray) -> np.ndarray:
        flat = np.asarray(w, complex).reshape(-1)
        return np.concatenate([flat.real, flat.imag])


class InnerProducts:
    """Cached ``Re/Im{h_k^H w_m}`` rows for one (noise-normalized) channel matrix."""

    def __init__(self, layout: Layout, channels: np.ndarray):
        self.layout = layout
        K = layout.K
        self.re = np.zeros((K, K + 1, layout.n))
        self.im = np.zeros((K, K + 1, layout.n))
        for k in range(K):
            for m in range(K + 1):
                self.re[k, m], self.im[k, m] = layout.inner_rows(channels[k], m)

    def interference(self, user: int, messages) -> np.ndarray:
        """Stacked Re/Im rows of ``h_user^H w_m`` for the given messages (0-based user)."""
        msgs = list(messages)
        if not msgs:
            return np.zeros((0, self.layout.n))
        return np.vstack([np.vstack([self.re[user, m], self.im[user, m]]) for m in msgs])


@dataclass
class EnvelopeConstraints:
    eq: list[tuple[np.ndarray, float]] = field(default_factory=list)
    le: list[tuple[np.ndarray, float]] = field(default_factory=list)
    cones: list[SecondOrderCone] = field(default_factory=list)
    lower: dict[int, float] = field(default_factory=dict)
    coefficient: float | None = None

    def apply(self, builder: ProgramBuilder) -> None:
        for row, rhs in self.eq:
            builder.eq(row, rhs)
        for row, rhs in self.le:
            builder.le(row, rhs)
        builder.cones.extend(self.cones)
        for i, v in self.lower.items():
            builder.lb[i] = max(builder.lb[i], v)

    def satisfied(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        for row, rhs in self.eq:
            if abs(row @ x - rhs) > tol * (1 + abs(rhs)):
                return False
        for row, rhs in self.le:
            if row @ x - rhs > tol * (1 + abs(rhs)):
                return False
        for c in self.cones:
            if np.linalg.norm(c.A @ x + c.b) - (c.c @ x + c.d) > tol * (1 + np.linalg.norm(c.b) + abs(c.d)):
                return False
        return all(x[i] >= v - tol for i, v in self.lower.items())

    def __add__(self, other: "EnvelopeConstraints") -> "EnvelopeConstraints":
        return EnvelopeConstraints(self.eq + other.eq, self.le + other.le, self.cones + other.cones,
                                   {**self.lower, **other.lower})


@dataclass(frozen=True)
class PhaseInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (0.0 <= self.lo <= self.hi <= TWO_PI):
            raise ValueError(f"invalid phase interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def chord(self) -> tuple[float, float]:
        """Midpoint ``(x, y)`` of the chord joining the two boundary directions."""
        return ((math.cos(self.lo) + math.cos(self.hi)) / 2.0, (math.sin(self.lo) + math.sin(self.hi)) / 2.0)


def unicast_coefficient(r_lo: float) -> float:
    return math.sqrt((2.0 ** r_lo - 1.0) / 2.0 ** r_lo)


def multicast_coefficient(r_lo: float) -> float:
    return math.sqrt(2.0 ** r_lo - 1.0)


def _sinr_cone(ip: InnerProducts, user: int, coef: float, rhs_row: np.ndarray, noise: float = 1.0) -> SecondOrderCone:
    """``coef * sqrt(g_user(w)) <= rhs_row @ x`` with ``g = sum_{i>=1} |h^H w_i|^2 + noise``."""
    K = ip.layout.K
    A = coef * ip.interference(user, range(1, K + 1))
    b = np.zeros(A.shape[0] + 1)
    b[-1] = coef * math.sqrt(noise)
    A = np.vstack([A, np.zeros((1, ip.layout.n))])
    return SecondOrderCone(A, b, rhs_row, 0.0)


def unicast_soc(ip: InnerProducts, k: int, r_lo: float, noise: float = 1.0) -> EnvelopeConstraints:
    """Unicast SINR of user ``k`` (1-based) at rate ``r_lo`` with the phase of ``h_k^H w_k`` fixed to 0."""
    if r_lo < 0:
        raise ValueError("r_lo must be nonnegative")
    coef = unicast_coefficient(r_lo)
    cone = _sinr_cone(ip, k - 1, coef, ip.re[k - 1, k], noise)
    return EnvelopeConstraints(eq=[(ip.im[k - 1, k], 0.0)], cones=[cone], coefficient=coef)


def multicast_soc_anchor(ip: InnerProducts, r_lo: float, noise: float = 1.0) -> EnvelopeConstraints:
    """Multicast SINR of the last user, which fixes the common phase of ``w_0``."""
    if r_lo < 0:
        raise ValueError("r_lo must be nonnegative")
    K = ip.layout.K
    coef = multicast_coefficient(r_lo)
    cone = _sinr_cone(ip, K - 1, coef, ip.re[K - 1, 0], noise)
    return EnvelopeConstraints(eq=[(ip.im[K - 1, 0], 0.0)], cones=[cone], coefficient=coef)


def multicast_envelope(ip: InnerProducts, k: int, r_lo: float, interval: PhaseInterval,
                       noise: float = 1.0) -> EnvelopeConstraints | None:
    """Convex hull of the multicast SINR set of user ``k`` with ``arg(h_k^H w_0)`` in ``interval``.

    Returns ``None`` when the interval is wider than pi (constraint dropped).
    """
    if not 1 <= k <= ip.layout.K - 1:
        raise IndexError("envelopes apply to users 1..K-1")
    if interval.width > math.pi:
        return None
    re, im = ip.re[k - 1, 0], ip.im[k - 1, 0]
    lo, hi = interval.lo, interval.hi
    out = EnvelopeConstraints()
    out.le.append((math.sin(lo) * re - math.cos(lo) * im, 0.0))
    out.le.append((-(math.sin(hi) * re - math.cos(hi) * im), 0.0))
    x, y = interval.chord()
    rho = x * x + y * y
    out.coefficient = rho * multicast_coefficient(r_lo)
    if rho > DEGENERATE_CHORD:
        out.cones.append(_sinr_cone(ip, k - 1, out.coefficient, x * re + y * im, noise))
    return out


@dataclass(frozen=True)
class McCormick:
    """Convex envelope of ``x * y`` over ``[x_lo, x_hi] x [y_lo, y_hi]``."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def __post_init__(self):
        if self.x_lo > self.x_hi or self.y_lo > self.y_hi:
            raise ValueError("McCormick bounds cross")

    def value(self, x, y):
        return np.maximum(
            self.y_lo * x + self.x_lo * y - self.x_lo * self.y_lo,
            self.y_hi * x + self.x_hi * y - self.x_hi * self.y_hi,
        )

    def rows(self, n: int, ix: int, iy: int, iz: int) -> list[tuple[np.ndarray, float]]:
        """Two ``<=`` rows stating that ``z`` dominates both affine minorants."""
        out = []
        for xb, yb in ((self.x_lo, self.y_lo), (self.x_hi, self.y_hi)):
            row = np.zeros(n)
            row[ix] += yb
            row[iy] += xb
            row[iz] -= 1.0
            out.append((row, xb * yb))
        return out


def perspective_power(layout: Layout, n: int, power: float) -> EnvelopeConstraints:
    """Soft power levels ``v_{m,n}``: ``sum_m v <= P_n`` and ``||w_{m,n}||^2 <= s_{m,n} v_{m,n}``.

    Requires ``s`` and ``v`` blocks in the layout, indexed ``m * N + n``.
    """
    N = layout.N
    out = EnvelopeConstraints()
    total = np.zeros(layout.n)
    for m in range(layout.K + 1):
        iv = layout.index("v", m * N + n)
        is_ = layout.index("s", m * N + n)
        total[iv] = 1.0
        out.lower[iv] = 0.0
        re, im = layout.block(m, n)
        rows = np.zeros((2 * layout.L + 1, layout.n))
        rows[np.arange(layout.L), re] = 1.0
        rows[np.arange(layout.L, 2 * layout.L), im] = 1.0
        rows[-1, is_] = 0.5
        rows[-1, iv] = -0.5
        c = np.zeros(layout.n)
        c[is_] = 0.5
        c[iv] = 0.5
        out.cones.append(SecondOrderCone(rows, np.zeros(2 * layout.L + 1), c, 0.0))
    out.le.append((total, power))
    return out

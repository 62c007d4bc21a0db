"""Shared builders and independent oracles for the test suite."""
import numpy as np

from ldmcast.model import ProblemInstance
from ldmcast.scenario import ScenarioConfig, generate

# Filled by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def make_instance(N, K, L, C_mbps=100.0, seed=0, P_dbm=20.0, eta=0.9) -> ProblemInstance:
    return generate(ScenarioConfig(N=N, K=K, L=L, bs_power_dbm=P_dbm, backhaul_mbps=C_mbps, seed=seed, eta=eta))


def scalar_instance(h, noise=1.0, power=10.0, backhaul=1e9, bandwidth=1.0, eta=0.9, L=1) -> ProblemInstance:
    h = np.atleast_2d(np.asarray(h, complex))
    N = h.shape[1] // L
    return ProblemInstance(channels=h, bs_power=np.full(N, power), backhaul=np.full(N, backhaul),
                           noise=np.full(h.shape[0], noise), bandwidth=bandwidth, eta=eta, n_antennas=L)


def sinr_oracle(h, w, noise):
    """Loop-based SINRs straight from the definitions, 0-based user index."""
    K = len(h)
    sm, su = [], []
    for k in range(K):
        g = [abs(sum(complex(a).conjugate() * complex(b) for a, b in zip(h[k], w[m]))) ** 2 for m in range(K + 1)]
        uni = sum(g[1:])
        sm.append(g[0] / (uni + noise[k]))
        su.append(g[k + 1] / (uni - g[k + 1] + noise[k]))
    return np.array(sm), np.array(su)


def grid_oracle_single_user(instance, resolution=1e-3):
    """Brute force for N = K = 1: matched-filter beams, power grid, backhaul scaling.

    Returns the best per-Hz objective over s in {0,1}^2 and the (p0, p1) grid.
    """
    assert instance.N == 1 and instance.K == 1
    P = float(instance.bs_power[0])
    g = float(np.sum(np.abs(instance.channels[0]) ** 2))
    sigma = float(instance.noise[0])
    cap = float(instance.backhaul[0]) / instance.bandwidth
    eta = instance.eta
    steps = np.arange(0, int(round(1 / resolution)) + 1) * resolution * P
    p0, p1 = np.meshgrid(steps, steps, indexing="ij")
    budget = p0 + p1 <= P * (1 + 1e-12)
    best = 0.0
    for s0 in (0, 1):
        for s1 in (0, 1):
            q0, q1 = p0 * s0, p1 * s1
            r0 = np.log2(1 + q0 * g / (q1 * g + sigma))
            r1 = np.log2(1 + q1 * g / sigma)
            load = s0 * r0 + s1 * r1
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(load > 0, np.minimum(1.0, cap / load), 1.0)
            obj = scale * (eta * r0 + (1 - eta) * r1)
            best = max(best, float(np.max(np.where(budget, obj, -np.inf))))
    return best


# ---- random samplers for the envelope property suites

TWO_PI = 2.0 * np.pi


def random_envelope_setup(rng, max_K=4, max_N=3, max_L=3):
    """Random layout, noise-normalized channels and a stacked beamformer point."""
    from ldmcast.envelopes import InnerProducts, Layout

    K = int(rng.integers(2, max_K + 1))
    N = int(rng.integers(1, max_N + 1))
    L = int(rng.integers(1, max_L + 1))
    layout = Layout(K, N, L)
    h = (rng.standard_normal((K, N * L)) + 1j * rng.standard_normal((K, N * L))) / np.sqrt(2)
    w = (rng.standard_normal((K + 1, N * L)) + 1j * rng.standard_normal((K + 1, N * L))) / np.sqrt(2)
    w[1:] *= rng.uniform(0.0, 0.5)
    return layout, InnerProducts(layout, h), h, w


def multicast_terms(h, w, k, noise=1.0):
    """(h_k^H w_0, g_k(w)) for a 1-based user index."""
    v = np.conj(h[k - 1]) @ w[0]
    g = float(np.sum(np.abs(np.conj(h[k - 1]) @ w[1:].T) ** 2) + noise)
    return v, g


def interval_around(rng, phase, max_width=np.pi):
    """Random interval inside [0, 2pi] containing ``phase`` with width at most ``max_width``."""
    width = rng.uniform(0.0, max_width)
    lo = phase - rng.uniform(0.0, width)
    lo = min(max(lo, 0.0), TWO_PI)
    hi = min(lo + width, TWO_PI)
    lo = min(lo, phase)
    hi = max(hi, phase)
    if hi - lo > max_width:
        lo = max(phase - max_width / 2, 0.0)
        hi = min(lo + max_width, TWO_PI)
    return lo, hi


def mccormick_sample_errors(rng, n):
    """Largest envelope - product excess inside random boxes and largest corner mismatch."""
    from ldmcast.envelopes import McCormick

    worst_excess, worst_corner = -np.inf, 0.0
    for _ in range(n):
        x_lo, x_hi = np.sort(rng.uniform(-5, 5, 2))
        y_lo, y_hi = np.sort(rng.uniform(-5, 5, 2))
        env = McCormick(x_lo, x_hi, y_lo, y_hi)
        x, y = rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi)
        worst_excess = max(worst_excess, float(env.value(x, y) - x * y))
        for cx in (x_lo, x_hi):
            for cy in (y_lo, y_hi):
                worst_corner = max(worst_corner, abs(float(env.value(cx, cy)) - cx * cy))
    return worst_excess, worst_corner


def envelope_soundness_failures(rng, n):
    """Count sampled points of the true multicast SINR set that the envelope cuts off."""
    from ldmcast.envelopes import PhaseInterval, multicast_envelope

    failures = 0
    for _ in range(n):
        layout, ip, h, w = random_envelope_setup(rng)
        k = int(rng.integers(1, layout.K))
        v, g = multicast_terms(h, w, k)
        phase = float(np.angle(v)) % TWO_PI
        lo, hi = interval_around(rng, phase)
        sinr = abs(v) ** 2 / g
        r_lo = np.log2(1 + sinr * rng.uniform(0.0, 1.0))
        env = multicast_envelope(ip, k, r_lo, PhaseInterval(lo, hi))
        if env is not None and not env.satisfied(layout.pack_w(w), tol=1e-9):
            failures += 1
    return failures


def lemma_floor_worst(rng, n):
    """Largest relative shortfall of the SINR below (2^r - 1) cos^2(width/2) over envelope points.

    Each sample puts the point on (or inside) the envelope's cone boundary by
    choosing the largest rate the envelope admits for it.
    """
    from ldmcast.envelopes import PhaseInterval, multicast_envelope

    worst = -np.inf
    checked = 0
    while checked < n:
        layout, ip, h, w = random_envelope_setup(rng)
        k = int(rng.integers(1, layout.K))
        v, g = multicast_terms(h, w, k)
        phase = float(np.angle(v)) % TWO_PI
        lo, hi = interval_around(rng, phase)
        x, y = (np.cos(lo) + np.cos(hi)) / 2, (np.sin(lo) + np.sin(hi)) / 2
        rho = x * x + y * y
        if rho <= 1e-12:
            continue
        proj = x * v.real + y * v.imag
        coef = proj / (rho * np.sqrt(g)) * rng.uniform(0.0, 1.0) ** 0.1
        r_lo = np.log2(1 + coef * coef)
        env = multicast_envelope(ip, k, r_lo, PhaseInterval(lo, hi))
        if not env.satisfied(layout.pack_w(w), tol=1e-12):
            continue
        floor = (2 ** r_lo - 1) * np.cos((hi - lo) / 2) ** 2
        worst = max(worst, (floor - abs(v) ** 2 / g) / max(1.0, floor))
        checked += 1
    return worst


def smooth_l0_failures(rng, n):
    """Count violations of range [0, 1), monotonicity and midpoint concavity."""
    from ldmcast.ccp_solver import smooth_l0

    bad = 0
    for _ in range(n):
        theta = 10 ** rng.uniform(-8, 0)
        a, b = np.sort(rng.uniform(0, 10, 2) * 10 ** rng.uniform(-8, 1))
        fa, fb, fm = smooth_l0(a, theta), smooth_l0(b, theta), smooth_l0((a + b) / 2, theta)
        if not (0.0 <= fa <= fb <= 1.0):
            bad += 1
        elif fm < (fa + fb) / 2 - 1e-12:
            bad += 1
    return bad

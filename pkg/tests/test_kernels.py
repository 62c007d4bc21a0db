import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import sinr_oracle
from ldmcast import _kernels_py, kernels

try:
    from ldmcast import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = [pytest.param(_kernels_py, id="python")]
if _compiled is not None:
    BACKENDS.append(pytest.param(_compiled, id="cython"))


def random_case(seed, K, N, L):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((K, N * L)) + 1j * rng.standard_normal((K, N * L))
    W = rng.standard_normal((K + 1, N * L)) + 1j * rng.standard_normal((K + 1, N * L))
    W[rng.random((K + 1, N * L)) < 0.2] = 0.0
    noise = rng.uniform(0.2, 2.0, K)
    return H, W, noise


def sweep_inputs(H, W, K, N, L):
    Z = np.einsum("knl,mnl->kmn", H.reshape(K, N, L).conj(), W.reshape(K + 1, N, L))
    power = np.sum(np.abs(W.reshape(K + 1, N, L)) ** 2, axis=2)
    return np.ascontiguousarray(Z), power


def sweep_oracle(H, W, noise, power, capacity, eta, K, N, L):
    """Enumerate every threshold directly from the definitions."""
    best = -np.inf
    for p in np.unique(power.ravel()):
        mask = power >= p
        Wm = (W.reshape(K + 1, N, L) * mask[:, :, None]).reshape(K + 1, -1)
        sm, su = sinr_oracle(H, Wm, noise)
        r = np.concatenate([[np.log2(1 + sm.min())], np.log2(1 + su)])
        load = (mask * r[:, None]).sum(axis=0)
        ratio = [capacity[n] / load[n] for n in range(N) if load[n] > 0]
        r = r * min(min(ratio, default=np.inf), 1.0)
        best = max(best, eta * r[0] + (1 - eta) * r[1:].sum())
    return best


@pytest.mark.parametrize("impl", BACKENDS)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 3), st.integers(1, 3))
def test_sinr_pair_matches_oracle(impl, seed, K, N, L):
    H, W, noise = random_case(seed, K, N, L)
    sm, su = impl.sinr_pair(H, W, noise)
    om, ou = sinr_oracle(H, W, noise)
    assert np.allclose(sm, om, rtol=1e-10, atol=1e-12)
    assert np.allclose(su, ou, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("impl", BACKENDS)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 3), st.integers(1, 2),
       st.floats(0, 1), st.floats(0.1, 20))
def test_link_prune_sweep_matches_oracle(impl, seed, K, N, L, eta, cap):
    H, W, noise = random_case(seed, K, N, L)
    Z, power = sweep_inputs(H, W, K, N, L)
    if not np.any(power > 0):
        return
    capacity = np.full(N, cap)
    obj, mask, rates = impl.link_prune_sweep(Z, noise, power, capacity, eta)
    assert obj == pytest.approx(sweep_oracle(H, W, noise, power, capacity, eta, K, N, L), rel=1e-9, abs=1e-12)
    load = (np.asarray(mask) * np.asarray(rates)[:, None]).sum(axis=0)
    assert np.all(load <= capacity * (1 + 1e-12))


@pytest.mark.skipif(_compiled is None, reason="extension not built")
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 3), st.integers(1, 3))
def test_backends_agree(seed, K, N, L):
    H, W, noise = random_case(seed, K, N, L)
    for a, b in zip(_kernels_py.sinr_pair(H, W, noise), _compiled.sinr_pair(H, W, noise)):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-14)
    Z, power = sweep_inputs(H, W, K, N, L)
    if np.any(power > 0):
        capacity = np.full(N, 3.0)
        oa = _kernels_py.link_prune_sweep(Z, noise, power, capacity, 0.7)[0]
        ob = _compiled.link_prune_sweep(Z, noise, power, capacity, 0.7)[0]
        assert oa == pytest.approx(ob, rel=1e-12, abs=1e-14)


def test_tied_powers_are_kept_together():
    K, N, L = 1, 2, 1
    H = np.array([[1.0, 1.0]], complex)
    W = np.array([[1.0, 1.0], [0.0, 0.0]], complex)
    Z, power = sweep_inputs(H, W, K, N, L)
    for impl in [p.values[0] for p in BACKENDS]:
        _, mask, _ = impl.link_prune_sweep(Z, np.ones(1), power, np.full(N, 100.0), 1.0)
        assert np.array_equal(np.asarray(mask)[0], [1, 1])


def test_pure_python_switch():
    env = dict(os.environ, LDMCAST_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from ldmcast import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND in ("python", "cython")

"""Compare the compiled kernels with the numpy fallback.

Run with ``python benchmarks/bench_kernels.py [--repeat R]``.  Both backends
are imported directly, so the result does not depend on
``LDMCAST_PURE_PYTHON``.
"""
import argparse
import timeit

import numpy as np

from ldmcast import _kernels_py

try:
    from ldmcast import _kernels
except ImportError:  # extension not built
    _kernels = None


def sinr_case(rng, K, N, L):
    H = rng.standard_normal((K, N * L)) + 1j * rng.standard_normal((K, N * L))
    W = rng.standard_normal((K + 1, N * L)) + 1j * rng.standard_normal((K + 1, N * L))
    return H, W, rng.uniform(0.5, 2.0, K)


def sweep_case(rng, K, N, L):
    H, W, noise = sinr_case(rng, K, N, L)
    Hb = H.reshape(K, N, L)
    Wb = W.reshape(K + 1, N, L)
    Z = np.einsum("knl,mnl->kmn", Hb.conj(), Wb)
    power = np.sum(np.abs(Wb) ** 2, axis=2)
    return Z, noise, power, np.full(N, 5.0), 0.9


def bench(fn, args, repeat):
    t = timeit.Timer(lambda: fn(*args))
    n, _ = t.autorange()
    return min(t.repeat(repeat, n)) / n


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _kernels is None:
        print("compiled extension not available; build with `python setup.py build_ext --inplace`")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'(K,N,L)':<12}{'python us':>12}{'cython us':>12}{'speedup':>10}")
    for shape in ((2, 2, 2), (3, 3, 2), (10, 7, 4)):
        for name, make in (("sinr_pair", sinr_case), ("link_prune_sweep", sweep_case)):
            case = make(rng, *shape)
            a = getattr(_kernels_py, name)(*case)
            b = getattr(_kernels, name)(*case)
            for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
                assert np.allclose(x, y, rtol=1e-9, atol=1e-12), f"{name} backends disagree"
            tp = bench(getattr(_kernels_py, name), case, args.repeat)
            tc = bench(getattr(_kernels, name), case, args.repeat)
            print(f"{name:<18}{str(shape):<12}{tp * 1e6:>12.1f}{tc * 1e6:>12.1f}{tp / tc:>10.1f}")


if __name__ == "__main__":
    main()

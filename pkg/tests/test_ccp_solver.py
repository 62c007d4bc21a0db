import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import make_instance, scalar_instance
from ldmcast.ccp_solver import (
    GAMMA_FLOOR,
    CcpContext,
    CcpOptions,
    ccp_iterate,
    feasible_init,
    pdc_violation,
    refine,
    refine_clusters,
    run_ccp,
    smooth_l0,
    smooth_l0_grad,
    solve_ccp,
)
from ldmcast.model import BeamformerSet, achieved_rates, backhaul_scale, check_feasibility, make_solution

# ---- smoothing


def test_smooth_l0_examples():
    theta = 1e-6
    assert smooth_l0(0.0, theta) == 0.0
    assert smooth_l0(theta, theta) == pytest.approx(0.5)
    assert smooth_l0(1e6 * theta, theta) == pytest.approx(1.0, abs=1e-5)


def test_smooth_l0_rejects_bad_input():
    with pytest.raises(ValueError):
        smooth_l0(-1.0, 1.0)
    with pytest.raises(ValueError):
        smooth_l0(1.0, 0.0)
    with pytest.raises(ValueError):
        smooth_l0_grad(-1.0, 1.0)


@given(st.floats(0, 1e3), st.floats(0, 1e3), st.floats(1e-8, 1.0))
def test_smooth_l0_underestimates_indicator_and_is_concave(a, b, theta):
    lo, hi = min(a, b), max(a, b)
    f_lo, f_hi = smooth_l0(lo, theta), smooth_l0(hi, theta)
    assert 0.0 <= f_lo <= f_hi <= 1.0
    assert f_lo <= (1.0 if lo > 0 else 0.0)
    assert smooth_l0((lo + hi) / 2, theta) >= (f_lo + f_hi) / 2 - 1e-12
    assert smooth_l0_grad(lo, theta) > 0


@given(st.floats(0, 10), st.floats(1e-3, 1.0))
def test_smooth_l0_gradient_matches_difference(x, theta):
    h = 1e-4 * (theta + x)
    lo = max(x - h, 0.0)
    fd = (smooth_l0(x + h, theta) - smooth_l0(lo, theta)) / (x + h - lo)
    assert fd == pytest.approx(smooth_l0_grad(x, theta), rel=1e-3)


@given(st.floats(-100, 100), st.floats(-100, 100))
def test_product_split_identity(s, t):
    assert 4 * s * t == pytest.approx((s + t) ** 2 - (s - t) ** 2, rel=1e-12, abs=1e-9)


def test_options_validation():
    with pytest.raises(ValueError):
        CcpOptions(theta=0.0)
    with pytest.raises(ValueError):
        CcpOptions(restarts=0)


# ---- starting points and iterations


@pytest.fixture(scope="module")
def ctx322(inst322):
    return CcpContext(inst322)


def test_feasible_init_is_feasible(ctx322, inst322):
    a = feasible_init(inst322, 0, ctx=ctx322)
    b = feasible_init(inst322, 1, ctx=ctx322)
    assert pdc_violation(ctx322, a) <= 1e-8
    assert pdc_violation(ctx322, b) <= 1e-8
    assert not np.allclose(a.w, b.w)
    c = feasible_init(inst322, 0, ctx=ctx322)
    assert np.array_equal(a.w, c.w)


def test_zero_backhaul_start_is_zero():
    inst = make_instance(2, 2, 2, C_mbps=0.0)
    p = feasible_init(inst, 0)
    assert p.objective == 0.0 and not np.any(p.w)


def test_iterates_ascend_and_stay_feasible(ctx322, inst322):
    p = feasible_init(inst322, 3, ctx=ctx322)
    for _ in range(6):
        q = ccp_iterate(inst322, p, ctx=ctx322)
        assert not q.stalled
        assert q.objective >= p.objective - 1e-8 * max(1.0, abs(p.objective))
        assert pdc_violation(ctx322, q) <= 1e-7
        p = q


def test_rate_epigraph_anchor_holds(ctx322, inst322):
    # at the expansion point the tangent of log2(1 + gamma) equals the function
    p = feasible_init(inst322, 0, ctx=ctx322)
    assert np.all(np.log2(1 + p.gamma) <= p.t + 1e-12)


def test_run_trace_monotone(ctx322, inst322):
    run = run_ccp(ctx322, feasible_init(inst322, 5, ctx=ctx322))
    tr = run.trace
    assert all(b >= a - 1e-6 * max(1.0, abs(a)) for a, b in zip(tr, tr[1:]))
    assert run.iterations <= ctx322.opts.max_iter


# ---- refinement


def test_refine_empty_cluster_gives_zero(inst322):
    w = BeamformerSet(np.zeros((3, 6), complex), 2)
    sol = refine(inst322, w)
    assert sol.objective == 0.0


def test_refine_threshold_is_inclusive(inst322):
    w = np.zeros((3, 6), complex)
    w[1, :2] = [1e-3, 0.0]  # block power exactly 1e-6 W
    w[2, 2:4] = [1e-2, 0.0]
    bf = BeamformerSet(w, 2)
    sol = refine(inst322, bf, power_threshold=float(bf.block_power()[1, 0]))
    assert sol.clustering.s[1, 0] == 1 and sol.clustering.s[2, 1] == 1
    assert sol.clustering.s.sum() == 2


def test_refine_beats_truncated_start(inst322):
    rng = np.random.default_rng(4)
    P = float(inst322.bs_power[0])
    for _ in range(3):
        w = rng.standard_normal((3, 6)) + 1j * rng.standard_normal((3, 6))
        w *= math.sqrt(P / 3) / np.linalg.norm(w.reshape(3, 3, 2), axis=2).max()
        bf = BeamformerSet(w, 2)
        S = bf.block_power() >= 1e-6
        r = achieved_rates(inst322, bf).r
        r = r * backhaul_scale(inst322, S, r)
        floor = make_solution(inst322, bf, S.astype(np.int8), r).objective
        sol = refine(inst322, bf, power_threshold=1e-6)
        assert np.array_equal(sol.clustering.s.astype(bool), S)
        assert sol.objective >= floor * (1 - 1e-6)
        assert check_feasibility(inst322, sol, 1e-6).feasible(1e-6)


def test_refine_clusters_respects_assignment(inst322):
    S = np.array([[1, 1, 1], [1, 0, 0], [0, 1, 1]], np.int8)
    w = np.ones((3, 6), complex) * 0.05
    sol = refine_clusters(inst322, S, w)
    assert np.array_equal(sol.clustering.s, S)
    blocks = sol.beamformers.block_power()
    assert np.all(blocks[S == 0] == 0)


# ---- full pipeline


@pytest.fixture(scope="module")
def ccp_result(inst322):
    return solve_ccp(inst322, CcpOptions(restarts=2))


def test_solution_feasible(inst322, ccp_result):
    assert check_feasibility(inst322, ccp_result, 1e-6).feasible(1e-6)
    assert ccp_result.objective > 0


def test_runs_logged(ccp_result):
    runs = ccp_result.meta["runs"]
    assert len(runs) == 2
    assert max(r["objective"] for r in runs) == pytest.approx(ccp_result.objective, rel=1e-6)
    for r in runs:
        tr = r["trace"]
        assert all(b >= a - 1e-6 * max(1.0, abs(a)) for a, b in zip(tr, tr[1:]))


def test_zero_backhaul_objective_zero():
    inst = make_instance(2, 2, 2, C_mbps=0.0)
    sol = solve_ccp(inst, CcpOptions(restarts=1))
    assert sol.objective == 0.0
    assert check_feasibility(inst, sol, 1e-6).feasible(1e-6)


def test_multicast_only_weight(inst322):
    inst = inst322.replace(eta=1.0)
    sol = solve_ccp(inst, CcpOptions(restarts=1))
    assert sol.objective == pytest.approx(inst.bandwidth * sol.rates.r[0], rel=1e-12)


def test_disabled_messages_stay_off(inst322):
    sol = solve_ccp(inst322, CcpOptions(restarts=1), enabled=np.array([True, False, False]))
    assert np.all(sol.rates.r[1:] == 0)
    assert not np.any(sol.beamformers.w[1:])


def test_single_user_scalar_case():
    inst = scalar_instance([[1.0 + 0.0j, 0.0]], noise=1.0, power=3.0, backhaul=1e9, eta=0.0, L=2)
    sol = solve_ccp(inst, CcpOptions(restarts=1))
    # unicast only: all power on the matched filter gives log2(1 + 3) = 2
    assert sol.rates.r[1] == pytest.approx(2.0, rel=1e-3)


def test_gamma_floor_value():
    assert GAMMA_FLOOR == 1e-9

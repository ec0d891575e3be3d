"""Max-min solver: interference system, feasibility logic, search loops."""

import numpy as np
import pytest

from mimocoex import (ConfigError, OptimizationProblem, PilotPowerMode,
                      PowerAllocation, Scenario, SchemeConfig, compute_sinr,
                      best_point, make_rng, maxmin_power_control,
                      optimize_pilot_length, rate_region_sweep, rates)
from mimocoex.optimizer import _affine_system, admissible_np_m, config_with


def scen(M=64, sigma2=7.96e-14):
    return Scenario.from_betas([1.2e-9, 4e-10, 6e-10],
                               [2e-10, 8e-11, 1.5e-10, 3e-10, 6e-11],
                               M=M, noise_power_w=sigma2)


def all_cfgs(N=100, Np_m=4):
    return [SchemeConfig.sc1(N, 3, Np_m, 0.5),
            SchemeConfig.sc2(N, 3, Np_m),
            SchemeConfig.sc3(N, 3, Np_m)]


def test_affine_system_reproduces_engine_denominators():
    s = scen()
    rng = make_rng(61)
    q = np.full(s.K, s.p_max_w)
    for cfg in all_cfgs():
        for _ in range(5):
            p = rng.uniform(0.05, 1.0, size=s.K)
            W, b = _affine_system(s, cfg, q, p_freeze=p)
            bd = compute_sinr(s, PowerAllocation(p, q), cfg)
            np.testing.assert_allclose(W @ p + b, bd.noncoherent + bd.coherent,
                                       rtol=1e-10)


def test_maxmin_reaches_floor_and_revalidates():
    s = scen()
    for cfg in all_cfgs():
        prob = OptimizationProblem(scenario=s, scheme_config=cfg,
                                   machine_rate_floor=0.4)
        pt = maxmin_power_control(prob)
        assert pt.feasible
        rep = rates(s, pt.powers, pt.config)
        assert rep.min_human_rate == pytest.approx(pt.R_h, abs=1e-9)
        assert rep.min_machine_rate >= 0.4 - 1e-6
        assert np.all(pt.powers.p <= s.p_max_w * (1 + 1e-9))
        assert np.all(pt.powers.q <= s.p_max_w * (1 + 1e-9))


def test_maxmin_floor_monotone():
    s = scen()
    cfg = SchemeConfig.sc2(100, 3, 4)
    prob = OptimizationProblem(scenario=s, scheme_config=cfg)
    prev = None
    for floor in (0.0, 0.2, 0.5, 0.8):
        pt = maxmin_power_control(prob.with_floor(floor))
        assert pt.feasible
        if prev is not None:
            assert pt.R_h <= prev + 2e-3
        prev = pt.R_h


def test_maxmin_impossible_floor_flagged():
    s = scen()
    cfg = SchemeConfig.sc2(100, 3, 4)
    prob = OptimizationProblem(scenario=s, scheme_config=cfg,
                               machine_rate_floor=50.0)
    pt = maxmin_power_control(prob)
    assert not pt.feasible
    assert pt.powers is None
    assert pt.status == "floor-infeasible"
    assert pt.R_h == 0.0


def test_balanced_mode_equalizes_classes():
    s = scen()
    for cfg in all_cfgs():
        prob = OptimizationProblem(scenario=s, scheme_config=cfg)
        pt = maxmin_power_control(prob, balanced=True)
        assert pt.feasible
        assert abs(pt.R_h - pt.R_m) < 5e-3


def test_maxmin_deterministic():
    s = scen()
    cfg = SchemeConfig.sc3(100, 3, 4)
    prob = OptimizationProblem(scenario=s, scheme_config=cfg,
                               machine_rate_floor=0.3)
    a = maxmin_power_control(prob)
    b = maxmin_power_control(prob)
    assert a.R_h == b.R_h
    np.testing.assert_array_equal(a.powers.p, b.powers.p)


def test_small_grid_cross_check():
    # 3-device toy: quick 60-per-axis grid must not beat the solver
    s = Scenario.from_betas([8e-10], [2.5e-10, 1.2e-10], M=32,
                            noise_power_w=7.96e-14)
    cfg = SchemeConfig.sc2(60, 1, 4)
    floor = 0.6
    prob = OptimizationProblem(scenario=s, scheme_config=cfg,
                               machine_rate_floor=floor, tolerance=1e-5)
    pt = maxmin_power_control(prob)
    assert pt.feasible
    grid = np.linspace(0.0, 1.0, 60)
    best = -1.0
    prelog = cfg.prelog(s)
    for p0 in grid:
        P0, P1, P2 = np.meshgrid(np.array([p0]), grid, grid, indexing="ij")
        R = _sc2_rates_raw(s, cfg, prelog, P0, P1, P2)
        ok = (R[1] >= floor) & (R[2] >= floor)
        if np.any(ok):
            best = max(best, float(np.max(np.where(ok, R[0], -1.0))))
    assert pt.R_h >= best - 1e-4
    # grid resolution bound: continuum optimum within two steps' sensitivity
    assert best >= pt.R_h - 0.12


def _sc2_rates_raw(s, cfg, prelog, P0, P1, P2):
    """Shared-window rates written out with raw arithmetic (3 devices)."""
    b0, b1, b2 = s.betas()
    q = s.p_max_w
    s2 = s.noise_power_w
    Np, Np_m, M = cfg.Np_h, cfg.Np_m, s.M
    g_h = Np * q * b0 ** 2 / (Np * q * b0 + s2)
    c = Np / (Np - 1)                       # one human in the window
    gb1 = Np * q * b1 ** 2 / (Np * q * b1 + c * q * b2 + s2)
    gb2 = Np * q * b2 ** 2 / (Np * q * b2 + c * q * b1 + s2)
    tot = P0 * b0 + P1 * b1 + P2 * b2 + s2
    G0 = M * P0 / (tot / g_h)
    G1 = M * P1 / (tot / gb1 + (M / Np_m) * P2 * q * b2 ** 2 / (q * b1 ** 2))
    G2 = M * P2 / (tot / gb2 + (M / Np_m) * P1 * q * b1 ** 2 / (q * b2 ** 2))
    return (prelog[0] * np.log2(1 + G0), prelog[1] * np.log2(1 + G1),
            prelog[2] * np.log2(1 + G2))


def test_tied_pilot_mode_converges_and_validates():
    s = scen()
    cfg = SchemeConfig.sc2(100, 3, 4)
    prob = OptimizationProblem(scenario=s, scheme_config=cfg,
                               machine_rate_floor=0.3,
                               pilot_power_mode=PilotPowerMode.TIED)
    pt = maxmin_power_control(prob)
    assert pt.feasible
    np.testing.assert_array_equal(pt.powers.p, pt.powers.q)
    rep = rates(s, pt.powers, pt.config)
    assert rep.min_machine_rate >= 0.3 - 1e-6
    assert rep.min_human_rate >= pt.R_h - 1e-9


def test_pilot_length_search_beats_fixed_choice():
    s = scen()
    cfg = SchemeConfig.sc2(60, 3, 2)
    prob = OptimizationProblem(scenario=s, scheme_config=cfg,
                               machine_rate_floor=0.8)
    fixed = maxmin_power_control(prob)
    searched = optimize_pilot_length(prob)
    assert searched.feasible
    assert searched.R_h >= fixed.R_h - 1e-9
    assert searched.np_m in admissible_np_m(prob)


def test_config_with_keeps_scheme_coupling():
    s = scen()
    c2 = config_with(SchemeConfig.sc2(100, 3, 4), s, np_m=7)
    assert c2.Np_m == 7 and c2.Np_h == 10       # shared window tracks the pool
    c1 = config_with(SchemeConfig.sc1(100, 3, 4, 0.25), s, np_m=7, alpha=0.75)
    assert c1.Np_m == 7 and c1.alpha_h == 0.75 and c1.Np_h == 3
    c3 = config_with(SchemeConfig.sc3(100, 3, 4), s, np_m=7)
    assert c3.Np_m == 7 and c3.Np_h == 3


def test_region_sweep_shapes_and_flags():
    s = scen()
    cfg = SchemeConfig.sc2(60, 3, 4)
    prob = OptimizationProblem(scenario=s, scheme_config=cfg, search_np_m=False)
    pts = rate_region_sweep(prob, [0.0, 0.5, 40.0])
    assert len(pts) == 3
    assert pts[0].feasible and pts[1].feasible and not pts[2].feasible
    assert pts[0].R_h >= pts[1].R_h - 2e-3
    with pytest.raises(ConfigError):
        rate_region_sweep(prob, [-0.1])


def test_sc1_alpha_search_only_helps():
    s = scen()
    cfg = SchemeConfig.sc1(80, 3, 4, 0.5)
    base = OptimizationProblem(scenario=s, scheme_config=cfg,
                               machine_rate_floor=0.25, search_np_m=False,
                               search_alpha=False)
    fixed = maxmin_power_control(base)
    searched = best_point(OptimizationProblem(scenario=s, scheme_config=cfg,
                                              machine_rate_floor=0.25,
                                              search_np_m=False))
    assert searched.feasible
    assert searched.R_h >= fixed.R_h - 1e-9


def test_problem_validation():
    s = scen()
    cfg = SchemeConfig.sc2(60, 3, 4)
    with pytest.raises(ConfigError):
        OptimizationProblem(scenario=s, scheme_config=cfg, machine_rate_floor=-1.0)
    with pytest.raises(ConfigError):
        OptimizationProblem(scenario=s, scheme_config=cfg, tolerance=0.0)

"""Scheme configuration, pilot drawing and overlap structure."""

import math

import numpy as np
import pytest

from mimocoex import (ConfigError, Scenario, Scheme, SchemeConfig,
                      draw_pilot_plan, gram_matrix, make_rng)


def scen(K_h=2, K_m=4, M=8):
    return Scenario.from_betas([1e-9] * K_h, [2e-10] * K_m, M=M,
                               noise_power_w=1e-13)


def test_factories_and_fields():
    c1 = SchemeConfig.sc1(200, 5, 10, 0.3)
    assert c1.scheme is Scheme.SC1 and c1.alpha_h == 0.3
    c2 = SchemeConfig.sc2(200, 5, 10)
    assert c2.Np_h == 15            # shared window holds both pilot groups
    c3 = SchemeConfig.sc3(200, 5, 10)
    assert c3.scheme is Scheme.SC3 and c3.Np_h == 5


def test_validate_rejects_bad_geometry():
    s = scen(K_h=3)
    with pytest.raises(ConfigError):
        SchemeConfig.sc1(10, 2, 3, 0.5).validate(s)      # Np_h < K_h
    with pytest.raises(ConfigError):
        SchemeConfig.sc1(10, 3, 10, 0.5).validate(s)     # machine window fills CI
    with pytest.raises(ConfigError):
        SchemeConfig.sc1(10, 3, 3, 1.5).validate(s)      # alpha out of range
    with pytest.raises(ConfigError):
        SchemeConfig.sc3(10, 3, 7).validate(s)           # no data room left
    with pytest.raises(ConfigError):
        SchemeConfig(scheme=Scheme.SC2, N=10, Np_h=5, Np_m=4).validate(s)


def test_prelog_values():
    s = scen(K_h=5, K_m=15)
    # separate intervals: each class pays only its own training
    c1 = SchemeConfig.sc1(250, 5, 14, 0.4)
    pl = c1.prelog(s)
    assert pl[0] == pytest.approx(0.4 * (250 - 5) / 250, rel=1e-15)
    assert pl[-1] == pytest.approx(0.6 * (250 - 14) / 250, rel=1e-15)
    # shared window: everyone pays the whole training block
    c2 = SchemeConfig.sc2(250, 5, 14)
    assert np.allclose(c2.prelog(s), (250 - 19) / 250)
    # staggered: humans pay their own block, machines pay both
    c3 = SchemeConfig.sc3(250, 5, 14)
    pl = c3.prelog(s)
    assert pl[0] == pytest.approx((250 - 5) / 250, rel=1e-15)
    assert pl[-1] == pytest.approx(0.924, rel=1e-15)


def test_prelog_bounds_random_configs():
    rng = make_rng(404)
    s = scen(K_h=3, K_m=5)
    for _ in range(200):
        N = int(rng.integers(10, 300))
        Np_h = int(rng.integers(3, max(4, N // 2)))
        Np_m = int(rng.integers(1, max(2, N // 3)))
        alpha = float(rng.uniform())
        for make in (lambda: SchemeConfig.sc1(N, Np_h, Np_m, alpha),
                     lambda: SchemeConfig.sc2(N, 3, Np_m),
                     lambda: SchemeConfig.sc3(N, Np_h, Np_m)):
            try:
                cfg = make()
                cfg.validate(s)
            except ConfigError:
                continue
            pl = cfg.prelog(s)
            assert np.all(pl >= 0.0) and np.all(pl <= 1.0)


def test_plan_shapes_and_range():
    s = scen(K_h=2, K_m=6)
    cfg = SchemeConfig.sc2(60, 2, 5)
    plan = draw_pilot_plan(cfg, s, seed=8)
    assert plan.machine_choices.shape == (6,)
    assert plan.machine_choices.min() >= 0
    assert plan.machine_choices.max() < 5
    assert plan.K == 8


def test_plan_deterministic():
    s = scen(K_h=2, K_m=6)
    cfg = SchemeConfig.sc3(60, 2, 5)
    a = draw_pilot_plan(cfg, s, seed=4)
    b = draw_pilot_plan(cfg, s, seed=4)
    assert np.array_equal(a.machine_choices, b.machine_choices)


def test_gram_matrix_structure():
    s = scen(K_h=2, K_m=4)
    cfg = SchemeConfig.sc1(60, 2, 3, 0.5)
    plan = draw_pilot_plan(cfg, s, seed=2)
    G = gram_matrix(plan)
    assert G.shape == (6, 6)
    assert np.array_equal(G, G.T)
    assert set(np.unique(G)) <= {0.0, 1.0}
    assert np.allclose(np.diag(G), 1.0)
    # humans never share with anyone
    assert np.allclose(G[:2, :] - np.eye(6)[:2, :], 0.0)
    # machine overlap iff equal choice
    ch = plan.machine_choices
    for i in range(4):
        for j in range(4):
            assert G[2 + i, 2 + j] == (1.0 if ch[i] == ch[j] else 0.0)


def test_collision_frequency_matches_uniform_choice():
    # a fixed machine pair collides with probability 1/Np_m
    s = scen(K_h=1, K_m=2)
    for Np_m in (2, 5, 9):
        cfg = SchemeConfig.sc1(40, 1, Np_m, 0.5)
        n = 4000
        hits = 0
        for i in range(n):
            plan = draw_pilot_plan(cfg, s, seed=make_rng(55, stream=i))
            hits += int(plan.machine_choices[0] == plan.machine_choices[1])
        p_hat = hits / n
        p = 1.0 / Np_m
        se = math.sqrt(p * (1 - p) / n)
        assert abs(p_hat - p) < 3.0 * se, (Np_m, p_hat)


def test_collision_sets_group_shared_choices():
    s = scen(K_h=1, K_m=5)
    cfg = SchemeConfig.sc1(40, 1, 2, 0.5)
    plan = draw_pilot_plan(cfg, s, seed=12)
    groups = plan.collision_sets()
    seen = sorted(d for ids in groups.values() for d in ids)
    assert seen == [1, 2, 3, 4, 5]          # device ids, humans excluded
    for pilot, ids in groups.items():
        assert all(plan.machine_choices[d - 1] == pilot for d in ids)

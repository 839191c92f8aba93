import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from d2dpolicy.channel import LinkRatios, RadioParams, Topology, slot_observables
from d2dpolicy.strategies import (
    Mode,
    ModeDecision,
    SlotAction,
    StrategyConfig,
    StrategyKind,
    awa_s_prepare,
    awa_s_radio,
    awa_s_step,
    awam_s_prepare,
    awam_s_step,
    baseline_throughput,
    c_d2b,
    geo_s_mode,
    power_ladder,
    prepare,
    select_mode,
)
from d2dpolicy.threshold import k_rayleigh, optimal_action


def test_c_d2b_value():
    assert c_d2b(1e-12, 1e-12, 0.99) == pytest.approx(math.exp(-1) / (1 - 0.99 ** 2))
    assert c_d2b(1e-12, 1e-12, 0.99) == pytest.approx(18.4863, abs=1e-3)
    with pytest.raises(ValueError):
        c_d2b(0.0, 1e-12, 0.9)
    with pytest.raises(ValueError):
        c_d2b(1e-12, 1e-12, 1.0)


def test_select_mode():
    assert select_mode(20.0, 18.5, k=0.7) == ModeDecision(Mode.D2D, 20.0, 18.5, 0.7)
    d = select_mode(10.0, 18.5, k=0.7)
    assert d.mode is Mode.D2B and d.k is None
    assert select_mode(18.5, 18.5, k=1.0).mode is Mode.D2D  # tie keeps D2D


def test_geo_s_mode():
    t = Topology(pos_U=(100, 0), pos_S=(50, 0), pos_D=(50, 40))
    # 0.8 * 40^-4 > 50^-4  -> D2D
    assert geo_s_mode(t, 4.0, 0.8) is Mode.D2D
    far = Topology(pos_U=(100, 0), pos_S=(50, 0), pos_D=(50, 49))
    assert geo_s_mode(far, 4.0, 0.8) is Mode.D2B
    assert geo_s_mode(t, 4.0, 0.0) is Mode.D2B


def test_baseline_throughput():
    assert baseline_throughput(1e-12, 1e-12, 1.0) == pytest.approx(0.18393972058572117)


def test_power_ladder():
    lv = power_ladder(-13, 12)
    assert len(lv) == 12
    assert lv[0] == pytest.approx(10 ** -1.3 * 1e-3)
    assert np.allclose(np.diff(np.log2(lv)), 1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        StrategyConfig(StrategyKind.AWA_S, xi=0.0)
    with pytest.raises(ValueError):
        StrategyConfig(StrategyKind.AWAM_S)
    with pytest.raises(ValueError):
        StrategyConfig(StrategyKind.AWAM_S, power_levels=(0.1, 0.3))
    with pytest.raises(ValueError):
        StrategyConfig("NOPE")
    with pytest.raises(ValueError):
        StrategyConfig(StrategyKind.GEO_S, W=0)
    assert StrategyConfig("GEO_S").kind is StrategyKind.GEO_S


def test_awa_s_radio(topo, radio):
    r = awa_s_radio(topo, radio, 10.0)
    assert r.P_S == pytest.approx(10.0 * topo.d_SD ** 4 * radio.N0)
    assert r.P_U == pytest.approx(radio.rho * topo.d_UB ** 4)


def test_awa_s_prepare_compares_rewards(topo, radio):
    d = awa_s_prepare(topo, radio, 0.99, 2, 10.0)
    r = awa_s_radio(topo, radio, 10.0)
    k = k_rayleigh(LinkRatios.from_topology(topo, r), r, 0.99, 2)
    assert d.c_d2b == pytest.approx(c_d2b(radio.rho, radio.noise, 0.99))
    if d.mode is Mode.D2D:
        assert d.k == pytest.approx(k) and d.c_d2d >= d.c_d2b
    else:
        assert d.k is None and d.c_d2d < d.c_d2b


def test_awa_s_step_follows_threshold(topo, radio):
    r = awa_s_radio(topo, radio, 10.0)
    links = LinkRatios.from_topology(topo, r)
    k = k_rayleigh(links, r, 0.99, 2)
    dec = ModeDecision(Mode.D2D, 30.0, 18.0, k)
    from d2dpolicy.channel import blockage_probability, success_probability
    rng = np.random.default_rng(4)
    for _ in range(200):
        obs = slot_observables(topo, r, rng)
        p = success_probability(links, r, obs.h_UD_sq)
        q = blockage_probability(links, r, obs.h_UB_sq)
        want = optimal_action(p, q, k).value == "T"
        act = awa_s_step(dec, obs, links, r)
        assert (act is SlotAction.TRANSMIT_D2D) == want


def test_d2b_step_alternates(topo, radio):
    dec = ModeDecision(Mode.D2B, 1.0, 18.0)
    obs = slot_observables(topo, radio, np.random.default_rng(0))
    links = LinkRatios.from_topology(topo, radio)
    acts = [awa_s_step(dec, obs, links, radio, slot) for slot in range(4)]
    assert acts == [SlotAction.TRANSMIT_D2B, SlotAction.HALT] * 2


def test_awam_single_level_matches_awa(topo, radio):
    xi = 10.0
    P = xi * topo.d_SD ** 4 * radio.N0
    dec_m, model = awam_s_prepare(topo, radio, 0.99, 2, (P,))
    dec_a = awa_s_prepare(topo, radio, 0.99, 2, xi)
    assert model.k == pytest.approx(k_rayleigh(LinkRatios.from_topology(topo, awa_s_radio(topo, radio, xi)),
                                               awa_s_radio(topo, radio, xi), 0.99, 2), rel=1e-3)
    assert dec_m.mode is dec_a.mode


def test_awam_step_labels(topo, radio):
    lv = power_ladder(-13, 12)
    dec, model = awam_s_prepare(topo, radio, 0.99, 3, lv)
    assert model.N == 12 and model.k is not None
    r = awa_s_radio(topo, radio, 1.0)
    rng = np.random.default_rng(1)
    labels = [awam_s_step(model, slot_observables(topo, r, rng)) for _ in range(200)]
    assert all(0 <= x <= 12 for x in labels)


def test_prepare_dispatch(topo, radio):
    g = prepare(StrategyConfig(StrategyKind.GEO_S), topo, radio)
    assert g.radio.P_S == pytest.approx(radio.rho * topo.d_SD ** 4)
    n = prepare(StrategyConfig(StrategyKind.NO_D2D), topo, radio)
    assert n.mode is Mode.D2B
    with pytest.raises(ValueError):
        n.d2d_powers(np.ones((3, 4)))
    assert n.d2b_power == pytest.approx(radio.rho * topo.d_SB ** 4)
    for p in (g, n):
        assert p.radio.P_U == pytest.approx(radio.rho * topo.d_UB ** 4)
    if g.mode is Mode.D2D:
        assert np.all(g.d2d_powers(np.ones((5, 4))) == g.radio.P_S)


def test_prepared_awa_powers_follow_threshold(topo, radio):
    prep = prepare(StrategyConfig(StrategyKind.AWA_S, W=2, xi=10.0), topo, radio)
    if prep.mode is not Mode.D2D:
        pytest.skip("fixture topology picks D2B")
    h = np.random.default_rng(2).standard_exponential((1000, 4))
    pw = prep.d2d_powers(h)
    assert set(np.unique(pw)) <= {0.0, prep.radio.P_S}
    assert 0 < np.count_nonzero(pw) < 1000


@given(st.floats(1e-15, 1e-9), st.floats(1e-15, 1e-9), st.floats(0.0, 0.999))
def test_c_d2b_bounds(rho, N0, gamma):
    v = c_d2b(rho, N0, gamma)
    assert 0 <= v <= 1 / (1 - gamma ** 2)


@given(st.floats(0, 100), st.floats(0, 100), st.floats(0.1, 10))
def test_select_mode_picks_larger(a, b, k):
    d = select_mode(a, b, k)
    assert (d.mode is Mode.D2D) == (a >= b)
    assert (d.k is None) == (d.mode is Mode.D2B)


def test_c_d2d_weakly_decreasing_in_W(topo, radio):
    ds = [awa_s_prepare(topo, radio, 0.99, W, 10.0) for W in range(1, 11)]
    c = [d.c_d2d for d in ds]
    assert all(b <= a + 1e-12 for a, b in zip(c, c[1:]))
    assert len({d.c_d2b for d in ds}) == 1


def test_vanishing_xi_goes_d2b(topo, radio):
    assert awa_s_prepare(topo, radio, 0.99, 2, 1e-6).mode is Mode.D2B


def test_c_d2b_uses_threshold():
    assert c_d2b(1e-12, 1e-12, 0.9, theta=2.0) == pytest.approx(math.exp(-2) / (1 - 0.81))

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from d2dpolicy.mdp import (
    Action,
    ConvergenceError,
    MdpState,
    UndefinedSlope,
    build_correlated,
    build_uncorrelated,
    extract_threshold,
    free_transmit_grid,
    midpoint_grid,
    monotonicity_violations,
    transition_kernel,
    uniform_model,
    value_iteration,
)
from d2dpolicy.threshold import beta_const, k_uniform


def test_state_count_uncorrelated():
    m = uniform_model(4, 3, 0.9)
    assert m.n_states == 19
    m1 = build_uncorrelated([0.5], [0.5], [[1.0]], 1, 0.9)
    assert m1.n_states == 2
    for i in range(m.n_states):
        assert m.index(m.state(i)) == i
    assert m.state(17) == MdpState(2)


def test_state_count_correlated():
    g = midpoint_grid(3)
    K = np.full((9, 9), 1 / 9)
    m = build_correlated(g, g, K, 2, 0.9)
    assert m.n_states == 27
    for i in range(m.n_states):
        assert m.index(m.state(i)) == i


def test_validation_errors():
    g = midpoint_grid(2)
    with pytest.raises(ValueError):
        build_uncorrelated(g, g, np.full((2, 2), 0.3), 1, 0.9)
    with pytest.raises(ValueError):
        build_uncorrelated([0.5, 0.2], g, np.full((2, 2), 0.25), 1, 0.9)
    with pytest.raises(ValueError):
        build_uncorrelated(g, g, np.full((2, 2), 0.25), 0, 0.9)
    with pytest.raises(ValueError):
        build_uncorrelated(g, g, np.full((2, 2), 0.25), 1, 1.0)
    with pytest.raises(ValueError):
        build_correlated(g, g, np.full((4, 4), 0.2), 1, 0.9)


def test_marginal_sums_to_one():
    m = uniform_model(16, 2, 0.9)
    assert abs(m.marginal.sum() - 1) <= 1e-12


def test_transitions():
    m = uniform_model(4, 3, 0.9)
    fresh = m.marginal.ravel()
    # end of blockage releases S with a fresh draw
    out = transition_kernel(m, MdpState(3), Action.H)
    assert np.allclose(out[:16], fresh) and out[16:].sum() == 0
    # mid-blockage advances deterministically
    out = transition_kernel(m, MdpState(1), "H")
    assert out[m.index(MdpState(2))] == 1.0 and out.sum() == 1.0
    with pytest.raises(ValueError):
        transition_kernel(m, MdpState(2), Action.T)


def test_transmit_transitions_split_by_q():
    g = np.array([0.3, 0.6])
    q = np.array([0.0, 0.3])
    m = build_uncorrelated(g, q, np.full((2, 2), 0.25), 2, 0.9)
    out = transition_kernel(m, MdpState(0, 1, 0), Action.T)
    assert out[m.index(MdpState(1))] == 0.0
    assert out[:4].sum() == pytest.approx(1.0)
    out = transition_kernel(m, MdpState(0, 1, 1), Action.T)
    assert out[m.index(MdpState(1))] == pytest.approx(0.3)
    assert np.allclose(out[:4], 0.7 * m.marginal.ravel())


def test_correlated_transitions_stochastic():
    rng = np.random.default_rng(0)
    g = midpoint_grid(3)
    K = rng.random((9, 9))
    K /= K.sum(axis=1, keepdims=True)
    m = build_correlated(g, g, K, 2, 0.9)
    for i in range(m.n_states):
        s = m.state(i)
        acts = [Action.H] + ([Action.T] if s.lam == 0 else [])
        for a in acts:
            assert transition_kernel(m, s, a).sum() == pytest.approx(1.0, abs=1e-12)


def test_single_state_certain_success():
    m = build_uncorrelated([1.0], [0.0], [[1.0]], 3, 0.9)
    pol = value_iteration(m)
    assert pol.transmit[0]
    assert pol.values[0] == pytest.approx(1 / (1 - 0.9), abs=1e-8)


def test_zero_reward_ties_to_halt():
    m = build_uncorrelated([0.0], [0.0], [[1.0]], 1, 0.9)
    pol = value_iteration(m)
    assert not pol.transmit[0]
    assert pol.actions[0] == "H"
    assert pol.values[0] == 0.0


def test_blocked_states_always_halt_and_chain():
    m = uniform_model(16, 4, 0.95)
    pol = value_iteration(m)
    assert not pol.transmit[m.n_pairs:].any()
    v_blk = pol.values[m.n_pairs:]
    assert np.allclose(v_blk[:-1], 0.95 * v_blk[1:], atol=1e-8)
    assert np.all(pol.values >= 0)
    assert pol.residual < 1e-9


def test_fixed_point_relation():
    m = uniform_model(12, 3, 0.9)
    pol = value_iteration(m, epsilon=1e-12)
    n = m.n_pairs
    v_free = pol.values[:n].reshape(12, 12)
    cont = (m.marginal * v_free).sum()
    p = m.p_grid[:, None]
    q = m.q_grid[None, :]
    bellman = np.maximum(0.9 * cont, p + 0.9 * ((1 - q) * cont + q * pol.values[n]))
    assert np.max(np.abs(bellman - v_free)) < 1e-10


def test_residual_contracts_geometrically():
    # after the policy stops changing, successive residuals shrink by <= gamma
    m = uniform_model(8, 2, 0.8)
    res = []
    for cap in range(40, 60):
        try:
            value_iteration(m, epsilon=1e-300, max_iter=cap)
        except ConvergenceError as exc:
            res.append(exc.residual)
    ratios = np.array(res[1:]) / np.array(res[:-1])
    assert np.all(ratios <= 0.8 + 1e-9)


def test_convergence_failure_reports_residual():
    m = uniform_model(4, 2, 0.99)
    with pytest.raises(ConvergenceError) as ei:
        value_iteration(m, epsilon=1e-9, max_iter=5)
    assert ei.value.residual > 1e-9


def test_correlated_with_iid_kernel_matches_uncorrelated():
    n, W, g = 6, 2, 0.9
    mu = uniform_model(n, W, g)
    K = np.tile(mu.marginal.ravel(), (n * n, 1))
    mc = build_correlated(mu.p_grid, mu.q_grid, K, W, g)
    pu = value_iteration(mu)
    pc = value_iteration(mc)
    assert np.array_equal(pu.transmit[:n * n], pc.transmit[:n * n])
    assert np.allclose(pu.values[:n * n], pc.values[:n * n], atol=1e-7)


@pytest.mark.parametrize("W", [1, 3, 10])
def test_policy_matches_uniform_closed_form(W):
    m = uniform_model(64, W, 0.99)
    pol = value_iteration(m)
    tx = free_transmit_grid(pol, m)
    k = k_uniform(beta_const(0.99, W))
    analytic = m.q_grid[None, :] < k * m.p_grid[:, None]
    assert (tx == analytic).mean() >= 0.99
    fit = extract_threshold(pol, m)
    assert abs(fit.slope - k) <= 1.0 / 64 * max(1.0, k)
    assert fit.violation_fraction == 0.0


def test_undefined_slope():
    m = build_uncorrelated([1.0], [0.0], [[1.0]], 1, 0.9)
    with pytest.raises(UndefinedSlope):
        extract_threshold(value_iteration(m), m)


def test_monotonicity_violation_counter():
    tx = np.array([[True, False], [False, False]])
    assert monotonicity_violations(tx) > 0
    assert monotonicity_violations(np.array([[False, False], [True, False]])) == 0


@given(st.integers(2, 12), st.integers(2, 12), st.integers(1, 6), st.floats(0.5, 0.97),
       st.integers(0, 2 ** 31))
def test_policies_are_monotone_for_any_marginal(n_p, n_q, W, gamma, seed):
    rng = np.random.default_rng(seed)
    p = np.sort(rng.choice(np.linspace(0.01, 0.99, 200), n_p, replace=False))
    q = np.sort(rng.choice(np.linspace(0.01, 0.99, 200), n_q, replace=False))
    mar = rng.random((n_p, n_q)) + 1e-3
    mar /= mar.sum()
    m = build_uncorrelated(p, q, mar, W, gamma)
    pol = value_iteration(m, epsilon=1e-11)
    assert monotonicity_violations(free_transmit_grid(pol, m)) == 0.0

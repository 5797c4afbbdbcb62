import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbbandit.generators import gen_random
from cbbandit.whittle import SingleArmMdp, compute_whittle_table, value_iteration, whittle_index

probs = st.floats(0.0, 1.0)


@st.composite
def arms(draw):
    r = np.array(draw(st.lists(st.floats(-2.0, 2.0), min_size=4, max_size=4))).reshape(2, 2)
    p = np.array(draw(st.lists(probs, min_size=4, max_size=4))).reshape(2, 2)
    gamma = draw(st.floats(0.5, 0.97))
    return SingleArmMdp(r, p, gamma)


def policy_iteration(mdp, w):
    """Optimal values by exact policy evaluation (linear solves), independent of value iteration."""
    r = mdp.reward.copy()
    r[:, 1] -= w
    P = np.stack([1 - mdp.transition, mdp.transition], axis=-1)  # [s, a, s']
    pol = np.zeros(2, dtype=int)
    for _ in range(100):
        Ppi = P[np.arange(2), pol]
        V = np.linalg.solve(np.eye(2) - mdp.gamma * Ppi, r[np.arange(2), pol])
        Q = r + mdp.gamma * P @ V
        new = Q.argmax(axis=1)
        if np.array_equal(new, pol):
            return V, Q
        pol = new
    return V, Q


@given(arms(), st.floats(-3.0, 3.0))
def test_value_iteration_matches_linear_solve(mdp, w):
    vi = value_iteration(mdp, w, tol=1e-12)
    V, Q = policy_iteration(mdp, w)
    scale = 1.0 / (1.0 - mdp.gamma)
    assert np.allclose(vi.V, V, atol=1e-9 * scale)
    assert np.allclose(vi.Q, Q, atol=1e-9 * scale)


@given(arms(), st.floats(-3.0, 3.0))
def test_value_iteration_contracts(mdp, w):
    res = value_iteration(mdp, w, tol=1e-11)
    d = np.array(res.deltas)
    d = d[d > 1e-10]  # below this, rounding in V dominates the sweep change
    ulp = 4 * np.finfo(float).eps * max(1.0, float(np.abs(res.V).max()))  # each delta carries a few ulps of V
    if d.size > 2:
        assert np.all(d[2:] <= (mdp.gamma + 1e-9) * d[1:-1] + ulp)


@given(arms(), st.integers(0, 1))
def test_index_makes_actions_indifferent(mdp, s):
    tol = 1e-6
    res = whittle_index(mdp, s, tol=tol)
    if res.indexable:
        Q = value_iteration(mdp, float(res.index), tol=1e-12).Q
        assert abs(Q[s, 1] - Q[s, 0]) <= 10 * tol
    else:
        assert res.index == -np.inf


def test_known_index_for_myopic_arm():
    # state does not move: the index is just the immediate pull reward
    r = np.array([[0.0, 0.0], [0.0, 0.7]])
    p = np.array([[0.0, 0.0], [1.0, 1.0]])
    mdp = SingleArmMdp(r, p, 0.9)
    assert float(whittle_index(mdp, 1, tol=1e-8).index) == pytest.approx(0.7, abs=1e-6)
    assert float(whittle_index(mdp, 0, tol=1e-8).index) == pytest.approx(0.0, abs=1e-6)


def test_index_by_scanning_subsidies():
    mdp = SingleArmMdp(np.array([[0.0, 0.0], [0.0, 1.0]]), np.array([[0.2, 0.6], [0.9, 0.4]]), 0.9)
    grid = np.linspace(-2, 2, 4001)
    gaps = []
    for w in grid:
        _, Q = policy_iteration(mdp, w)
        gaps.append(Q[1, 1] - Q[1, 0])
    crossing = grid[np.argmax(np.array(gaps) <= 0)]
    idx = float(whittle_index(mdp, 1, tol=1e-7).index)
    assert abs(idx - crossing) <= 1e-3


def test_batched_table_matches_single_calls():
    inst = gen_random(3, 2, 11)
    table = compute_whittle_table(inst, gamma=0.9, tol=1e-7)
    assert table.index.shape == (3, 2, 2)
    for i in range(3):
        for k in range(2):
            mdp = SingleArmMdp(inst.reward[i, k], inst.transition[i, k], 0.9)
            for s in range(2):
                single = float(whittle_index(mdp, s, tol=1e-7).index)
                assert table.index[i, k, s] == pytest.approx(single, abs=1e-6)


def test_averaged_mode_shares_one_column():
    inst = gen_random(4, 3, 2)
    table = compute_whittle_table(inst, mode="averaged")
    assert np.allclose(table.index, table.index[:, :1, :])
    with pytest.raises(ValueError):
        compute_whittle_table(inst, mode="other")


def test_mdp_validation():
    with pytest.raises(ValueError):
        SingleArmMdp(np.zeros((2, 2)), np.zeros((2, 2)), 1.0)
    with pytest.raises(ValueError):
        SingleArmMdp(np.zeros((2, 2)), np.full((2, 2), 1.2))

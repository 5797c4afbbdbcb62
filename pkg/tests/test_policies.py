import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from cbbandit.generators import gen_random, gen_theorem1
from cbbandit.policies import (
    POLICY_KINDS,
    COIPPolicy,
    FlexOccupancyPolicy,
    GreedyPolicy,
    RandomPolicy,
    SoftOccupancyPolicy,
    WhittlePolicy,
    ranked_pulls,
    random_subset,
)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=12), st.integers(0, 15), st.floats(-1, 1))
def test_ranked_pulls_picks_top_above_threshold(prio, budget, thr):
    prio = np.array(prio)
    a = ranked_pulls(prio, budget, thr)
    eligible = prio > thr
    assert a.sum() == min(budget, eligible.sum())
    assert np.all(prio[a == 1] > thr)
    if a.sum() and (a == 0).any():
        worst_pulled = prio[a == 1].min()
        assert np.all(prio[(a == 0) & eligible] <= worst_pulled)


def test_ranked_pulls_ties_go_to_lower_arm():
    assert ranked_pulls([1.0, 2.0, 2.0, 2.0], 2).tolist() == [0, 1, 1, 0]


@given(st.integers(1, 20), st.integers(0, 25), st.integers(0, 2**32 - 1))
def test_random_subset_size(n, budget, seed):
    u = np.random.default_rng(seed).random(n)
    assert random_subset(n, budget, u).sum() == min(budget, n)


def test_random_subset_is_uniform():
    counts = np.zeros(5)
    rng = np.random.default_rng(0)
    for _ in range(20_000):
        counts += random_subset(5, 2, rng.random(5))
    assert np.allclose(counts / 20_000, 0.4, atol=0.015)


def _fitted(inst, budget=2):
    return [
        RandomPolicy(budget).fit(inst),
        GreedyPolicy(budget).fit(inst),
        WhittlePolicy(budget).fit(inst),
        COIPPolicy(budget).fit(inst),
        FlexOccupancyPolicy((1,) * inst.num_contexts).fit(inst),
    ]


@given(st.integers(0, 500), st.integers(0, 2**32 - 1))
def test_quota_respected_every_call(seed, state_seed):
    inst = gen_random(6, 3, seed)
    rng = np.random.default_rng(state_seed)
    for pol in _fitted(inst):
        for k in range(3):
            s = rng.integers(0, 2, 6)
            a = pol.predict(s, k, rng)
            assert a.sum() <= pol.quotas[k]
            assert set(np.unique(a)) <= {0, 1}


def test_deterministic_policies_are_pure(small_instances):
    inst = small_instances[3]
    rng = np.random.default_rng(1)
    for pol in _fitted(inst)[1:]:
        for _ in range(20):
            s = rng.integers(0, 2, inst.num_arms)
            k = int(rng.integers(inst.num_contexts))
            assert np.array_equal(pol.predict(s, k), pol.predict(s.copy(), k))


def test_greedy_skips_zero_reward_arms():
    inst, _ = gen_theorem1(5)
    pol = GreedyPolicy(3).fit(inst)
    assert pol.predict(np.zeros(5, int), 0).sum() == 0
    assert pol.predict(np.ones(5, int), 1).sum() == 3


def test_random_pulls_regardless_of_state():
    inst, _ = gen_theorem1(6)
    pol = RandomPolicy(4).fit(inst)
    assert pol.predict(np.zeros(6, int), 0, np.random.default_rng(0)).sum() == 4


def test_flex_on_theorem_instance_pulls_all_in_rare_context():
    inst, _ = gen_theorem1(8)
    pol = FlexOccupancyPolicy((0, 8)).fit(inst)
    assert pol.predict(np.ones(8, int), 1).sum() == 8
    assert pol.predict(np.ones(8, int), 0).sum() == 0
    assert pol.allocation_.total_budget == pytest.approx(1.0)


def test_coip_allocation_feasible(small_instances):
    for inst in small_instances:
        pol = COIPPolicy(1.5).fit(inst)
        assert pol.allocation_.is_feasible(inst)


def test_soft_policy_not_audited(small_instances):
    pol = SoftOccupancyPolicy(1).fit(small_instances[2])
    spec = pol.kernel_spec()
    assert not spec.audit and np.all(spec.quotas == small_instances[2].num_arms)


def test_estimator_api(small_instances):
    inst = small_instances[1]
    for cls in POLICY_KINDS.values():
        est = cls()
        assert "theta" in est.get_params() or "budget" in est.get_params() or "allocation" in est.get_params()
        with pytest.raises(NotFittedError):
            est.predict(np.ones(inst.num_arms, int), 0)
        c = clone(est)
        assert c.get_params() == est.get_params()
    with pytest.raises(ValueError):
        FlexOccupancyPolicy((1,)).fit(inst)
    with pytest.raises(ValueError):
        FlexOccupancyPolicy((9, 0)).fit(inst)
    with pytest.raises(TypeError):
        GreedyPolicy(1).fit("not an instance")


def test_predict_rejects_wrong_state_length(small_instances):
    pol = GreedyPolicy(1).fit(small_instances[1])
    with pytest.raises(ValueError):
        pol.predict(np.ones(3, int), 0)

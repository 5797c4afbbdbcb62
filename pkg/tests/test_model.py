import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbbandit.model import (
    BudgetAllocation,
    CbbInstance,
    expected_budget_usage,
    load_instance,
    sample_context,
    save_instance,
    scale_instance,
    step_reward,
    step_system,
    validate_instance,
)

floats = st.floats(-1e6, 1e6, allow_nan=False)


@st.composite
def instances(draw, max_n=4, max_k=3):
    N = draw(st.integers(1, max_n))
    K = draw(st.integers(1, max_k))
    w = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=K, max_size=K)))
    f = w / w.sum()
    r = np.array(draw(st.lists(floats, min_size=N * K * 4, max_size=N * K * 4)))
    p = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=N * K * 4, max_size=N * K * 4)))
    return CbbInstance(f, r.reshape(N, K, 2, 2), p.reshape(N, K, 2, 2))


@given(instances())
def test_json_round_trip_is_value_exact(inst):
    back = CbbInstance.from_dict(json.loads(json.dumps(inst.to_dict())))
    assert np.array_equal(back.context_probs, inst.context_probs)
    assert np.array_equal(back.reward, inst.reward)
    assert np.array_equal(back.transition, inst.transition)


def test_save_load_file(tmp_path, small_instances):
    inst = small_instances[3]
    save_instance(inst, tmp_path / "x.json")
    back = load_instance(tmp_path / "x.json")
    assert np.array_equal(back.reward, inst.reward) and np.array_equal(back.transition, inst.transition)
    d = json.loads((tmp_path / "x.json").read_text())
    assert d["num_arms"] == inst.num_arms and d["num_contexts"] == inst.num_contexts


def test_shape_mismatch_in_file_rejected(small_instances):
    d = small_instances[0].to_dict()
    d["num_arms"] += 1
    with pytest.raises(ValueError):
        CbbInstance.from_dict(d)


def test_instance_arrays_are_read_only(small_instances):
    inst = small_instances[1]
    with pytest.raises(ValueError):
        inst.reward[0, 0, 0, 0] = 1.0
    with pytest.raises(ValueError):
        inst.context_probs[0] = 0.5


def test_validate_lists_every_violation():
    p = np.full((2, 2, 2, 2), 0.5)
    p[0, 1, 0, 1] = 1.5
    p[1, 0, 1, 0] = -0.1
    r = np.zeros((2, 2, 2, 2))
    r[1, 1, 1, 1] = np.nan
    rep = validate_instance(CbbInstance([0.5, 0.6], r, p))
    assert not rep.ok
    text = str(rep)
    assert "sum" in text
    assert "i=0, k=1, s=0, a=1" in text and "i=1, k=0, s=1, a=0" in text
    assert "reward(1, 1, 1, 1)" in text
    assert len(rep.failures) == 4


def test_validate_rejects_zero_context_and_bad_shape():
    r = np.zeros((1, 2, 2, 2))
    assert not validate_instance(CbbInstance([1.0, 0.0], r, r))
    assert not validate_instance(CbbInstance([1.0], np.zeros((1, 2, 2, 2)), np.zeros((1, 2, 2, 2))))


def test_budget_allocation_feasibility(small_instances):
    inst = small_instances[1]  # N=4, K=2
    f = inst.context_probs
    assert BudgetAllocation((1, 1), 1.0).is_feasible(inst)
    assert not BudgetAllocation((5, 0), 10.0).is_feasible(inst)
    assert not BudgetAllocation((-1, 1), 1.0).is_feasible(inst)
    assert not BudgetAllocation((1,), 1.0).is_feasible(inst)
    b = BudgetAllocation((4, 4), 4.0)
    assert b.is_feasible(inst)
    assert expected_budget_usage(b, f) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        expected_budget_usage((1, 2, 3), f)


def test_sample_context_batch_matches_single_draws():
    f = np.array([0.2, 0.5, 0.3])
    a = sample_context(f, np.random.default_rng(4), size=500)
    rng = np.random.default_rng(4)
    b = np.array([sample_context(f, rng) for _ in range(500)])
    assert np.array_equal(a, b)
    freq = np.bincount(sample_context(f, np.random.default_rng(1), size=200_000), minlength=3) / 200_000
    assert np.allclose(freq, f, atol=0.005)


def test_step_reward_is_plain_table_lookup(small_instances):
    inst = small_instances[4]
    rng = np.random.default_rng(0)
    for _ in range(50):
        s = rng.integers(0, 2, inst.num_arms)
        a = rng.integers(0, 2, inst.num_arms)
        k = int(rng.integers(inst.num_contexts))
        expected = np.array([inst.reward[i, k, s[i], a[i]] for i in range(inst.num_arms)]).sum()
        assert step_reward(inst, s, a, k) == expected
        nxt, r = step_system(inst, s, a, k, rng)
        assert r == expected and set(np.unique(nxt)) <= {0, 1}


def test_step_system_rejects_bad_inputs(small_instances):
    inst = small_instances[1]
    rng = np.random.default_rng(0)
    with pytest.raises(IndexError):
        step_system(inst, np.ones(4, int), np.zeros(4, int), 7, rng)
    with pytest.raises(ValueError):
        step_system(inst, np.ones(3, int), np.zeros(4, int), 0, rng)


def test_step_system_transition_frequencies():
    p = np.zeros((1, 1, 2, 2))
    p[0, 0, 1, 1] = 0.3
    inst = CbbInstance([1.0], np.zeros((1, 1, 2, 2)), p)
    rng = np.random.default_rng(2)
    hits = sum(int(step_system(inst, [1], [1], 0, rng)[0][0]) for _ in range(20_000))
    assert abs(hits / 20_000 - 0.3) < 0.015


def test_scale_instance_replicates_arms(small_instances):
    inst = small_instances[0]
    big = scale_instance(inst, 3)
    assert big.num_arms == 3 * inst.num_arms
    assert np.array_equal(big.reward[0], big.reward[2])
    assert np.array_equal(big.context_probs, inst.context_probs)

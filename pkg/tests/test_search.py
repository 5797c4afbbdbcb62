import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbbandit.generators import gen_random
from cbbandit.lp import lp_fixed_budget
from cbbandit.search import (
    BranchAndBound,
    BudgetBox,
    Mitosis,
    RegionBound,
    box_argmax_point,
    bnb,
    carve_point,
    enumerate_allocations,
    initial_box,
    mitosis,
    regret_trace,
    split_box,
    ucb_index,
)
from cbbandit.sim import Oracle, SimConfig


@st.composite
def boxes(draw, max_k=4, max_w=4):
    K = draw(st.integers(1, max_k))
    lo = [draw(st.integers(0, 5)) for _ in range(K)]
    hi = [a + draw(st.integers(0, max_w)) for a in lo]
    return BudgetBox(lo, hi)


def _points(box):
    return set(itertools.product(*[range(a, b + 1) for a, b in zip(box.lower, box.upper)]))


@given(boxes())
def test_split_partitions_box(box):
    if box.is_singleton:
        with pytest.raises(ValueError):
            split_box(box)
        return
    a, b = split_box(box)
    pa, pb = _points(a), _points(b)
    assert not pa & pb and pa | pb == _points(box)


@given(boxes(), st.data())
def test_carve_partitions_box_minus_point(box, data):
    point = tuple(data.draw(st.integers(a, b)) for a, b in zip(box.lower, box.upper))
    pieces = carve_point(box, point)
    assert len(pieces) <= 2 * len(point)
    sets = [_points(p) for p in pieces]
    union = set().union(*sets) if sets else set()
    assert sum(len(s) for s in sets) == len(union)
    assert union == _points(box) - {point}


def test_box_validation():
    with pytest.raises(ValueError):
        BudgetBox((2, 0), (1, 1))
    with pytest.raises(ValueError):
        carve_point(BudgetBox((0,), (3,)), (4,))


def test_lattice_points_respect_budget():
    inst = gen_random(5, 2, 1)
    f = inst.context_probs
    pts = enumerate_allocations(inst, 1.5)
    brute = [p for p in itertools.product(range(6), repeat=2) if f @ np.array(p) <= 1.5 + 1e-9]
    assert sorted(pts) == sorted(brute)
    assert initial_box(inst, 1.5).upper == tuple(min(5, int(np.floor(1.5 / fk + 1e-12))) for fk in f)


@pytest.mark.parametrize("seed", range(5))
def test_box_argmax_matches_enumeration(seed):
    inst = gen_random(4, 2, seed)
    budget = 1.5
    box = initial_box(inst, budget)
    values = {p: lp_fixed_budget(inst, p).objective_value for p in box.lattice_points(inst.context_probs, budget)}
    best = max(values.values())
    got = box_argmax_point(inst, box, budget).per_context
    assert values[got] == pytest.approx(best, abs=1e-8)


@given(st.integers(0, 200), st.data())
def test_region_bound_dominates_points(seed, data):
    inst = gen_random(3, 2, seed)
    budget = 1.2
    bound = RegionBound(inst, budget)
    box = initial_box(inst, budget)
    pts = box.lattice_points(inst.context_probs, budget)
    p = pts[data.draw(st.integers(0, len(pts) - 1))]
    assert lp_fixed_budget(inst, p).objective_value <= bound(box)[0] + 1e-8


def _exhaustive(inst, budget, evaluator):
    vals = {p: evaluator(p) for p in enumerate_allocations(inst, budget)}
    return vals


@pytest.mark.parametrize("seed", range(3))
def test_bnb_finds_exhaustive_best_with_shared_oracle(seed):
    inst = gen_random(5, 2, seed)
    budget = 1.5
    evaluator = Oracle(inst, SimConfig(600, 100, 2))
    vals = _exhaustive(inst, budget, evaluator)
    best_val = max(r.value for r in vals.values())
    for prune, order in [(False, "fifo"), (True, "best"), (True, "fifo")]:
        res = bnb(inst, budget, evaluator=evaluator, prune=prune, order=order)
        if not prune:
            assert res.extra["exhaustive"]
            assert res.value == best_val
        else:
            assert res.value <= best_val
            assert res.value >= best_val - 3 * vals[res.allocation.per_context].std_error - 1e-12


def test_bnb_order_validation():
    inst = gen_random(3, 2, 0)
    with pytest.raises(ValueError):
        bnb(inst, 1.0, order="lifo")


def test_mitosis_keeps_lattice_partition():
    inst = gen_random(6, 3, 2)
    budget = 2.0
    lattice = set(enumerate_allocations(inst, budget))
    f = inst.context_probs
    seen = []

    def check(t, arms, tree):
        std = {a.allocation for a in arms}
        tree_pts = [p for b in tree.boxes() for p in b.lattice_points(f, budget)]
        assert len(tree_pts) == len(set(tree_pts))
        assert not std & set(tree_pts)
        assert std | set(tree_pts) == lattice
        assert all(a.pulls >= 1 and a.ucb(t, 0.1, 1.0) >= a.empirical_mean for a in arms)
        seen.append(t)

    res = mitosis(inst, budget, rounds=150, seed=1, on_round=check)
    assert seen == list(range(1, res.extra["rounds"] + 1))
    hist = res.extra["tree_index"]
    assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))
    assert res.oracle_calls == res.extra["rounds"]


def test_mitosis_result_on_small_lattice():
    inst = gen_random(3, 2, 5)
    budget = 1.0
    n = len(enumerate_allocations(inst, budget))
    res = mitosis(inst, budget, rounds=400, c=0.5, seed=0)
    assert 1 <= res.extra["arms"] <= n
    assert res.extra["rounds"] == 400
    assert res.allocation.is_feasible(inst)
    assert np.isfinite(res.std_error)
    json.dumps(res.to_json())


def test_ucb_index():
    assert ucb_index(2.0, 4, 10, 0.5, 2.0) == pytest.approx(1.0 + 0.5 * np.sqrt(np.log(10) / 4))
    with pytest.raises(ValueError):
        ucb_index(1.0, 0, 1, 1.0)


def test_regret_trace_nondecreasing():
    values = {(0,): 1.0, (1,): 0.7, (2,): 0.9}
    hist = [(t, (t % 3,), 0.0, "pull") for t in range(1, 30)]
    tr = regret_trace(hist, values)
    assert np.all(np.diff(tr) >= 0) and tr[-1] == pytest.approx(sum(1.0 - values[(t % 3,)] for t in range(1, 30)))


def test_search_estimators():
    inst = gen_random(4, 2, 3)
    est = Mitosis(budget=1.0, rounds=60, seed=2).fit(inst)
    assert est.allocation_.is_feasible(inst)
    assert est.predict(np.ones(4, int), 0).sum() <= est.allocation_.per_context[0]
    bb = BranchAndBound(budget=1.0, epochs=2, horizon=500, burn_in=100).fit(inst)
    assert bb.kernel_spec().quotas.tolist() == list(bb.allocation_.per_context)
    assert "rounds" in est.get_params() and "prune" in bb.get_params()

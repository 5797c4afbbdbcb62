import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbbandit.asymptotic import (
    DiscreteDistribution,
    MeanFieldModel,
    asymptotic_reward,
    budget_line,
    mean_field_next,
    stationary_distribution,
    total_variation,
    verify_counterexamples,
)
from cbbandit.generators import gen_fivesix
from cbbandit.model import scale_instance
from cbbandit.policies import MODE_RANK, KernelSpec
from cbbandit.sim import SimConfig, run_epoch

unit = st.floats(0.0, 1.0)


@st.composite
def models(draw, K=2):
    w = np.array([draw(st.floats(0.05, 1.0)) for _ in range(K)])
    vec = lambda: np.array([draw(unit) for _ in range(K)])  # noqa: E731
    return MeanFieldModel(w / w.sum(), vec(), vec(), vec(), vec(), vec())


@given(models())
def test_mean_field_map_stays_in_unit_interval(model):
    x = np.linspace(0.0, 1.0, 2001)
    for k in range(model.num_contexts):
        y = mean_field_next(x, k, model)
        assert np.all((y >= 0) & (y <= 1))


@given(models())
def test_mean_field_map_matches_pointwise_formula(model):
    for x in (0.0, 0.3, 0.77, 1.0):
        for k in range(2):
            b = model.beta[k]
            pulled = min(x, b)
            idle_active = max(x - b, 0.0)
            expect = pulled * model.stay_pulled[k] + idle_active * model.stay_idle[k] + (1 - x) * model.recover[k]
            assert float(mean_field_next(x, k, model)) == pytest.approx(min(max(expect, 0), 1), abs=1e-15)


@given(models())
def test_stationary_law_is_fixed_point(model):
    tol = 1e-12
    dist = stationary_distribution(model, "exact_support", tol=tol, max_iter=5000)
    assert dist.mass.min() >= 0 and dist.mass.sum() == pytest.approx(1.0, abs=1e-10)
    if dist.mode == "exact_support" and dist.iterations < 5000:
        assert total_variation(dist.push_forward(model), dist) <= 2 * tol


def test_grid_mode_close_to_exact():
    inst, frac = gen_fivesix(0.01)
    model = MeanFieldModel.from_instance(inst, [0.0, 2 / 3])
    exact = stationary_distribution(model, "exact_support")
    grid = stationary_distribution(model, "grid", g=1e-4)
    assert asymptotic_reward(grid, model) == pytest.approx(asymptotic_reward(exact, model), abs=1e-3)
    assert grid.mass.sum() == pytest.approx(1.0, abs=1e-10)


def test_five_sixths_stationary_masses():
    five, _ = verify_counterexamples(0.01)
    d = five.distribution
    for x, m in [(1 / 3, 1 / 3), (2 / 3, 1 / 6), (1.0, 1 / 2)]:
        assert d.mass_at(x) == pytest.approx(m, abs=1e-6)
    assert d.mass.sum() == pytest.approx(1.0, abs=1e-12)


def test_budget_line_spends_budget():
    for beta in budget_line([0.5, 0.5], 0.25, 11):
        assert 0.5 * beta.sum() == pytest.approx(0.25)
        assert np.all((beta >= 0) & (beta <= 1))
    with pytest.raises(ValueError):
        budget_line([0.2, 0.3, 0.5], 0.25)


def test_model_validation():
    with pytest.raises(ValueError):
        MeanFieldModel([1.0], [1.2], [1.0], [0.5], [0.2], [1.0])
    with pytest.raises(ValueError):
        MeanFieldModel([1.0], [0.2], [1.0], [0.5], [-0.2], [1.0])
    with pytest.raises(ValueError):
        stationary_distribution(MeanFieldModel([1.0], [0.2], [1.0], [0.5], [0.2], [1.0]), mode="other")


def test_point_mass_operations():
    a = DiscreteDistribution(np.array([0.2, 0.5]), np.array([0.5, 0.5]))
    b = DiscreteDistribution(np.array([0.5]), np.array([1.0]))
    assert total_variation(a, b) == pytest.approx(0.5)
    assert a.mass_at(0.2) == 0.5


def test_finite_population_approaches_mean_field():
    eps = 0.01
    five, _ = verify_counterexamples(eps)
    inst, _ = gen_fivesix(eps)
    gaps = []
    for rho in (100, 1000, 10000):
        big = scale_instance(inst, rho)
        table = np.zeros((rho, 2, 2))
        table[:, :, 1] = 1.0  # only active copies are worth pulling
        quotas = np.rint(five.coip_beta * rho).astype(np.int64)
        spec = KernelSpec(MODE_RANK, table, quotas, 0.0)
        vals = np.array([run_epoch(big, spec, SimConfig(2200, 200, 1), seed=(0, e)).avg_reward / rho
                         for e in range(4)])
        se = vals.std(ddof=1) / 2
        gap = abs(vals.mean() - five.coip_reward)
        assert gap <= 3 * se + 2.0 / rho
        gaps.append((gap, se))
    assert gaps[-1][0] <= gaps[0][0] + 3 * gaps[0][1]

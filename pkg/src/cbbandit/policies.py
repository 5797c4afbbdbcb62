"""Budgeted decision rules mapping (state, context) to an action vector.

Each rule exists twice: as a plain ``act_*`` function and inside an
estimator class whose ``fit(instance)`` precomputes the tables the rule
needs.  Fitted estimators also expose :meth:`kernel_spec`, the compact
description the compiled simulator consumes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .lp import coip_budget, lp_fixed_budget, occupancy_index, soft_policy, solve_occupancy
from .model import BudgetAllocation, CbbInstance
from .whittle import DEFAULT_GAMMA, compute_whittle_table

# kernel modes
MODE_RANK, MODE_RANDOM, MODE_SOFT = 0, 1, 2


def _as_state(state, n=None) -> np.ndarray:
    state = np.asarray(state, dtype=np.int64)
    if n is not None and state.shape != (n,):
        raise ValueError(f"state must have length {n}")
    return state


def ranked_pulls(priority, budget: int, threshold: float = 0.0) -> np.ndarray:
    """Pull up to ``budget`` arms with the highest priority strictly above ``threshold``.

    Ties go to the lower arm index.
    """
    priority = np.asarray(priority, dtype=float)
    action = np.zeros(priority.size, dtype=np.int8)
    if budget <= 0:
        return action
    order = np.lexsort((np.arange(priority.size), -priority))
    chosen = [i for i in order if priority[i] > threshold][:budget]
    action[chosen] = 1
    return action


def random_subset(n: int, budget: int, u) -> np.ndarray:
    """Uniform random ``min(budget, n)``-subset via a partial Fisher-Yates shuffle driven by ``u``."""
    perm = np.arange(n)
    b = min(max(int(budget), 0), n)
    for j in range(b):
        pick = j + min(int(u[j] * (n - j)), n - j - 1)
        perm[j], perm[pick] = perm[pick], perm[j]
    action = np.zeros(n, dtype=np.int8)
    action[perm[:b]] = 1
    return action


def act_random(state, k: int, B_k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(state)
    return random_subset(n, B_k, rng.random(n))


def act_greedy(state, k: int, B_k: int, inst: CbbInstance) -> np.ndarray:
    state = _as_state(state, inst.num_arms)
    r = inst.reward[np.arange(inst.num_arms), k, state, 1]
    return ranked_pulls(r, B_k, 0.0)


def act_vanilla_whittle(state, k: int, B: int, table) -> np.ndarray:
    index = table.index if hasattr(table, "index") else np.asarray(table)
    state = _as_state(state, index.shape[0])
    w = index[np.arange(index.shape[0]), k, state]
    return ranked_pulls(w, B, -np.inf)


def act_flex_occupancy(state, k: int, alloc, rho) -> np.ndarray:
    """Pull up to ``B_k`` arms by descending positive occupancy index ``rho[i, s, k]``."""
    rho = np.asarray(rho)
    state = _as_state(state, rho.shape[0])
    b_k = tuple(alloc)[k]
    return ranked_pulls(rho[np.arange(rho.shape[0]), state, k], b_k, 0.0)


def act_soft(state, k: int, chi, rng: np.random.Generator) -> np.ndarray:
    """Pull each arm independently with probability ``chi[i, s_i, k]`` (ignores quotas)."""
    chi = np.asarray(chi)
    state = _as_state(state, chi.shape[0])
    u = rng.random(chi.shape[0])
    return (u < chi[np.arange(chi.shape[0]), state, k]).astype(np.int8)


@dataclass(frozen=True)
class KernelSpec:
    mode: int
    table: np.ndarray  # (N, K, 2) priority or pull probability, indexed [arm, context, state]
    quotas: np.ndarray  # (K,) int64
    threshold: float
    audit: bool = True


def uniform_allocation(inst: CbbInstance, budget) -> BudgetAllocation:
    b = min(int(budget), inst.num_arms)
    return BudgetAllocation([b] * inst.num_contexts, budget)


class _Policy(BaseEstimator):
    def _check_instance(self, inst):
        if not isinstance(inst, CbbInstance):
            raise TypeError("fit expects a CbbInstance")
        self.n_arms_ = inst.num_arms
        self.n_contexts_ = inst.num_contexts
        self.instance_ = inst

    def kernel_spec(self) -> KernelSpec:
        check_is_fitted(self)
        return self._kernel_spec()

    def predict(self, state, context: int, rng=None) -> np.ndarray:
        """Action vector for ``state`` under ``context``."""
        check_is_fitted(self)
        return self._act(_as_state(state, self.n_arms_), int(context), rng)

    @property
    def quotas(self) -> np.ndarray:
        return self.kernel_spec().quotas


class RandomPolicy(_Policy):
    def __init__(self, budget=1):
        self.budget = budget

    def fit(self, inst, y=None):
        self._check_instance(inst)
        self.allocation_ = uniform_allocation(inst, self.budget)
        return self

    def _act(self, state, k, rng):
        return act_random(state, k, self.allocation_.per_context[k], rng)

    def _kernel_spec(self):
        table = np.zeros((self.n_arms_, self.n_contexts_, 2))
        return KernelSpec(MODE_RANDOM, table, self.allocation_.as_array(), 0.0)


class GreedyPolicy(_Policy):
    def __init__(self, budget=1):
        self.budget = budget

    def fit(self, inst, y=None):
        self._check_instance(inst)
        self.allocation_ = uniform_allocation(inst, self.budget)
        self.priority_ = np.array(inst.reward[:, :, :, 1])
        return self

    def _act(self, state, k, rng):
        return act_greedy(state, k, self.allocation_.per_context[k], self.instance_)

    def _kernel_spec(self):
        return KernelSpec(MODE_RANK, self.priority_, self.allocation_.as_array(), 0.0)


class WhittlePolicy(_Policy):
    """Vanilla Whittle: the same quota in every context, arms ranked by Whittle index."""

    def __init__(self, budget=1, gamma=DEFAULT_GAMMA, mode="context", tol=1e-6):
        self.budget = budget
        self.gamma = gamma
        self.mode = mode
        self.tol = tol

    def fit(self, inst, y=None):
        self._check_instance(inst)
        self.allocation_ = uniform_allocation(inst, self.budget)
        self.table_ = compute_whittle_table(inst, self.gamma, self.tol, self.mode)
        return self

    def _act(self, state, k, rng):
        return act_vanilla_whittle(state, k, self.allocation_.per_context[k], self.table_)

    def _kernel_spec(self):
        return KernelSpec(MODE_RANK, np.array(self.table_.index), self.allocation_.as_array(), -np.inf)


def _rank_table(rho) -> np.ndarray:
    """Reorder an index table from [arm, state, context] to [arm, context, state]."""
    return np.ascontiguousarray(np.asarray(rho).transpose(0, 2, 1))


class FlexOccupancyPolicy(_Policy):
    """Occupancy-index priority with arbitrary per-context quotas.

    ``index_source="fixed"`` reads the index from the occupancy program
    restricted to the given quotas (so every budgeted context has a
    meaningful ranking); ``"global"`` reads it from the program with only
    the total budget ``sum_k f_k B_k``.
    """

    def __init__(self, allocation=(1,), theta=0.0, index_source="fixed"):
        self.allocation = allocation
        self.theta = theta
        self.index_source = index_source

    def fit(self, inst, y=None):
        self._check_instance(inst)
        alloc = np.asarray(tuple(self.allocation), dtype=np.int64)
        if alloc.shape != (inst.num_contexts,):
            raise ValueError(f"allocation needs {inst.num_contexts} entries")
        if np.any(alloc < 0) or np.any(alloc > inst.num_arms):
            raise ValueError("allocation entries must lie in [0, N]")
        total = float(inst.context_probs @ alloc)
        self.allocation_ = BudgetAllocation(alloc, total)
        sol = self._solve(inst, alloc, total, self.theta)
        if not sol.optimal and self.theta > 0:
            sol = self._solve(inst, alloc, total, 0.0)
        if not sol.optimal:
            raise RuntimeError(f"occupancy program {sol.status}")
        self.solution_ = sol
        self.rho_ = occupancy_index(sol.mu, inst)
        return self

    def _solve(self, inst, alloc, total, theta):
        if self.index_source == "fixed":
            return lp_fixed_budget(inst, alloc, theta=theta)
        if self.index_source == "global":
            return solve_occupancy(inst, total, theta=theta)
        raise ValueError(f"unknown index_source {self.index_source!r}")

    def _act(self, state, k, rng):
        return act_flex_occupancy(state, k, self.allocation_, self.rho_)

    def _kernel_spec(self):
        return KernelSpec(MODE_RANK, _rank_table(self.rho_), self.allocation_.as_array(), 0.0)


class COIPPolicy(_Policy):
    """Contextual occupancy-index policy: quotas and ranking both read off the occupancy LP."""

    def __init__(self, budget=1, theta=0.0):
        self.budget = budget
        self.theta = theta

    def fit(self, inst, y=None):
        self._check_instance(inst)
        sol = solve_occupancy(inst, float(self.budget), theta=self.theta)
        if not sol.optimal:
            raise RuntimeError(f"occupancy program {sol.status} at theta={self.theta}")
        self.solution_ = sol
        self.rho_ = occupancy_index(sol.mu, inst)
        b = coip_budget(sol.mu, inst.context_probs, float(self.budget), inst.num_arms)
        self.allocation_ = BudgetAllocation(b, self.budget)
        return self

    def _act(self, state, k, rng):
        return act_flex_occupancy(state, k, self.allocation_, self.rho_)

    def _kernel_spec(self):
        return KernelSpec(MODE_RANK, _rank_table(self.rho_), self.allocation_.as_array(), 0.0)


class SoftOccupancyPolicy(_Policy):
    """Independent pulls with the LP's conditional pull probabilities; ignores per-step quotas."""

    def __init__(self, budget=1, theta=0.0):
        self.budget = budget
        self.theta = theta

    def fit(self, inst, y=None):
        self._check_instance(inst)
        sol = solve_occupancy(inst, float(self.budget), theta=self.theta)
        if not sol.optimal:
            raise RuntimeError(f"occupancy program {sol.status}")
        self.solution_ = sol
        self.chi_ = soft_policy(sol.mu)
        return self

    def _act(self, state, k, rng):
        return act_soft(state, k, self.chi_, rng)

    def _kernel_spec(self):
        quotas = np.full(self.n_contexts_, self.n_arms_, dtype=np.int64)
        return KernelSpec(MODE_SOFT, _rank_table(self.chi_), quotas, 0.0, audit=False)


POLICY_KINDS = {
    "random": RandomPolicy,
    "greedy": GreedyPolicy,
    "whittle": WhittlePolicy,
    "coip": COIPPolicy,
    "soft": SoftOccupancyPolicy,
    "flex": FlexOccupancyPolicy,
}

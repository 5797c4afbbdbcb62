"""Epoch simulation, reward/fairness estimation and the allocation oracles.

Every epoch pre-draws its randomness from four independent Philox streams
spawned from one seed: contexts, transition uniforms, policy uniforms and the
initial state.  Policy choices therefore never shift the environment's
random numbers, and two allocations evaluated with the same seed share
common random numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .model import BUDGET_TOL, CbbInstance, step_reward, transition_states
from .policies import MODE_RANDOM, MODE_RANK, MODE_SOFT, FlexOccupancyPolicy, KernelSpec

N_BATCHES = 20


class BudgetViolation(RuntimeError):
    def __init__(self, step: int, context: int):
        super().__init__(f"per-context quota exceeded at step {step} under context {context}")
        self.step = step
        self.context = context


@dataclass(frozen=True)
class SimConfig:
    horizon: int = 2000
    burn_in: int = 200
    epochs: int = 16
    base_seed: int = 0
    initial_state_mode: str = "all_active"
    n_batches: int = N_BATCHES

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if not 0 <= self.burn_in < self.horizon:
            raise ValueError("need 0 <= burn_in < horizon")
        if self.initial_state_mode not in ("all_active", "stationary_draw"):
            raise ValueError(f"unknown initial_state_mode {self.initial_state_mode!r}")


SMALL_CONFIG = SimConfig(horizon=400, burn_in=100, epochs=1)


@dataclass
class SimOutcome:
    avg_reward: float
    per_context_reward: np.ndarray
    per_context_visits: np.ndarray
    fairness: float
    budget_violations: int
    std_error: float
    zero_reward: bool = False
    batch_means: np.ndarray = field(default=None, repr=False)

    @property
    def steps(self) -> int:
        return int(self.per_context_visits.sum())


def fairness_from_totals(per_context_reward, f) -> tuple[float, bool]:
    """``min_k (R_k / R) / f_k`` clamped to [0, 1]; ``(0, True)`` when ``R <= 0``."""
    per_context_reward = np.asarray(per_context_reward, dtype=float)
    total = float(per_context_reward.sum())
    if not total > 0:
        return 0.0, True
    share = per_context_reward / total / np.asarray(f, dtype=float)
    return float(np.clip(share.min(), 0.0, 1.0)), False


def fairness_of(outcome: SimOutcome, f) -> float:
    return fairness_from_totals(outcome.per_context_reward, f)[0]


def _streams(seed):
    ss = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.Philox(s)) for s in ss.spawn(4)]


@dataclass
class EpochRandomness:
    contexts: np.ndarray  # (T,)
    u_transition: np.ndarray  # (T, N)
    u_policy: np.ndarray  # (T, N)
    u_init: np.ndarray  # (N,)


def draw_randomness(inst: CbbInstance, horizon: int, seed) -> EpochRandomness:
    ctx_rng, trans_rng, pol_rng, init_rng = _streams(seed)
    cdf = np.cumsum(inst.context_probs)
    contexts = np.minimum(np.searchsorted(cdf, ctx_rng.random(horizon), side="right"), cdf.size - 1)
    N = inst.num_arms
    return EpochRandomness(
        contexts.astype(np.int64),
        trans_rng.random((horizon, N)),
        pol_rng.random((horizon, N)),
        init_rng.random(N),
    )


def initial_state(inst: CbbInstance, mode: str, u_init) -> np.ndarray:
    if mode == "all_active":
        return np.ones(inst.num_arms, dtype=np.int64)
    # passive-chain stationary probability of being active, context-averaged kernel
    p = np.einsum("k,iksa->isa", inst.context_probs, inst.transition)
    up, stay = p[:, 0, 0], p[:, 1, 0]
    denom = up + 1.0 - stay
    pi1 = np.where(denom > 0, up / np.where(denom > 0, denom, 1.0), 1.0)
    return (u_init < pi1).astype(np.int64)


def rank_order(table: np.ndarray) -> np.ndarray:
    """Per context, (arm, state) pair ids ``2*i + s`` sorted by descending priority then arm."""
    N, K, _ = table.shape
    arms = np.repeat(np.arange(N), 2)
    order = np.empty((K, 2 * N), dtype=np.int64)
    for k in range(K):
        prio = table[:, k, :].reshape(-1)
        order[k] = np.lexsort((arms, -prio))
    return order


@njit(cache=True)
def _simulate(mode, table, quotas, threshold, order, audit, reward, transition,
              contexts, u_trans, u_pol, state0, burn_in, n_batches):
    T = contexts.shape[0]
    N = state0.shape[0]
    K = quotas.shape[0]
    state = state0.copy()
    action = np.zeros(N, dtype=np.int64)
    perm = np.arange(N)
    ctx_reward = np.zeros(K)
    ctx_visits = np.zeros(K, dtype=np.int64)
    batch_sum = np.zeros(n_batches)
    batch_cnt = np.zeros(n_batches, dtype=np.int64)
    violations = 0
    first_violation = -1
    L = T - burn_in
    for t in range(T):
        k = contexts[t]
        for i in range(N):
            action[i] = 0
        pulls = 0
        quota = quotas[k]
        if mode == 0:
            for j in range(2 * N):
                if pulls >= quota:
                    break
                pid = order[k, j]
                i = pid // 2
                s = pid - 2 * i
                if not table[i, k, s] > threshold:
                    break
                if state[i] == s:
                    action[i] = 1
                    pulls += 1
        elif mode == 1:
            for i in range(N):
                perm[i] = i
            b = min(quota, N)
            for j in range(b):
                pick = j + min(int(u_pol[t, j] * (N - j)), N - j - 1)
                tmp = perm[j]
                perm[j] = perm[pick]
                perm[pick] = tmp
                action[perm[j]] = 1
            pulls = b
        else:
            for i in range(N):
                if u_pol[t, i] < table[i, k, state[i]]:
                    action[i] = 1
                    pulls += 1
        if audit and pulls > quota:
            violations += 1
            if first_violation < 0:
                first_violation = t
        r = 0.0
        for i in range(N):
            s = state[i]
            a = action[i]
            r += reward[i, k, s, a]
            state[i] = 1 if u_trans[t, i] < transition[i, k, s, a] else 0
        if t >= burn_in:
            ctx_reward[k] += r
            ctx_visits[k] += 1
            bidx = ((t - burn_in) * n_batches) // L
            batch_sum[bidx] += r
            batch_cnt[bidx] += 1
    return ctx_reward, ctx_visits, batch_sum, batch_cnt, violations, first_violation


def _outcome(inst, ctx_reward, ctx_visits, batch_sum, batch_cnt, violations) -> SimOutcome:
    steps = int(ctx_visits.sum())
    avg = float(ctx_reward.sum()) / steps
    used = batch_cnt > 0
    means = batch_sum[used] / batch_cnt[used]
    se = float(means.std(ddof=1) / math.sqrt(means.size)) if means.size > 1 else 0.0
    fair, zero = fairness_from_totals(ctx_reward, inst.context_probs)
    return SimOutcome(avg, ctx_reward, ctx_visits, fair, int(violations), se, zero, means)


def run_epoch(inst: CbbInstance, policy, cfg: SimConfig = SimConfig(), seed=0) -> SimOutcome:
    """Simulate one epoch of ``cfg.horizon`` steps, discarding ``cfg.burn_in``.

    ``policy`` is a fitted policy estimator or a :class:`KernelSpec`.
    Raises :class:`BudgetViolation` if a quota-respecting policy exceeds its quota.
    """
    spec = policy if isinstance(policy, KernelSpec) else policy.kernel_spec()
    rnd = draw_randomness(inst, cfg.horizon, seed)
    state0 = initial_state(inst, cfg.initial_state_mode, rnd.u_init)
    table = np.ascontiguousarray(spec.table, dtype=float)
    order = rank_order(table) if spec.mode == MODE_RANK else np.zeros((1, 1), dtype=np.int64)
    n_batches = min(cfg.n_batches, cfg.horizon - cfg.burn_in)
    out = _simulate(
        spec.mode, table, np.asarray(spec.quotas, dtype=np.int64), float(spec.threshold), order,
        bool(spec.audit), np.ascontiguousarray(inst.reward), np.ascontiguousarray(inst.transition),
        rnd.contexts, rnd.u_transition, rnd.u_policy, state0, cfg.burn_in, n_batches,
    )
    ctx_reward, ctx_visits, batch_sum, batch_cnt, violations, first = out
    if violations:
        raise BudgetViolation(int(first), int(rnd.contexts[first]))
    return _outcome(inst, ctx_reward, ctx_visits, batch_sum, batch_cnt, violations)


class _Replay:
    """Stands in for a generator and hands out one pre-drawn row of uniforms."""

    def __init__(self, row):
        self.row = row

    def random(self, n=None):
        return self.row if n is None else self.row[:n]


def run_epoch_reference(inst: CbbInstance, policy, cfg: SimConfig = SimConfig(), seed=0) -> SimOutcome:
    """Plain-Python epoch loop over ``policy.predict``; same randomness as :func:`run_epoch`."""
    rnd = draw_randomness(inst, cfg.horizon, seed)
    state = initial_state(inst, cfg.initial_state_mode, rnd.u_init)
    K = inst.num_contexts
    n_batches = min(cfg.n_batches, cfg.horizon - cfg.burn_in)
    ctx_reward = np.zeros(K)
    ctx_visits = np.zeros(K, dtype=np.int64)
    batch_sum = np.zeros(n_batches)
    batch_cnt = np.zeros(n_batches, dtype=np.int64)
    quotas = policy.kernel_spec().quotas
    audit = policy.kernel_spec().audit
    L = cfg.horizon - cfg.burn_in
    for t in range(cfg.horizon):
        k = int(rnd.contexts[t])
        action = policy.predict(state, k, rng=_Replay(rnd.u_policy[t]))
        if audit and action.sum() > quotas[k]:
            raise BudgetViolation(t, k)
        r = step_reward(inst, state, action, k)
        state = transition_states(inst, state, action, k, rnd.u_transition[t]).astype(np.int64)
        if t >= cfg.burn_in:
            ctx_reward[k] += r
            ctx_visits[k] += 1
            b = ((t - cfg.burn_in) * n_batches) // L
            batch_sum[b] += r
            batch_cnt[b] += 1
    return _outcome(inst, ctx_reward, ctx_visits, batch_sum, batch_cnt, 0)


@dataclass
class OracleResult:
    mean: float
    std_error: float
    fairness: float
    value: float  # mean, masked to 0 when fairness falls below theta
    epochs: int
    theta: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.fairness >= self.theta


class Oracle:
    """Estimates the long-run reward of the flexible occupancy policy under an allocation.

    Fitted policies are cached per allocation.  Epoch ``e`` of a call with
    seed ``s`` uses randomness seeded by ``(s, e)``, independent of the
    allocation, so comparisons between allocations use common random numbers.
    """

    def __init__(self, inst: CbbInstance, cfg: SimConfig = SimConfig(), theta: float = 0.0, index_source="fixed"):
        if not 0.0 <= theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        self.inst = inst
        self.cfg = cfg
        self.theta = theta
        self.index_source = index_source
        self._policies: dict = {}
        self.calls = 0

    def policy(self, alloc) -> FlexOccupancyPolicy:
        key = tuple(int(b) for b in alloc)
        pol = self._policies.get(key)
        if pol is None:
            pol = FlexOccupancyPolicy(key, theta=self.theta, index_source=self.index_source).fit(self.inst)
            self._policies[key] = pol
        return pol

    def check_allocation(self, alloc, budget=None):
        b = np.asarray(tuple(alloc), dtype=np.int64)
        if b.shape != (self.inst.num_contexts,) or np.any(b < 0) or np.any(b > self.inst.num_arms):
            raise ValueError(f"invalid allocation {tuple(b)}")
        if budget is not None and float(self.inst.context_probs @ b) > budget + BUDGET_TOL:
            raise ValueError(f"allocation {tuple(b)} exceeds expected budget {budget}")

    def __call__(self, alloc, seed=None) -> OracleResult:
        self.check_allocation(alloc)
        self.calls += 1
        spec = self.policy(alloc).kernel_spec()
        base = self.cfg.base_seed if seed is None else seed
        outs = [run_epoch(self.inst, spec, self.cfg, (base, e)) for e in range(self.cfg.epochs)]
        return self.combine(outs)

    def combine(self, outs) -> OracleResult:
        if len(outs) == 1:
            mean, se = outs[0].avg_reward, outs[0].std_error
        else:
            vals = np.array([o.avg_reward for o in outs])
            mean = float(vals.mean())
            se = float(vals.std(ddof=1) / math.sqrt(vals.size))
        totals = np.sum([o.per_context_reward for o in outs], axis=0)
        fair, _ = fairness_from_totals(totals, self.inst.context_probs)
        value = mean if fair >= self.theta else 0.0
        return OracleResult(mean, se, fair, value, len(outs), self.theta)


def oracle(inst: CbbInstance, alloc, cfg: SimConfig = SimConfig()) -> OracleResult:
    """Accurate estimate: ``cfg.epochs`` epochs of the flexible policy under ``alloc``."""
    return Oracle(inst, cfg)(alloc)


def oracle_small(inst: CbbInstance, alloc, seed=0) -> OracleResult:
    """Fast noisy estimate: one short epoch."""
    return Oracle(inst, SMALL_CONFIG)(alloc, seed=seed)


def oracle_fair(inst: CbbInstance, alloc, cfg: SimConfig = SimConfig(), theta: float = 0.0) -> OracleResult:
    return Oracle(inst, cfg, theta)(alloc)


def oracle_small_fair(inst: CbbInstance, alloc, seed=0, theta: float = 0.0) -> OracleResult:
    return Oracle(inst, SMALL_CONFIG, theta)(alloc, seed=seed)


def evaluate_policy(inst: CbbInstance, policy, cfg: SimConfig = SimConfig(), seed=None) -> OracleResult:
    """Run ``cfg.epochs`` epochs of an arbitrary fitted policy and pool them."""
    spec = policy.kernel_spec()
    base = cfg.base_seed if seed is None else seed
    outs = [run_epoch(inst, spec, cfg, (base, e)) for e in range(cfg.epochs)]
    return Oracle(inst, cfg).combine(outs)


__all__ = [
    "MODE_RANDOM",
    "MODE_RANK",
    "MODE_SOFT",
    "BudgetViolation",
    "Oracle",
    "OracleResult",
    "SimConfig",
    "SimOutcome",
    "evaluate_policy",
    "fairness_of",
    "oracle",
    "oracle_fair",
    "oracle_small",
    "oracle_small_fair",
    "run_epoch",
    "run_epoch_reference",
]

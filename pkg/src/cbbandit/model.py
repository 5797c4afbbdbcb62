"""Problem definition for contextual budget bandits.

An instance holds ``N`` two-state arms, ``K`` contexts drawn i.i.d. from
``context_probs`` every step, and per-context reward/transition tables
indexed ``[arm, context, state, action]``.  Transition tables store the
probability that the next state is 1 (active).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PROB_SUM_TOL = 1e-12
BUDGET_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CbbInstance:
    """Immutable contextual budget bandit instance.

    Parameters
    ----------
    context_probs : array-like, shape (K,)
    reward : array-like, shape (N, K, 2, 2)
        ``reward[i, k, s, a]``.
    transition : array-like, shape (N, K, 2, 2)
        ``transition[i, k, s, a]`` is P(next state = 1).
    """

    context_probs: np.ndarray
    reward: np.ndarray
    transition: np.ndarray
    name: str = ""

    def __post_init__(self):
        f = np.array(self.context_probs, dtype=float)
        r = np.array(self.reward, dtype=float)
        p = np.array(self.transition, dtype=float)
        for arr in (f, r, p):
            arr.setflags(write=False)
        object.__setattr__(self, "context_probs", f)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "transition", p)

    @property
    def num_arms(self) -> int:
        return self.reward.shape[0]

    @property
    def num_contexts(self) -> int:
        return self.context_probs.shape[0]

    def to_dict(self) -> dict:
        return {
            "num_arms": self.num_arms,
            "num_contexts": self.num_contexts,
            "context_probs": self.context_probs.tolist(),
            "reward": self.reward.tolist(),
            "transition": self.transition.tolist(),
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CbbInstance":
        inst = cls(
            context_probs=d["context_probs"],
            reward=d["reward"],
            transition=d["transition"],
            name=d.get("name", ""),
        )
        if inst.reward.ndim != 4 or inst.num_arms != d["num_arms"] or inst.num_contexts != d["num_contexts"]:
            raise ValueError("num_arms/num_contexts do not match the table shapes")
        return inst


@dataclass
class ValidationReport:
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        return "ok" if self.ok else "; ".join(self.failures)


def validate_instance(inst: CbbInstance) -> ValidationReport:
    """Check every instance invariant and list all violations."""
    report = ValidationReport()
    fail = report.failures
    f, r, p = inst.context_probs, inst.reward, inst.transition
    if f.ndim != 1 or f.size < 1:
        fail.append("context_probs must be a nonempty vector")
        return report
    K = f.size
    if r.ndim != 4 or r.shape[0] < 1 or r.shape[1:] != (K, 2, 2):
        fail.append(f"reward shape {r.shape} != (N, {K}, 2, 2)")
    if p.shape != r.shape:
        fail.append(f"transition shape {p.shape} != reward shape {r.shape}")
    for k in np.flatnonzero(~(f > 0)):
        fail.append(f"context_probs[{k}] = {f[k]!r} is not positive")
    total = float(f.sum())
    if abs(total - 1.0) > PROB_SUM_TOL:
        fail.append(f"context_probs sum {total:.12g}")
    if r.ndim == 4:
        for idx in zip(*np.nonzero(~np.isfinite(r))):
            fail.append(f"reward{tuple(int(x) for x in idx)} is not finite")
    if p.ndim == 4:
        bad = ~((p >= 0.0) & (p <= 1.0))
        for idx in zip(*np.nonzero(bad)):
            i, k, s, a = (int(x) for x in idx)
            fail.append(f"transition (i={i}, k={k}, s={s}, a={a}) = {p[idx]!r} outside [0, 1]")
    return report


@dataclass(frozen=True)
class BudgetAllocation:
    """Integer per-context quotas plus the expected-budget cap they must respect."""

    per_context: tuple
    total_budget: float

    def __post_init__(self):
        object.__setattr__(self, "per_context", tuple(int(b) for b in self.per_context))

    def __iter__(self):
        return iter(self.per_context)

    def __len__(self):
        return len(self.per_context)

    def as_array(self) -> np.ndarray:
        return np.array(self.per_context, dtype=np.int64)

    def is_feasible(self, inst: CbbInstance) -> bool:
        b = self.as_array()
        return (
            b.size == inst.num_contexts
            and bool(np.all(b >= 0))
            and bool(np.all(b <= inst.num_arms))
            and expected_budget_usage(b, inst.context_probs) <= self.total_budget + BUDGET_TOL
        )


def expected_budget_usage(alloc, f) -> float:
    """Expected number of pulls per step, ``sum_k f_k B_k``."""
    b = np.asarray(tuple(alloc), dtype=float)
    f = np.asarray(f, dtype=float)
    if b.shape != f.shape:
        raise ValueError(f"allocation length {b.size} != number of contexts {f.size}")
    return float(np.dot(f, b))


def sample_context(f, rng: np.random.Generator, size=None):
    """Draw context indices by inverse-CDF lookup on ``rng.random``.

    Batch and one-at-a-time draws from the same generator agree.
    """
    cdf = np.cumsum(np.asarray(f, dtype=float))
    u = rng.random(size)
    k = np.searchsorted(cdf, u, side="right")
    k = np.minimum(k, cdf.size - 1)
    return int(k) if size is None else k.astype(np.int64)


def transition_states(inst: CbbInstance, state, action, k: int, u) -> np.ndarray:
    """Next states given per-arm uniforms ``u``; arm i goes active iff ``u[i] < p``."""
    arms = np.arange(inst.num_arms)
    p = inst.transition[arms, k, state, action]
    return (np.asarray(u) < p).astype(np.int8)


def step_reward(inst: CbbInstance, state, action, k: int) -> float:
    arms = np.arange(inst.num_arms)
    return float(inst.reward[arms, k, state, action].sum())


def step_system(inst: CbbInstance, state, action, k: int, rng: np.random.Generator):
    """Advance all arms one step under context ``k``; returns ``(next_state, reward)``."""
    if not 0 <= k < inst.num_contexts:
        raise IndexError(f"context {k} out of range [0, {inst.num_contexts})")
    state = np.asarray(state, dtype=np.int64)
    action = np.asarray(action, dtype=np.int64)
    if state.shape != (inst.num_arms,) or action.shape != (inst.num_arms,):
        raise ValueError("state and action must have length num_arms")
    reward = step_reward(inst, state, action, k)
    u = rng.random(inst.num_arms)
    return transition_states(inst, state, action, k, u), reward


def save_instance(inst: CbbInstance, path) -> None:
    Path(path).write_text(json.dumps(inst.to_dict(), indent=1))


def load_instance(path) -> CbbInstance:
    return CbbInstance.from_dict(json.loads(Path(path).read_text()))


def scale_instance(inst: CbbInstance, rho: int) -> CbbInstance:
    """Replicate every arm ``rho`` times (arm copies are contiguous)."""
    return CbbInstance(
        context_probs=inst.context_probs,
        reward=np.repeat(inst.reward, rho, axis=0),
        transition=np.repeat(inst.transition, rho, axis=0),
        name=f"{inst.name}x{rho}" if inst.name else "",
    )

"""Mean-field analysis of replicated single-type instances.

With ``rho`` copies of one arm type and quotas ``beta_k * rho``, the active
fraction ``x`` evolves deterministically given the context:
``y = min(x, beta_k) P(1|1,1,k) + max(x - beta_k, 0) P(1|1,0,k) + (1 - x) P(1|0,k)``.
The stationary law of ``x`` under random contexts gives the long-run
reward per arm copy.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .lp import raw_budgets, solve_occupancy
from .model import CbbInstance

MERGE_TOL = 1e-12
MAX_EXACT_SUPPORT = 100_000
DEFAULT_GRID = 1e-4
GRID_TV_TOL = 1e-10


@dataclass(frozen=True)
class MeanFieldModel:
    context_probs: np.ndarray
    stay_pulled: np.ndarray  # P(1 | s=1, a=1, k)
    stay_idle: np.ndarray  # P(1 | s=1, a=0, k)
    recover: np.ndarray  # P(1 | s=0, k), action-independent
    beta: np.ndarray  # quota per arm copy, per context
    reward: np.ndarray  # reward for pulling an active arm, per context

    def __post_init__(self):
        for name in ("context_probs", "stay_pulled", "stay_idle", "recover", "beta", "reward"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        for name in ("stay_pulled", "stay_idle", "recover"):
            v = getattr(self, name)
            if np.any((v < 0) | (v > 1)):
                raise ValueError(f"{name} must lie in [0, 1]")
        if np.any(self.beta < 0):
            raise ValueError("beta must be nonnegative")

    @property
    def num_contexts(self) -> int:
        return self.context_probs.size

    @classmethod
    def from_instance(cls, inst: CbbInstance, beta, arm: int = 0) -> "MeanFieldModel":
        p = inst.transition[arm]
        if not np.allclose(p[:, 0, 0], p[:, 0, 1]):
            raise ValueError("mean-field model needs action-independent recovery")
        return cls(inst.context_probs, p[:, 1, 1], p[:, 1, 0], p[:, 0, 0], beta, inst.reward[arm, :, 1, 1])

    def with_beta(self, beta) -> "MeanFieldModel":
        return replace(self, beta=np.asarray(beta, dtype=float))


def mean_field_next(x, k: int, model: MeanFieldModel):
    x = np.asarray(x, dtype=float)
    b = model.beta[k]
    y = (
        np.minimum(x, b) * model.stay_pulled[k]
        + np.maximum(x - b, 0.0) * model.stay_idle[k]
        + (1.0 - x) * model.recover[k]
    )
    return np.clip(y, 0.0, 1.0)


@dataclass
class DiscreteDistribution:
    support: np.ndarray
    mass: np.ndarray
    resolution: float | None = None  # grid spacing, None for exact support
    iterations: int = 0
    mode: str = "exact_support"

    def mass_at(self, x: float, tol: float = 1e-9) -> float:
        return float(self.mass[np.abs(self.support - x) <= tol].sum())

    def push_forward(self, model: MeanFieldModel) -> "DiscreteDistribution":
        pts, w = [], []
        for k in range(model.num_contexts):
            pts.append(mean_field_next(self.support, k, model))
            w.append(model.context_probs[k] * self.mass)
        s, m = _merge(np.concatenate(pts), np.concatenate(w))
        return DiscreteDistribution(s, m, self.resolution, self.iterations + 1, self.mode)


def _merge(points, weights):
    order = np.argsort(points, kind="stable")
    points, weights = points[order], weights[order]
    if points.size == 0:
        return points, weights
    new_group = np.empty(points.size, dtype=bool)
    new_group[0] = True
    new_group[1:] = np.diff(points) > MERGE_TOL
    gid = np.cumsum(new_group) - 1
    return points[new_group], np.bincount(gid, weights=weights)


def total_variation(a: DiscreteDistribution, b: DiscreteDistribution) -> float:
    pts = np.concatenate([a.support, b.support])
    w = np.concatenate([a.mass, -b.mass])
    _, diff = _merge(pts, w)
    return 0.5 * float(np.abs(diff).sum())


def _exact_support(model, tol, max_iter, start):
    dist = DiscreteDistribution(np.array([start]), np.array([1.0]))
    for _ in range(max_iter):
        nxt = dist.push_forward(model)
        if nxt.support.size > MAX_EXACT_SUPPORT:
            return None
        tv = total_variation(nxt, dist)
        dist = nxt
        if tv <= tol:
            return dist
    return dist


def _grid(model, g, tol, max_iter, start):
    n = int(round(1.0 / g))
    x = np.arange(n + 1) * g
    targets = [np.clip(np.rint(mean_field_next(x, k, model) / g).astype(np.int64), 0, n) for k in range(model.num_contexts)]
    pi = np.zeros(n + 1)
    pi[int(round(start / g))] = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        new = np.zeros(n + 1)
        for k, tgt in enumerate(targets):
            new += model.context_probs[k] * np.bincount(tgt, weights=pi, minlength=n + 1)
        tv = 0.5 * float(np.abs(new - pi).sum())
        pi = new
        if tv <= tol:
            break
    keep = pi > 0
    return DiscreteDistribution(x[keep], pi[keep], g, it, "grid")


def stationary_distribution(
    model: MeanFieldModel,
    mode: str = "exact_support",
    tol: float = 1e-13,
    g: float = DEFAULT_GRID,
    max_iter: int = 100_000,
    start: float = 1.0,
) -> DiscreteDistribution:
    """Stationary law of the active fraction, by forward iteration from a point mass at ``start``.

    ``exact_support`` tracks the reachable points exactly and falls back to
    the grid when more than ``MAX_EXACT_SUPPORT`` points appear; ``grid``
    deposits images on the nearest node of a spacing-``g`` grid.
    """
    if mode == "exact_support":
        dist = _exact_support(model, tol, max_iter, start)
        if dist is not None:
            return dist
        return _grid(model, g, GRID_TV_TOL, max_iter, start)
    if mode == "grid":
        return _grid(model, g, max(tol, GRID_TV_TOL), max_iter, start)
    raise ValueError(f"unknown mode {mode!r}")


def asymptotic_reward(dist: DiscreteDistribution, model: MeanFieldModel, rewards=None) -> float:
    """Per-arm reward rate ``sum_k f_k r_k E[min(beta_k, x)]``."""
    r = model.reward if rewards is None else np.asarray(rewards, dtype=float)
    total = 0.0
    for k in range(model.num_contexts):
        total += model.context_probs[k] * r[k] * float(np.minimum(model.beta[k], dist.support) @ dist.mass)
    return total


def coip_fractions(inst: CbbInstance, budget_fraction: float) -> np.ndarray:
    """Per-context quota fractions read off the occupancy LP of the base instance."""
    sol = solve_occupancy(inst, budget_fraction * inst.num_arms)
    if not sol.optimal:
        raise RuntimeError(f"occupancy program {sol.status}")
    return raw_budgets(sol.mu, inst.context_probs) / inst.num_arms


def budget_line(f, budget_fraction: float, n_points: int = 61) -> list[np.ndarray]:
    """Two-context quota vectors spending the whole expected budget, each quota in [0, 1]."""
    f = np.asarray(f, dtype=float)
    if f.size != 2:
        raise ValueError("budget_line handles two contexts")
    hi = min(1.0, budget_fraction / f[0])
    out = []
    for b1 in np.linspace(0.0, hi, n_points):
        b2 = min(1.0, max(0.0, (budget_fraction - f[0] * b1) / f[1]))
        out.append(np.array([b1, b2]))
    return out


def optimal_fractions(model: MeanFieldModel, budget_fraction: float, mode="exact_support", n_points=61, g=DEFAULT_GRID):
    """Best quota vector on the budget line, by direct search."""
    best_beta, best_val = None, -np.inf
    for beta in budget_line(model.context_probs, budget_fraction, n_points):
        m = model.with_beta(beta)
        val = asymptotic_reward(stationary_distribution(m, mode, g=g), m)
        if val > best_val + 1e-12:
            best_beta, best_val = beta, val
    return best_beta, best_val


@dataclass
class CounterexampleReport:
    name: str
    epsilon: float
    coip_beta: np.ndarray
    coip_reward: float  # at epsilon
    coip_reward_limit: float  # epsilon -> 0
    optimal_beta: np.ndarray
    optimal_reward: float  # at epsilon, evaluated at optimal_beta
    optimal_reward_limit: float
    distribution: DiscreteDistribution

    @property
    def ratio(self) -> float:
        return self.coip_reward / self.optimal_reward

    @property
    def ratio_limit(self) -> float:
        return self.coip_reward_limit / self.optimal_reward_limit

    def lines(self) -> list[str]:
        return [
            f"[{self.name}] epsilon={self.epsilon:g}",
            f"  COIP quota fractions {np.round(self.coip_beta, 6).tolist()}",
            f"  COIP reward per arm {self.coip_reward:.6f} (epsilon->0: {self.coip_reward_limit:.6f})",
            f"  best quota fractions {np.round(self.optimal_beta, 6).tolist()}",
            f"  best reward per arm {self.optimal_reward:.6f} (epsilon->0: {self.optimal_reward_limit:.6f})",
            f"  ratio {self.ratio:.6f} (epsilon->0: {self.ratio_limit:.6f})",
        ]


def _limit_model(model: MeanFieldModel, epsilon: float) -> MeanFieldModel:
    """Drop the epsilon perturbation: context-1 pulled arms stay, context-2 reward becomes 1."""
    stay = model.stay_pulled.copy()
    stay[0] = min(1.0, stay[0] + epsilon)
    reward = model.reward.copy()
    reward[1] = reward[1] - epsilon
    return replace(model, stay_pulled=stay, reward=reward)


def analyse_counterexample(inst: CbbInstance, budget_fraction: float, epsilon: float, name: str,
                           mode: str = "exact_support", g: float = DEFAULT_GRID, n_points: int = 61):
    beta = coip_fractions(inst, budget_fraction)
    model = MeanFieldModel.from_instance(inst, beta)
    limit = _limit_model(model, epsilon)
    dist = stationary_distribution(model, mode, g=g)
    coip = asymptotic_reward(dist, model)
    dist_lim = stationary_distribution(limit, mode, g=g)
    coip_lim = asymptotic_reward(dist_lim, limit)
    opt_beta, opt_lim = optimal_fractions(limit, budget_fraction, mode="exact_support", n_points=n_points, g=g)
    m_opt = model.with_beta(opt_beta)
    opt = asymptotic_reward(stationary_distribution(m_opt, "exact_support", g=g), m_opt)
    return CounterexampleReport(name, epsilon, beta, coip, coip_lim, opt_beta, opt, opt_lim, dist)


def verify_counterexamples(epsilon: float = 0.01, g: float = DEFAULT_GRID):
    """End-to-end check of both replicated counterexamples: LP, quotas, stationary law, rewards."""
    from .generators import gen_appendixA_example2, gen_fivesix

    inst, frac = gen_fivesix(epsilon)
    five = analyse_counterexample(inst, frac, epsilon, "five-sixths", mode="exact_support", g=g)
    inst2, frac2 = gen_appendixA_example2(epsilon)
    ex2 = analyse_counterexample(inst2, frac2, epsilon, "example-2", mode="grid", g=g, n_points=11)
    return five, ex2

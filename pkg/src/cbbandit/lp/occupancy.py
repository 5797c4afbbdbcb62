"""Occupancy-measure linear programs for contextual budget bandits.

Variable ``mu[i, k, s, a]`` is the long-run probability that arm ``i`` is
in state ``s``, receives action ``a`` and the context is ``k``.  Its flat
index is ``((i * K + k) * 2 + s) * 2 + a``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import BUDGET_TOL, CbbInstance
from .program import EQ, GE, LE, LinearProgram, solve_lp

DEFAULT_METHOD = "auto"
CHI_DENOM_TOL = 1e-12


@dataclass
class OccupancySolution:
    status: str
    objective_value: float
    mu: np.ndarray | None  # shape (N, K, 2, 2)
    budgets: np.ndarray | None = None  # fractional per-context budget vector

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class OccupancyLP:
    """An occupancy program plus the bookkeeping needed to read it back."""

    program: LinearProgram
    num_arms: int
    num_contexts: int
    budget_var_offset: int | None = None

    @property
    def n_mu(self) -> int:
        return self.num_arms * self.num_contexts * 4

    def solve(self, method: str = DEFAULT_METHOD) -> OccupancySolution:
        res = solve_lp(self.program, method=method)
        if not res.optimal:
            return OccupancySolution(res.status, res.objective, None)
        mu = res.x[: self.n_mu].reshape(self.num_arms, self.num_contexts, 2, 2)
        budgets = None
        if self.budget_var_offset is not None:
            o = self.budget_var_offset
            budgets = res.x[o : o + self.num_contexts].copy()
        return OccupancySolution("optimal", res.objective, mu, budgets)


def _usage_rows(inst: CbbInstance) -> np.ndarray:
    """Row k gives ``(1/f_k) * sum_{i,s} mu[i,k,s,1]``."""
    N, K = inst.num_arms, inst.num_contexts
    rows = np.zeros((K, N, K, 2, 2))
    for k in range(K):
        rows[k, :, k, :, 1] = 1.0 / inst.context_probs[k]
    return rows.reshape(K, -1)


def _context_reward_rows(inst: CbbInstance) -> np.ndarray:
    """Row k gives the stationary reward collected under context k."""
    N, K = inst.num_arms, inst.num_contexts
    rows = np.zeros((K, N, K, 2, 2))
    for k in range(K):
        rows[k, :, k] = inst.reward[:, k]
    return rows.reshape(K, -1)


def build_occupancy_lp(inst: CbbInstance, budget: float) -> OccupancyLP:
    """Occupancy program with the relaxed (expected) total budget row."""
    N, K = inst.num_arms, inst.num_contexts
    f = inst.context_probs
    n = N * K * 4
    lp = LinearProgram(inst.reward.reshape(-1))

    # flow balance: f_k' * sum_{k,s,a} P(s -> s' | a, k) mu(s,a;k) = sum_a mu(s',a;k')
    p1 = inst.transition
    p_to = np.stack([1.0 - p1, p1], axis=-1)  # [i, k, s, a, s']
    block = np.einsum("j,iksat->ijtksa", f, p_to)  # [i, k', s', k, s, a]
    for kp in range(K):
        for sp in range(2):
            block[:, kp, sp, kp, sp, :] -= 1.0
    A = np.zeros((N, K, 2, N, K, 2, 2))
    for i in range(N):
        A[i, :, :, i] = block[i]
    A = A.reshape(N * K * 2, n)
    names = [f"flow[{i},{k},{s}]" for i in range(N) for k in range(K) for s in range(2)]
    lp.add_rows(A, EQ, 0.0, names)

    norm = np.zeros((N, n))
    for i in range(N):
        norm[i, i * K * 4 : (i + 1) * K * 4] = 1.0
    lp.add_rows(norm, EQ, 1.0, [f"norm[{i}]" for i in range(N)])

    pulls = np.zeros((N, K, 2, 2))
    pulls[..., 1] = 1.0
    lp.add_row(pulls.reshape(-1), LE, budget, "budget")
    return OccupancyLP(lp, N, K)


def add_fairness_constraints(occ: OccupancyLP, inst: CbbInstance, theta: float) -> OccupancyLP:
    """Require every context's frequency-scaled reward to be at least ``theta`` of the total."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    lp = occ.program.copy()
    per_ctx = _context_reward_rows(inst)
    total = per_ctx.sum(axis=0)
    width = lp.n_vars
    for k in range(inst.num_contexts):
        row = np.zeros(width)
        row[: occ.n_mu] = per_ctx[k] / inst.context_probs[k] - theta * total
        lp.add_row(row, GE, 0.0, f"fair[{k}]")
    return OccupancyLP(lp, occ.num_arms, occ.num_contexts, occ.budget_var_offset)


def solve_occupancy(inst: CbbInstance, budget: float, theta: float = 0.0, method: str = DEFAULT_METHOD):
    occ = build_occupancy_lp(inst, budget)
    if theta > 0:
        occ = add_fairness_constraints(occ, inst, theta)
    return occ.solve(method)


def lp_fixed_budget(
    inst: CbbInstance,
    alloc,
    theta: float = 0.0,
    exact_usage: bool = False,
    method: str = DEFAULT_METHOD,
) -> OccupancySolution:
    """Occupancy LP with per-context pull quotas ``alloc``.

    By default each context's frequency-scaled pull mass is capped at
    ``B_k``; a quota policy that pulls only some of its quota is then still
    feasible, which keeps the value an upper bound on the simulated reward.
    ``exact_usage=True`` pins the mass to ``B_k`` instead.
    """
    b = np.asarray(tuple(alloc), dtype=float)
    budget = float(np.dot(inst.context_probs, b))
    occ = build_occupancy_lp(inst, budget + BUDGET_TOL)
    usage = _usage_rows(inst)
    for k in range(inst.num_contexts):
        if exact_usage:
            # two inequality rows rather than one equality
            occ.program.add_row(usage[k], LE, b[k], f"quota_le[{k}]")
            occ.program.add_row(usage[k], GE, b[k], f"quota_ge[{k}]")
        else:
            occ.program.add_row(usage[k], LE, b[k], f"quota[{k}]")
    if theta > 0:
        occ = add_fairness_constraints(occ, inst, theta)
    sol = occ.solve(method)
    if sol.optimal:
        sol.budgets = b.copy()
    return sol


def lp_region(
    inst: CbbInstance,
    lower,
    upper,
    budget: float,
    theta: float = 0.0,
    exact_usage: bool = False,
    method: str = DEFAULT_METHOD,
) -> OccupancySolution:
    """Upper bound on ``lp_fixed_budget`` over the box ``lower <= B <= upper``.

    The quotas become continuous variables ``b_k`` constrained to the box and
    to ``sum_k f_k b_k <= budget``; ``solution.budgets`` holds their optimal
    values (the most promising fractional allocation in the box).
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    K = inst.num_contexts
    f = inst.context_probs
    if np.any(lower > upper) or float(f @ lower) > budget + BUDGET_TOL:
        return OccupancySolution("infeasible", -np.inf, None)
    occ = build_occupancy_lp(inst, budget)
    lp = occ.program
    offset = lp.n_vars
    lp.extend(K)
    usage = _usage_rows(inst)
    for k in range(K):
        row = np.zeros(lp.n_vars)
        row[: occ.n_mu] = usage[k]
        row[offset + k] = -1.0
        lp.add_row(row, EQ if exact_usage else LE, 0.0, f"quota[{k}]")
        e = np.zeros(lp.n_vars)
        e[offset + k] = 1.0
        lp.add_row(e, LE, upper[k], f"upper[{k}]")
        if lower[k] > 0:
            lp.add_row(e, GE, lower[k], f"lower[{k}]")
    row = np.zeros(lp.n_vars)
    row[offset:] = f
    lp.add_row(row, LE, budget + BUDGET_TOL, "allocation_budget")
    occ = OccupancyLP(lp, occ.num_arms, K, budget_var_offset=offset)
    if theta > 0:
        occ = add_fairness_constraints(occ, inst, theta)
    return occ.solve(method)


def soft_policy(mu) -> np.ndarray:
    """Pull probabilities ``chi[i, s, k]``; zero at unvisited (s, k)."""
    mu = np.asarray(mu)
    denom = mu[..., 0] + mu[..., 1]  # [i, k, s]
    with np.errstate(invalid="ignore", divide="ignore"):
        chi = np.where(denom > CHI_DENOM_TOL, mu[..., 1] / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(chi, 0.0, 1.0).transpose(0, 2, 1)


def occupancy_index(mu, inst: CbbInstance) -> np.ndarray:
    """Contextual occupancy index ``rho[i, s, k] = chi[i, s, k] * r_i(s, 1; k)``."""
    chi = soft_policy(mu)
    pull_reward = inst.reward[:, :, :, 1].transpose(0, 2, 1)  # [i, s, k]
    return chi * pull_reward


def raw_budgets(mu, f) -> np.ndarray:
    """Average pulls per context step used by the soft policy: ``(1/f_k) sum_{i,s} mu(s,1;k)``."""
    mu = np.asarray(mu)
    return mu[..., 1].sum(axis=(0, 2)) / np.asarray(f, dtype=float)


def coip_budget(mu, f, budget: float, num_arms: int) -> np.ndarray:
    """Round the soft policy's per-context usage to a feasible integer allocation."""
    f = np.asarray(f, dtype=float)
    raw = raw_budgets(mu, f)
    b = np.clip(np.rint(raw), 0, num_arms).astype(np.int64)
    while float(f @ b) > budget + BUDGET_TOL:
        excess = np.where(b > 0, f * (b - raw), -np.inf)
        b[int(np.argmax(excess))] -= 1
    return b


def flow_residuals(mu, inst: CbbInstance) -> np.ndarray:
    """Absolute flow-balance residual per (arm, context, state)."""
    mu = np.asarray(mu)
    p1 = inst.transition
    p_to = np.stack([1.0 - p1, p1], axis=-1)
    inflow = np.einsum("iksat,iksa->it", p_to, mu)  # [i, s']
    lhs = inst.context_probs[None, :, None] * inflow[:, None, :]
    rhs = mu.sum(axis=-1)
    return np.abs(lhs - rhs)

"""Search over integer per-context budget allocations.

Regions of the allocation lattice are axis-aligned integer boxes
intersected with the expected-budget constraint ``sum_k f_k B_k <= B``.  The
occupancy program restricted to a box upper-bounds the reward of every
allocation inside it, which drives both branch-and-bound and the TreeArm of
the UCB search.
"""
from __future__ import annotations

import heapq
import itertools
import math
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .lp import lp_region
from .model import BUDGET_TOL, BudgetAllocation, CbbInstance
from .sim import SMALL_CONFIG, Oracle, SimConfig

INTEGRAL_TOL = 1e-7
DEFAULT_UCB_C = 0.1
DEFAULT_TIMEOUT_S = 600.0


@dataclass(frozen=True)
class BudgetBox:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(int(v) for v in self.lower)
        hi = tuple(int(v) for v in self.upper)
        if len(lo) != len(hi) or any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"invalid box {lo} .. {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def is_singleton(self) -> bool:
        return self.lower == self.upper

    def contains(self, point) -> bool:
        return all(a <= int(p) <= b for a, p, b in zip(self.lower, point, self.upper))

    def lattice_points(self, f, budget: float):
        """Integer points of the box that satisfy the expected-budget constraint."""
        f = np.asarray(f, dtype=float)
        ranges = [range(a, b + 1) for a, b in zip(self.lower, self.upper)]
        return [p for p in itertools.product(*ranges) if float(f @ np.array(p)) <= budget + BUDGET_TOL]

    def __str__(self):
        return "x".join(f"[{a},{b}]" for a, b in zip(self.lower, self.upper))


def box_nonempty(box: BudgetBox, f, budget: float) -> bool:
    return float(np.asarray(f) @ np.array(box.lower)) <= budget + BUDGET_TOL


def initial_box(inst: CbbInstance, budget: float) -> BudgetBox:
    f = inst.context_probs
    upper = [min(inst.num_arms, math.floor((budget + BUDGET_TOL) / fk)) for fk in f]
    return BudgetBox([0] * inst.num_contexts, upper)


def split_box(box: BudgetBox) -> tuple[BudgetBox, BudgetBox]:
    """Halve the widest coordinate range (lowest context on ties)."""
    if box.is_singleton:
        raise ValueError("cannot split a singleton box")
    widths = [b - a for a, b in zip(box.lower, box.upper)]
    k = int(np.argmax(widths))
    m = (box.lower[k] + box.upper[k]) // 2
    hi_low = list(box.upper)
    hi_low[k] = m
    lo_high = list(box.lower)
    lo_high[k] = m + 1
    return BudgetBox(box.lower, hi_low), BudgetBox(lo_high, box.upper)


def carve_point(box: BudgetBox, point) -> list[BudgetBox]:
    """Partition ``box`` minus ``point`` into at most ``2K`` boxes."""
    point = tuple(int(p) for p in point)
    if not box.contains(point):
        raise ValueError(f"{point} is not in {box}")
    pieces = []
    K = len(point)
    for k in range(K):
        fixed_lo = list(point[:k]) + list(box.lower[k:])
        fixed_hi = list(point[:k]) + list(box.upper[k:])
        if box.lower[k] <= point[k] - 1:
            hi = list(fixed_hi)
            hi[k] = point[k] - 1
            pieces.append(BudgetBox(fixed_lo, hi))
        if point[k] + 1 <= box.upper[k]:
            lo = list(fixed_lo)
            lo[k] = point[k] + 1
            pieces.append(BudgetBox(lo, fixed_hi))
    return pieces


class RegionBound:
    """Cached occupancy-program upper bounds over boxes."""

    def __init__(self, inst: CbbInstance, budget: float, theta: float = 0.0):
        self.inst = inst
        self.budget = float(budget)
        self.theta = theta
        self._cache: dict = {}
        self.solves = 0

    def __call__(self, box: BudgetBox):
        key = (box.lower, box.upper)
        hit = self._cache.get(key)
        if hit is None:
            self.solves += 1
            sol = lp_region(self.inst, box.lower, box.upper, self.budget, theta=self.theta)
            value = sol.objective_value if sol.optimal else -np.inf
            hit = (float(value), None if sol.budgets is None else np.array(sol.budgets))
            self._cache[key] = hit
        return hit

    def nonempty(self, box: BudgetBox) -> bool:
        return box_nonempty(box, self.inst.context_probs, self.budget)


def _integral_point(box: BudgetBox, budgets, f, budget) -> tuple | None:
    if budgets is None:
        return None
    r = np.rint(budgets)
    if np.max(np.abs(budgets - r)) > INTEGRAL_TOL:
        return None
    point = tuple(int(v) for v in r)
    if box.contains(point) and float(f @ r) <= budget + BUDGET_TOL:
        return point
    return None


class _BoxHeap:
    """Max-heap of boxes keyed by their upper bound."""

    def __init__(self, bound: RegionBound):
        self.bound = bound
        self._heap: list = []
        self._count = itertools.count()

    def push(self, box: BudgetBox) -> bool:
        if not self.bound.nonempty(box):
            return False
        value, budgets = self.bound(box)
        if value == -np.inf:
            return False
        heapq.heappush(self._heap, (-value, next(self._count), box, budgets))
        return True

    def top_value(self) -> float:
        return -self._heap[0][0] if self._heap else -np.inf

    def __len__(self):
        return len(self._heap)

    def boxes(self) -> list[BudgetBox]:
        return [item[2] for item in self._heap]

    def pop_best_point(self):
        """Refine until the maximizing lattice point is isolated; returns ``(box, point, value)``.

        The returned box has been removed from the heap; the caller decides
        what to do with the rest of it.  Boxes split along the way stay in the
        heap, so the heap keeps partitioning the same lattice.
        """
        f = self.bound.inst.context_probs
        while self._heap:
            negv, _, box, budgets = heapq.heappop(self._heap)
            if box.is_singleton:
                return box, box.lower, -negv
            point = _integral_point(box, budgets, f, self.bound.budget)
            if point is not None:
                return box, point, -negv
            for child in split_box(box):
                self.push(child)
        return None


def box_argmax_point(inst: CbbInstance, box: BudgetBox, budget: float, bound: RegionBound | None = None):
    """Lattice point of ``box`` with the largest fixed-quota occupancy value.

    Best-first refinement: the box with the largest bound is split until a
    singleton (or an integral relaxed optimum) surfaces at the top.
    """
    bound = bound or RegionBound(inst, budget)
    if not bound.nonempty(box):
        raise ValueError(f"box {box} violates the expected-budget constraint")
    heap = _BoxHeap(bound)
    heap.push(box)
    found = heap.pop_best_point()
    if found is None:
        raise ValueError(f"box {box} has no feasible point")
    return BudgetAllocation(found[1], budget)


def enumerate_allocations(inst: CbbInstance, budget: float) -> list[tuple]:
    return initial_box(inst, budget).lattice_points(inst.context_probs, budget)


# ---------------------------------------------------------------- branch and bound


@dataclass
class SearchResult:
    allocation: BudgetAllocation | None
    value: float
    std_error: float
    wall_clock: float
    oracle_calls: int
    lp_solves: int
    feasible: bool = True
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = {
            "allocation": None if self.allocation is None else list(self.allocation.per_context),
            "value": self.value,
            "std_error": self.std_error,
            "wall_clock_s": self.wall_clock,
            "oracle_calls": self.oracle_calls,
            "lp_solves": self.lp_solves,
            "feasible": self.feasible,
        }
        d.update({k: v for k, v in self.extra.items() if k not in ("log", "history", "tree_index")})
        return d


def _better(value, point, best_value, best_point) -> bool:
    """Strictly larger value, or equal value with a lexicographically smaller point."""
    if best_point is None:
        return True
    if value != best_value:
        return value > best_value
    return tuple(point) < tuple(best_point)


def bnb(
    inst: CbbInstance,
    budget: float,
    evaluator: Oracle | None = None,
    cfg: SimConfig = SimConfig(),
    theta: float = 0.0,
    prune: bool = True,
    order: str = "best",
    timeout_s: float = DEFAULT_TIMEOUT_S,
) -> SearchResult:
    """Branch-and-bound over allocation boxes with occupancy-program bounds.

    A popped box is pruned when its bound is below the incumbent's oracle
    value; otherwise its most promising point is evaluated and the box is
    split.  ``order`` is ``"best"`` (largest bound first) or ``"fifo"``.
    """
    if order not in ("best", "fifo"):
        raise ValueError(f"unknown order {order!r}")
    start = time.perf_counter()
    evaluator = evaluator or Oracle(inst, cfg, theta)
    bound = RegionBound(inst, budget, theta)
    f = inst.context_probs
    results: dict = {}

    def evaluate(point):
        if point not in results:
            results[point] = evaluator(point)
        return results[point]

    root = initial_box(inst, budget)
    counter = itertools.count()
    queue_best: list = []
    queue_fifo: deque = deque()

    def push(box):
        if not bound.nonempty(box):
            return
        value, budgets = bound(box)
        if value == -np.inf:
            return
        item = (-value, next(counter), box, budgets)
        if order == "best":
            heapq.heappush(queue_best, item)
        else:
            queue_fifo.append(item)

    push(root)
    best_point, best_value, best_se = None, -np.inf, float("nan")
    expanded = pruned = 0
    log = []
    timed_out = False
    while queue_best or queue_fifo:
        if time.perf_counter() - start > timeout_s:
            timed_out = True
            break
        negv, _, box, budgets = heapq.heappop(queue_best) if order == "best" else queue_fifo.popleft()
        ub = -negv
        if prune and best_point is not None and ub < best_value:
            pruned += 1
            log.append((str(box), ub, "pruned"))
            continue
        expanded += 1
        if box.is_singleton:
            point = box.lower
        else:
            point = _integral_point(box, budgets, f, budget)
            if point is None:
                point = box_argmax_point(inst, box, budget, bound).per_context
        res = evaluate(point)
        if res.feasible and _better(res.value, point, best_value, best_point):
            best_point, best_value, best_se = point, res.value, res.std_error
        log.append((str(box), ub, f"evaluated {point} -> {res.value:.6g}"))
        if not box.is_singleton:
            for child in split_box(box):
                push(child)

    alloc = None if best_point is None else BudgetAllocation(best_point, budget)
    return SearchResult(
        alloc,
        float(best_value) if best_point is not None else float("nan"),
        best_se,
        time.perf_counter() - start,
        len(results),
        bound.solves,
        feasible=best_point is not None,
        extra={
            "nodes_expanded": expanded,
            "nodes_pruned": pruned,
            "exhaustive": not timed_out,
            "timed_out": timed_out,
            "order": order,
            "prune": prune,
            "log": log,
            "evaluated": {p: (r.value, r.std_error) for p, r in results.items()},
        },
    )


# ---------------------------------------------------------------- UCB search


@dataclass
class CandidateArm:
    allocation: tuple
    created: int
    pulls: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    @property
    def empirical_mean(self) -> float:
        return self.total / self.pulls if self.pulls else float("nan")

    @property
    def std_error(self) -> float:
        if self.pulls < 2:
            return float("nan")
        var = (self.total_sq - self.total**2 / self.pulls) / (self.pulls - 1)
        return math.sqrt(max(var, 0.0) / self.pulls)

    def ucb(self, t: int, c: float, scale: float) -> float:
        return ucb_index(self.empirical_mean, self.pulls, t, c, scale)


def ucb_index(mean: float, pulls: int, t: int, c: float, scale: float = 1.0) -> float:
    """``mean / scale + c * sqrt(ln t / pulls)``."""
    if pulls < 1:
        raise ValueError("arm must be pulled at least once")
    return mean / scale + c * math.sqrt(math.log(max(t, 1)) / pulls)


class TreeArm:
    """Composite arm holding every allocation not yet split out, as disjoint boxes."""

    def __init__(self, bound: RegionBound, root: BudgetBox):
        self.heap = _BoxHeap(bound)
        self.heap.push(root)
        self.index_history = [self.upper_bound()]

    def upper_bound(self) -> float:
        return self.heap.top_value()

    def index(self, scale: float) -> float:
        return self.upper_bound() / scale

    @property
    def empty(self) -> bool:
        return len(self.heap) == 0

    def boxes(self) -> list[BudgetBox]:
        return self.heap.boxes()

    def split_out(self) -> tuple | None:
        """Remove and return the lattice point with the largest bound."""
        found = self.heap.pop_best_point()
        if found is None:
            return None
        box, point, _ = found
        for piece in carve_point(box, point):
            self.heap.push(piece)
        self.index_history.append(self.upper_bound())
        return tuple(int(p) for p in point)


def mitosis(
    inst: CbbInstance,
    budget: float,
    evaluator: Oracle | None = None,
    rounds: int = 2000,
    c: float = DEFAULT_UCB_C,
    seed: int = 0,
    theta: float = 0.0,
    recheck_cfg: SimConfig = SimConfig(),
    recheck_limit: int = 10,
    timeout_s: float | None = None,
    on_round=None,
) -> SearchResult:
    """UCB search over allocations with a TreeArm that buds new candidates.

    Every round performs exactly one noisy evaluation: either a selected
    standard arm is pulled, or the TreeArm splits out its most promising
    allocation, which is pulled immediately.  ``on_round(t, arms, tree)``
    is called after each round.
    """
    start = time.perf_counter()
    evaluator = evaluator or Oracle(inst, SMALL_CONFIG, theta)
    bound = RegionBound(inst, budget, theta)
    root = initial_box(inst, budget)
    tree = TreeArm(bound, root)
    scale = tree.upper_bound()
    if not scale > 0:
        scale = 1.0
    arms: list[CandidateArm] = []
    history = []
    timed_out = False

    def pull(arm, t, kind):
        r = evaluator(arm.allocation, seed=(seed, t)).value
        arm.pulls += 1
        arm.total += r
        arm.total_sq += r * r
        history.append((t, arm.allocation, r, kind))

    for t in range(1, rounds + 1):
        if timeout_s is not None and time.perf_counter() - start > timeout_s:
            timed_out = True
            break
        best_arm, best_idx = None, -np.inf
        for arm in arms:
            idx = arm.ucb(t, c, scale)
            if idx > best_idx:
                best_arm, best_idx = arm, idx
        if not tree.empty and tree.index(scale) >= best_idx:
            point = tree.split_out()
            arm = CandidateArm(point, created=t)
            arms.append(arm)
            pull(arm, t, "split")
        elif best_arm is not None:
            pull(best_arm, t, "pull")
        else:
            break
        if on_round is not None:
            on_round(t, arms, tree)

    ranked = sorted(arms, key=lambda a: (-a.empirical_mean, -a.pulls, a.allocation))
    chosen, feasible, recheck = None, True, None
    if theta > 0:
        check = Oracle(inst, recheck_cfg, theta)
        feasible = False
        for arm in ranked[:recheck_limit]:
            res = check(arm.allocation)
            if res.fairness >= theta:
                chosen, feasible, recheck = arm, True, res
                break
    elif ranked:
        chosen = ranked[0]
    return SearchResult(
        None if chosen is None else BudgetAllocation(chosen.allocation, budget),
        float("nan") if chosen is None else chosen.empirical_mean,
        float("nan") if chosen is None else chosen.std_error,
        time.perf_counter() - start,
        len(history),
        bound.solves,
        feasible=feasible and chosen is not None,
        extra={
            "rounds": len(history),
            "arms": len(arms),
            "pulls": None if chosen is None else chosen.pulls,
            "reward_scale": scale,
            "ucb_c": c,
            "timed_out": timed_out,
            "fairness_recheck": None if recheck is None else recheck.fairness,
            "history": history,
            "tree_index": tree.index_history,
        },
    )


def regret_trace(history, values: dict, best: float | None = None) -> np.ndarray:
    """Cumulative regret ``sum_t (mu* - mu(B_t))`` using accurate per-allocation values."""
    best = max(values.values()) if best is None else best
    gaps = np.array([best - values[tuple(h[1])] for h in history], dtype=float)
    return np.cumsum(gaps)


# ---------------------------------------------------------------- estimators


class _SearchEstimator(BaseEstimator):
    def predict(self, state, context: int, rng=None):
        check_is_fitted(self)
        if self.policy_ is None:
            raise RuntimeError("search found no feasible allocation")
        return self.policy_.predict(state, context, rng)

    def kernel_spec(self):
        check_is_fitted(self)
        return self.policy_.kernel_spec()

    def _finish(self, inst, result):
        from .policies import FlexOccupancyPolicy

        self.result_ = result
        self.allocation_ = result.allocation
        self.value_ = result.value
        self.policy_ = None
        if result.allocation is not None:
            self.policy_ = FlexOccupancyPolicy(result.allocation.per_context, theta=self.theta).fit(inst)
        return self


class BranchAndBound(_SearchEstimator):
    def __init__(self, budget=1, theta=0.0, epochs=16, horizon=2000, burn_in=200, seed=0,
                 prune=True, order="best", timeout_s=DEFAULT_TIMEOUT_S):
        self.budget = budget
        self.theta = theta
        self.epochs = epochs
        self.horizon = horizon
        self.burn_in = burn_in
        self.seed = seed
        self.prune = prune
        self.order = order
        self.timeout_s = timeout_s

    def fit(self, inst, y=None):
        cfg = SimConfig(self.horizon, self.burn_in, self.epochs, self.seed)
        res = bnb(inst, self.budget, cfg=cfg, theta=self.theta, prune=self.prune,
                  order=self.order, timeout_s=self.timeout_s)
        return self._finish(inst, res)


class Mitosis(_SearchEstimator):
    def __init__(self, budget=1, theta=0.0, rounds=2000, ucb_c=DEFAULT_UCB_C, seed=0, timeout_s=None):
        self.budget = budget
        self.theta = theta
        self.rounds = rounds
        self.ucb_c = ucb_c
        self.seed = seed
        self.timeout_s = timeout_s

    def fit(self, inst, y=None):
        res = mitosis(inst, self.budget, rounds=self.rounds, c=self.ucb_c, seed=self.seed,
                      theta=self.theta, timeout_s=self.timeout_s)
        return self._finish(inst, res)

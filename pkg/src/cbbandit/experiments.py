"""Experiment harness behind the comparison, heatmap, frontier and ablation commands."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .generators import gen_blended, gen_random, gen_theorem1
from .policies import COIPPolicy, FlexOccupancyPolicy, GreedyPolicy, RandomPolicy, WhittlePolicy
from .search import DEFAULT_TIMEOUT_S, DEFAULT_UCB_C, bnb, mitosis
from .sim import SimConfig, evaluate_policy

ALL_POLICIES = ("random", "greedy", "whittle", "coip", "bnb", "mitosis")


@dataclass
class EvalSettings:
    epochs: int = 100
    horizon: int = 2000
    burn_in: int = 200
    rounds: int = 2000
    ucb_c: float = DEFAULT_UCB_C
    timeout_s: float = DEFAULT_TIMEOUT_S
    bnb_epochs: int = 16

    def eval_cfg(self, seed: int) -> SimConfig:
        return SimConfig(self.horizon, self.burn_in, self.epochs, base_seed=seed)


@dataclass
class PolicyRun:
    policy: str
    mean: float
    std_error: float
    fairness: float
    wall_clock: float
    allocation: tuple | None = None
    status: str = "ok"
    extra: dict = field(default_factory=dict)


def run_policy(inst, kind: str, budget, settings: EvalSettings, seed: int, theta: float = 0.0) -> PolicyRun:
    """Fit (or search) one policy kind and evaluate it over ``settings.epochs`` epochs.

    All kinds share the evaluation seed, so their epochs see the same contexts
    and transition draws.
    """
    start = time.perf_counter()
    extra = {}
    if kind == "random":
        pol = RandomPolicy(budget).fit(inst)
    elif kind == "greedy":
        pol = GreedyPolicy(budget).fit(inst)
    elif kind == "whittle":
        pol = WhittlePolicy(budget).fit(inst)
    elif kind == "coip":
        pol = COIPPolicy(budget, theta=theta).fit(inst)
    elif kind in ("bnb", "mitosis"):
        if kind == "bnb":
            cfg = SimConfig(2000, 200, settings.bnb_epochs, base_seed=seed)
            res = bnb(inst, budget, cfg=cfg, theta=theta, timeout_s=settings.timeout_s)
            extra = {"timed_out": res.extra["timed_out"], "nodes": res.extra["nodes_expanded"]}
        else:
            res = mitosis(inst, budget, rounds=settings.rounds, c=settings.ucb_c, seed=seed, theta=theta,
                          timeout_s=settings.timeout_s)
            extra = {"timed_out": res.extra["timed_out"], "arms": res.extra["arms"]}
        if res.allocation is None:
            return PolicyRun(kind, float("nan"), float("nan"), float("nan"), time.perf_counter() - start,
                             status="infeasible", extra=extra)
        pol = FlexOccupancyPolicy(res.allocation.per_context, theta=theta).fit(inst)
    else:
        raise ValueError(f"unknown policy kind {kind!r}")
    wall = time.perf_counter() - start
    ev = evaluate_policy(inst, pol, settings.eval_cfg(seed))
    alloc = getattr(pol, "allocation_", None)
    return PolicyRun(kind, ev.mean, ev.std_error, ev.fairness, wall,
                     None if alloc is None else tuple(alloc.per_context), extra=extra)


def make_instance(family: str, N: int, K: int, seed: int, abundance: float = 0.5):
    """Instance plus its recommended budget (``None`` when the caller must supply one)."""
    if family == "blended":
        return gen_blended(N, K, abundance, seed), None
    if family == "organic":
        return gen_blended(N, K, 1.0, seed), None
    if family == "churner":
        return gen_blended(N, K, 0.0, seed), None
    if family == "random":
        return gen_random(N, K, seed), None
    if family == "theorem1":
        return gen_theorem1(N)
    raise ValueError(f"unknown family {family!r}")


RESULT_COLUMNS = [
    "N", "K", "budget", "abundance", "theta", "policy", "seed", "mean_reward", "std_error",
    "normalized_reward", "fairness", "allocation", "status",
]
TIMING_COLUMNS = ["N", "K", "budget", "abundance", "theta", "policy", "seed", "wall_clock_s"]


def _num(v):
    if isinstance(v, float):
        return "nan" if v != v else format(v, ".10g")
    return str(v)


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_num(r.get(c, "")) for c in columns])
    return buf.getvalue()


def compare_cell(inst, budget, coords: dict, seed: int, settings: EvalSettings, policies=ALL_POLICIES, theta=0.0):
    """Result and timing rows for every policy on one (instance, seed)."""
    runs = {}
    for kind in policies:
        try:
            runs[kind] = run_policy(inst, kind, budget, settings, seed, theta)
        except Exception as exc:  # per-cell failures are recorded, the sweep continues
            runs[kind] = PolicyRun(kind, float("nan"), float("nan"), float("nan"), 0.0, status=f"error: {exc}")
    base = runs["random"].mean if "random" in runs else float("nan")
    rows, timings = [], []
    for kind, run in runs.items():
        norm = run.mean / base if base and base == base and base > 0 else float("nan")
        if kind == "random" and run.status == "ok":
            norm = 1.0
        status = run.status
        if run.extra.get("timed_out"):
            status = "timeout"
        rows.append({
            **coords, "policy": kind, "seed": seed, "mean_reward": run.mean, "std_error": run.std_error,
            "normalized_reward": norm, "fairness": run.fairness,
            "allocation": "" if run.allocation is None else " ".join(map(str, run.allocation)),
            "status": status,
        })
        timings.append({**coords, "policy": kind, "seed": seed, "wall_clock_s": run.wall_clock})
    return rows, timings


def aggregate(rows, keys=("N", "K", "budget", "abundance", "theta", "policy")):
    """One summary row per key combination: mean over seeds and its standard error."""
    groups: dict = {}
    for r in rows:
        groups.setdefault(tuple(r.get(k) for k in keys), []).append(r)
    out = []
    for key, rs in groups.items():
        row = dict(zip(keys, key))
        row["seed"] = "mean"
        for col in ("mean_reward", "normalized_reward", "fairness"):
            v = np.array([r[col] for r in rs], dtype=float)
            v = v[~np.isnan(v)]
            row[col] = float(v.mean()) if v.size else float("nan")
            if col == "mean_reward":
                row["std_error"] = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
        row["allocation"] = ""
        row["status"] = f"{sum(r['status'] == 'ok' for r in rs)}/{len(rs)} ok"
        out.append(row)
    return out


def heatmap_grid(N, K, abundances, budgets, seeds, settings: EvalSettings):
    """Cells ``(abundance, budget) -> mean COIP reward / mean Mitosis reward``."""
    rows, cells = [], {}
    for a in abundances:
        for b in budgets:
            coip, mit = [], []
            for s in seeds:
                inst = gen_blended(N, K, a, s)
                r_c = run_policy(inst, "coip", b, settings, s)
                r_m = run_policy(inst, "mitosis", b, settings, s)
                coip.append(r_c.mean)
                mit.append(r_m.mean)
            ratio = float(np.mean(coip) / np.mean(mit)) if np.mean(mit) > 0 else float("nan")
            cells[(a, b)] = ratio
            rows.append({"abundance": a, "budget": b, "coip_reward": float(np.mean(coip)),
                         "mitosis_reward": float(np.mean(mit)), "ratio": ratio})
    return rows, cells


FRONTIER_COLUMNS = ["theta", "policy", "mean_reward", "std_error", "fairness", "feasible", "allocation"]


def frontier_rows(inst, budget, thetas, settings: EvalSettings, seed: int = 0, policies=("coip", "bnb", "mitosis")):
    """Reward and achieved fairness of fairness-aware policies across ``thetas`` (sorted)."""
    rows = []
    for theta in sorted(thetas):
        for kind in policies:
            try:
                run = run_policy(inst, kind, budget, settings, seed, theta=theta)
            except RuntimeError as exc:
                run = PolicyRun(kind, float("nan"), float("nan"), float("nan"), 0.0, status=f"infeasible: {exc}")
            feasible = run.status == "ok" and run.fairness >= theta
            rows.append({
                "theta": theta, "policy": kind, "mean_reward": run.mean, "std_error": run.std_error,
                "fairness": run.fairness, "feasible": int(feasible),
                "allocation": "" if run.allocation is None else " ".join(map(str, run.allocation)),
            })
    return rows


def ablation_cells(ns, ks, bs, base_n=50, base_k=3, base_b=5, budget_ratio=0.05):
    """The three one-axis sweeps: vary N (budget a fixed share of N), vary K, vary B."""
    cells = []
    for n in ns:
        cells.append((n, base_k, max(1, round(budget_ratio * n))))
    for k in ks:
        cells.append((base_n, k, base_b))
    for b in bs:
        cells.append((base_n, base_k, b))
    seen, out = set(), []
    for c in cells:
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out

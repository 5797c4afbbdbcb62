"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments as ex
from .asymptotic import verify_counterexamples
from .generators import (
    ChurnerParams,
    OrganicParams,
    gen_appendixA_example2,
    gen_blended,
    gen_fivesix,
    gen_random,
    gen_theorem1,
)
from .lp import coip_budget, lp_fixed_budget, raw_budgets, solve_occupancy
from .model import load_instance, save_instance, validate_instance
from .policies import POLICY_KINDS
from .search import DEFAULT_TIMEOUT_S, DEFAULT_UCB_C, bnb, mitosis
from .sim import BudgetViolation, SimConfig, run_epoch
from .whittle import compute_whittle_table

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT = 0, 2, 3


class InputError(Exception):
    pass


class InvariantError(Exception):
    pass


def _ints(text):
    return [int(v) for v in str(text).replace(",", " ").split()]


def _floats(text):
    return [float(v) for v in str(text).replace(",", " ").split()]


def _common(p):
    p.add_argument("--instance", help="instance JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=None,
                   help="number of consecutive seeds starting at --seed (sweeps default to 32)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--budget", type=float, default=None)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--timeout-s", type=float, default=DEFAULT_TIMEOUT_S)
    p.add_argument("--rounds", type=int, default=2000)
    p.add_argument("--ucb-c", type=float, default=DEFAULT_UCB_C)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--horizon", type=int, default=2000)
    p.add_argument("--burn-in", type=int, default=200)
    p.add_argument("--svg", action="store_true", help="also write an SVG chart")


def _generator_flags(p):
    p.add_argument("--family", default="blended",
                   choices=["theorem1", "fivesix", "example2", "random", "organic", "churner", "blended"])
    p.add_argument("--N", type=int, default=50)
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--abundance", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=OrganicParams.alpha)
    p.add_argument("--gamma", type=float, default=OrganicParams.gamma)
    p.add_argument("--beta", type=float, default=OrganicParams.beta)
    p.add_argument("--h-max", type=float, default=OrganicParams.h_max)
    p.add_argument("--organic-recovery", type=float, default=OrganicParams.recovery)
    p.add_argument("--preferred", default=None, help="comma-separated preferred contexts for churners")
    p.add_argument("--preferred-mean", type=float, default=ChurnerParams.preferred_mean)
    p.add_argument("--disliked-mean", type=float, default=ChurnerParams.disliked_mean)
    p.add_argument("--recovery-mean", type=float, default=ChurnerParams.recovery_mean)
    p.add_argument("--uplift", type=float, default=ChurnerParams.uplift)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbbandit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate an instance JSON")
    _common(p)
    _generator_flags(p)
    p.add_argument("--output", help="instance file (default OUT/instance.json)")

    p = sub.add_parser("lp", help="solve the occupancy LP")
    _common(p)
    p.add_argument("--alloc", help="fixed per-context quotas, e.g. '0,50'")

    p = sub.add_parser("whittle", help="Whittle index table")
    _common(p)
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--mode", choices=["context", "averaged"], default="context")

    p = sub.add_parser("simulate", help="simulate one epoch of a policy")
    _common(p)
    p.add_argument("--policy", choices=sorted(POLICY_KINDS), default="coip")
    p.add_argument("--alloc", help="quotas for --policy flex")

    for name, help_ in [("compare", "run every policy over seeds"),
                        ("heatmap", "COIP/Mitosis ratio over abundance x budget"),
                        ("frontier", "reward/fairness frontier over theta"),
                        ("ablate", "N/K/B ablation sweeps")]:
        p = sub.add_parser(name, help=help_)
        _common(p)
        _generator_flags(p)
        if name == "compare":
            p.add_argument("--policies", default=",".join(ex.ALL_POLICIES))
        if name == "heatmap":
            p.add_argument("--abundances", default="0,0.25,0.5,0.75,1")
            p.add_argument("--budgets", default="2,4,6")
        if name == "frontier":
            p.add_argument("--thetas", default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")
            p.add_argument("--policies", default="coip,bnb,mitosis")
        if name == "ablate":
            p.add_argument("--ns", default="50,100,200")
            p.add_argument("--ks", default="3,4,5")
            p.add_argument("--bs", default="2,4,6")
            p.add_argument("--policies", default=",".join(ex.ALL_POLICIES))

    for name in ("bnb", "mitosis"):
        p = sub.add_parser(name, help=f"{name} allocation search")
        _common(p)
        p.add_argument("--history", action="store_true", help="write the pull/node history CSV")
        if name == "bnb":
            p.add_argument("--order", choices=["best", "fifo"], default="best")
            p.add_argument("--no-prune", action="store_true")

    p = sub.add_parser("asymptotic", help="mean-field counterexample verification")
    _common(p)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--grid", type=float, default=1e-4)
    return parser


# ------------------------------------------------------------------ helpers


def _load(args):
    if not args.instance:
        raise InputError("--instance FILE is required")
    try:
        inst = load_instance(args.instance)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read instance {args.instance}: {exc}") from exc
    report = validate_instance(inst)
    if not report.ok:
        raise InputError(f"invalid instance: {report}")
    return inst


def _budget(args, default=None):
    b = args.budget if args.budget is not None else default
    if b is None:
        raise InputError("--budget is required")
    if b < 0:
        raise InputError("--budget must be nonnegative")
    return b


def _theta(args):
    if not 0.0 <= args.theta <= 1.0:
        raise InputError("--theta must lie in [0, 1]")
    return args.theta


def _outdir(args) -> Path | None:
    if not args.out:
        return None
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _sidecar(path: Path, args, extra=None):
    meta = {
        "command": args.command,
        "flags": {k: v for k, v in sorted(vars(args).items()) if k != "command"},
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created_unix": time.time(),
    }
    if extra:
        meta.update(extra)
    path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(meta, indent=1, default=str))


def _write(path: Path, text: str, args, extra=None):
    path.write_text(text)
    _sidecar(path, args, extra)
    print(f"wrote {path}")


def _seeds(args, default=32):
    n = args.seeds if args.seeds is not None else default
    if n < 1:
        raise InputError("--seeds must be positive")
    return list(range(args.seed, args.seed + n))


def _settings(args) -> ex.EvalSettings:
    if args.epochs < 1 or args.horizon <= args.burn_in:
        raise InputError("need --epochs >= 1 and --horizon > --burn-in")
    return ex.EvalSettings(args.epochs, args.horizon, args.burn_in, args.rounds, args.ucb_c, args.timeout_s)


def _instances(args, seeds):
    """Per-seed instances: a fixed file, or the generator re-seeded per seed."""
    if args.instance:
        inst = _load(args)
        return {s: (inst, None) for s in seeds}
    return {s: ex.make_instance(args.family, args.N, args.K, s, args.abundance) for s in seeds}


# ------------------------------------------------------------------ commands


def cmd_gen(args):
    fam = args.family
    budget = None
    if fam == "theorem1":
        inst, budget = gen_theorem1(args.N)
    elif fam == "fivesix":
        inst, budget = gen_fivesix(args.epsilon)
    elif fam == "example2":
        inst, budget = gen_appendixA_example2(args.epsilon)
    elif fam == "random":
        inst = gen_random(args.N, args.K, args.seed)
    else:
        organic = OrganicParams(args.alpha, args.gamma, args.beta, args.h_max, recovery=args.organic_recovery)
        churner = ChurnerParams(
            tuple(_ints(args.preferred)) if args.preferred else None,
            args.preferred_mean, args.disliked_mean, args.recovery_mean, uplift=args.uplift,
        )
        a = {"organic": 1.0, "churner": 0.0}.get(fam, args.abundance)
        inst = gen_blended(args.N, args.K, a, args.seed, organic=organic, churner=churner)
    report = validate_instance(inst)
    if not report.ok:
        raise InvariantError(f"generator produced an invalid instance: {report}")
    if args.output:
        path = Path(args.output)
        path.parent.mkdir(parents=True, exist_ok=True)
    else:
        d = _outdir(args) or Path(".")
        path = d / "instance.json"
    save_instance(inst, path)
    _sidecar(path, args, {"recommended_budget": budget})
    print(f"wrote {path} (N={inst.num_arms}, K={inst.num_contexts}"
          + (f", recommended budget {budget:g}" if budget is not None else "") + ")")


def _check_solution(sol, inst):
    from .lp import flow_residuals

    mu = sol.mu
    if mu.min() < -1e-9:
        raise InvariantError("negative occupancy mass")
    if np.max(np.abs(mu.sum(axis=(1, 2, 3)) - 1.0)) > 1e-7:
        raise InvariantError("occupancy normalization violated")
    if np.max(flow_residuals(mu, inst)) > 1e-7:
        raise InvariantError("flow balance violated")


def cmd_lp(args):
    inst = _load(args)
    theta = _theta(args)
    if args.alloc:
        alloc = _ints(args.alloc)
        if len(alloc) != inst.num_contexts:
            raise InputError(f"--alloc needs {inst.num_contexts} entries")
        sol = lp_fixed_budget(inst, alloc, theta=theta)
        budget = float(inst.context_probs @ np.array(alloc))
    else:
        budget = _budget(args)
        sol = solve_occupancy(inst, budget, theta=theta)
    print(f"status: {sol.status}")
    if not sol.optimal:
        return
    _check_solution(sol, inst)
    raw = raw_budgets(sol.mu, inst.context_probs)
    print(f"objective: {sol.objective_value:.10g}")
    print("fractional budgets: " + " ".join(f"{v:.6g}" for v in raw))
    print("COIP budgets: " + " ".join(map(str, coip_budget(sol.mu, inst.context_probs, budget, inst.num_arms))))
    d = _outdir(args)
    if d:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["arm", "context", "state", "action", "mass"])
        for (i, k, s, a), m in np.ndenumerate(sol.mu):
            w.writerow([i, k, s, a, format(float(m), ".12g")])
        _write(d / "mu.csv", buf.getvalue(), args, {"objective": sol.objective_value})


def cmd_whittle(args):
    inst = _load(args)
    table = compute_whittle_table(inst, gamma=args.gamma, mode=args.mode)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["arm", "context", "state", "index"])
    for (i, k, s), v in np.ndenumerate(table.index):
        w.writerow([i, k, s, format(float(v), ".10g")])
    d = _outdir(args)
    if d:
        _write(d / "whittle.csv", buf.getvalue(), args)
    else:
        sys.stdout.write(buf.getvalue())
    bad = int((~table.indexable).sum())
    if bad:
        print(f"{bad} entries non-indexable (index -inf)", file=sys.stderr)


def cmd_simulate(args):
    inst = _load(args)
    theta = _theta(args)
    kind = args.policy
    if kind == "flex":
        if not args.alloc:
            raise InputError("--policy flex needs --alloc")
        pol = POLICY_KINDS[kind](tuple(_ints(args.alloc)), theta=theta)
    elif kind in ("coip", "soft"):
        pol = POLICY_KINDS[kind](_budget(args), theta=theta)
    else:
        pol = POLICY_KINDS[kind](int(_budget(args)))
    try:
        pol.fit(inst)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    cfg = SimConfig(args.horizon, args.burn_in, 1, args.seed)
    out = run_epoch(inst, pol, cfg, seed=(args.seed, 0))
    cols = ["policy", "avg_reward", "std_error", "fairness", "budget_violations", "steps"]
    cols += [f"reward_ctx{k}" for k in range(inst.num_contexts)]
    cols += [f"visits_ctx{k}" for k in range(inst.num_contexts)]
    vals = [kind, out.avg_reward, out.std_error, out.fairness, out.budget_violations, out.steps]
    vals += list(out.per_context_reward) + list(out.per_context_visits)
    print(",".join(cols))
    print(",".join(ex._num(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in vals))


def _emit_results(args, name, rows, timings, agg, chart=None):
    d = _outdir(args) or Path(".")
    _write(d / f"{name}.csv", ex.rows_to_csv(rows + agg, ex.RESULT_COLUMNS), args)
    if timings:
        _write(d / f"{name}_timings.csv", ex.rows_to_csv(timings, ex.TIMING_COLUMNS), args)
    if args.svg and chart:
        (d / f"{name}.svg").write_text(chart)
        print(f"wrote {d / f'{name}.svg'}")


def _summary_table(agg, timings):
    wall: dict = {}
    for t in timings:
        wall.setdefault(t["policy"], []).append(t["wall_clock_s"])
    print(f"{'policy':10s} {'reward':>10s} {'normalized':>11s} {'wall_s':>8s}")
    for r in agg:
        print(f"{r['policy']:10s} {r['mean_reward']:10.4f} {r['normalized_reward']:11.4f} "
              f"{np.mean(wall.get(r['policy'], [float('nan')])):8.3f}")


def cmd_compare(args):
    seeds = _seeds(args)
    settings = _settings(args)
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    if "random" not in policies:
        policies.insert(0, "random")
    rows, timings = [], []
    for s, (inst, rec_budget) in _instances(args, seeds).items():
        budget = _budget(args, rec_budget if rec_budget is not None else 5)
        coords = {"N": inst.num_arms, "K": inst.num_contexts, "budget": budget,
                  "abundance": args.abundance, "theta": _theta(args)}
        r, t = ex.compare_cell(inst, budget, coords, s, settings, policies, args.theta)
        rows += r
        timings += t
    agg = ex.aggregate(rows)
    _summary_table(agg, timings)
    chart = None
    if args.svg:
        from .svg import bar_chart

        wall = {p: np.mean([t["wall_clock_s"] for t in timings if t["policy"] == p]) for p in policies}
        chart = bar_chart(policies, ["normalized reward"], [[r["normalized_reward"]] for r in agg],
                          title="normalized reward by policy", ylabel="reward / Random")
        d = _outdir(args) or Path(".")
        (d / "compare_runtime.svg").write_text(
            bar_chart(policies, ["wall-clock s"], [[wall[p]] for p in policies], title="runtime", ylabel="seconds"))
    _emit_results(args, "compare", rows, timings, agg, chart)


def cmd_ablate(args):
    seeds = _seeds(args)
    settings = _settings(args)
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    if "random" not in policies:
        policies.insert(0, "random")
    rows, timings = [], []
    for N, K, B in ex.ablation_cells(_ints(args.ns), _ints(args.ks), _floats(args.bs)):
        for s in seeds:
            inst, _ = ex.make_instance(args.family, N, K, s, args.abundance)
            coords = {"N": N, "K": K, "budget": B, "abundance": args.abundance, "theta": _theta(args)}
            r, t = ex.compare_cell(inst, B, coords, s, settings, policies, args.theta)
            rows += r
            timings += t
    _emit_results(args, "ablate", rows, timings, ex.aggregate(rows))


def cmd_heatmap(args):
    settings = _settings(args)
    abundances = _floats(args.abundances)
    budgets = _floats(args.budgets)
    rows, cells = ex.heatmap_grid(args.N, args.K, abundances, budgets, _seeds(args), settings)
    d = _outdir(args) or Path(".")
    cols = ["abundance", "budget", "coip_reward", "mitosis_reward", "ratio"]
    _write(d / "heatmap.csv", ex.rows_to_csv(rows, cols), args)
    for r in rows:
        print(f"abundance={r['abundance']:g} budget={r['budget']:g} ratio={r['ratio']:.4f}")
    if args.svg:
        from .svg import heatmap

        grid = [[cells[(a, b)] for b in budgets] for a in abundances]
        (d / "heatmap.svg").write_text(heatmap(abundances, budgets, grid, "COIP / Mitosis reward", "budget", "abundance"))


def cmd_frontier(args):
    seeds = _seeds(args, default=1)
    settings = _settings(args)
    thetas = _floats(args.thetas)
    if any(not 0 <= t <= 1 for t in thetas):
        raise InputError("--thetas must lie in [0, 1]")
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    inst, rec = _instances(args, seeds[:1])[seeds[0]]  # one instance; --seed picks it
    budget = _budget(args, rec if rec is not None else 5)
    rows = ex.frontier_rows(inst, budget, thetas, settings, seeds[0], policies)
    d = _outdir(args) or Path(".")
    _write(d / "frontier.csv", ex.rows_to_csv(rows, ex.FRONTIER_COLUMNS), args)
    for r in rows:
        print(f"theta={r['theta']:.2f} {r['policy']:8s} reward={r['mean_reward']:.4f} "
              f"fairness={r['fairness']:.4f} feasible={r['feasible']}")
    if args.svg:
        from .svg import line_chart

        series = {p: [(r["fairness"], r["mean_reward"]) for r in rows if r["policy"] == p and r["feasible"]]
                  for p in policies}
        (d / "frontier.svg").write_text(line_chart(series, "reward vs fairness", "fairness", "reward"))


def cmd_bnb(args):
    inst = _load(args)
    budget = _budget(args)
    cfg = SimConfig(args.horizon, args.burn_in, 16, args.seed)
    res = bnb(inst, budget, cfg=cfg, theta=_theta(args), prune=not args.no_prune, order=args.order,
              timeout_s=args.timeout_s)
    out = res.to_json()
    out["evaluated"] = len(res.extra["evaluated"])
    print(json.dumps(out, indent=1))
    d = _outdir(args)
    if d:
        _write(d / "bnb.json", json.dumps(out, indent=1), args)
        if args.history:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["step", "box", "bound", "action"])
            for j, (box, ub, action) in enumerate(res.extra["log"]):
                w.writerow([j, box, format(ub, ".10g"), action])
            _write(d / "bnb_history.csv", buf.getvalue(), args)


def cmd_mitosis(args):
    inst = _load(args)
    budget = _budget(args)
    if args.rounds < 1:
        raise InputError("--rounds must be positive")
    res = mitosis(inst, budget, rounds=args.rounds, c=args.ucb_c, seed=args.seed, theta=_theta(args),
                  timeout_s=args.timeout_s)
    out = res.to_json()
    print(json.dumps(out, indent=1))
    d = _outdir(args)
    if d:
        _write(d / "mitosis.json", json.dumps(out, indent=1), args)
        if args.history:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["round", "allocation", "reward", "kind"])
            for t, alloc, r, kind in res.extra["history"]:
                w.writerow([t, " ".join(map(str, alloc)), format(r, ".10g"), kind])
            _write(d / "mitosis_history.csv", buf.getvalue(), args)


def cmd_asymptotic(args):
    if not 0 < args.epsilon < 1 or not 0 < args.grid < 1:
        raise InputError("need 0 < --epsilon < 1 and 0 < --grid < 1")
    reports = verify_counterexamples(args.epsilon, args.grid)
    for rep in reports:
        print("\n".join(rep.lines()))
    d = _outdir(args)
    if d:
        for rep in reports:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["x", "mass"])
            for x, m in zip(rep.distribution.support, rep.distribution.mass):
                w.writerow([format(float(x), ".12g"), format(float(m), ".12g")])
            _write(d / f"stationary_{rep.name}.csv", buf.getvalue(), args)
        (d / "asymptotic_report.txt").write_text("\n".join(line for r in reports for line in r.lines()) + "\n")


COMMANDS = {
    "gen": cmd_gen, "lp": cmd_lp, "whittle": cmd_whittle, "simulate": cmd_simulate,
    "compare": cmd_compare, "bnb": cmd_bnb, "mitosis": cmd_mitosis, "heatmap": cmd_heatmap,
    "frontier": cmd_frontier, "ablate": cmd_ablate, "asymptotic": cmd_asymptotic,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    try:
        COMMANDS[args.command](args)
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InvariantError, BudgetViolation) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

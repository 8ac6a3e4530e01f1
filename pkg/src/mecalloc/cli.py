"""Command-line harness: scenario generation, single solves, sweeps.

Structured outputs are JSON, tabular outputs are CSV with a fixed header
and 9-significant-digit floats so runs diff cleanly; the only
run-dependent line is the leading "# generated" timestamp comment.

Exit codes: 0 success, 2 usage error, 3 infeasible, 4 did not converge.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone

import numpy as np

from .model import (
    InfeasibilityError,
    InfeasiblePairError,
    SolveConfig,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    validate,
)
from .orchestrate import (
    InitStrategy,
    best_snr_assignment,
    evaluate,
    initialize,
    solve_fixed_assignment,
    solve_fixed_data,
    solve_iterative,
)
from .scenario import GenParams, generate, override_parameter, provenance

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_NO_CONVERGENCE = 4

OUT_DIR_ENV = "MECALLOC_OUT_DIR"

_SWEEP_PARAMS = {
    "deadline-s": "deadline_s",
    "bandwidth-hz": "bandwidth_hz",
    "capacity-cps": "capacity_cps",
    "task-bits": "task_bits",
}


def _out_path(path):
    """Relative outputs land in $MECALLOC_OUT_DIR when it is set."""
    base = os.environ.get(OUT_DIR_ENV)
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def _timestamp():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _parse_strategy(token):
    """Sweep/solve strategy tokens -> (label, runner kwargs)."""
    if token == "binary-best-ap":
        return token, {"method": "binary-best-ap", "init": None}
    if token == "fixed-equal":
        return token, {"method": "fixed-equal", "init": None}
    if token.startswith("iterative:"):
        return token, {"method": "iterative", "init": token.split(":", 1)[1]}
    if token == "iterative":
        return "iterative:equal", {"method": "iterative", "init": "equal"}
    raise argparse.ArgumentTypeError(f"unknown strategy {token!r}")


def _init_strategy(name, seed):
    if name == "equal":
        return InitStrategy.equal()
    if name == "random":
        return InitStrategy.random(seed=seed)
    if name.startswith("best-ap-"):
        return InitStrategy.best_ap(weight=float(name.rsplit("-", 1)[1]) / 100.0)
    raise argparse.ArgumentTypeError(f"unknown init {name!r}")


def _config_from_args(scenario, args):
    return SolveConfig.for_scenario(
        scenario,
        epsilon_j=args.eps_mj * 1e-3,
        bisect_tol=args.bisect_tol,
        max_outer_iters=args.max_outer,
    )


def _run_method(scenario, method, init_name, init_seed, cfg):
    if method == "iterative":
        return solve_iterative(scenario, _init_strategy(init_name or "equal",
                                                        init_seed), cfg)
    if method == "binary-best-ap":
        return solve_fixed_assignment(scenario, best_snr_assignment(scenario), cfg)
    if method == "fixed-equal":
        L = initialize(scenario, InitStrategy.equal())
        return solve_fixed_data(scenario, L, cfg)
    raise argparse.ArgumentTypeError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------

def cmd_generate(args):
    params = GenParams(
        num_users=args.users, num_aps=args.aps, region_m=args.region,
        bandwidth_hz=args.bandwidth_hz, noise_psd_w_per_hz=args.noise_psd,
        task_bits=args.task_bits, deadline_s=args.deadline_s,
        cycles_per_bit=args.cycles_per_bit, capacity_cps=args.capacity_cps,
        seed=args.seed,
    )
    scenario = generate(params)
    out = _out_path(args.out)
    save_scenario(scenario, out, provenance=provenance(params))
    print(f"wrote {out}: K={scenario.num_users} M={scenario.num_aps} "
          f"B={_fmt(scenario.bandwidth_hz)} Hz seed={args.seed}")
    return EXIT_OK


def cmd_solve(args):
    scenario = load_scenario(args.scenario)
    cfg = _config_from_args(scenario, args)
    try:
        solution = _run_method(scenario, args.method, args.init, args.init_seed, cfg)
    except (InfeasibilityError, InfeasiblePairError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    metrics = evaluate(scenario, solution, cfg)
    report = validate(scenario, solution.allocation, cfg)
    doc = solution.to_dict()
    doc["metrics"] = {
        "energy_mj": metrics.energy_mj,
        "max_load_share_per_user": list(metrics.max_load_share_per_user),
        "multi_ap_user_count": metrics.multi_ap_user_count,
        "constraint_residuals": metrics.constraint_residuals,
    }
    doc["constraints_ok"] = report.ok
    out = _out_path(args.out)
    with open(out, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if args.trace:
        trace_path = _out_path(args.trace)
        with open(trace_path, "w", newline="") as fh:
            fh.write(f"# generated: {_timestamp()}\n")
            w = csv.writer(fh)
            w.writerow(["outer_iter", "energy_mj", "inner_iters", "wall_time_s"])
            tr = solution.trace
            for k, (e, n, wt) in enumerate(zip(tr.outer_energies_j,
                                               tr.inner_iteration_counts,
                                               tr.wall_times_s)):
                w.writerow([k, _fmt(e * 1e3), n, _fmt(wt)])
    print(f"energy {metrics.energy_mj:.9g} mJ, converged={solution.converged}, "
          f"outer_iterations={solution.outer_iterations}, "
          f"constraints_ok={report.ok}")
    if not report.ok:
        print(str(report), file=sys.stderr)
    return EXIT_OK if solution.converged else EXIT_NO_CONVERGENCE


def _sweep_point(job):
    """One (parameter value, strategy) solve; runs inside a worker."""
    scenario_doc, param, value, token, init_seed, eps_mj, bisect_tol, max_outer = job
    scenario = override_parameter(scenario_from_dict(scenario_doc),
                                  _SWEEP_PARAMS[param], value)
    label, spec = _parse_strategy(token)
    cfg = SolveConfig.for_scenario(scenario, epsilon_j=eps_mj * 1e-3,
                                   bisect_tol=bisect_tol,
                                   max_outer_iters=max_outer)
    row = {"parameter": param, "value": value, "strategy": label,
           "energy_mj": "", "outer_iterations": "",
           "mean_max_load_share": "", "min_max_load_share": "",
           "multi_ap_user_count": "", "converged": "", "error": ""}
    try:
        sol = _run_method(scenario, spec["method"], spec["init"], init_seed, cfg)
    except (InfeasibilityError, InfeasiblePairError) as exc:
        row["converged"] = "false"
        row["error"] = str(exc).replace(",", ";")
        return row
    m = evaluate(scenario, sol, cfg)
    act = sol.allocation.data > cfg.activity_threshold_bits
    multi = act.sum(axis=1) >= 2
    shares = np.array(m.max_load_share_per_user)[multi]
    row.update(
        energy_mj=_fmt(m.energy_mj),
        outer_iterations=sol.outer_iterations,
        mean_max_load_share=_fmt(float(shares.mean())) if shares.size else "",
        min_max_load_share=_fmt(float(shares.min())) if shares.size else "",
        multi_ap_user_count=m.multi_ap_user_count,
        converged="true" if sol.converged else "false",
    )
    return row


_SWEEP_COLUMNS = ["parameter", "value", "strategy", "energy_mj",
                  "outer_iterations", "mean_max_load_share",
                  "min_max_load_share", "multi_ap_user_count", "converged",
                  "error"]


def cmd_sweep(args):
    scenario = load_scenario(args.scenario)
    values = sorted(float(v) for v in args.values.split(","))
    if len(values) != len(set(values)):
        raise argparse.ArgumentTypeError("sweep values must be distinct")
    tokens = [tok.strip() for tok in args.strategies.split(",") if tok.strip()]
    if not tokens:
        raise argparse.ArgumentTypeError("at least one strategy is required")
    for tok in tokens:
        _parse_strategy(tok)
    doc = scenario_to_dict(scenario)
    jobs = [(doc, args.param, v, tok, args.init_seed, args.eps_mj,
             args.bisect_tol, args.max_outer)
            for v in values for tok in tokens]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(job) for job in jobs]
    rows.sort(key=lambda r: (float(r["value"]), r["strategy"]))

    out = _out_path(args.out)
    with open(out, "w", newline="") as fh:
        fh.write(f"# generated: {_timestamp()}\n")
        w = csv.DictWriter(fh, fieldnames=_SWEEP_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {out}: {len(rows)} rows")

    if args.param == "deadline-s":
        for tok in tokens:
            label, spec = _parse_strategy(tok)
            if spec["method"] != "iterative":
                continue
            energies = [float(r["energy_mj"]) for r in rows
                        if r["strategy"] == label and r["energy_mj"] != ""]
            mono = all(b <= a * (1 + 1e-9) for a, b in zip(energies, energies[1:]))
            print(f"monotonicity[{label}]: energy non-increasing in deadline: "
                  f"{'yes' if mono else 'NO'}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="mecalloc",
        description="Joint data/bandwidth/compute allocation benchmarks for "
                    "multi-AP mobile edge computing.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a scenario JSON file")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--users", type=int, default=8)
    g.add_argument("--aps", type=int, default=4)
    g.add_argument("--region", type=float, default=200.0, help="square side, m")
    g.add_argument("--bandwidth-hz", type=float, default=1e7)
    g.add_argument("--noise-psd", type=float, default=10.0 ** (-20.4))
    g.add_argument("--task-bits", type=float, default=1.5e6)
    g.add_argument("--deadline-s", type=float, default=0.5)
    g.add_argument("--cycles-per-bit", type=float, default=1e3)
    g.add_argument("--capacity-cps", type=float, default=2.5e10)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one scenario file")
    s.add_argument("--scenario", required=True)
    s.add_argument("--method", default="iterative",
                   choices=["iterative", "binary-best-ap", "fixed-equal"])
    s.add_argument("--init", default="equal",
                   help="iterative initialization: equal | random | best-ap-90")
    s.add_argument("--init-seed", type=int, default=0,
                   help="seed for the random initialization")
    s.add_argument("--eps-mj", type=float, default=1e-2,
                   help="outer stop threshold in milli-Joules")
    s.add_argument("--bisect-tol", type=float, default=1e-9)
    s.add_argument("--max-outer", type=int, default=100)
    s.add_argument("--out", default="solution.json")
    s.add_argument("--trace", default=None, help="trace CSV path")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="solve over a parameter grid")
    w.add_argument("--scenario", required=True)
    w.add_argument("--param", required=True, choices=sorted(_SWEEP_PARAMS))
    w.add_argument("--values", required=True,
                   help="comma-separated positive values, e.g. 0.2,0.4,0.6")
    w.add_argument("--strategies", default="iterative:equal",
                   help="comma-separated: iterative:<init>, binary-best-ap, "
                        "fixed-equal")
    w.add_argument("--init-seed", type=int, default=0)
    w.add_argument("--eps-mj", type=float, default=1e-2)
    w.add_argument("--bisect-tol", type=float, default=1e-9)
    w.add_argument("--max-outer", type=int, default=100)
    w.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    w.add_argument("--out", default="sweep.csv")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibilityError, InfeasiblePairError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())

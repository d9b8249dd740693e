"""Command-line front end.

Subcommands::

    plan-periodic   shortest repeating flight period meeting rate demands
    plan-onetime    shortest one-shot mission meeting throughput demands
    init-only       emit an initial trajectory without optimizing
    audit           recheck an emitted plan with the independent auditor
    gen-scenario    write a reproducible random scenario file

Every planning run writes ``plan.json`` (horizon, ratios, search trace, tour
metadata), ``trajectory.csv`` (per-slot positions, allocation, and rates) and
``audit.txt`` (independent verdicts) into the output directory. Floats are
formatted to 12 significant digits, so identical inputs give byte-identical
artifacts.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import routing
from .audit import audit_plan
from .optimizer import (BcdConfig, BisectionConfig, InfeasibleTrajectoryError,
                        MinimizeResult, StructurallyInfeasibleError,
                        minimize_completion_time, minimize_period)
from .scenario import (DEFAULT_RADIO, GroundUser, Role, Scenario, ScenarioError,
                       ScenarioParseError, load_scenario)
from .subproblems import DiscretePlan, SubproblemError, rate_matrices

SIG_DIGITS = 12

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_INFEASIBLE = 4
EXIT_SOLVER = 5


def _round_floats(obj):
    if isinstance(obj, float):
        if math.isfinite(obj):
            return float(f"{obj:.{SIG_DIGITS}g}")
        return None
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return _round_floats(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _round_floats(obj.tolist())
    return obj


def write_plan_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_round_floats(payload), indent=2, sort_keys=True)
                    + "\n")


def _fmt(x: float) -> str:
    return f"{x:.{SIG_DIGITS}g}"


def write_trajectory_csv(path: Path, scenario: Scenario, plan: DiscretePlan) -> None:
    """Fixed column order: n, t_seconds, x_m, y_m, then alpha per source flow,
    beta and p per destination flow, then per-flow slot rates in bps/Hz."""
    U, V = scenario.n_sources, scenario.n_dests
    ru, rv = rate_matrices(scenario, plan.q, plan.alpha, plan.beta, plan.p)
    header = (["n", "t_seconds", "x_m", "y_m"]
              + [f"alpha_{i + 1}" for i in range(U)]
              + [f"beta_{j + 1}" for j in range(V)]
              + [f"p_{j + 1}" for j in range(V)]
              + [f"rate_u_{i + 1}" for i in range(U)]
              + [f"rate_v_{j + 1}" for j in range(V)])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for n in range(plan.N):
            row = [str(n + 1), _fmt(n * plan.delta_t),
                   _fmt(plan.q[n, 0]), _fmt(plan.q[n, 1])]
            row += [_fmt(plan.alpha[i, n]) for i in range(U)]
            row += [_fmt(plan.beta[j, n]) for j in range(V)]
            row += [_fmt(plan.p[j, n]) for j in range(V)]
            row += [_fmt(ru[i, n]) for i in range(U)]
            row += [_fmt(rv[j, n]) for j in range(V)]
            w.writerow(row)


def read_trajectory_csv(path: Path, scenario: Scenario, dt: float) -> DiscretePlan:
    with path.open() as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    U, V = scenario.n_sources, scenario.n_dests
    expect = 4 + U + 2 * V
    if len(header) < expect:
        raise ScenarioParseError(f"trajectory csv has {len(header)} columns, "
                                 f"expected at least {expect}")
    N = len(body)
    q = np.zeros((N, 2))
    alpha = np.zeros((U, N))
    beta = np.zeros((V, N))
    p = np.zeros((V, N))
    for n, row in enumerate(body):
        q[n] = (float(row[2]), float(row[3]))
        for i in range(U):
            alpha[i, n] = float(row[4 + i])
        for j in range(V):
            beta[j, n] = float(row[4 + U + j])
            p[j, n] = float(row[4 + U + V + j])
    return DiscretePlan(N=N, delta_t=dt, q=q, alpha=alpha, beta=beta, p=p,
                        eta=float("nan"))


def _flow_entries(scenario: Scenario, mode: str, plan: DiscretePlan) -> list[dict]:
    from .subproblems import evaluate_plan
    ev = evaluate_plan(scenario, mode, plan.q, plan.alpha, plan.beta, plan.p,
                       plan.delta_t)
    out = []
    users = list(scenario.sources) + list(scenario.dests)
    for f, user in enumerate(users):
        out.append({
            "flow": f"source-{f}" if f < scenario.n_sources
                    else f"dest-{f - scenario.n_sources}",
            "user_id": user.id,
            "direction": "uplink" if f < scenario.n_sources else "downlink",
            "requirement": ev.targets[f],
            "achieved": ev.achieved[f],
            "ratio": ev.ratios[f],
        })
    return out


def _tour_payload(design: routing.RouteDesign | None) -> dict | None:
    if design is None or design.tour is None:
        return None
    return {"order": list(design.tour.order), "length_m": design.tour.length,
            "closed": design.tour.closed, "exact": design.tour.exact,
            "case": design.case, "r_star": design.r_star,
            "travel_time_s": design.travel_time}


def _emit_plan_artifacts(outdir: Path, scenario: Scenario, scenario_path: str,
                         mode: str, result: MinimizeResult, manifest: dict) -> bool:
    plan = result.plan
    design = None
    if result.scheme != "circle":
        gaps = plan.N - 1
        design = routing.plan_route(scenario, mode, gaps * plan.delta_t,
                                    result.scheme)
    payload = {
        "command": manifest["command"],
        "manifest": manifest,
        "mode": mode,
        "scenario": scenario_path,
        "T_star": result.T_star,
        "N": plan.N,
        "dt": plan.delta_t,
        "eta": plan.eta,
        "per_flow": _flow_entries(scenario, mode, plan),
        "eta_trace": list(result.eta_trace),
        "probes": [[pr.T, pr.eta] for pr in result.probes],
        "init": {"scheme": result.scheme, "tour": _tour_payload(design),
                 "r_star": None if design is None else design.r_star},
    }
    write_plan_json(outdir / "plan.json", payload)
    write_trajectory_csv(outdir / "trajectory.csv", scenario, plan)
    report = audit_plan(scenario, mode, plan.delta_t, plan.q, plan.alpha,
                        plan.beta, plan.p)
    (outdir / "audit.txt").write_text(report.text())
    return report.passed


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", required=True, help="scenario YAML file")
    p.add_argument("--init", choices=["tsp", "pdp", "circle"], default=None,
                   help="trajectory initializer (default: tsp periodic, pdp one-time)")
    p.add_argument("--dt", type=float, default=1.0, help="slot length, seconds")
    p.add_argument("--eta-tol", type=float, default=1e-3,
                   help="relative objective tolerance of the inner loop")
    p.add_argument("--t-tol", type=float, default=1.0,
                   help="horizon bisection tolerance, seconds")
    p.add_argument("--t-lower", type=float, default=None)
    p.add_argument("--t-upper", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0, help="recorded in the manifest")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uavplan",
                                 description="UAV service-trajectory planner")
    sub = ap.add_subparsers(dest="command", required=True)

    for cmd in ("plan-periodic", "plan-onetime"):
        p = sub.add_parser(cmd)
        _add_common(p)

    p = sub.add_parser("init-only")
    _add_common(p)
    p.add_argument("--mode", choices=["periodic", "onetime"], required=True)
    p.add_argument("--T", type=float, default=None,
                   help="horizon seconds (default: the route travel time)")

    p = sub.add_parser("audit")
    p.add_argument("--scenario", required=True)
    p.add_argument("--plan", required=True, help="plan.json to audit")
    p.add_argument("--trajectory", required=True, help="trajectory.csv to audit")
    p.add_argument("--out", required=True, help="output directory for audit.txt")

    p = sub.add_parser("gen-scenario")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-users", type=int, required=True)
    p.add_argument("--box-side", type=float, default=6000.0)
    p.add_argument("--relay-pairs", type=int, default=0)
    p.add_argument("--uplink", type=int, default=0)
    p.add_argument("--downlink", type=int, default=0)
    p.add_argument("--rate-bps", type=float, default=2e6)
    p.add_argument("--throughput-bits", type=float, default=3e8)
    p.add_argument("--out", required=True, help="scenario file to write")
    return ap


def generate_scenario(seed: int, n_users: int, box_side_m: float,
                      modes: tuple[int, int, int], rate_bps: float | None = 2e6,
                      throughput_bits: float | None = 3e8) -> Scenario:
    """Reproducible uniform user placement with the default radio parameters.

    ``modes`` is (relay_pairs, uplink_only, downlink_only); the counts must
    add up to n_users (each relay pair has two users).
    """
    k3, k1, k2 = modes
    if n_users <= 0:
        raise ScenarioError("n_users must be positive")
    if min(k1, k2, k3) < 0 or k1 + k2 + 2 * k3 != n_users:
        raise ScenarioError(
            f"mode counts ({k3} relay pairs, {k1} uplink, {k2} downlink) "
            f"do not add up to {n_users} users")
    rng = np.random.default_rng(seed)
    pos = [tuple(float(f"{v:.{SIG_DIGITS}g}") for v in row)
           for row in rng.uniform(0.0, box_side_m, size=(n_users, 2))]
    users = []
    uid = 0
    for k in range(k3):
        users.append(GroundUser(id=uid + 1, position=pos[uid],
                                role=Role.RELAY_SOURCE, uplink_power_w=0.01,
                                pair=k + 1))
        uid += 1
    for k in range(k3):
        users.append(GroundUser(id=uid + 1, position=pos[uid],
                                role=Role.RELAY_DESTINATION, pair=k + 1))
        uid += 1
    for _ in range(k1):
        users.append(GroundUser(id=uid + 1, position=pos[uid],
                                role=Role.UPLINK_SOURCE, uplink_power_w=0.01))
        uid += 1
    for _ in range(k2):
        users.append(GroundUser(id=uid + 1, position=pos[uid],
                                role=Role.DOWNLINK_DESTINATION))
        uid += 1
    ids = [u.id for u in users]
    return Scenario(
        radio=DEFAULT_RADIO,
        users=tuple(users),
        rate_bps=None if rate_bps is None else {i: float(rate_bps) for i in ids},
        throughput_bits=None if throughput_bits is None
        else {i: float(throughput_bits) for i in ids},
    )


def _cmd_plan(args, mode: str) -> int:
    scenario = load_scenario(args.scenario)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    scheme = args.init
    if scheme is None:
        scheme = "tsp" if mode == "periodic" else "pdp"
    bis = BisectionConfig(T_tolerance=args.t_tol, T_lower=args.t_lower,
                          T_upper=args.t_upper)
    bcd = BcdConfig(eta_tolerance=args.eta_tol, max_iterations=args.max_iters,
                    delta_t=args.dt)
    if mode == "periodic":
        result = minimize_period(scenario, bis, bcd, init_scheme=scheme)
    else:
        result = minimize_completion_time(scenario, bis, bcd, init_scheme=scheme)
    manifest = {"command": args.command, "scenario_path": args.scenario,
                "init_scheme": scheme, "dt": args.dt, "eta_tol": args.eta_tol,
                "t_tol": args.t_tol, "seed": args.seed,
                "output_dir": str(outdir)}
    ok = _emit_plan_artifacts(outdir, scenario, args.scenario, mode, result,
                              manifest)
    print(f"T_star = {result.T_star:.{SIG_DIGITS}g} s, eta = "
          f"{result.plan.eta:.{SIG_DIGITS}g}, audit "
          f"{'passed' if ok else 'FAILED'}; artifacts in {outdir}")
    return EXIT_OK if ok else EXIT_SOLVER


def _cmd_init_only(args) -> int:
    scenario = load_scenario(args.scenario)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    mode = args.mode
    scheme = args.init
    if scheme is None:
        scheme = "tsp" if mode == "periodic" else "pdp"
    if scheme == "pdp" and mode == "periodic":
        scheme = "tsp"
    if args.T is not None:
        T = args.T
    else:
        from .optimizer import _route_time
        T = max(_route_time(scenario, mode, scheme), 2 * args.dt)
    q = routing.build_initial_trajectory(scenario, mode, T, args.dt, scheme)
    U, V = scenario.n_sources, scenario.n_dests
    plan = DiscretePlan(N=len(q), delta_t=args.dt, q=q,
                        alpha=np.zeros((U, len(q))), beta=np.zeros((V, len(q))),
                        p=np.zeros((V, len(q))), eta=0.0)
    design = None
    if scheme != "circle":
        design = routing.plan_route(scenario, mode, (len(q) - 1) * args.dt, scheme)
    manifest = {"command": "init-only", "scenario_path": args.scenario,
                "init_scheme": scheme, "dt": args.dt, "seed": args.seed,
                "output_dir": str(outdir)}
    payload = {"command": "init-only", "manifest": manifest, "mode": mode,
               "scenario": args.scenario, "T_star": T, "N": plan.N,
               "dt": args.dt, "eta": None, "per_flow": [], "eta_trace": [],
               "probes": [],
               "init": {"scheme": scheme, "tour": _tour_payload(design),
                        "r_star": None if design is None else design.r_star}}
    write_plan_json(outdir / "plan.json", payload)
    write_trajectory_csv(outdir / "trajectory.csv", scenario, plan)
    (outdir / "audit.txt").write_text("SKIP initialization only; no plan to audit\n")
    print(f"initial trajectory with N = {plan.N} written to {outdir}")
    return EXIT_OK


def _cmd_audit(args) -> int:
    scenario = load_scenario(args.scenario)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    doc = json.loads(Path(args.plan).read_text())
    mode = doc["mode"]
    dt = float(doc["dt"])
    plan = read_trajectory_csv(Path(args.trajectory), scenario, dt)
    report = audit_plan(scenario, mode, dt, plan.q, plan.alpha, plan.beta, plan.p)
    (outdir / "audit.txt").write_text(report.text())
    print(report.text(), end="")
    return EXIT_OK if report.passed else EXIT_INFEASIBLE


def _cmd_gen(args) -> int:
    scenario = generate_scenario(args.seed, args.n_users, args.box_side,
                                 (args.relay_pairs, args.uplink, args.downlink),
                                 args.rate_bps, args.throughput_bits)
    scenario.save(args.out)
    print(f"scenario with {args.n_users} users written to {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plan-periodic":
            return _cmd_plan(args, "periodic")
        if args.command == "plan-onetime":
            return _cmd_plan(args, "onetime")
        if args.command == "init-only":
            return _cmd_init_only(args)
        if args.command == "audit":
            return _cmd_audit(args)
        if args.command == "gen-scenario":
            return _cmd_gen(args)
        raise AssertionError(f"unhandled command {args.command}")
    except ScenarioParseError as e:
        print(json.dumps({"error": "parse", "message": str(e)}), file=sys.stderr)
        return EXIT_PARSE
    except ScenarioError as e:
        print(json.dumps({"error": "validation", "message": str(e)}), file=sys.stderr)
        return EXIT_VALIDATION
    except (StructurallyInfeasibleError, InfeasibleTrajectoryError) as e:
        print(json.dumps({"error": "infeasible", "message": str(e)}), file=sys.stderr)
        return EXIT_INFEASIBLE
    except SubproblemError as e:
        print(json.dumps({"error": "solver-failure", "message": str(e)}),
              file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

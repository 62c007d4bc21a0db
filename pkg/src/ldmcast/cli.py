"""Command-line harness: instance generation, solving, sweeps and validation.

Exit codes: 0 success, 1 usage or malformed input, 2 infeasible or failed
solve, 3 I/O error.  ``LDMCAST_THREADS`` sets the default number of sweep
worker processes.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .baselines import (
    TdmEndpoints,
    ldm_tradeoff,
    solve_fixed_cluster,
    solve_multicast_only,
    solve_tdm,
    solve_unicast_only,
    static_cluster,
    tdm_endpoints,
)
from .bb_solver import BRANCH_RULES, solve_bb, write_trace_csv
from .ccp_solver import CcpOptions, solve_ccp
from .model import ProblemInstance, Solution, check_feasibility
from .persist import (
    SchemaError,
    load_instance,
    load_json,
    load_result,
    result_document,
    save_instance,
    save_result,
)
from .scenario import ScenarioConfig, dbm_to_watts, generate
from .svgplot import line_plot

EXIT_OK, EXIT_USAGE, EXIT_FAILED, EXIT_IO = 0, 1, 2, 3
THREADS_ENV = "LDMCAST_THREADS"
SOLVE_CHOICES = ("bb", "ccp", "tdm", "static")
AXES = ("backhaul", "eta", "t_m", "share")
FEAS_TOL = 1e-6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def default_jobs() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


# ---------------------------------------------------------------- parameters

def add_solver_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver parameters")
    g.add_argument("--eta", type=float, default=None,
                   help="weight of the multicast rate (default: the instance value, 0.9 for generated ones)")
    g.add_argument("--eps", type=float, default=1e-2, help="BB optimality gap in bit/s/Hz (default 1e-2)")
    g.add_argument("--bb-rule", choices=BRANCH_RULES, default="gap", help="BB edge selection rule (default gap)")
    g.add_argument("--bb-max-iter", type=int, default=10_000)
    g.add_argument("--bb-max-time", type=float, default=1800.0, help="seconds")
    g.add_argument("--theta", type=float, default=1e-6, help="smoothed l0 parameter in W (default 1e-6)")
    g.add_argument("--power-threshold-dbm", type=float, default=-30.0,
                   help="link power below which CCP drops a link (default -30)")
    g.add_argument("--ccp-max-iter", type=int, default=40)
    g.add_argument("--ccp-rel-tol", type=float, default=1e-3)
    g.add_argument("--ccp-restarts", type=int, default=3)
    g.add_argument("--ccp-seed", type=int, default=0)
    g.add_argument("--static-m", type=int, default=None, help="unicast cluster size of the static scheme (default N)")
    g.add_argument("--static-mode", choices=("gain", "distance"), default="gain")
    g.add_argument("--t-m", type=float, default=0.5, help="multicast time share of the TDM scheme")
    g.add_argument("--tdm-solver", choices=("ccp", "bb"), default="ccp", help="solver for the TDM endpoints")


PARAM_KEYS = ("eta", "eps", "bb_rule", "bb_max_iter", "bb_max_time", "theta", "power_threshold_dbm",
              "ccp_max_iter", "ccp_rel_tol", "ccp_restarts", "ccp_seed", "static_m", "static_mode",
              "t_m", "tdm_solver")


def params_from_args(args) -> dict:
    params = {key: getattr(args, key) for key in PARAM_KEYS}
    if params["eps"] <= 0 or params["theta"] <= 0 or params["ccp_rel_tol"] <= 0:
        raise UsageError("--eps, --theta and --ccp-rel-tol must be positive")
    if params["eta"] is not None and not 0.0 <= params["eta"] <= 1.0:
        raise UsageError("--eta must lie in [0, 1]")
    if not 0.0 <= params["t_m"] <= 1.0:
        raise UsageError("--t-m must lie in [0, 1]")
    return params


def ccp_options(params: dict) -> CcpOptions:
    return CcpOptions(
        theta=params["theta"],
        power_threshold=float(dbm_to_watts(params["power_threshold_dbm"])),
        rel_tol=params["ccp_rel_tol"],
        max_iter=params["ccp_max_iter"],
        restarts=params["ccp_restarts"],
        seed=params["ccp_seed"],
    )


def bb_options(params: dict) -> dict:
    return {"eps": params["eps"], "max_iter": params["bb_max_iter"], "max_time": params["bb_max_time"],
            "rule": params["bb_rule"]}


def params_text(params: dict) -> str:
    return json.dumps(params, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------- dispatch

class SolveOutcome:
    """Solutions produced by one solver call plus bookkeeping for the result file."""

    def __init__(self, status: str, solutions: dict[str, Solution], extra: dict | None = None,
                 rate_pair: tuple[float, float] | None = None, objective_bps: float | None = None,
                 certificate=None):
        self.status = status
        self.solutions = solutions
        self.extra = extra or {}
        self.rate_pair = rate_pair
        self.objective_bps = objective_bps
        self.certificate = certificate

    def feasible(self, instance: ProblemInstance, tol: float = FEAS_TOL) -> bool:
        return all(check_feasibility(instance, s, tol).feasible(tol) for s in self.solutions.values())


def _single(status: str, instance: ProblemInstance, sol: Solution, **kw) -> SolveOutcome:
    return SolveOutcome(status, {"main": sol}, rate_pair=(sol.multicast_rate_bps(instance), sol.unicast_rate_bps(instance)),
                        objective_bps=sol.objective, **kw)


def run_solver(instance: ProblemInstance, solver: str, params: dict) -> SolveOutcome:
    if params.get("eta") is not None:
        instance = instance.replace(eta=params["eta"])
    if solver == "bb":
        cert = solve_bb(instance, **bb_options(params))
        extra = {"certificate": {
            "status": cert.status,
            "global_upper_bps": cert.global_upper,
            "global_lower_bps": cert.global_lower,
            "gap_bps_per_hz": cert.gap_per_hz,
            "eps_bps_per_hz": cert.eps,
            "iterations": cert.iterations,
            "boxes_explored": cert.boxes_explored,
            "solver_failures": cert.solver_failures,
        }}
        return _single(cert.status, instance, cert.best_solution, extra=extra, certificate=cert)
    if solver == "ccp":
        sol = solve_ccp(instance, ccp_options(params))
        runs = [{k: run[k] for k in ("seed", "iterations", "converged", "objective")} for run in sol.meta["runs"]]
        return _single("converged" if all(r["converged"] for r in runs) else "iteration_limit", instance, sol,
                       extra={"ccp_runs": runs})
    if solver == "static":
        M = params.get("static_m") or instance.N
        clusters = static_cluster(instance, M, params.get("static_mode", "gain"))
        sol = solve_fixed_cluster(instance, clusters, opts=ccp_options(params))
        return _single("ok", instance, sol, extra={"static_m": M})
    if solver == "tdm":
        sub = params.get("tdm_solver", "ccp")
        kwargs = {"ccp_options": ccp_options(params)} if sub == "ccp" else {"bb_options": bb_options(params)}
        mc = solve_multicast_only(instance, sub, **kwargs)
        uc = solve_unicast_only(instance, sub, **kwargs)
        endpoints = _endpoints(instance, mc, uc)
        rm, ru = solve_tdm(instance, params["t_m"], sub, endpoints=endpoints)
        obj = instance.eta * rm + (1.0 - instance.eta) * ru
        return SolveOutcome("ok", {"multicast_only": mc, "unicast_only": uc}, rate_pair=(rm, ru), objective_bps=obj,
                            extra={"tdm": {"t_m": params["t_m"], "multicast_rate_bps": rm, "unicast_sum_rate_bps": ru,
                                           "objective_bps": obj}})
    raise UsageError(f"unknown solver {solver!r}")


def _endpoints(instance, mc: Solution, uc: Solution) -> TdmEndpoints:
    return TdmEndpoints(mc.multicast_rate_bps(instance), uc.unicast_rate_bps(instance))


# ---------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    try:
        raw = load_json(args.config)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.config}: not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    seeds = [None]
    if args.seeds:
        lo, _, hi = args.seeds.partition(":")
        try:
            seeds = list(range(int(lo), int(hi))) if hi else [int(lo)]
        except ValueError:
            raise UsageError("--seeds must look like START:STOP or SEED") from None
        if len(seeds) > 1 and "{seed}" not in args.out:
            raise UsageError("with several seeds the output path must contain {seed}")
    for seed in seeds:
        data = dict(raw)
        if seed is not None:
            data["seed"] = seed
        try:
            config = ScenarioConfig.from_dict(data)
        except KeyError as exc:
            raise UsageError(f"config error: {exc.args[0]}") from None
        except (TypeError, ValueError) as exc:
            raise UsageError(f"config error: {exc}") from None
        instance = generate(config)
        out = args.out.format(seed=config.seed)
        save_instance(instance, out, config.to_dict())
        print(f"wrote {out} (N={instance.N}, K={instance.K}, L={instance.L}, seed={config.seed})")
    return EXIT_OK


# ---------------------------------------------------------------- solve

def write_ccp_trace(sol: Solution, path, extra: dict) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("run", "run_seed", "stage", "iteration", "objective_bps_per_hz", *extra))
        for i, run in enumerate(sol.meta.get("runs", [])):
            for stage, key in (("ccp", "trace"), ("refine", "refine_trace")):
                for it, value in enumerate(run[key]):
                    writer.writerow((i, run["seed"], stage, it, repr(float(value)), *extra.values()))


def cmd_solve(args) -> int:
    params = params_from_args(args)
    instance = load_instance(args.instance)
    out = Path(args.out)
    trace_path = Path(args.trace) if args.trace else out.with_suffix(".trace.csv")
    t0 = time.perf_counter()
    try:
        outcome = run_solver(instance, args.solver, params)
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        doc = result_document(instance, args.solver, params, "failed",
                              extra={"error": {"type": type(exc).__name__, "message": str(exc)},
                                     "wall_time_s": time.perf_counter() - t0})
        save_result(doc, out)
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    wall = time.perf_counter() - t0
    solved = instance if params["eta"] is None else instance.replace(eta=params["eta"])
    feasible = outcome.feasible(solved)
    status = outcome.status if feasible else "infeasible"
    extra = dict(outcome.extra)
    extra.update({"wall_time_s": wall, "kernel_backend": kernels.BACKEND,
                  "objective_bps": outcome.objective_bps,
                  "multicast_rate_bps": outcome.rate_pair[0], "unicast_sum_rate_bps": outcome.rate_pair[1]})
    if not feasible:
        extra["error"] = {"type": "FeasibilityError", "message": f"solution violates constraints beyond tol {FEAS_TOL}"}
    doc = result_document(solved, args.solver, params, status, outcome.solutions, extra, FEAS_TOL)
    save_result(doc, out)
    prov = {"seed": instance.seed, "solver": args.solver, "params": params_text(params), "version": __version__}
    if outcome.certificate is not None:
        write_trace_csv(outcome.certificate, trace_path, prov)
    elif args.solver == "ccp":
        write_ccp_trace(outcome.solutions["main"], trace_path, prov)
    else:
        trace_path = None
    main = outcome.solutions.get("main")
    print(f"{args.solver}: status={status} objective={outcome.objective_bps:.6g} bit/s "
          f"({outcome.objective_bps / instance.bandwidth:.6g} bit/s/Hz) time={wall:.2f}s")
    if main is not None:
        print(f"cluster sizes: multicast={main.clustering.multicast_size()} "
              f"mean unicast={main.clustering.mean_unicast_size():.3g}")
    print(f"wrote {out}" + (f" and {trace_path}" if trace_path else ""))
    return EXIT_OK if feasible else EXIT_FAILED


# ---------------------------------------------------------------- sweep

CELL_FIELDS = ("axis", "value", "solver", "seed", "instance", "status", "objective_bps",
               "multicast_rate_bps", "unicast_sum_rate_bps", "multicast_cluster_size",
               "mean_unicast_cluster_size", "wall_time_s", "error", "params", "version")
AGG_FIELDS = ("axis", "value", "solver", "n_ok", "n_failed", "mean_objective_bps", "mean_multicast_rate_bps",
              "mean_unicast_sum_rate_bps", "mean_multicast_cluster_size", "mean_unicast_cluster_size",
              "seeds", "params", "version")


def parse_solver_spec(spec: str) -> tuple[str, dict]:
    """``ccp``, ``bb``, ``tdm`` or ``static:M``."""
    name, _, arg = spec.partition(":")
    if name not in SOLVE_CHOICES:
        raise UsageError(f"unknown solver {spec!r}; choose from bb, ccp, tdm, static:M")
    if name == "static" and arg:
        try:
            return name, {"static_m": int(arg)}
        except ValueError:
            raise UsageError(f"bad static cluster size in {spec!r}") from None
    if arg:
        raise UsageError(f"solver {name} takes no argument")
    return name, {}


def _apply_axis(instance: ProblemInstance, axis: str, value: float) -> ProblemInstance:
    if axis == "backhaul":
        return instance.replace(backhaul=np.full(instance.N, value * 1e6))
    if axis == "eta":
        return instance.replace(eta=value)
    return instance


def _row(axis, value, spec, instance, path, status, params, wall, rate_pair=None, objective=None,
         sol: Solution | None = None, error="") -> dict:
    row = dict.fromkeys(CELL_FIELDS, "")
    row.update(axis=axis, value=value, solver=spec, seed=instance.seed, instance=path, status=status,
               wall_time_s=f"{wall:.3f}", error=error, params=params_text(params), version=__version__)
    if rate_pair is not None:
        row.update(objective_bps=objective, multicast_rate_bps=rate_pair[0], unicast_sum_rate_bps=rate_pair[1])
    if sol is not None:
        row.update(multicast_cluster_size=sol.clustering.multicast_size(),
                   mean_unicast_cluster_size=sol.clustering.mean_unicast_size())
    return row


def _pure_solve(instance, value, solver, params) -> Solution | None:
    """Endpoint of an eta sweep: the dedicated single-layer solve."""
    if solver not in ("ccp", "bb") or value not in (0.0, 1.0):
        return None
    kwargs = {"ccp_options": ccp_options(params)} if solver == "ccp" else {"bb_options": bb_options(params)}
    fn = solve_multicast_only if value == 1.0 else solve_unicast_only
    return fn(instance, solver, **kwargs)


def sweep_job(job: tuple) -> list[dict]:
    """Solve every value of one (instance, solver) pair; failures become rows, never exceptions."""
    path, axis, values, spec, params = job
    instance = load_instance(path)
    solver, override = parse_solver_spec(spec)
    params = {**params, **override}
    rows = []
    if axis == "share":
        return _share_rows(path, instance, values, spec, solver, params)
    if axis == "t_m":
        t0 = time.perf_counter()
        sub = "bb" if solver == "bb" else "ccp"
        try:
            if params.get("eta") is not None:
                instance = instance.replace(eta=params["eta"])
            kwargs = {"ccp_options": ccp_options(params)} if sub == "ccp" else {"bb_options": bb_options(params)}
            endpoints = tdm_endpoints(instance, sub, **kwargs)
        except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the sweep
            wall = time.perf_counter() - t0
            return [_row(axis, v, spec, instance, path, "failed", params, wall, error=repr(exc)) for v in values]
        wall = time.perf_counter() - t0
        for v in values:
            rm, ru = endpoints.point(v)
            obj = instance.eta * rm + (1.0 - instance.eta) * ru
            rows.append(_row(axis, v, spec, instance, path, "ok", params, wall, (rm, ru), obj))
        return rows
    for v in values:
        inst = _apply_axis(instance, axis, v)
        cell_params = dict(params)
        if axis == "eta":
            cell_params["eta"] = v
        t0 = time.perf_counter()
        try:
            pure = _pure_solve(inst, v, solver, cell_params) if axis == "eta" else None
            if pure is not None:
                solved = inst.replace(eta=v)
                outcome = _single("ok", solved, pure)
            else:
                solved = inst if cell_params.get("eta") is None else inst.replace(eta=cell_params["eta"])
                outcome = run_solver(inst, solver, cell_params)
            status = outcome.status if outcome.feasible(solved) else "infeasible"
            rows.append(_row(axis, v, spec, inst, path, status, cell_params, time.perf_counter() - t0,
                             outcome.rate_pair, outcome.objective_bps, outcome.solutions.get("main")))
        except Exception as exc:  # noqa: BLE001
            rows.append(_row(axis, v, spec, inst, path, "failed", cell_params, time.perf_counter() - t0,
                             error=repr(exc)))
    return rows


def _share_rows(path, instance, values, spec, solver, params) -> list[dict]:
    """LDM trade-off points placed by multicast rate share (CCP only)."""
    if params.get("eta") is not None:
        instance = instance.replace(eta=params["eta"])
    t0 = time.perf_counter()
    if solver != "ccp":
        return [_row("share", v, spec, instance, path, "failed", params, 0.0,
                     error="the share axis supports the ccp solver only") for v in values]
    try:
        points = ldm_tradeoff(instance, values, ccp_options=ccp_options(params))
    except Exception as exc:  # noqa: BLE001
        wall = time.perf_counter() - t0
        return [_row("share", v, spec, instance, path, "failed", params, wall, error=repr(exc)) for v in values]
    wall = time.perf_counter() - t0
    rows = []
    for v, pt in zip(sorted(values), points):
        solved = instance.replace(eta=pt.eta)
        feasible = check_feasibility(solved, pt.solution, FEAS_TOL).feasible(FEAS_TOL)
        cell = {**params, "eta": pt.eta}
        rows.append(_row("share", v, spec, instance, path, "ok" if feasible else "infeasible", cell, wall,
                         (pt.multicast, pt.unicast), pt.solution.objective, pt.solution))
    return rows


def _order_key(row: dict):
    seed = row["seed"]
    return (float(row["value"]), -1 if seed in ("", None) else int(seed), row["instance"], row["solver"])


def aggregate(rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["axis"], float(row["value"]), row["solver"]), []).append(row)
    out = []
    for (axis, value, spec), cell in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][2])):
        ok = [r for r in cell if r["status"] not in ("failed", "infeasible")]

        def mean(key):
            vals = [float(r[key]) for r in ok if r[key] != ""]
            return repr(float(np.mean(vals))) if vals else ""

        params = {r["params"] for r in cell}
        out.append({
            "axis": axis, "value": value, "solver": spec, "n_ok": len(ok), "n_failed": len(cell) - len(ok),
            "mean_objective_bps": mean("objective_bps"),
            "mean_multicast_rate_bps": mean("multicast_rate_bps"),
            "mean_unicast_sum_rate_bps": mean("unicast_sum_rate_bps"),
            "mean_multicast_cluster_size": mean("multicast_cluster_size"),
            "mean_unicast_cluster_size": mean("mean_unicast_cluster_size"),
            "seeds": " ".join(str(r["seed"]) for r in cell),
            "params": params.pop() if len(params) == 1 else "mixed",
            "version": __version__,
        })
    return out


def write_csv(rows: list[dict], fields, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def sweep_svg(agg: list[dict], axis: str) -> str:
    series: dict[str, list[tuple[float, float]]] = {}
    for row in agg:
        if axis == "backhaul":
            if row["mean_objective_bps"] != "":
                series.setdefault(row["solver"], []).append((row["value"], float(row["mean_objective_bps"]) / 1e6))
        elif row["mean_multicast_rate_bps"] != "":
            label = f"TDM ({row['solver']})" if axis == "t_m" else row["solver"]
            series.setdefault(label, []).append(
                (float(row["mean_multicast_rate_bps"]) / 1e6, float(row["mean_unicast_sum_rate_bps"]) / 1e6))
    if axis == "backhaul":
        return line_plot(series, "backhaul C (Mbit/s)", "weighted sum rate (Mbit/s)")
    for line in series.values():
        line.sort()
    return line_plot(series, "multicast rate R_M (Mbit/s)", "unicast sum rate R_U (Mbit/s)")


def cmd_sweep(args) -> int:
    params = params_from_args(args)
    for spec in args.solvers:
        parse_solver_spec(spec)
    if args.axis == "eta" and any(not 0 <= v <= 1 for v in args.values):
        raise UsageError("eta values must lie in [0, 1]")
    if args.axis in ("t_m", "share") and any(not 0 <= v <= 1 for v in args.values):
        raise UsageError(f"{args.axis} values must lie in [0, 1]")
    if args.axis == "backhaul" and any(v < 0 for v in args.values):
        raise UsageError("backhaul values must be nonnegative")
    for path in args.instances:
        load_instance(path)  # fail early on unreadable input
    values = [float(v) for v in args.values]
    jobs = [(str(p), args.axis, values, spec, params) for p in args.instances for spec in args.solvers]
    n_workers = args.jobs or default_jobs()
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(sweep_job, jobs))
    else:
        results = [sweep_job(job) for job in jobs]
    rows = sorted((r for batch in results for r in batch), key=_order_key)
    agg = aggregate(rows)
    write_csv(agg, AGG_FIELDS, args.out)
    cells = args.cells or str(Path(args.out).with_suffix(".cells.csv"))
    write_csv(rows, CELL_FIELDS, cells)
    if args.svg:
        Path(args.svg).write_text(sweep_svg(agg, args.axis))
    failed = sum(r["status"] in ("failed", "infeasible") for r in rows)
    print(f"wrote {args.out} ({len(agg)} rows) and {cells} ({len(rows)} cells, {failed} failed)")
    return EXIT_OK if failed == 0 else EXIT_FAILED


# ---------------------------------------------------------------- validate

def cmd_validate(args) -> int:
    instance, doc, sols = load_result(args.result)
    if doc.get("status") == "failed" or not sols:
        print(f"{args.result}: no solution recorded (status {doc.get('status')})")
        return EXIT_FAILED
    ok = True
    for name, sol in sols.items():
        report = check_feasibility(instance, sol, args.tol)
        feasible = report.feasible(args.tol)
        ok &= feasible
        worst = max(report.as_dict().items(), key=lambda kv: kv[1])
        print(f"{name}: {'feasible' if feasible else 'INFEASIBLE'} at tol {args.tol:g} "
              f"(worst {worst[0]} = {worst[1]:.3g}); objective {sol.objective:.6g} bit/s")
    return EXIT_OK if ok else EXIT_FAILED


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ldmcast", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ldmcast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="draw a random network instance from a JSON scenario config")
    p.add_argument("config", help="JSON object with N, K, L, bs_power_dbm, backhaul_mbps and optional fields")
    p.add_argument("-o", "--out", required=True, help="instance path; may contain {seed}")
    p.add_argument("--seeds", help="SEED or START:STOP, overrides the config seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve one instance")
    p.add_argument("instance")
    p.add_argument("--solver", choices=SOLVE_CHOICES, default="ccp")
    p.add_argument("-o", "--out", required=True, help="result JSON path")
    p.add_argument("--trace", help="trace CSV path (default: <out>.trace.csv)")
    add_solver_args(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="solve a set of instances over a parameter grid")
    p.add_argument("instances", nargs="+")
    p.add_argument("--axis", choices=AXES, required=True,
                   help="backhaul (values in Mbit/s), eta, t_m (TDM region) or share (LDM region, "
                        "eta placed by multicast rate share)")
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--solvers", nargs="+", default=["ccp"], help="bb, ccp, tdm, static:M")
    p.add_argument("-o", "--out", required=True, help="aggregate CSV path")
    p.add_argument("--cells", help="per-cell CSV path (default: <out>.cells.csv)")
    p.add_argument("--svg", help="also write an SVG line plot")
    p.add_argument("--jobs", type=int, default=None, help=f"worker processes (default ${THREADS_ENV} or 1)")
    add_solver_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="re-check the feasibility of a result file")
    p.add_argument("result")
    p.add_argument("--tol", type=float, default=FEAS_TOL)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help and --version
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ldmcast: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaError as exc:
        print(f"ldmcast: malformed file: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"ldmcast: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

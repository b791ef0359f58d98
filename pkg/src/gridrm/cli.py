"""Command-line front end.

Exit codes: 0 success, 2 the run finished but a reliability constraint is
violated, 1 any error (bad input, solver failure).  Every CSV starts with
comment lines naming the input file hashes; a timestamp line is added unless
``--deterministic`` is given.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io as _io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .grid import GridError, ValidationError
from .io import ParseError, file_hash, load_case, read_json
from .solver import SolverError, set_dump_dir

log = logging.getLogger("gridrm")

DEFAULT_SEED = 20240101
EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2


class UsageError(ValueError):
    pass


def fmt(v) -> str:
    """Six significant digits for numbers, plain text otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        if abs(v) < 1e-9:  # solver noise
            return "0"
        out = f"{float(v):.6g}"
        return "0" if out == "-0" else out
    return str(v)


def write_csv(path, header, rows, inputs: dict, args) -> None:
    buf = _io.StringIO()
    for name, p in inputs.items():
        buf.write(f"# {name}={Path(p).name} sha256:{file_hash(p)}\n")
    if not args.deterministic:
        buf.write(f"# generated={_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    text = buf.getvalue()
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _require(path, what="input"):
    if path is None:
        raise UsageError(f"missing {what} path")
    if not Path(path).exists():
        raise FileNotFoundError(f"{what} file not found: {path}")
    return path


# -- rt-assess ------------------------------------------------------------------

def _contingencies(case, spec: str, p_line: float):
    from .rt import ContingencyModel

    if spec == "nminus1":
        return ContingencyModel.nminus1(case, p_line)
    if spec.startswith("nminus2:"):
        return ContingencyModel.from_line_probabilities(case, np.full(case.n_lines, p_line),
                                                        int(spec.split(":", 1)[1]))
    if spec.startswith("file:"):
        return ContingencyModel.from_json(case, _require(spec[5:], "contingency"))
    if spec == "ages":
        return ContingencyModel.from_ages(case, [ln.life.initial_age if ln.life else 0.0
                                                 for ln in case.lines])
    raise UsageError(f"unknown contingency spec {spec!r}")


def cmd_rt_assess(args) -> int:
    from .rt import Behavior, CorrectiveBehaviorModel, RtParams, assess

    case = load_case(_require(args.case, "case"), strict=args.strict)
    model = _contingencies(case, args.contingencies, args.line_probability)
    params = RtParams(args.delta_e, args.epsilon, args.cr_max, args.mode,
                      hybrid_exact_count=args.hybrid_exact,
                      shed_limit_mw=np.inf if args.shed_limit is None else args.shed_limit)
    behaviors = None
    if args.corrective:
        behaviors = CorrectiveBehaviorModel.uniform([e.id for e in model.events],
                                                    [Behavior(1.0, args.corrective)])
    decision, report = assess(case, model, params, behaviors=behaviors)
    rows = []
    for e in model.events:
        rows.append([e.id, e.probability, report.per_event_criticality.get(e.id, float("nan")),
                     e.id in report.subset])
    rows.append(["summary_W", "", report.objective, ""])
    rows.append(["summary_residual_risk", "", report.residual_risk, ""])
    for g, p in zip(case.generators, decision.preventive):
        rows.append([f"setpoint_{g.id}", "", p, ""])
    write_csv(args.out, ["event_id", "pi", "criticality", "in_subset"], rows,
              {"case": args.case}, args)
    if report.residual_risk > params.delta_e + 1e-9:
        log.warning("residual risk %.6g exceeds the accuracy limit %.6g",
                    report.residual_risk, params.delta_e)
        return EXIT_VIOLATION
    return EXIT_OK


# -- st-plan ----------------------------------------------------------------------

def _candidates(case, spec: str):
    from .st import PlanningDecision, auto_candidates

    if spec == "auto":
        return auto_candidates(case)
    data = read_json(_require(spec, "candidates"))
    out = []
    for k, item in enumerate(data):
        if "commitment" in item:
            u = np.asarray(item["commitment"], dtype=int)
        else:
            on = set(item.get("on", []))
            u = np.array([[1 if g.id in on else 0] * 24 for g in case.generators], dtype=int)
        if u.shape != (len(case.generators), 24):
            raise UsageError(f"candidate {k}: commitment must be generators x 24")
        out.append(PlanningDecision(u, float(item.get("reserve_margin", 0.0)), item.get("direct_cost"),
                                    str(item.get("label", k))))
    return out


def cmd_st_plan(args) -> int:
    from .st import ScenarioTree, StParams, build_tree, op_rmac_optimize

    case = load_case(_require(args.case, "case"), strict=args.strict)
    inputs = {"case": args.case}
    if args.tree:
        tree = ScenarioTree.from_json(read_json(_require(args.tree, "tree")))
        inputs["tree"] = args.tree
    else:
        tree = build_tree([int(b) for b in args.branching.split(",")], args.seed)
    params = StParams(args.delta_e_rt, args.epsilon, args.delta_e_op, cr_max=args.cr_max,
                      line_probability=args.line_probability)
    cands = _candidates(case, args.candidates)
    if args.candidates != "auto":
        inputs["candidates"] = args.candidates
    rep = op_rmac_optimize(case, tree, cands, params)
    rows = [["label", rep.best.label], ["expected_cost", rep.evaluation.expected_cost],
            ["direct_cost", rep.evaluation.direct_cost],
            ["constraint_violated", rep.constraint_violated],
            ["discarded_scenarios", " ".join(str(s) for s in rep.evaluation.discarded)]]
    for g, u in zip(case.generators, np.asarray(rep.best.commitment)):
        rows.append([f"commit_{g.id}", "".join(str(int(v)) for v in u)])
    for i in sorted(rep.evaluation.node_delta):
        rows.append([f"delta_node_{i}", rep.evaluation.node_delta[i]])
    write_csv(args.out, ["key", "value"], rows, inputs, args)
    return EXIT_VIOLATION if rep.constraint_violated else EXIT_OK


# -- mt-schedule -----------------------------------------------------------------

def parse_scheme(text: str, horizon: int, seed: int, tilt: float = 1.0):
    """``complete``, ``quasistatic``, ``qss:<N_s>`` or ``window:<W_s>d,<N_RT>x<W_RT>h[,<N_s>s]``."""
    from .mt import SamplerSpec

    base = dict(horizon_months=horizon, seed=seed, fail_tilt=tilt)
    if text == "complete":
        return SamplerSpec("complete", **base)
    if text == "quasistatic":
        return SamplerSpec("quasistatic", **base)
    if text.startswith("qss"):
        n = int(text.split(":", 1)[1]) if ":" in text else 2
        return SamplerSpec("quasistatic-sampling", n_short=n, **base)
    if text.startswith("window:"):
        parts = text[7:].split(",")
        try:
            wd = int(parts[0].rstrip("d"))
            nrt, wh = parts[1].rstrip("h").split("x")
            ns = int(parts[2].rstrip("s")) if len(parts) > 2 else 1
        except (IndexError, ValueError):
            raise UsageError(f"bad window scheme {text!r}") from None
        return SamplerSpec("window", window_days=wd, n_rt=int(nrt), window_hours=int(wh),
                           n_short=ns, **base)
    raise UsageError(f"unknown scheme {text!r}")


def _dump_scenarios(dirpath, scenarios, tag: str):
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    for z, sc in enumerate(scenarios):
        with open(d / f"{tag}_scenario_{z:04d}.jsonl", "w") as fh:
            for t, st in enumerate(sc.states):
                rec = {"t": t, "month": st.month, "growth": st.growth,
                       "ages": [float(a) for a in st.ages],
                       "lines_up": None if st.topology is None else [bool(v) for v in st.topology.line_status]}
                if t < len(sc.costs):
                    rec.update(cost=sc.costs[t], severity=sc.severities[t], achievable=sc.achievable[t])
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def cmd_mt_schedule(args) -> int:
    from .mt import (
        CeParams, ChanceSpec, EvalCache, InnerPolicy, MaintenanceSchedule, SeverityAggregator,
        baseline, cross_entropy_optimize, estimate_expected_cost, evaluate_schedule,
        schedule_objective,
    )

    case = load_case(_require(args.case, "case"), strict=args.strict)
    spec = parse_scheme(args.scheme, args.horizon_months, args.seed, args.tilt)
    policy = InnerPolicy.parse(args.policy)
    cache = EvalCache()
    template = MaintenanceSchedule.empty(case, args.horizon_months)
    trace = []
    if args.baseline:
        sched = baseline(case, args.horizon_months, args.baseline)
    else:
        obj = schedule_objective(case, policy, spec, args.seed, args.ce_scenarios, cache, jobs=args.jobs)
        res = cross_entropy_optimize(template, obj,
                                     CeParams(args.pop, args.rho, args.smoothing, args.iters,
                                              n_scenarios=args.ce_scenarios), seed=args.seed)
        sched, trace = res.best, res.trace
    chance = None
    if args.chance:
        R, alpha = (float(v) for v in args.chance.split(","))
        chance = ChanceSpec(R, alpha, SeverityAggregator(args.severity))
    ev = evaluate_schedule(case, sched, policy, spec, args.seed + 1, args.eval_scenarios, chance,
                           args.epsilon, cache=cache, jobs=args.jobs, keep_scenarios=True)
    inputs = {"case": args.case}
    write_csv(args.out, ["month", "line_id", "action"], sched.to_rows(), inputs, args)
    if args.trace:
        write_csv(args.trace, ["iteration", "elite_mean", "elite_std", "best"],
                  [[k + 1, *t] for k, t in enumerate(trace)], inputs, args)
    if args.estimates:
        mean, se = estimate_expected_cost(ev.scenarios)
        write_csv(args.estimates, ["estimate", "std_error", "n", "scheme"],
                  [[mean + ev.direct_cost, se, len(ev.scenarios), spec.scheme.value]], inputs, args)
    if args.dump_scenarios:
        _dump_scenarios(args.dump_scenarios, ev.scenarios, "eval")
    log.info("schedule cost %.6g (se %.3g), chance ok %s, achievability ok %s",
             ev.total_cost, ev.std_error, ev.chance_ok, ev.achievability_ok)
    return EXIT_OK if ev.chance_ok and ev.achievability_ok else EXIT_VIOLATION


# -- lt ---------------------------------------------------------------------------

def cmd_lt_invest(args) -> int:
    from .lt import RobustLtInstance, solve_robust_lt

    path = _require(args.instance, "instance")
    inst = RobustLtInstance.from_dict(read_json(path))
    sol = solve_robust_lt(inst)
    rows = [["W", sol.W], ["objective", sol.objective], ["mu", sol.mu], ["u", sol.u]]
    rows += [[f"I_{ic.id}", v] for ic, v in zip(inst.interconnections, sol.investment)]
    rows += [[f"E_{ic.id}", v] for ic, v in zip(inst.interconnections, sol.E)]
    rows += [[f"P_{g.id}", v] for g, v in zip(inst.generators, sol.P)]
    rows += [[f"L_{l.id}", v] for l, v in zip(inst.loads, sol.L)]
    rows += [["kkt_ok", sol.certificate.ok]]
    write_csv(args.out, ["quantity", "value"], rows, {"instance": path}, args)
    return EXIT_OK if sol.certificate.ok else EXIT_VIOLATION


def cmd_lt_plan(args) -> int:
    from .lt import ProjectPlan, evaluate_project_plan, load_projects
    from .mt import ChanceSpec, EvalCache, InnerPolicy, MaintenanceSchedule, evaluate_schedule

    case = load_case(_require(args.case, "case"), strict=args.strict)
    projects, starts = load_projects(_require(args.projects, "projects"))
    horizon = int(round(args.horizon_years * 12))
    plan = ProjectPlan(projects, starts, build_window=horizon, horizon=horizon)
    spec = parse_scheme(args.scheme, horizon, args.seed)
    policy = InnerPolicy.parse(args.policy)
    cache = EvalCache()
    chance = None
    if args.chance:
        R, alpha = (float(v) for v in args.chance.split(","))
        chance = ChanceSpec(R, alpha)

    def engine(grid, activation):
        return evaluate_schedule(grid, MaintenanceSchedule.empty(grid, horizon), policy, spec,
                                 args.seed, args.eval_scenarios, chance, args.epsilon,
                                 activation=activation, cache=cache, jobs=args.jobs)

    ev = evaluate_project_plan(case, plan, engine)
    rows = [["total_cost", ev.total_cost], ["construction", ev.construction], ["opex", ev.opex],
            ["operation", ev.operation], ["std_error", ev.std_error], ["chance_ok", ev.chance_ok],
            ["achievability_ok", ev.achievability_ok]]
    write_csv(args.out, ["quantity", "value"], rows,
              {"case": args.case, "projects": args.projects}, args)
    return EXIT_OK if ev.chance_ok and ev.achievability_ok else EXIT_VIOLATION


# -- validate -----------------------------------------------------------------------

def cmd_validate(args) -> int:
    if args.instance:
        from .lt import RobustLtInstance

        data = read_json(_require(args.instance, "instance"))
        try:
            RobustLtInstance.from_dict(data)
        except (KeyError, TypeError, ValueError) as exc:
            print(f"{args.instance}: invalid: {exc}")
            return EXIT_ERROR
        print(f"{args.instance}: ok")
        return EXIT_OK
    case = load_case(_require(args.case, "case"), strict=args.strict)
    print(f"{args.case}: ok ({case.n_buses} buses, {case.n_lines} lines, "
          f"{len(case.generators)} generators, {len(case.loads)} loads, {len(case.wind_units)} wind units)")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    fmt_cls = argparse.ArgumentDefaultsHelpFormatter
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (>= 1)")
    common.add_argument("--deterministic", action="store_true",
                        help="omit the timestamp line so outputs are byte-identical")
    common.add_argument("--dump-lp", metavar="DIR", help="write every solved program as text")
    common.add_argument("--strict", action="store_true", help="unknown case keys are errors")
    common.add_argument("--log-level", default=None, help="overrides RM_LOG")
    common.add_argument("--out", default="-", help="output CSV path, - for stdout")

    p = argparse.ArgumentParser(prog="gridrm", description="Probabilistic reliability management "
                                "for transmission grids across four time horizons.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("rt-assess", parents=[common], help="real-time RMAC assessment", formatter_class=fmt_cls)
    s.add_argument("--case", required=True, help="grid case JSON")
    s.add_argument("--contingencies", default="nminus1",
                   help="nminus1 | nminus2:<k> | file:<path> | ages")
    s.add_argument("--line-probability", type=float, default=0.01,
                   help="outage probability of a line without a life model")
    s.add_argument("--delta-e", type=float, default=0.0, help="accuracy limit on the residual risk")
    s.add_argument("--epsilon", type=float, default=0.0,
                   help="chance-constraint tolerance on the retained events")
    s.add_argument("--cr-max", type=float, default=1e6, help="criticality cap per event")
    s.add_argument("--mode", default="pessimistic", choices=["pessimistic", "iterative", "hybrid"],
                   help="subset selection rule")
    s.add_argument("--hybrid-exact", type=int, default=0,
                   help="events whose criticality is computed exactly in hybrid mode")
    s.add_argument("--shed-limit", type=float, default=None,
                   help="MW of shedding allowed per enforced event (0 = N-1 style)")
    s.add_argument("--corrective", type=float, default=None, metavar="EFF",
                   help="allow post-contingency redispatch with this effectiveness in [0, 1]")
    s.set_defaults(func=cmd_rt_assess)

    s = sub.add_parser("st-plan", parents=[common], help="operation-planning RMAC over a scenario tree",
                       formatter_class=fmt_cls)
    s.add_argument("--case", required=True, help="grid case JSON")
    s.add_argument("--tree", help="scenario tree JSON (overrides --branching)")
    s.add_argument("--branching", default="2,2", help="children per node at each stage")
    s.add_argument("--delta-e-rt", type=float, default=0.0, help="real-time accuracy limit per node")
    s.add_argument("--delta-e-op", type=float, default=0.0,
                   help="budget of expected cost from discarded scenarios")
    s.add_argument("--epsilon", type=float, default=0.0, help="real-time chance tolerance per node")
    s.add_argument("--cr-max", type=float, default=1e5, help="criticality cap per event")
    s.add_argument("--line-probability", type=float, default=0.01,
                   help="outage probability of a line without a life model")
    s.add_argument("--candidates", default="auto", help="auto | path to a JSON list")
    s.set_defaults(func=cmd_st_plan)

    s = sub.add_parser("mt-schedule", parents=[common], help="mid-term maintenance scheduling",
                       formatter_class=fmt_cls)
    s.add_argument("--case", required=True, help="grid case JSON with line life models")
    s.add_argument("--horizon-months", type=int, default=8, help="schedule length")
    s.add_argument("--policy", default="nminus1", help="nminus1 | prob:<dE>,<eps>")
    s.add_argument("--scheme", default="window:3d,30x24h",
                   help="complete | quasistatic | qss:<N_s> | window:<W_s>d,<N_RT>x<W_RT>h[,<N_s>s]")
    s.add_argument("--pop", type=int, default=50, help="cross-entropy population size")
    s.add_argument("--rho", type=float, default=0.15, help="elite fraction")
    s.add_argument("--smoothing", type=float, default=0.7, help="weight on the new elite frequencies")
    s.add_argument("--iters", type=int, default=15, help="maximum cross-entropy iterations")
    s.add_argument("--ce-scenarios", type=int, default=10, help="CRN scenarios per CE evaluation")
    s.add_argument("--eval-scenarios", type=int, default=50, help="scenarios for the final estimate")
    s.add_argument("--tilt", type=float, default=1.0, help="importance-sampling failure multiplier")
    s.add_argument("--baseline", help="oldest-first | age-threshold:<hours> | cyclic")
    s.add_argument("--chance", help="R,alpha for the severity chance constraint")
    s.add_argument("--severity", default="max", choices=["mean", "max"],
                   help="how monthly severities combine per scenario")
    s.add_argument("--epsilon", type=float, default=1.0, help="achievability limit")
    s.add_argument("--trace", help="CSV of elite mean, std and best cost per iteration")
    s.add_argument("--estimates", help="estimator CSV (estimate, std_error, n, scheme)")
    s.add_argument("--dump-scenarios", metavar="DIR", help="write each evaluation scenario as JSON lines")
    s.set_defaults(func=cmd_mt_schedule)

    s = sub.add_parser("lt-invest", parents=[common], help="robust interconnection investment",
                       formatter_class=fmt_cls)
    s.add_argument("--instance", required=True, help="robust investment instance JSON")
    s.set_defaults(func=cmd_lt_invest)

    s = sub.add_parser("lt-plan", parents=[common], help="evaluate a long-term project plan",
                       formatter_class=fmt_cls)
    s.add_argument("--case", required=True, help="grid case JSON")
    s.add_argument("--projects", required=True, help="projects JSON with start months")
    s.add_argument("--horizon-years", type=float, default=20, help="evaluation horizon")
    s.add_argument("--policy", default="nminus1", help="nminus1 | prob:<dE>,<eps>")
    s.add_argument("--scheme", default="qss:2", help="mid-term sampling scheme, as for mt-schedule")
    s.add_argument("--eval-scenarios", type=int, default=10, help="scenarios for the operating cost")
    s.add_argument("--chance", help="R,alpha for the severity chance constraint")
    s.add_argument("--epsilon", type=float, default=1.0, help="achievability limit")
    s.set_defaults(func=cmd_lt_plan)

    s = sub.add_parser("validate", parents=[common], help="check a case or LT instance file")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--case", help="grid case JSON")
    g.add_argument("--instance", help="robust investment instance JSON")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = (args.log_level or os.environ.get("RM_LOG") or "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    set_dump_dir(args.dump_lp)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: parse error at {exc}", file=sys.stderr)
    except ValidationError as exc:
        print("error: invalid case:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (UsageError, GridError, SolverError, ValueError, KeyError) as exc:
        print(f"error in {args.command}: {exc}", file=sys.stderr)
    finally:
        set_dump_dir(None)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

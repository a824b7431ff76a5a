"""Command-line driver: scenario tools, single-stage market runs, day simulation and risk reports.

Every command writes into ``--out`` (created if missing) and leaves a
``manifest.json`` with the command, its resolved arguments and the
configuration, so a rerun with the same inputs reproduces every file byte
for byte. Exit status is 0 on success, 1 on bad data or a failed solve and
2 on a usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from gridtwin.cases import load_packaged_case, packaged_path
from gridtwin.errors import GridTwinError, ValidationError
from gridtwin.grid_model import Case, load_case
from gridtwin.market_clearing import (
    LAC_STEP_MINUTES,
    CommitmentSchedule,
    Forecast,
    SystemState,
    run_lac,
    run_myopic,
    solve_frac,
    solve_lad,
    solve_scuc,
)
from gridtwin.market_clearing.export import (
    commitment_rows,
    commitment_summary,
    dispatch_rows,
    dispatch_summary,
    dumps,
    rows_to_csv,
)
from gridtwin.risk_pipeline import (
    DayResult,
    PipelineConfig,
    build_risk_report,
    evaluate_ensemble,
    results_csv,
    scenario_forecast,
)
from gridtwin.scenario_engine import (
    ScenarioSet,
    bundle_history,
    energy_distance,
    fit_scenario_model,
    greedy_bundle,
    history_from_csv,
    history_to_csv,
    sample_scenarios,
    scenarios_from_csv,
    scenarios_to_csv,
    support_points_mm,
    variogram_score,
)
from gridtwin.stochastic import TsspInstance, log_to_csv, solve_benders, solve_extensive_form

STAGES = ("scuc", "frac", "sfrac", "lac", "sced", "lad", "day")


class UsageError(Exception):
    """Arguments that parse but do not make a valid command."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# inputs

def _input(ref: str) -> Path:
    """A file path, or the name of a file shipped in gridtwin/data."""
    p = Path(ref)
    if p.exists():
        return p
    shipped = packaged_path(ref)
    if shipped.is_file():
        return Path(str(shipped))
    return p


def _read(ref: str) -> str:
    return _input(ref).read_text()


def _case(ref: str) -> Case:
    p = Path(ref)
    if p.exists():
        return load_case(p)
    if packaged_path(f"{ref}.json").is_file():
        return load_packaged_case(ref)
    return load_case(p)  # raises ParseError naming the missing file


def _scenarios(ref: str, step_minutes: int) -> ScenarioSet:
    return scenarios_from_csv(_read(ref), step_minutes)


def _forecast(case: Case, ref: str, step_minutes: int) -> Forecast:
    scen = _scenarios(ref, step_minutes)
    if scen.n != 1:
        raise ValidationError(f"{ref}: a forecast file holds exactly one scenario, got {scen.n}")
    return scenario_forecast(case, scen, 0)


def _schedule(ref: str) -> CommitmentSchedule:
    return CommitmentSchedule.from_dict(json.loads(_read(ref)))


def _mean_forecast(case: Case, scen: ScenarioSet, base: Forecast | None) -> Forecast:
    mean = ScenarioSet(scen.values.mean(axis=0)[None], scen.assets, scen.step_minutes)
    return scenario_forecast(case, mean, 0, base)


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_dict(json.loads(_read(args.config))) if args.config else PipelineConfig()
    flags = {"mip_gap": args.gap, "lac_gap": args.lac_gap, "backend": args.backend,
             "seed": args.seed, "sced_cadence": args.sced_cadence,
             "lac_cadence": args.lac_cadence, "lad_horizon": args.lad_horizon}
    changes = {k: v for k, v in flags.items() if v is not None}
    if args.lad:
        changes["lad_enabled"] = True
    risk = {k: v for k, v in (("alpha", args.alpha), ("violation_mw", args.threshold_mw),
                              ("cost_threshold", args.cost_threshold)) if v is not None}
    if risk:
        changes["risk"] = replace(cfg.risk, **risk)
    return replace(cfg, **changes) if changes else cfg


# ---------------------------------------------------------------------------
# outputs

def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _manifest(out: Path, args, config: PipelineConfig | None = None, **extra) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "group")}
    seed = config.seed if config is not None else getattr(args, "seed", None)
    m = {"command": args.group, "args": resolved, "seed": seed,
         "config": config.to_dict() if config is not None else None}
    m.update(extra)
    _write(out / "manifest.json", dumps(m))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _interval_u(case: Case, sched: CommitmentSchedule | None, n: int, minutes: int,
                start_minute: int = 0) -> np.ndarray:
    """Generators x intervals commitment; all units on when no schedule is given."""
    if sched is None:
        return np.ones((case.n_gens, n))
    hours = [(start_minute + i * minutes) // 60 for i in range(n)]
    if hours[-1] >= sched.hours:
        raise ValidationError(f"commitments cover {sched.hours} h, the forecast needs "
                              f"{hours[-1] + 1} h")
    return sched.u[:, hours].astype(float)


# ---------------------------------------------------------------------------
# scen

def cmd_scen_gen(args) -> None:
    history = history_from_csv(_read(args.history))
    model = fit_scenario_model(history, args.steps)
    scen = sample_scenarios(model, args.n, args.steps, args.seed, args.step_minutes)
    out = _out(args)
    _write(out / "scenarios.csv", scenarios_to_csv(scen))
    _manifest(out, args, n_history_rows=len(history.values), assets=list(scen.assets))


def cmd_scen_reduce(args) -> None:
    scen = _scenarios(args.scenarios, args.step_minutes)
    res = support_points_mm(scen, args.k, args.seed)
    vals = np.maximum(res.points, 0.0).reshape((args.k,) + scen.values.shape[1:])
    reduced = ScenarioSet(vals, scen.assets, scen.step_minutes)
    out = _out(args)
    _write(out / "scenarios.csv", scenarios_to_csv(reduced))
    _write(out / "reduction_log.csv",
           _csv(("iteration", "energy_distance"), [(i, repr(float(d))) for i, d in enumerate(res.history)]))
    _manifest(out, args, iterations=res.iterations, converged=res.converged,
              energy_distance=energy_distance(reduced.values, scen.values))


def cmd_scen_score(args) -> None:
    scen = _scenarios(args.scenarios, args.step_minutes)
    actual = _scenarios(args.actual, args.step_minutes)
    if actual.assets != scen.assets or actual.steps != scen.steps:
        raise ValidationError("actuals and scenarios must share assets and horizon")
    rows = []
    ens_v, ens_e = [], []
    for a in range(actual.n):
        obs = actual.values[a]
        for m in range(scen.n):
            rows.append((a, m, repr(variogram_score(scen.values[m:m + 1], obs, args.p)),
                         repr(energy_distance(scen.values[m:m + 1], obs[None]))))
        v = variogram_score(scen.values, obs, args.p)
        e = energy_distance(scen.values, obs[None])
        ens_v.append(v)
        ens_e.append(e)
        rows.append((a, "ensemble", repr(v), repr(e)))
    if actual.n > 1:
        rows.append(("mean", "ensemble", repr(float(np.mean(ens_v))), repr(float(np.mean(ens_e)))))
    out = _out(args)
    _write(out / "scores.csv", _csv(("actual", "member", "variogram", "energy_distance"), rows))
    _manifest(out, args)


def cmd_scen_bundle(args) -> None:
    history = history_from_csv(_read(args.history))
    raw = json.loads(_read(args.coords))
    coords = {k: tuple(map(float, v)) for k, v in raw.items()}
    b = greedy_bundle(history, coords, args.k, args.radius)
    out = _out(args)
    _write(out / "bundles.json", dumps({"bundles": [list(x) for x in b.bundles],
                                        "names": list(b.names), "weights": b.weights,
                                        "objective": b.objective}))
    _write(out / "bundled_history.csv", history_to_csv(bundle_history(history, b)))
    _manifest(out, args)


# ---------------------------------------------------------------------------
# run

def _need(args, *names) -> None:
    for n in names:
        if getattr(args, n) is None:
            raise UsageError(f"run {args.stage}: --{n.replace('_', '-')} is required")


def _commit_outputs(out: Path, case: Case, result) -> None:
    _write(out / "commitment.csv", rows_to_csv(commitment_rows(case, result)))
    _write(out / "summary.json", dumps(commitment_summary(case, result)))
    _write(out / "commitments.json", dumps(result.schedule.to_dict()))


def _day_ahead(case, args, cfg, scen):
    """Executed schedule: given commitments, or day-ahead SCUC then FRAC on the ensemble mean."""
    base = _forecast(case, args.forecast, 60) if args.forecast else None
    if args.commitments:
        return _schedule(args.commitments), base
    if scen is None:
        raise UsageError(f"run {args.stage}: give --commitments or --scenarios")
    mean = _mean_forecast(case, scen, base)
    pen = cfg.penalties
    da = solve_scuc(case, base or mean, penalties=pen, gap=cfg.mip_gap,
                    time_limit=cfg.seconds("da"), backend=cfg.backend)
    frac = solve_frac(case, da.schedule, mean, penalties=pen, gap=cfg.mip_gap,
                      time_limit=cfg.seconds("frac"), backend=cfg.backend)
    return frac.schedule, base


def _ensemble(case, args, cfg):
    _need(args, "scenarios")
    scen = _scenarios(args.scenarios, 60)
    sched, base = _day_ahead(case, args, cfg, scen)
    return evaluate_ensemble(case, sched, scen, cfg, args.workers, base), sched


def cmd_run(args) -> None:
    cfg = _config(args)
    _need(args, "case")
    case = _case(args.case)
    pen = cfg.penalties
    stage = args.stage
    if stage in ("scuc", "frac"):
        _need(args, "forecast")
        fc = _forecast(case, args.forecast, args.step_minutes or 60)
        if stage == "scuc":
            res = solve_scuc(case, fc, penalties=pen, gap=cfg.mip_gap,
                             time_limit=cfg.seconds("da"), backend=cfg.backend, prices=True)
        else:
            _need(args, "commitments")
            res = solve_frac(case, _schedule(args.commitments), fc, penalties=pen,
                             gap=cfg.mip_gap, time_limit=cfg.seconds("frac"),
                             backend=cfg.backend, prices=True)
        out = _out(args)
        _commit_outputs(out, case, res)
    elif stage == "sfrac":
        _need(args, "commitments", "scenarios")
        prior = _schedule(args.commitments)
        scen = _scenarios(args.scenarios, 60)
        base = _forecast(case, args.forecast, 60) if args.forecast else None
        inst = TsspInstance(case, prior, tuple(scenario_forecast(case, scen, k, base)
                                               for k in range(scen.n)), penalties=pen)
        out = _out(args)
        if args.method == "benders":
            sol = solve_benders(inst, gap=args.gap if args.gap is not None else 1e-6,
                                backend=cfg.backend)
            _write(out / "benders_log.csv", log_to_csv(sol.log))
        else:
            risk = cfg.risk if cfg.risk.cvar_weight > 0 else None
            sol = solve_extensive_form(inst, gap=cfg.mip_gap, time_limit=cfg.seconds("frac"),
                                       backend=cfg.backend, risk=risk)
        _write(out / "summary.json", dumps(sol.summary()))
        _write(out / "commitments.json", dumps(sol.schedule.to_dict()))
        _write(out / "scenario_costs.csv", _csv(
            ("scenario", "commitment_cost", "recourse_cost", "total_cost"),
            [(k, repr(float(c)), repr(float(r)), repr(float(c + r)))
             for k, (c, r) in enumerate(zip(sol.commitment_costs, sol.recourse_costs))]))
    elif stage == "lac":
        _need(args, "forecast", "commitments")
        if args.minute % LAC_STEP_MINUTES:
            raise UsageError(f"run lac: --minute must be a multiple of {LAC_STEP_MINUTES}")
        fc = _forecast(case, args.forecast, LAC_STEP_MINUTES)
        state = replace(SystemState.initial(case, float(fc.load[0]), fc.renewables[0]),
                        minute=args.minute)
        res = run_lac(case, state, _schedule(args.commitments), fc, None, pen, gap=cfg.lac_gap,
                      time_limit=cfg.seconds("lac"), backend=cfg.backend)
        # the schedule spans the day while the dispatch covers the window only
        u = res.schedule.u
        index = {gen.id: g for g, gen in enumerate(case.generators)}
        rows = commitment_rows(case, res)
        for r in rows:
            hour = min((args.minute + LAC_STEP_MINUTES * r["t"]) // 60, u.shape[1] - 1)
            r["u"] = int(u[index[r["gen_id"]], hour])
        out = _out(args)
        _write(out / "commitment.csv", rows_to_csv(rows))
        _write(out / "summary.json", dumps(commitment_summary(case, res)))
        _write(out / "commitments.json", dumps(res.schedule.to_dict()))
    elif stage in ("sced", "lad"):
        _need(args, "forecast")
        minutes = args.step_minutes or cfg.sced_cadence
        fc = _forecast(case, args.forecast, minutes)
        sched = _schedule(args.commitments) if args.commitments else None
        state = SystemState.initial(case, float(fc.load[0]), fc.renewables[0])
        if stage == "sced":
            u = _interval_u(case, sched, len(fc), minutes)
            sols, _ = run_myopic(case, state, fc, u, None, pen, minutes, cfg.backend)
            summary = dispatch_summary(sols)
        else:
            k = min(args.intervals or cfg.lad_horizon, len(fc))
            u = _interval_u(case, sched, k, minutes)
            lad = solve_lad(case, state, fc.window(0, k), u, None, pen, minutes, k, cfg.backend,
                            cfg.seconds("sced"))
            sols = lad.intervals
            summary = dispatch_summary(sols)
            summary["objective"] = lad.objective
        out = _out(args)
        _write(out / "dispatch.csv", rows_to_csv(dispatch_rows(case, sols)))
        _write(out / "summary.json", dumps(summary))
    else:  # day
        results, sched = _ensemble(case, args, cfg)
        out = _out(args)
        for r in results:
            if r.ok:
                _write(out / f"day_{r.scenario_id:03d}.csv", r.to_csv())
        _write(out / "results.csv", results_csv(results))
        _write(out / "commitments.json", dumps(sched.to_dict()))
        _write(out / "summary.json", dumps([r.summary() for r in results]))
    _manifest(out, args, cfg)


# ---------------------------------------------------------------------------
# risk

def cmd_risk(args) -> None:
    cfg = _config(args)
    if args.results:
        files = sorted(Path(args.results).glob("day_*.csv"))
        results = [DayResult.from_csv(f.read_text()) for f in files]
    else:
        if args.case is None or args.scenarios is None:
            raise UsageError("risk: give --results DIR or both --case and --scenarios")
        args.stage = "risk"
        results, _ = _ensemble(_case(args.case), args, cfg)
    report = build_risk_report(results, cfg.risk)
    out = _out(args)
    _write(out / "report.json", report.to_json())
    _write(out / "report.txt", report.to_text())
    _write(out / "results.csv", results_csv(results))
    _manifest(out, args, cfg)


# ---------------------------------------------------------------------------
# parser

def _pipeline_flags(p) -> None:
    g = p.add_argument_group("configuration (flags override --config)")
    g.add_argument("--config", help="JSON file with pipeline settings")
    g.add_argument("--gap", type=float, help="relative MIP gap for day-ahead and FRAC solves")
    g.add_argument("--lac-gap", type=float, help="relative MIP gap for look-ahead commitment")
    g.add_argument("--backend", choices=("auto", "native", "highs"))
    g.add_argument("--seed", type=int)
    g.add_argument("--sced-cadence", type=int, help="dispatch interval in minutes")
    g.add_argument("--lac-cadence", type=int, help="minutes between look-ahead commitment runs")
    g.add_argument("--lad", action="store_true", help="dispatch with look-ahead dispatch")
    g.add_argument("--lad-horizon", type=int, help="look-ahead dispatch intervals")
    g.add_argument("--alpha", type=float, help="CVaR tail probability")
    g.add_argument("--threshold-mw", type=float, help="line overload counted as adverse")
    g.add_argument("--cost-threshold", type=float, help="daily cost counted as an exceedance")
    g.add_argument("--workers", type=int, default=1, help="parallel scenario workers")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gridtwin", description=__doc__.splitlines()[0])
    top = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    scen = top.add_parser("scen", help="scenario generation, reduction, scoring and bundling")
    sub = scen.add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = sub.add_parser("gen", help="sample scenarios from a copula fitted to history")
    p.add_argument("--history", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--steps", type=int, default=24)
    p.add_argument("--step-minutes", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scen_gen)
    p = sub.add_parser("reduce", help="reduce scenarios to k support points")
    p.add_argument("--scenarios", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--step-minutes", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scen_reduce)
    p = sub.add_parser("score", help="variogram and energy scores against actuals")
    p.add_argument("--scenarios", required=True)
    p.add_argument("--actual", required=True)
    p.add_argument("--p", type=float, default=0.5, help="variogram order")
    p.add_argument("--step-minutes", type=int, default=60)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scen_score)
    p = sub.add_parser("bundle", help="group assets into low-intermittency bundles")
    p.add_argument("--history", required=True)
    p.add_argument("--coords", required=True, help='JSON {"asset": [x_km, y_km]}')
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--radius", type=float, required=True, help="km")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scen_bundle)

    p = top.add_parser("run", help="one market stage, or whole days over scenarios")
    p.add_argument("stage", choices=STAGES)
    p.add_argument("--case", help="case JSON, or a shipped case name (case3, case14, fleet, ramp_stress)")
    p.add_argument("--forecast", help="one-scenario CSV")
    p.add_argument("--step-minutes", type=int, help="forecast resolution")
    p.add_argument("--commitments", help="commitment schedule JSON")
    p.add_argument("--scenarios", help="hourly scenario CSV")
    p.add_argument("--method", choices=("benders", "extensive"), default="benders")
    p.add_argument("--minute", type=int, default=0, help="look-ahead commitment start minute")
    p.add_argument("--intervals", type=int, help="look-ahead dispatch intervals")
    p.add_argument("--out", required=True)
    _pipeline_flags(p)
    p.set_defaults(func=cmd_run)

    p = top.add_parser("risk", help="risk report from day results or a fresh ensemble")
    p.add_argument("--results", help="directory of day_*.csv files")
    p.add_argument("--case")
    p.add_argument("--scenarios")
    p.add_argument("--forecast")
    p.add_argument("--commitments")
    p.add_argument("--out", required=True)
    _pipeline_flags(p)
    p.set_defaults(func=cmd_risk)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.group = " ".join(x for x in (args.command, getattr(args, "action", None),
                                          getattr(args, "stage", None)) if x)
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (GridTwinError, OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

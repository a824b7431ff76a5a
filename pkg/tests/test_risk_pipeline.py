import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridtwin.cases import daily_load_shape, fleet_case, make_generator, scenario_day, single_bus_case
from gridtwin.errors import DimensionMismatch, EmptyEnsemble, NumericalFailure, SimulationError, ValidationError
from gridtwin.grid_model import Bus, Case, Renewable
from gridtwin.market_clearing import CommitmentSchedule, Forecast, solve_frac, solve_scuc
from gridtwin.risk_pipeline import (
    DAY_COLUMNS,
    RESULT_COLUMNS,
    DayResult,
    PipelineConfig,
    build_risk_report,
    evaluate_ensemble,
    results_csv,
    run_pipeline,
    scenario_actuals,
    simulate_day,
)
from gridtwin.risk_pipeline import simulate as sim_mod
from gridtwin.scenario_engine import ScenarioSet
from gridtwin.stochastic import RiskConfig, cvar

FAST = PipelineConfig(sced_cadence=15, lac_cadence=60)


def pinned_unit(**kw):
    # notification beyond any look-ahead lead time: look-ahead runs cannot touch it
    args = dict(pmin=10, no_load_cost=50, initial_status=5, initial_output=80,
                notification_time=10_000)
    args.update(kw)
    return make_generator("G", 1, 200, 20.0, **args)


def all_on(case, hours=24):
    return CommitmentSchedule.from_u(case, np.ones((case.n_gens, hours), dtype=int))


def hourly_steps(values, minutes=5):
    """Piecewise-constant day: each hourly value held for the whole hour."""
    return np.repeat(np.asarray(values, dtype=float), 60 // minutes)


# -- config -----------------------------------------------------------------

def test_config_defaults_and_round_trip():
    c = PipelineConfig()
    assert (c.da_budget, c.frac_budget, c.lac_budget, c.sced_budget) == (20, 40, 10, 2)
    assert c.intervals == 288 and c.lac_cadence == 15 and c.lad_horizon == 12
    again = PipelineConfig.from_dict(c.to_dict())
    assert again == c
    assert PipelineConfig.from_dict({"lad_enabled": True, "risk": {"alpha": 0.1}}).risk.alpha == 0.1


@pytest.mark.parametrize("kw", [dict(sced_budget=0), dict(lac_cadence=7), dict(sced_cadence=7),
                                dict(lac_cadence=20), dict(lac_gap=-1.0), dict(lad_horizon=0)])
def test_config_rejects(kw):
    with pytest.raises(ValidationError):
        PipelineConfig(**kw)


def test_config_rejects_unknown_keys():
    with pytest.raises(ValidationError):
        PipelineConfig.from_dict({"lac_window": 3})


# -- simulate_day -------------------------------------------------------------

def test_stationary_day():
    case = single_bus_case([pinned_unit()])
    day = simulate_day(case, all_on(case), Forecast.constant(80.0, 288, step_minutes=5))
    assert day.n_intervals == 288
    np.testing.assert_allclose(day.cost, day.cost[0], rtol=0, atol=1e-9)
    assert day.cost[0] == pytest.approx(80 * 20.0 * 5 / 60)
    assert day.total_cost == pytest.approx(288 * day.cost[0] + 24 * 50.0, rel=1e-12)
    assert day.peak_violation_mw == 0 and day.violation_cost == 0 and day.added == ()


def test_day_matches_hand_ledger():
    # one unit in [10, 200] MW; load dips below pmin and rises above pmax
    case = single_bus_case([pinned_unit()])
    rng = np.random.default_rng(5)
    load = np.clip(80 + np.cumsum(rng.normal(0, 12, 288)), 0, 260)
    load[40:50] = 4.0
    load[200:210] = 240.0
    day = simulate_day(case, all_on(case), Forecast(load, (), 5))
    h = 5 / 60
    ledger, penalties = 0.0, 0.0
    for x in load:
        p = min(max(x, 10.0), 200.0)
        pen = 3500.0 * abs(x - p) * h
        ledger += 20.0 * p * h + pen
        penalties += pen
    assert day.total_cost == pytest.approx(ledger + 24 * 50.0, rel=1e-9)
    assert day.violation_cost == pytest.approx(penalties, rel=1e-9)
    assert day.unserved_mwh == pytest.approx(sum(abs(x - min(max(x, 10), 200)) for x in load) * h)


def test_violation_dollars_reconcile():
    case = fleet_case(0.05)
    rng = np.random.default_rng(3)
    fc, sc = scenario_day(rng, 1, peak=950.0, sigma=0.08)
    da = solve_scuc(case, Forecast(fc, ()), gap=1e-3)
    act = Forecast(sc[0], ()).resample(15)
    day = simulate_day(case, da.schedule, act, FAST)
    pen = FAST.penalties
    h = 15 / 60
    priced = (pen.transmission * day.transmission_mw + pen.balance * day.balance_mw
              + pen.reserve * day.reserve_mw) * h
    assert day.violation_cost > 0
    assert math.fsum(priced) == pytest.approx(day.violation_cost, abs=1e-6)
    np.testing.assert_allclose(priced, day.penalty_cost, atol=1e-6)


def test_perfect_forecast_adds_no_commitments():
    # the day starts where the hourly plan starts and every unit can follow
    # the hourly steps within one dispatch interval
    fc = 450.0 * daily_load_shape(24)
    gens = [make_generator("BASE", 1, 300, 15.0, pmin=100, ramp_rate=20.0, min_up=4, min_down=4,
                           startup_cost=2000, no_load_cost=200, initial_status=8,
                           initial_output=fc[0]),
            make_generator("MID", 1, 150, 30.0, pmin=40, ramp_rate=20.0, min_up=2, min_down=2,
                           startup_cost=500, no_load_cost=120, initial_status=-5),
            make_generator("PEAK", 1, 80, 60.0, ramp_rate=20.0, startup_cost=50, no_load_cost=30,
                           initial_status=-2)]
    case = single_bus_case(gens)
    u = np.zeros((3, 24), dtype=int)
    u[0] = 1
    frac = solve_frac(case, CommitmentSchedule.from_u(case, u), Forecast(fc, ()), gap=1e-9)
    assert frac.newly_committed  # the plan does need more than the base unit
    day = simulate_day(case, frac.schedule, Forecast(hourly_steps(fc, 15), (), 15), FAST)
    assert day.added == ()
    np.testing.assert_array_equal(day.commitment, frac.schedule.u)


def test_day_rejects_bad_inputs():
    case = single_bus_case([pinned_unit()])
    with pytest.raises(ValidationError):
        simulate_day(case, all_on(case), Forecast.constant(80.0, 287, step_minutes=5))
    with pytest.raises(ValidationError):
        simulate_day(case, all_on(case, 23), Forecast.constant(80.0, 288, step_minutes=5))


def test_solver_errors_carry_interval(monkeypatch):
    case = single_bus_case([pinned_unit()])
    real = sim_mod.solve_sced
    calls = []

    def flaky(*a, **kw):
        calls.append(1)
        if len(calls) == 8:
            raise NumericalFailure("boom")
        return real(*a, **kw)

    monkeypatch.setattr(sim_mod, "solve_sced", flaky)
    with pytest.raises(SimulationError) as info:
        simulate_day(case, all_on(case), Forecast.constant(80.0, 96, step_minutes=15), FAST)
    assert info.value.interval == 7 and info.value.stage == "sced"
    assert "interval 7" in str(info.value)


def ramp_case():
    slow = make_generator("SLOW", 1, 400, 15.0, pmin=50, ramp_rate=1.0, min_up=24, min_down=24,
                          initial_status=10, initial_output=100.0, notification_time=10_000)
    fast = make_generator("FAST", 1, 300, 80.0, pmin=0, ramp_rate=50.0, initial_status=10,
                          initial_output=0.0, notification_time=10_000)
    return single_bus_case([slow, fast])


def ramp_day(rng):
    """Flat night, a steep random morning ramp, a plateau and an evening fall."""
    start = int(rng.integers(4, 9))
    width = int(rng.integers(1, 3))
    top = float(rng.uniform(250, 380))
    x = np.full(24, 100.0)
    x[start:start + width] = np.linspace(100, top, width + 2)[1:-1]
    x[start + width:20] = top
    x += rng.normal(0, 5, 24)
    return Forecast(np.clip(x, 60, None), (), 60).resample(15)


@pytest.mark.parametrize("seed", range(4))
def test_lad_never_costs_more_end_to_end(seed):
    case = ramp_case()
    load = ramp_day(np.random.default_rng(seed))
    myopic = simulate_day(case, all_on(case), load, FAST)
    lad = simulate_day(case, all_on(case), load, PipelineConfig(sced_cadence=15, lac_cadence=60,
                                                                lad_enabled=True))
    assert lad.total_cost <= myopic.total_cost * (1 + 1e-9)
    assert lad.total_cost < myopic.total_cost  # the morning ramp rewards pre-positioning


def test_run_pipeline_chains_stages():
    case = fleet_case(0.05)
    fc, sc = scenario_day(np.random.default_rng(4), 1)
    run = run_pipeline(case, Forecast(fc, ()), Forecast(sc[0], ()).resample(15), FAST)
    assert run.frac.schedule.covers(run.day_ahead.schedule)
    assert run.day.n_intervals == 96 and run.day.ok


# -- ensemble ---------------------------------------------------------------

def ensemble_inputs(n, seed=0):
    case = fleet_case(0.05)
    fc, sc = scenario_day(np.random.default_rng(seed), n, sigma=0.06)
    da = solve_scuc(case, Forecast(fc, ()), gap=1e-3)
    return case, da.schedule, ScenarioSet(sc[:, :, None], ("load",))


def test_ensemble_matches_serial_calls():
    case, sched, scen = ensemble_inputs(10)
    results = evaluate_ensemble(case, sched, scen, FAST, workers=3)
    assert [r.scenario_id for r in results] == list(range(10))
    for s, r in enumerate(results):
        one = simulate_day(case, sched, scenario_actuals(case, scen, s, 15), FAST, s)
        assert r.total_cost == one.total_cost
        assert r.to_csv() == one.to_csv()


def test_ensemble_worker_count_is_invisible():
    case = single_bus_case([pinned_unit(), make_generator("P", 1, 100, 70.0, initial_status=-2)])
    rng = np.random.default_rng(9)
    vals = np.clip(150 + rng.normal(0, 40, (16, 24, 1)), 0, None)
    scen = ScenarioSet(vals, ("load",))
    sched = CommitmentSchedule.from_u(case, np.vstack([np.ones(24, int), np.zeros(24, int)]))
    one = evaluate_ensemble(case, sched, scen, FAST, workers=1)
    eight = evaluate_ensemble(case, sched, scen, FAST, workers=8)
    assert results_csv(one) == results_csv(eight)
    assert [r.to_csv() for r in one] == [r.to_csv() for r in eight]
    assert build_risk_report(one).to_json() == build_risk_report(eight).to_json()


def test_identical_scenarios_identical_results():
    case = single_bus_case([pinned_unit()])
    scen = ScenarioSet(np.tile(np.linspace(60, 150, 24)[None, :, None], (3, 1, 1)), ("load",))
    res = evaluate_ensemble(case, all_on(case), scen, FAST)
    for r in res[1:]:
        for name in ("cost", "penalty_cost", "transmission_mw", "balance_mw", "reserve_mw"):
            assert np.array_equal(getattr(r, name), getattr(res[0], name))
        assert r.total_cost == res[0].total_cost


def test_ensemble_collects_failures(monkeypatch):
    case = single_bus_case([pinned_unit()])
    scen = ScenarioSet(np.full((3, 24, 1), 90.0), ("load",))
    real = sim_mod.simulate_day

    def sometimes(case, sched, act, config, sid):
        if sid == 1:
            raise SimulationError("lac failed at interval 3: boom", 3, "lac")
        return real(case, sched, act, config, sid)

    monkeypatch.setattr(sim_mod, "simulate_day", sometimes)
    res = evaluate_ensemble(case, all_on(case), scen, FAST)
    assert [r.ok for r in res] == [True, False, True]
    assert "interval 3" in res[1].error
    rep = build_risk_report(res)
    assert rep.n_scenarios == 2 and rep.failed == (1,)
    assert results_csv(res).splitlines()[2] == "1,,,"


def test_scenario_actuals_uses_base_for_missing_assets():
    case = Case((Bus(1, 1.0),), (), (pinned_unit(),), 1, 0.0, (Renewable("W1", 1),))
    scen = ScenarioSet(np.full((1, 24, 1), 30.0), ("W1",))
    base = Forecast(np.full(24, 100.0), np.full((24, 1), 5.0))
    act = scenario_actuals(case, scen, 0, 5, base)
    assert len(act) == 288 and np.all(act.load == 100) and np.all(act.renewables == 30)
    with pytest.raises(DimensionMismatch):
        scenario_actuals(case, scen, 0, 5)


# -- report -----------------------------------------------------------------

def fake(sid, total, peak=0.0, viol=0.0):
    n = 4
    cost = np.full(n, total / n)
    return DayResult(sid, cost, np.full(n, viol / n), np.array([0, peak, 0, 0.0]), np.zeros(n),
                     np.zeros(n), 0.0)


def test_report_counts_adverse_days():
    res = [fake(i, 100.0 + i, peak=5.0 if i in (2, 5, 7) else 0.0) for i in range(10)]
    rep = build_risk_report(res)
    assert rep.p_adverse == pytest.approx(0.3)
    assert 0 <= rep.p_adverse <= 1


def test_report_cvar_example():
    rep = build_risk_report([fake(i, c) for i, c in enumerate([1, 2, 3, 4])], RiskConfig(alpha=0.5))
    assert rep.metrics["total_cost"].cvar == pytest.approx(3.5)
    assert rep.metrics["total_cost"].expectation == pytest.approx(2.5)


def test_report_degenerate_ensemble():
    rep = build_risk_report([fake(i, 7.0, peak=2.0) for i in range(5)])
    m = rep.metrics["total_cost"]
    assert m.expectation == m.cvar == 7.0
    assert rep.p_adverse in (0.0, 1.0)


def test_report_alpha_one_is_mean_and_threshold():
    res = [fake(i, c, viol=c / 10) for i, c in enumerate([5.0, 1.0, 9.0])]
    rep = build_risk_report(res, RiskConfig(alpha=1.0, cost_threshold=4.0))
    assert rep.metrics["total_cost"].cvar == pytest.approx(rep.metrics["total_cost"].expectation)
    assert rep.p_cost_exceed == pytest.approx(2 / 3)
    assert rep.expected_violation_cost == pytest.approx(0.5)


def test_report_empty():
    with pytest.raises(EmptyEnsemble):
        build_risk_report([])
    with pytest.raises(EmptyEnsemble):
        build_risk_report([DayResult.failed(0, "x")])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1e6), st.floats(0, 50)), min_size=1, max_size=20),
       st.floats(0.01, 1.0), st.randoms(use_true_random=False))
def test_report_properties(rows, alpha, rnd):
    res = [fake(i, c, peak=p) for i, (c, p) in enumerate(rows)]
    rep = build_risk_report(res, RiskConfig(alpha=alpha))
    shuffled = list(res)
    rnd.shuffle(shuffled)
    assert build_risk_report(shuffled, RiskConfig(alpha=alpha)).to_json() == rep.to_json()
    for m in rep.metrics.values():
        assert m.cvar >= m.expectation - 1e-9 * (1 + abs(m.expectation))
    costs = [r.total_cost for r in res]
    assert rep.metrics["total_cost"].cvar == pytest.approx(cvar(costs, alpha), rel=1e-12)


def test_report_outputs():
    res = [fake(i, 10.0 * (i + 1), peak=float(i)) for i in range(3)]
    rep = build_risk_report(res)
    text = rep.to_text()
    assert "total_cost" in text and "P(line overload" in text
    assert rep.to_json() == build_risk_report(res).to_json()
    lines = results_csv(res).splitlines()
    assert lines[0] == ",".join(RESULT_COLUMNS) and len(lines) == 4


def test_day_csv_round_trip():
    case = single_bus_case([pinned_unit()])
    day = simulate_day(case, all_on(case), Forecast(np.linspace(30, 190, 96), (), 15), FAST)
    text = day.to_csv()
    assert text.splitlines()[0] == ",".join(DAY_COLUMNS)
    back = DayResult.from_csv(text)
    assert back.total_cost == day.total_cost
    assert back.to_csv() == text
    assert back.minutes == 15

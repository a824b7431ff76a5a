import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridtwin.cases import (
    make_generator,
    single_bus_case,
    three_bus_case,
    two_bus_case,
)
from gridtwin.errors import InconsistentCommitment, InfeasibleFixing, ValidationError
from gridtwin.grid_model import Bus, Case, compute_loss_model
from gridtwin.market_clearing import (
    CommitmentSchedule,
    Forecast,
    Penalties,
    SystemState,
    build_lad,
    build_scuc,
    build_sced,
    check_dispatch,
    run_lac,
    run_myopic,
    solve_frac,
    solve_lad,
    solve_scuc,
    solve_sced,
)
from gridtwin.market_clearing.export import COLUMNS, commitment_rows, dispatch_rows, rows_to_csv
from gridtwin.opt_core import Status

from oracles import random_scuc_instance, scuc_by_enumeration


def one(load, ren=()):
    return Forecast.constant(load, 1, ren)


def running(id, bus, pmax, price, p0, **kw):
    return make_generator(id, bus, pmax, price, initial_status=kw.pop("initial_status", 5),
                          initial_output=p0, **kw)


# -- SCED -------------------------------------------------------------------

def test_sced_merit_order_single_bus():
    case = single_bus_case([running("A", 1, 50, 10.0, 25), running("B", 1, 50, 20.0, 25)])
    sol = solve_sced(case, SystemState.initial(case, 60), one(60), [1, 1])
    np.testing.assert_allclose(sol.p, [50, 10], atol=1e-9)
    assert sol.objective == pytest.approx(700.0)
    assert sol.lmp[0] == pytest.approx(20.0)


def test_sced_congested_two_bus():
    case = two_bus_case([running("A", 1, 100, 10.0, 40), running("B", 2, 100, 30.0, 40)], limit=50)
    sol = solve_sced(case, SystemState.initial(case, 80), one(80), [1, 1])
    np.testing.assert_allclose(sol.p, [50, 30], atol=1e-9)
    np.testing.assert_allclose(sol.lmp, [10, 30], atol=1e-9)
    assert sol.energy_price == pytest.approx(10.0)
    np.testing.assert_allclose(sol.congestion, [0, 20], atol=1e-9)


def test_sced_empty_system():
    case = three_bus_case()
    state = SystemState(0, np.zeros(3), np.zeros(3, bool), np.ones(3), np.zeros(3), np.zeros(0))
    sol = solve_sced(case, state, one(0), [0, 0, 0])
    assert np.all(sol.p == 0) and sol.objective == 0.0


def test_reference_lmp_equals_energy_dual_uncongested():
    case = three_bus_case([running("G1", 1, 200, 12.0, 60), running("G2", 2, 200, 25.0, 60)])
    sol = solve_sced(case, SystemState.initial(case, 120), one(120), [1, 1])
    assert sol.lmp[case.ref_index] == pytest.approx(sol.energy_price, abs=1e-12)
    np.testing.assert_allclose(sol.lmp, sol.energy_price, atol=1e-9)


def test_sced_ramp_and_startup_limits():
    gens = [running("A", 1, 200, 10.0, 50, ramp_rate=2.0),
            make_generator("B", 1, 100, 30.0, pmin=20, ramp_rate=1.0, initial_status=-3)]
    case = single_bus_case(gens)
    sol = solve_sced(case, SystemState.initial(case, 100), one(100), [1, 1])
    # A may move 10 MW; B starting up is capped at max(pmin, 5 MW)
    assert sol.p[0] == pytest.approx(60.0)
    assert sol.p[1] == pytest.approx(20.0)
    assert sol.balance_shortfall == pytest.approx(20.0)


def test_inconsistent_commitment():
    case = single_bus_case([make_generator("A", 1, 100, 10.0, pmin=50, ramp_rate=1.0,
                                           initial_status=2, initial_output=50)])
    state = SystemState.initial(case, 0)
    state.output = np.array([0.0])  # on but at zero output: pmin is out of ramp reach
    with pytest.raises(InconsistentCommitment):
        build_sced(case, state, one(50), [1])


def test_sced_balance_with_losses():
    case = three_bus_case([running("G1", 1, 300, 12.0, 100), running("G2", 2, 300, 25.0, 100)],
                          resistances=(0.02, 0.03, 0.02))
    lm = compute_loss_model(case, [150, 50], base_loads=200)
    sol = solve_sced(case, SystemState.initial(case, 200), one(200), [1, 1], loss_model=lm)
    check_dispatch(case, sol, one(200), lm)
    assert sol.p.sum() > 200.0  # losses are served
    np.testing.assert_allclose(sol.loss_component, -sol.energy_price * lm.loss_factors)


def _bus_case(base: Case, bus_loads) -> Case:
    total = float(np.sum(bus_loads))
    buses = tuple(Bus(b.id, float(w)) for b, w in zip(base.buses, np.asarray(bus_loads) / total))
    return Case(buses, base.lines, base.generators, base.reference_bus, base.reserve_requirement,
                base.renewables)


@pytest.mark.parametrize("lossy", [False, True])
def test_lmp_decomposition_matches_perturbation(lossy):
    gens = [running("G1", 1, 300, 10.0, 100), running("G2", 2, 300, 20.0, 50),
            running("G3", 3, 300, 40.0, 50)]
    res = (0.02, 0.03, 0.01) if lossy else (0.0, 0.0, 0.0)
    base = three_bus_case(gens, limits=(60.0, 1000.0, 1000.0), resistances=res,
                          load_weights=(0.2, 0.5, 0.3))
    load = 200.0
    loads = base.load_shares * load
    lm = compute_loss_model(base, [120, 50, 40], base_loads=loads) if lossy else None
    state = SystemState.initial(base, load)
    sol = solve_sced(base, state, one(load), [1, 1, 1], loss_model=lm, backend="native")
    assert sol.transmission_violation == 0
    for b in range(3):
        d = loads.copy()
        d[b] += 1.0
        case_b = _bus_case(base, d)
        again = solve_sced(case_b, state, one(d.sum()), [1, 1, 1], loss_model=lm, backend="native")
        assert again.objective - sol.objective == pytest.approx(sol.lmp[b], abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 400), st.lists(st.booleans(), min_size=3, max_size=3),
       st.floats(0, 0.1))
def test_dispatch_invariants_property(load, on, req):
    gens = [running("G1", 1, 150, 15.0, 60, ramp_rate=5), running("G2", 2, 100, 30.0, 40, ramp_rate=3),
            make_generator("G3", 3, 80, 55.0, pmin=5, ramp_rate=10, initial_status=-2)]
    case = three_bus_case(gens, limits=(80.0, 80.0, 50.0), resistances=(0.01, 0.01, 0.01),
                          reserve_requirement=req)
    lm = compute_loss_model(case, [60, 40, 0], base_loads=100)
    u = [int(x) for x in on]
    sol = solve_sced(case, SystemState.initial(case, 100), one(load), u, loss_model=lm)
    assert sol.status is Status.OPTIMAL
    check_dispatch(case, sol, one(load), lm)


# -- LAD --------------------------------------------------------------------

def test_lad_needs_twelve_intervals():
    case = single_bus_case([running("A", 1, 100, 10.0, 50)])
    with pytest.raises(ValidationError):
        build_lad(case, SystemState.initial(case, 50), Forecast.constant(50, 11, step_minutes=5), [1])


def test_lad_stationary():
    case = three_bus_case([running("G1", 1, 200, 12.0, 80), running("G2", 2, 200, 25.0, 40)],
                          limits=(60.0, 1000, 1000))
    state = SystemState.initial(case, 120)
    sced = solve_sced(case, state, one(120), [1, 1])
    lad = solve_lad(case, state, Forecast.constant(120, 12, step_minutes=5), [1, 1])
    for d in lad.intervals:
        np.testing.assert_allclose(d.p, lad.intervals[0].p, atol=1e-9)
    assert lad.objective == pytest.approx(12 * sced.interval_cost, rel=1e-12)


def ramp_step_case():
    base = running("BASE", 1, 90, 10.0, 90, ramp_rate=100.0)
    slow = running("SLOW", 1, 200, 20.0, 10, ramp_rate=1.0)
    return single_bus_case([base, slow])


def test_lad_prepositions_for_load_step():
    case = ramp_step_case()
    load = np.array([100.0] * 6 + [120.0] * 6)  # step at interval 7 (1-based)
    fc = Forecast(load, (), 5)
    state = SystemState.initial(case, 100)
    lad = solve_lad(case, state, fc, [1, 1])
    slow = np.array([d.p[1] for d in lad.intervals])
    deltas = np.diff(np.concatenate([[10.0], slow]))
    assert np.all(deltas <= 5.0 + 1e-9)
    assert slow[3] > 10.0 + 1e-9 and np.allclose(slow[:3], 10.0)  # rises from interval 4
    assert slow[6] == pytest.approx(30.0)
    assert all(d.balance_shortfall < 1e-9 for d in lad.intervals)
    myopic, _ = run_myopic(case, state, fc, [1, 1])
    assert myopic[6].balance_shortfall > 1.0
    assert lad.objective <= sum(d.interval_cost for d in myopic) + 1e-9


def test_lad_not_worse_than_myopic_random():
    rng = np.random.default_rng(3)
    for _ in range(8):
        gens = [running(f"G{k}", 1 + k % 3, 100, float(rng.uniform(10, 60)), float(rng.uniform(20, 60)),
                        ramp_rate=float(rng.uniform(0.5, 2.0))) for k in range(3)]
        case = three_bus_case(gens, limits=(70.0, 70.0, 70.0))
        load = 120 + np.cumsum(rng.normal(0, 12, 12))
        fc = Forecast(np.maximum(load, 0), (), 5)
        state = SystemState.initial(case, load[0])
        lad = solve_lad(case, state, fc, [1, 1, 1])
        my, _ = run_myopic(case, state, fc, [1, 1, 1])
        assert lad.objective <= sum(d.interval_cost for d in my) + 1e-7 * abs(lad.objective)


# -- SCUC -------------------------------------------------------------------

def test_scuc_commits_cheapest_pattern():
    gens = [make_generator("A", 1, 100, 10.0, no_load_cost=100.0),
            make_generator("B", 1, 100, 50.0)]
    res = solve_scuc(single_bus_case(gens), Forecast.constant(10, 1))
    assert res.schedule.u[:, 0].tolist() == [1, 0]
    assert res.objective == pytest.approx(200.0)


def test_min_up_forces_next_hour():
    gens = [make_generator("A", 1, 100, 10.0, min_up=2, initial_status=-5),
            make_generator("B", 1, 100, 5.0, initial_status=-5)]
    case = single_bus_case(gens)
    fixed = -np.ones((2, 8), dtype=int)
    fixed[0, 4], fixed[0, 5] = 0, 1
    res = solve_scuc(case, Forecast.constant(20, 8), fixed_commitments=fixed)
    assert res.schedule.u[0, 5] == 1 and res.schedule.u[0, 6] == 1
    assert res.schedule.startup[0, 5] == 1


def test_demand_above_capacity_is_slack_served():
    case = single_bus_case([make_generator("A", 1, 50, 10.0)])
    res = solve_scuc(case, Forecast.constant(80, 2))
    assert res.status is Status.OPTIMAL
    np.testing.assert_allclose(res.balance_slack, [30, 30])
    assert res.penalty_cost == pytest.approx(2 * 30 * Penalties().balance)


def test_infeasible_fixing_detected():
    gens = [make_generator("A", 1, 100, 10.0, min_down=3, initial_status=2, initial_output=50)]
    fixed = np.array([[0, 1, -1, -1]])
    with pytest.raises(InfeasibleFixing, match="A"):
        build_scuc(single_bus_case(gens), Forecast.constant(40, 4), fixed_commitments=fixed)


def test_scuc_matches_enumeration_small_suite():
    rng = np.random.default_rng(101)
    for _ in range(15):
        case, loads = random_scuc_instance(rng, max_binaries=9)
        best, _, table = scuc_by_enumeration(case, loads)
        res = solve_scuc(case, Forecast(loads, ()), backend="native", gap=0.0)
        assert res.objective == pytest.approx(best, rel=1e-8)
        assert table[res.schedule.u.astype(int).tobytes()] == pytest.approx(best, rel=1e-8)
        res.schedule.validate(case)


def test_fixing_never_helps():
    rng = np.random.default_rng(202)
    for _ in range(10):
        case, loads = random_scuc_instance(rng, max_binaries=9)
        free = solve_scuc(case, Forecast(loads, ()), gap=0.0)
        fixed = -np.ones((case.n_gens, len(loads)), dtype=int)
        g, t = rng.integers(case.n_gens), rng.integers(len(loads))
        fixed[g, t] = rng.integers(0, 2)
        try:
            pinned = solve_scuc(case, Forecast(loads, ()), fixed_commitments=fixed, gap=0.0)
        except InfeasibleFixing:
            continue
        assert free.objective <= pinned.objective + 1e-7 * abs(pinned.objective)


def test_cost_breakdown_adds_up():
    rng = np.random.default_rng(5)
    case, loads = random_scuc_instance(rng)
    res = solve_scuc(case, Forecast(loads, ()), gap=0.0)
    total = res.startup_cost + res.no_load_cost + res.energy_cost + res.penalty_cost
    assert total == pytest.approx(res.objective)
    assert res.startup_cost + res.no_load_cost == pytest.approx(res.schedule.commitment_cost(case))


# -- FRAC -------------------------------------------------------------------

def frac_case():
    gens = [make_generator("BASE", 1, 120, 15.0, pmin=30, min_up=3, min_down=3, no_load_cost=200,
                           startup_cost=1000, initial_status=5, initial_output=80),
            make_generator("MID", 2, 80, 30.0, pmin=20, min_up=2, min_down=2, no_load_cost=100,
                           startup_cost=300, initial_status=-4),
            make_generator("PEAK", 3, 50, 60.0, pmin=5, no_load_cost=20, startup_cost=50,
                           initial_status=-4)]
    return three_bus_case(gens)


def test_frac_no_change_on_same_forecast():
    case = frac_case()
    fc = Forecast(np.array([80, 100, 140, 180, 150, 100.0]), ())
    da = solve_scuc(case, fc)
    frac = solve_frac(case, da.schedule, fc)
    assert np.array_equal(frac.schedule.u, da.schedule.u)
    assert frac.newly_committed == []


def test_frac_adds_units_for_higher_peak():
    case = frac_case()
    fc = Forecast(np.array([80, 100, 120, 130, 110, 90.0]), ())
    da = solve_scuc(case, fc)
    up = Forecast(fc.load + np.array([0, 0, 60, 80, 40, 0.0]), ())
    frac = solve_frac(case, da.schedule, up)
    assert frac.schedule.covers(da.schedule)
    assert frac.newly_committed
    assert {t for _, t in frac.newly_committed} <= {2, 3, 4, 5}


def test_frac_optimal_under_add_only_restriction():
    case = frac_case()
    fc = Forecast(np.array([80, 100, 120, 130]), ())
    da = solve_scuc(case, fc)
    up = np.array([90, 150, 190, 170.0])
    frac = solve_frac(case, da.schedule, Forecast(up, ()), backend="native", gap=0.0)
    best, _, _ = scuc_by_enumeration(case, up, floor=da.schedule.u)
    assert frac.objective == pytest.approx(best, rel=1e-8)


def test_frac_rejects_prior_violating_min_down():
    gens = [make_generator("A", 1, 100, 10.0, min_down=3, initial_status=-1)]
    case = single_bus_case(gens)
    prior = CommitmentSchedule.from_u(case, [[1, 1, 1]])
    with pytest.raises(InfeasibleFixing):
        solve_frac(case, prior, Forecast.constant(50, 3))


# -- LAC --------------------------------------------------------------------

def lac_gens(notification):
    return [make_generator("G1", 1, 150, 15.0, pmin=20, ramp_rate=50, min_up=2, no_load_cost=150,
                           startup_cost=300, notification_time=notification, initial_status=3,
                           initial_output=60),
            make_generator("G2", 2, 100, 30.0, pmin=10, ramp_rate=50, no_load_cost=60,
                           startup_cost=100, notification_time=notification, initial_status=-3),
            make_generator("G3", 3, 80, 55.0, pmin=5, ramp_rate=50, no_load_cost=20,
                           startup_cost=20, notification_time=notification, initial_status=-3)]


def test_lac_without_notification_is_fresh_scuc():
    case = three_bus_case(lac_gens(0.0))
    hourly = np.array([60.0, 170.0, 260.0])
    scuc = solve_scuc(case, Forecast(hourly, ()), backend="native", gap=0.0)
    prior = CommitmentSchedule.from_u(case, [[1, 1, 1], [0, 0, 0], [0, 0, 0]])
    window = Forecast(np.repeat(hourly, 4), (), 15)
    lac = run_lac(case, SystemState.initial(case, 60), prior, window, backend="native", gap=0.0)
    assert lac.objective == pytest.approx(scuc.objective, rel=1e-9)
    assert np.array_equal(lac.schedule.u, scuc.schedule.u)


def test_lac_long_notification_keeps_schedule():
    case = three_bus_case(lac_gens(240.0))
    prior = CommitmentSchedule.from_u(case, [[1, 1, 1, 1], [0, 0, 0, 0], [0, 0, 0, 0]])
    window = Forecast(np.full(12, 260.0), (), 15)
    lac = run_lac(case, SystemState.initial(case, 60), prior, window)
    assert np.array_equal(lac.schedule.u, prior.u)
    assert lac.newly_committed == []


def test_lac_fast_start_for_spike():
    slow = make_generator("SLOW", 1, 100, 10.0, pmin=40, ramp_rate=5, notification_time=480,
                          min_up=4, min_down=4, initial_status=8, initial_output=80)
    fast = make_generator("FAST", 1, 60, 80.0, pmin=5, ramp_rate=10, notification_time=10,
                          initial_status=-6)
    case = single_bus_case([slow, fast])
    prior = CommitmentSchedule.from_u(case, [[1] * 6, [0] * 6])
    load = np.full(12, 80.0)
    load[5:7] = 130.0  # 02:30 and 02:45; the window starts at 01:15
    state = SystemState.initial(case, 80)
    state.minute = 75
    lac = run_lac(case, state, prior, Forecast(load, (), 15))
    assert lac.newly_committed == [("FAST", 2)]
    assert np.array_equal(lac.schedule.u[0], prior.u[0])


# -- export -----------------------------------------------------------------

def test_csv_columns_and_rows():
    case = frac_case()
    res = solve_scuc(case, Forecast(np.array([80, 120.0]), ()), prices=True)
    text = rows_to_csv(commitment_rows(case, res))
    rows = list(csv.DictReader(io.StringIO(text)))
    assert tuple(rows[0].keys()) == COLUMNS
    assert len(rows) == case.n_gens * 2
    sol = solve_sced(case, SystemState.initial(case, 80), one(80), [1, 0, 0])
    rows = list(csv.DictReader(io.StringIO(rows_to_csv(dispatch_rows(case, [sol])))))
    assert float(rows[0]["lmp_node"]) == pytest.approx(sol.lmp[0])

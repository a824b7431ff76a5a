"""Regenerate the demo cases, forecasts and history shipped in gridtwin/data.

Run from the repository root: python tools/make_data.py
"""
from pathlib import Path

import numpy as np

from gridtwin.cases import daily_load_shape, fleet_case, ieee14_case, make_generator, single_bus_case
from gridtwin.cases import three_bus_case
from gridtwin.grid_model import save_case
from gridtwin.scenario_engine import HistoryTable, ScenarioSet, history_to_csv, scenarios_to_csv

OUT = Path(__file__).resolve().parents[1] / "src" / "gridtwin" / "data"

DEMO3_LOAD = [120.0, 210.0, 260.0, 190.0]
CASE14_PEAK = 1500.0


def case3():
    """Three-bus demo with the 1-3 line limited so bus prices separate at peak."""
    return three_bus_case(limits=(1000.0, 70.0, 1000.0))


def wind_profile(steps=24, base=60.0, swing=25.0, phase=0.0):
    t = np.arange(steps) * 24.0 / steps
    return np.maximum(base + swing * np.sin(2 * np.pi * (t + phase) / 24.0), 0.0)


def ramp_stress_case():
    """One bus: a cheap flexible unit, a mid-priced slow-ramping unit and a fast peaker."""
    base = make_generator("BASE", 1, 150, 10.0, ramp_rate=30.0, initial_status=6,
                          initial_output=100.0)
    slow = make_generator("SLOW", 1, 300, 20.0, pmin=50, ramp_rate=2.0, min_up=4, min_down=4,
                          initial_status=6, initial_output=50.0)
    fast = make_generator("FAST", 1, 150, 90.0, ramp_rate=30.0, initial_status=6,
                          initial_output=0.0)
    return single_bus_case([base, slow, fast])


# twelve 5-minute intervals: flat, then a steep climb
RAMP_STRESS_LOAD = [150.0, 150.0, 150.0, 150.0, 175.0, 200.0, 225.0, 250.0, 275.0, 290.0,
                    300.0, 300.0]


def history14(days=120, seed=2024):
    """Hourly load and two wind sites with day-to-day weather persistence."""
    rng = np.random.default_rng(seed)
    shape = daily_load_shape(24)
    rows = []
    level = 0.0
    wind_state = np.zeros(2)
    for _ in range(days):
        level = 0.7 * level + rng.normal(0, 0.04)
        e = np.zeros(24)
        for t in range(24):
            e[t] = (0.8 * e[t - 1] if t else 0.0) + rng.normal(0, 0.015)
        load = CASE14_PEAK * shape * (1 + level + e)
        common = rng.normal(0, 1)
        wind_state = 0.6 * wind_state + 0.5 * (common + rng.normal(0, 0.6, 2))
        w1 = wind_profile(base=60 + 20 * wind_state[0], swing=25) * np.exp(rng.normal(0, 0.1, 24))
        w2 = wind_profile(base=40 + 15 * wind_state[1], swing=15, phase=3) * np.exp(rng.normal(0, 0.1, 24))
        rows.append(np.column_stack([load, np.maximum(w1, 0), np.maximum(w2, 0)]))
    return HistoryTable(np.round(np.vstack(rows), 3), ("load", "W1", "W2"))


def one(values, assets):
    vals = np.column_stack(values)[None, :, :]
    return ScenarioSet(vals, assets)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    save_case(case3(), OUT / "case3.json")
    save_case(ieee14_case(), OUT / "case14.json")
    save_case(fleet_case(0.05), OUT / "fleet.json")
    save_case(ramp_stress_case(), OUT / "ramp_stress.json")
    (OUT / "case3_demo.csv").write_text(scenarios_to_csv(one([DEMO3_LOAD], ("load",))))
    (OUT / "case3_day.csv").write_text(
        scenarios_to_csv(one([np.round(260.0 * daily_load_shape(24), 3)], ("load",))))
    load14 = np.round(CASE14_PEAK * daily_load_shape(24), 3)
    (OUT / "case14_day.csv").write_text(scenarios_to_csv(one(
        [load14, np.round(wind_profile(), 3), np.round(wind_profile(base=40, swing=15, phase=3), 3)],
        ("load", "W1", "W2"))))
    (OUT / "fleet_day.csv").write_text(
        scenarios_to_csv(one([np.round(700.0 * daily_load_shape(24), 3)], ("load",))))
    ramp = one([RAMP_STRESS_LOAD], ("load",))
    (OUT / "ramp_stress.csv").write_text(scenarios_to_csv(ramp))
    (OUT / "history14.csv").write_text(history_to_csv(history14()))


if __name__ == "__main__":
    main()

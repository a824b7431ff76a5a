"""Synthetic desk-scale cases standing in for proprietary ISO data."""
from __future__ import annotations

import json
from importlib import resources

import numpy as np

from gridtwin.grid_model import Bus, Case, Generator, Line, Renewable, case_from_dict, validate_case


def make_generator(id, bus, pmax, price, *, pmin=0.0, ramp_rate=1000.0, min_up=1, min_down=1,
                   startup_cost=0.0, no_load_cost=0.0, notification_time=0.0,
                   initial_status=-1, initial_output=None, segments=None) -> Generator:
    """Generator with a single-price curve unless ``segments`` is given."""
    curve = tuple(segments) if segments else ((pmax - pmin, price),)
    if initial_output is None:
        initial_output = pmin if initial_status > 0 else 0.0
    return Generator(str(id), bus, float(pmin), float(pmax), float(ramp_rate), int(min_up),
                     int(min_down), float(startup_cost), float(no_load_cost),
                     tuple((float(a), float(p)) for a, p in curve), float(notification_time),
                     int(initial_status), float(initial_output))


def single_bus_case(generators, reserve_requirement=0.0) -> Case:
    case = Case((Bus(1, 1.0),), (), tuple(generators), 1, reserve_requirement)
    validate_case(case)
    return case


def two_bus_case(generators, limit=50.0, reactance=0.5, resistance=0.0, load_at=2) -> Case:
    weights = {1: 0.0, 2: 0.0}
    weights[load_at] = 1.0
    case = Case(
        (Bus(1, weights[1]), Bus(2, weights[2])),
        (Line("L1", 1, 2, reactance, resistance, limit),),
        tuple(generators), 1, 0.0,
    )
    validate_case(case)
    return case


def three_bus_case(generators=None, limits=(1000.0, 1000.0, 1000.0), reactances=(1.0, 1.0, 1.0),
                   resistances=(0.0, 0.0, 0.0), load_weights=(0.0, 0.5, 0.5),
                   reserve_requirement=0.0) -> Case:
    """Triangle 1-2, 1-3, 2-3 with reference bus 1."""
    if generators is None:
        generators = (
            make_generator("G1", 1, 150, 15.0, pmin=20, ramp_rate=5, no_load_cost=150,
                           startup_cost=300, min_up=2, min_down=2, initial_status=4,
                           initial_output=60),
            make_generator("G2", 2, 100, 30.0, pmin=10, ramp_rate=5, no_load_cost=60,
                           startup_cost=100, min_up=1, min_down=1, initial_status=-3),
            make_generator("G3", 3, 80, 55.0, pmin=5, ramp_rate=10, no_load_cost=20,
                           startup_cost=20, min_up=1, min_down=1, initial_status=-3),
        )
    ends = ((1, 2), (1, 3), (2, 3))
    lines = tuple(
        Line(f"L{a}{b}", a, b, x, r, f)
        for (a, b), x, r, f in zip(ends, reactances, resistances, limits)
    )
    buses = tuple(Bus(i + 1, w) for i, w in enumerate(load_weights))
    case = Case(buses, lines, tuple(generators), 1, reserve_requirement)
    validate_case(case)
    return case


# IEEE 14-bus branch data (r, x in p.u.) and bus loads used as load weights
_IEEE14_BRANCHES = [
    (1, 2, 0.01938, 0.05917), (1, 5, 0.05403, 0.22304), (2, 3, 0.04699, 0.19797),
    (2, 4, 0.05811, 0.17632), (2, 5, 0.05695, 0.17388), (3, 4, 0.06701, 0.17103),
    (4, 5, 0.01335, 0.04211), (4, 7, 0.0, 0.20912), (4, 9, 0.0, 0.55618),
    (5, 6, 0.0, 0.25202), (6, 11, 0.09498, 0.19890), (6, 12, 0.12291, 0.25581),
    (6, 13, 0.06615, 0.13027), (7, 8, 0.0, 0.17615), (7, 9, 0.0, 0.11001),
    (9, 10, 0.03181, 0.08450), (9, 14, 0.12711, 0.27038), (10, 11, 0.08205, 0.19207),
    (12, 13, 0.22092, 0.19988), (13, 14, 0.17093, 0.34802),
]
_IEEE14_LOADS = {1: 0.0, 2: 21.7, 3: 94.2, 4: 47.8, 5: 7.6, 6: 11.2, 7: 0.0, 8: 0.0,
                 9: 29.5, 10: 9.0, 11: 3.5, 12: 6.1, 13: 13.5, 14: 14.9}


def ieee14_case(flow_scale: float = 1.0, reserve_requirement: float = 0.05) -> Case:
    """14-bus network with a 20-unit synthetic fleet (about 1.9 GW).

    Unit classes: slow coal (8 h notification), combined cycle (2-4 h),
    fast combustion turbines and peakers (0-10 min).
    """
    rng = np.random.default_rng(14)
    gens = []
    coal_buses = [1, 1, 2, 3]
    for k, bus in enumerate(coal_buses):
        pmax = 200.0
        pmin = 70.0
        p = 16.0 + 1.5 * k
        gens.append(make_generator(
            f"COAL{k + 1}", bus, pmax, p, pmin=pmin, ramp_rate=2.0, min_up=8, min_down=8,
            startup_cost=6000.0, no_load_cost=600.0 + 20 * k, notification_time=480.0,
            initial_status=10, initial_output=165.0,
            segments=((65.0, p), (65.0, p + 3.0)),
        ))
    cc_buses = [2, 3, 6, 6, 8, 8]
    for k, bus in enumerate(cc_buses):
        pmax = 120.0
        pmin = 40.0
        p = 27.0 + 1.2 * k
        gens.append(make_generator(
            f"CC{k + 1}", bus, pmax, p, pmin=pmin, ramp_rate=4.0, min_up=4, min_down=3,
            startup_cost=1500.0, no_load_cost=300.0, notification_time=120.0 + 30 * (k % 3),
            initial_status=-5,
            segments=((40.0, p), (40.0, p + 4.0)),
        ))
    ct_buses = [3, 4, 9, 10, 13, 14]
    for k, bus in enumerate(ct_buses):
        p = 55.0 + 4.0 * k + float(rng.integers(0, 3))
        gens.append(make_generator(
            f"CT{k + 1}", bus, 50.0, p, pmin=10.0, ramp_rate=8.0, min_up=1, min_down=1,
            startup_cost=300.0, no_load_cost=80.0, notification_time=10.0 * (k % 2),
            initial_status=-2,
        ))
    peak_buses = [5, 11, 12, 14]
    for k, bus in enumerate(peak_buses):
        gens.append(make_generator(
            f"PK{k + 1}", bus, 30.0, 100.0 + 6.0 * k, pmin=5.0, ramp_rate=10.0, min_up=1,
            min_down=1, startup_cost=50.0, no_load_cost=40.0, notification_time=0.0,
            initial_status=-1,
        ))
    limits = {(1, 2): 500, (1, 5): 250, (2, 3): 180, (2, 4): 220, (2, 5): 200, (3, 4): 140,
              (4, 5): 300, (4, 7): 160, (4, 9): 120, (5, 6): 200, (6, 11): 90, (6, 12): 90,
              (6, 13): 140, (7, 8): 200, (7, 9): 200, (9, 10): 120, (9, 14): 110,
              (10, 11): 90, (12, 13): 90, (13, 14): 110}
    lines = tuple(
        Line(f"L{a}-{b}", a, b, x, r, flow_scale * limits[(a, b)])
        for a, b, r, x in _IEEE14_BRANCHES
    )
    buses = tuple(Bus(b, w) for b, w in _IEEE14_LOADS.items())
    renewables = (Renewable("W1", 8), Renewable("W2", 12))
    case = Case(buses, lines, tuple(gens), 1, reserve_requirement, renewables)
    validate_case(case)
    return case


def daily_load_shape(steps: int = 24, peak: float = 1.0, valley: float = 0.62) -> np.ndarray:
    """Two-hump daily profile scaled to [valley, peak] at ``steps`` points."""
    t = (np.arange(steps) + 0.5) * 24.0 / steps
    shape = (0.55 * np.exp(-0.5 * ((t - 10.5) / 3.0) ** 2)
             + 0.75 * np.exp(-0.5 * ((t - 19.0) / 2.5) ** 2)
             + 0.1 * np.sin(np.pi * t / 24.0))
    shape = (shape - shape.min()) / (shape.max() - shape.min())
    return valley + (peak - valley) * shape


def load_packaged_case(name: str) -> Case:
    """Load one of the cases shipped in ``gridtwin/data`` (e.g. ``"case3"``)."""
    text = resources.files("gridtwin").joinpath("data", f"{name}.json").read_text()
    return case_from_dict(json.loads(text))


def packaged_path(filename: str):
    return resources.files("gridtwin").joinpath("data", filename)


def fleet_case(reserve_requirement: float = 0.0) -> Case:
    """Three-bus system with a six-unit fleet of mixed flexibility (about 1 GW)."""
    gens = (
        make_generator("BASE1", 1, 300, 18.0, pmin=120, ramp_rate=3.0, min_up=6, min_down=6,
                       startup_cost=3000.0, no_load_cost=400.0, initial_status=8,
                       initial_output=200.0),
        make_generator("BASE2", 1, 200, 21.0, pmin=80, ramp_rate=2.5, min_up=6, min_down=6,
                       startup_cost=2000.0, no_load_cost=300.0, initial_status=-8),
        make_generator("MID1", 2, 150, 32.0, pmin=50, ramp_rate=4.0, min_up=3, min_down=2,
                       startup_cost=900.0, no_load_cost=250.0, initial_status=-4),
        make_generator("MID2", 3, 150, 35.0, pmin=50, ramp_rate=4.0, min_up=3, min_down=2,
                       startup_cost=900.0, no_load_cost=250.0, initial_status=-4),
        make_generator("PEAK1", 2, 80, 85.0, pmin=10, ramp_rate=8.0, startup_cost=150.0,
                       no_load_cost=60.0, initial_status=-2),
        make_generator("PEAK2", 3, 80, 95.0, pmin=10, ramp_rate=8.0, startup_cost=150.0,
                       no_load_cost=60.0, initial_status=-2),
    )
    return three_bus_case(gens, limits=(400.0, 400.0, 250.0), load_weights=(0.2, 0.4, 0.4),
                          reserve_requirement=reserve_requirement)


def scenario_day(rng: np.random.Generator, n_scenarios: int, peak: float = 700.0,
                 sigma: float = 0.05, steps: int = 24, bias: float = 0.0):
    """Day-ahead load forecast and equally likely realizations around it.

    Each realization multiplies the forecast by 1 + bias + e_t, where e is an
    AR(1) path with stationary standard deviation ``sigma``.
    """
    forecast = peak * daily_load_shape(steps)
    phi = 0.8
    e = np.zeros((n_scenarios, steps))
    e[:, 0] = rng.normal(0.0, sigma, n_scenarios)
    for t in range(1, steps):
        e[:, t] = phi * e[:, t - 1] + rng.normal(0.0, sigma * np.sqrt(1 - phi ** 2), n_scenarios)
    return forecast, np.maximum(forecast * (1.0 + bias + e), 0.0)

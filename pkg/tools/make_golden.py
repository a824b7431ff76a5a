"""Regenerate tests/golden/scuc_case3_commitment.csv from the enumeration oracle.

The commitment is the brute-force optimum over every feasible on/off pattern;
dispatch and bus prices come from the fixed-commitment solve.
Run from the repository root: python tools/make_golden.py
"""
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from oracles import scuc_by_enumeration  # noqa: E402

from gridtwin.cases import load_packaged_case, packaged_path  # noqa: E402
from gridtwin.market_clearing import Forecast, solve_scuc  # noqa: E402
from gridtwin.market_clearing.export import commitment_rows, rows_to_csv  # noqa: E402
from gridtwin.scenario_engine import scenarios_from_csv  # noqa: E402


def main():
    case = load_packaged_case("case3")
    loads = scenarios_from_csv(packaged_path("case3_demo.csv").read_text()).values[0, :, 0]
    best, u, table = scuc_by_enumeration(case, loads)
    ties = sum(abs(c - best) <= 1e-9 * abs(best) for c in table.values())
    if ties != 1:
        raise SystemExit(f"optimum is not unique ({ties} patterns)")
    res = solve_scuc(case, Forecast(loads, ()), fixed_commitments=u, gap=0.0, prices=True)
    assert np.array_equal(res.schedule.u, u) and abs(res.objective - best) <= 1e-8 * best
    out = ROOT / "tests" / "golden" / "scuc_case3_commitment.csv"
    out.write_text(rows_to_csv(commitment_rows(case, res)))
    print(f"optimum {best:.6f} over {len(table)} patterns -> {out}")


if __name__ == "__main__":
    main()

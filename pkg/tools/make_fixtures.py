"""Regenerate the scenario documents shipped in ``src/ttplan/data``.

Run from the repository root::

    python tools/make_fixtures.py
"""
from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path

from ttplan.corridor import Obstacle
from ttplan.objectives import ObjectiveSpec
from ttplan.scenario import save_scenario, straight, uturn
from ttplan.vehicle import SMALL_VEHICLE

OUT = Path(__file__).resolve().parents[1] / "src" / "ttplan" / "data"


def fixtures():
    yield replace(
        straight(60.0, half_width=3.0),
        notes="Straight road, 6 m wide; the zero trajectory is optimal for every objective.",
    )
    yield replace(
        uturn(0.065, half_width=10.0, horizon=134.2, objective=ObjectiveSpec(3, 0.45), name="uturn_0065"),
        notes="U-turn of curvature 0.065 1/m (radius 15.38 m), 134.2 m window at 0.2 m. "
              "The road is 20 m wide so that only the objective shapes the path.",
    )
    hw = 8.0
    obstacles = (
        # inside of the turn, early in the arc: the vehicle passes on its right
        Obstacle(70.0, 88.0, 3.0, hw, "right"),
        # outside, late in the arc: the vehicle passes on its left, towards the inside
        Obstacle(100.0, 108.0, -hw, -3.0, "left"),
    )
    yield replace(
        uturn(0.065, half_width=hw, horizon=134.2, obstacles=obstacles, objective=ObjectiveSpec(3, 0.45),
              name="uturn_obstacles").with_planner(obstacle_pad=0.1, max_sqp_iters=80),
        notes="U-turn with two obstacles: the first blocks the inside of the arc, the second the "
              "outside later in the arc. Curvature 0.065 1/m; road 16 m wide (assumed).",
    )
    yield replace(
        uturn(0.056, vehicle=SMALL_VEHICLE, lead_in=50.0, half_width=5.0, horizon=245.8,
              turn=2.5 * math.pi, objective=ObjectiveSpec(3, 0.40), name="roundabout_0056"),
        notes="450-degree turn at curvature 0.056 1/m (radius 17.88 m) with the smaller combination "
              "and K = 0.40. Entry/exit geometry and the 10 m carriageway are assumptions; the "
              "fixture is illustrative and not used for quantitative checks.",
    )


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for sc in fixtures():
        path = OUT / f"{sc.name}.json"
        path.write_text(save_scenario(sc), encoding="utf-8")
        print(f"wrote {path.relative_to(OUT.parents[2])}")


if __name__ == "__main__":
    main()

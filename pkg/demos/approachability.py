"""
Three ways to approach a target
===============================

The scalar game [[1, -1], [-1, 1]] with target {0}: Blackwell's direct
strategy, play driven by calibrated forecasts of the opponent, and the
reduction to an orthant through two halfspaces around the target.
"""

import numpy as np

from calapproach import (
    IID,
    NotApproachable,
    VectorPayoffGame,
    build_best_response_table,
    interval_halfspaces,
    run_blackwell,
    run_calibrated_approach,
    run_halfspace,
)
from calapproach.simplex import point_target

game = VectorPayoffGame([[1.0, -1.0], [-1.0, 1.0]])
target = point_target([0.0])
n = 20_000
stages = [100, 1_000, 10_000, n]

# Blackwell: the bound is E d^2 <= 4B/n
tr = run_blackwell(game, target, IID([0.3, 0.7]), n, seed=0, log_stages=stages)
for stage in stages:
    print(f"blackwell   n={stage:>6}  d={tr.at(stage, 'distance'):.4f}"
          f"  sqrt(4B/n)={np.sqrt(4 * game.bound / stage):.4f}")

# calibration: forecast the opponent and play the tabled best response
table = build_best_response_table(game, target, epsilon=0.1, forecast_mesh=0.05)
tr = run_calibrated_approach(game, target, table, IID([0.3, 0.7]), n, seed=0,
                             log_stages=stages)
for stage in stages:
    print(f"calibrated  n={stage:>6}  d={tr.at(stage, 'distance'):.4f}"
          f"  decomposition bound {tr.at(stage, 'decomposition_bound'):.4f}")

# halfspaces w <= 0.1 and -w <= 0.1, approached as a negative orthant
normals, offsets = interval_halfspaces([0.0], 0.1)
tr = run_halfspace(game, normals, offsets, IID([0.3, 0.7]), n, seed=0, log_stages=stages)
print("halfspace   final distance to [-0.1, 0.1]:", tr.last("distance"))

# the target {1} cannot be approached: the opponent mixing (1/2, 1/2) pins
# every expected payoff at 0 (forecast mesh 0.2 puts (1/2, 1/2) on the grid)
try:
    build_best_response_table(game, point_target([1.0]), 0.1, 0.2)
except NotApproachable as exc:
    print("excludable: y =", exc.witness.y, "keeps every response at distance",
          round(exc.witness.distance, 6))

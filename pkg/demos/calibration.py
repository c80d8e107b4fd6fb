"""
Calibrated forecasts of a biased coin
=====================================

The forecaster announces one of the points (k/8, 1 - k/8). Its payoff for
point l is minus the squared distance between the outcome and that point, so
its internal regret is exactly the calibration score.
"""

import numpy as np

from calapproach import Calibrator, simplex_grid

grid = simplex_grid(2, 0.2)
print(len(grid), "forecasts, covering radius", round(grid.mesh, 4))

cal = Calibrator(grid, outcome_bound=np.sqrt(2))
rng = np.random.default_rng(1)
nature = np.random.default_rng(2)
outcomes = np.eye(2)

for t in range(1, 100_001):
    cal.forecast(rng)
    cal.observe(outcomes[int(nature.random() >= 0.3)])
    if t in (100, 1_000, 10_000, 100_000):
        print(f"n={t:>6}  calibration score {cal.calibration_score():.2e}"
              f"  engine regret {cal.engine.max_positive_regret():.2e}")

# the forecasts end up near the true law (0.3, 0.7)
freq = cal.frequencies()
for l in np.argsort(freq)[::-1][:3]:
    print("forecast", grid.points[l], "used", f"{freq[l]:.3f}", "average outcome",
          np.round(cal.type_averages()[l], 3))

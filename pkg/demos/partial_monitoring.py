"""
Playing with flags: label efficient prediction
==============================================

Only the action o reveals anything about the outcome, and it never pays.
The strategy forecasts the flag (the signal law of every action) with a
calibrator fed by importance-weighted estimates, and plays a best response
to the forecast for the worst-case evaluation W.
"""

import numpy as np

from calapproach import (
    Periodic,
    WorstCase,
    build_br_grid,
    flag_of,
    run_partial_monitoring,
    worst_case_W,
)
from calapproach.harness import label_efficient, matching_pennies_dark

le = label_efficient()
print("flag of G:", flag_of(le, [1.0, 0.0]), " flag of B:", flag_of(le, [0.0, 1.0]))

# in matching pennies in the dark every flag is (c, c); only (1/2, 1/2) is safe
mpd = matching_pennies_dark()
cc = flag_of(mpd, [0.5, 0.5])
for x in ([0.5, 0.5], [1.0, 0.0]):
    print("W(", x, ") =", round(worst_case_W(mpd, x, cc), 4))

# types and best responses for epsilon = 0.2
br = build_br_grid(le, WorstCase(le), 0.2, seed=0)
print(len(br), "flag types, eta =", br.eta, "delta =", round(br.delta, 4))

trace, state = run_partial_monitoring(br, Periodic([0, 1, 1]), 50_000, seed=0,
                                      log_stages=[1_000, 10_000, 50_000])
for stage in trace.stages:
    print(f"n={stage:>6}  per-type regret {trace.at(stage, 'max_actual_regret'):.4f}"
          f"  external {trace.at(stage, 'external_regret'):.4f}"
          f" <= {trace.at(stage, 'external_bound'):.4f}")
print("types used:", len(state.used()), "most used:", int(np.argmax(state.counts)))

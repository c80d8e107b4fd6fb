"""
Internal regret against random payoffs
======================================

The engine plays the invariant law of its positive average regret matrix.
Against i.i.d. payoffs its largest internal regret should shrink like
1/sqrt(n).
"""

import numpy as np

from calapproach import RegretEngine, invariant_probability, run_internal_regret

# the invariant law of a small nonnegative matrix
A = np.array([[0.0, 2.0], [1.0, 0.0]])
print("invariant law of", A.tolist(), "->", invariant_probability(A).distribution)

# a run of 40 000 stages with payoffs drawn uniformly in [-1, 1]^3
n = 40_000
U = np.random.default_rng(0).uniform(-1, 1, (n, 3))
trace = run_internal_regret(3, U, n, seed=0, log_stages=[625, 2_500, 10_000, 40_000])

# sqrt(n) * regret stays roughly flat when the rate holds
for stage, row in zip(trace.stages, trace.rows):
    regret = row[trace.metrics.index("max_positive_regret")]
    print(f"n={stage:>6}  max regret {regret:.4f}  sqrt(n) * regret {np.sqrt(stage) * regret:.3f}")

# the engine can also be driven by hand
engine = RegretEngine(2)
engine.update(0, [0.5, -0.5])
print("average regret after one stage:\n", engine.average_regret())

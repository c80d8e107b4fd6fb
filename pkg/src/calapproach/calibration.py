"""Calibrated forecasting with respect to a finite set of forecasts.

The forecaster runs a :class:`~calapproach.regret.RegretEngine` whose
actions are the grid points; the payoff of forecast ``l`` at a stage with
outcome ``s`` is ``-||s - mu_l||^2``. Internal regret of that engine is then
exactly the calibration gap.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyHistory, OutcomeOutOfRange, PendingObservation
from .regret import RegretEngine, sample_index
from .simplex import FiniteGrid


class Calibrator:
    """Sequential forecaster over the points of ``grid``.

    Outcomes may be any vectors with Euclidean norm at most ``outcome_bound``;
    ``forecast`` and ``observe`` must alternate.
    """

    def __init__(self, grid, outcome_bound):
        points = grid.points if isinstance(grid, FiniteGrid) else np.asarray(grid, dtype=float)
        points = np.atleast_2d(points)
        if points.shape[0] == 0 or points.size == 0:
            raise ValueError("grid must be non-empty")
        if not outcome_bound > 0:
            raise ValueError("outcome_bound must be > 0")
        self.points = points
        self.outcome_bound = float(outcome_bound)
        radius = float(np.max(np.linalg.norm(points, axis=1)))
        n_types, d = points.shape
        self.engine = RegretEngine(n_types, bound=(self.outcome_bound + radius) ** 2)
        self.counts = np.zeros(n_types, dtype=np.int64)
        self.outcome_sums = np.zeros((n_types, d))
        self._sq_norms = np.einsum("ij,ij->i", points, points)
        self.pending = None

    @property
    def n_types(self):
        return self.points.shape[0]

    @property
    def stage(self):
        return self.engine.stage

    def distribution(self):
        return self.engine.strategy()

    def forecast(self, rng):
        """Draw the type of the coming stage."""
        if self.pending is not None:
            raise PendingObservation("pending observation: call observe() first")
        self.pending = sample_index(self.engine.strategy(), rng)
        return self.pending

    def outcome_payoffs(self, outcome):
        """Vector ``(-||outcome - mu_l||^2)_l``."""
        s = np.asarray(outcome, dtype=float)
        return -(self._sq_norms - 2.0 * self.points @ s + s @ s)

    def observe(self, outcome):
        l = self.pending
        if l is None:
            raise PendingObservation("no pending forecast: call forecast() first")
        s = np.asarray(outcome, dtype=float)
        if s.shape != (self.points.shape[1],):
            raise ValueError(f"outcome must have shape ({self.points.shape[1]},)")
        if s @ s > (self.outcome_bound * (1 + 1e-12)) ** 2:
            raise OutcomeOutOfRange(
                f"outcome out of range: norm {np.linalg.norm(s):.6g} > {self.outcome_bound:.6g}"
            )
        self.engine.update(l, self.outcome_payoffs(s))
        self.counts[l] += 1
        self.outcome_sums[l] += s
        self.pending = None
        return self

    def type_averages(self):
        """Average outcome on the stages of each type (NaN rows for unused types)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.outcome_sums / self.counts[:, None]

    def frequencies(self):
        if self.stage == 0:
            raise EmptyHistory("empty history")
        return self.counts / self.stage

    def calibration_score(self):
        """max over l, k of (N(l)/n) (||sbar(l) - mu(l)||^2 - ||sbar(l) - mu(k)||^2)."""
        if self.stage == 0:
            raise EmptyHistory("empty history")
        used = np.flatnonzero(self.counts)
        avg = self.outcome_sums[used] / self.counts[used, None]
        d2 = np.sum((avg[:, None, :] - self.points[None, :, :]) ** 2, axis=2)
        own = d2[np.arange(used.size), used]
        gaps = (self.counts[used] / self.stage)[:, None] * (own[:, None] - d2)
        return max(float(gaps.max()), 0.0)

    def epsilon_calibration_score(self, partition_mesh):
        """max over l of (N(l)/n) (||sbar(l) - mu(l)||^2 - mesh^2), unused types count 0."""
        if self.stage == 0:
            raise EmptyHistory("empty history")
        used = np.flatnonzero(self.counts)
        avg = self.outcome_sums[used] / self.counts[used, None]
        dist2 = np.sum((avg - self.points[used]) ** 2, axis=1)
        terms = self.counts[used] / self.stage * (dist2 - partition_mesh**2)
        score = float(terms.max())
        return max(score, 0.0) if used.size < self.n_types else score

"""Approachability of convex targets in games with vector payoffs.

Two players: the first picks ``i`` in ``I``, the opponent ``j`` in ``J`` and
the stage payoff is ``rho[i, j]`` in R^d. Three strategies are provided:

* Blackwell's direct strategy (:func:`run_blackwell`), which solves a scalar
  zero-sum game at every stage;
* the calibration-based strategy (:func:`run_calibrated_approach`), which
  forecasts the opponent's empirical action and best-responds to the
  forecast from a precomputed table;
* the halfspace reduction (:func:`run_halfspace`), which approaches a
  polyhedral target through the negative orthant of an auxiliary game.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import linprog

from .adversaries import PublicHistory, spawn_rngs
from .calibration import Calibrator
from .errors import GridBudgetExceeded, NotApproachable, SeparationFailed
from .regret import sample_index
from .simplex import (
    FiniteGrid,
    Halfspaces,
    negative_orthant,
    project_convex,
    simplex_grid,
    uniform,
)
from .trace import MetricTrace, log_schedule

SELF_PLAY_ROUNDS = 10**4
CERTIFICATE_FACTOR = 1e-3
INSIDE_TOL = 1e-9


class VectorPayoffGame:
    """Finite game with payoffs ``payoffs[i, j]`` in R^d.

    A 2-d array is read as a scalar game (d = 1).
    """

    def __init__(self, payoffs):
        rho = np.asarray(payoffs, dtype=float)
        if rho.ndim == 2:
            rho = rho[:, :, None]
        if rho.ndim != 3 or 0 in rho.shape:
            raise ValueError(f"payoffs must have shape (I, J, d), got {rho.shape}")
        if not np.all(np.isfinite(rho)):
            raise ValueError("payoffs must be finite")
        rho.setflags(write=False)
        self.payoffs = rho
        # B = sup ||rho(i, j)||^2
        self.bound = float(np.max(np.einsum("ijd,ijd->ij", rho, rho)))

    @property
    def shape(self):
        return self.payoffs.shape

    @property
    def n_rows(self):
        return self.payoffs.shape[0]

    @property
    def n_cols(self):
        return self.payoffs.shape[1]

    @property
    def dim(self):
        return self.payoffs.shape[2]

    def __repr__(self):
        return f"VectorPayoffGame(I={self.n_rows}, J={self.n_cols}, d={self.dim})"


def expected_payoff(game, x, y):
    """Bilinear extension ``sum_ij x_i y_j rho(i, j)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (game.n_rows,) or y.shape != (game.n_cols,):
        raise ValueError(
            f"dimension mismatch: x {x.shape}, y {y.shape} for a {game.n_rows}x{game.n_cols} game"
        )
    return np.einsum("i,j,ijd->d", x, y, game.payoffs)


# --------------------------------------------------------------------------
# zero-sum matrix games


@njit(cache=True)
def _self_play(G, rounds):
    # exponential weights for both players on a game scaled to [-1, 1];
    # the row player minimises, losses are mapped to [0, 1]
    n_i, n_j = G.shape
    loss_x = np.zeros(n_i)
    loss_y = np.zeros(n_j)
    x_sum = np.zeros(n_i)
    y_sum = np.zeros(n_j)
    c_i = np.sqrt(8.0 * np.log(n_i)) if n_i > 1 else 0.0
    c_j = np.sqrt(8.0 * np.log(n_j)) if n_j > 1 else 0.0
    x = np.empty(n_i)
    y = np.empty(n_j)
    for t in range(1, rounds + 1):
        eta_x = c_i / np.sqrt(t)
        eta_y = c_j / np.sqrt(t)
        m = loss_x.min()
        for i in range(n_i):
            x[i] = np.exp(-eta_x * (loss_x[i] - m))
        x /= x.sum()
        m = loss_y.min()
        for j in range(n_j):
            y[j] = np.exp(-eta_y * (loss_y[j] - m))
        y /= y.sum()
        x_sum += x
        y_sum += y
        gx = G @ y
        gy = G.T @ x
        for i in range(n_i):
            loss_x[i] += 0.5 * (gx[i] + 1.0)
        for j in range(n_j):
            loss_y[j] += 0.5 * (1.0 - gy[j])
    return x_sum / rounds, y_sum / rounds


@dataclass(frozen=True)
class MatrixGameSolution:
    """Approximate minimax pair; ``upper`` = max_j (G^T x)_j, ``lower`` = min_i (G y)_i."""

    x: np.ndarray
    y: np.ndarray
    upper: float
    lower: float

    @property
    def gap(self):
        return self.upper - self.lower


def solve_matrix_game(G, rounds=SELF_PLAY_ROUNDS):
    """Row player minimises ``x^T G y``; multiplicative-weights self-play.

    Step sizes are ``sqrt(8 ln n / t)`` for a player with ``n`` actions.
    """
    G = np.ascontiguousarray(G, dtype=float)
    scale = float(np.max(np.abs(G)))
    if scale == 0.0:
        x, y = uniform(G.shape[0]), uniform(G.shape[1])
        return MatrixGameSolution(x, y, 0.0, 0.0)
    x, y = _self_play(G / scale, rounds)
    return MatrixGameSolution(x, y, float(np.max(x @ G)), float(np.min(G @ y)))


def solve_matrix_game_lp(G):
    """Exact minimiser ``x`` of ``max_j (G^T x)_j`` and the opponent's maximin ``y``."""
    G = np.asarray(G, dtype=float)
    n_i, n_j = G.shape
    # x-side: min v s.t. G^T x - v <= 0, sum x = 1
    res = linprog(
        np.r_[np.zeros(n_i), 1.0],
        A_ub=np.hstack([G.T, -np.ones((n_j, 1))]),
        b_ub=np.zeros(n_j),
        A_eq=np.r_[np.ones(n_i), 0.0][None, :],
        b_eq=[1.0],
        bounds=[(0, None)] * n_i + [(None, None)],
        method="highs",
    )
    x = np.maximum(res.x[:n_i], 0.0)
    x /= x.sum()
    # y-side: max w s.t. G y - w >= 0, sum y = 1
    res = linprog(
        np.r_[np.zeros(n_j), -1.0],
        A_ub=np.hstack([-G, np.ones((n_i, 1))]),
        b_ub=np.zeros(n_i),
        A_eq=np.r_[np.ones(n_j), 0.0][None, :],
        b_eq=[1.0],
        bounds=[(0, None)] * n_j + [(None, None)],
        method="highs",
    )
    y = np.maximum(res.x[:n_j], 0.0)
    y /= y.sum()
    return MatrixGameSolution(x, y, float(np.max(x @ G)), float(np.min(G @ y)))


# --------------------------------------------------------------------------
# Blackwell's strategy


def separation_matrix(game, z, p):
    """``g(i, j) = <rho(i, j) - p, z - p>``."""
    return (game.payoffs - p) @ (z - p)


class BlackwellPlayer:
    """Blackwell's strategy with a cache of solved (normalised) stage games.

    The stage game only depends on ``z`` through the direction ``z - p`` and
    ``p``; repeated directions are common, so solutions are cached on the
    normalised matrix.
    """

    def __init__(self, game, target, rounds=SELF_PLAY_ROUNDS):
        self.game = game
        self.target = target
        self.rounds = rounds
        self.cache = {}
        self.n_solves = 0
        self.n_lp = 0
        self.last_certificate = 0.0
        self.last_tolerance = 0.0

    def step(self, z):
        z = np.asarray(z, dtype=float)
        p = project_convex(z, self.target)
        gap = float(np.linalg.norm(z - p))
        n_i = self.game.n_rows
        if gap <= INSIDE_TOL:
            self.last_certificate = self.last_tolerance = 0.0
            return uniform(n_i)
        g = separation_matrix(self.game, z, p)
        scale = float(np.max(np.abs(g)))
        tol = CERTIFICATE_FACTOR * gap * math.sqrt(self.game.bound)
        self.last_tolerance = tol
        if scale == 0.0:
            self.last_certificate = 0.0
            return uniform(n_i)
        G = g / scale
        key = np.round(G, 12).tobytes()
        hit = self.cache.get(key)
        if hit is not None and hit[1] * scale <= tol:
            self.last_certificate = hit[1] * scale
            return hit[0]
        self.n_solves += 1
        sol = solve_matrix_game(G, self.rounds)
        x, upper = sol.x, sol.upper
        if upper * scale > tol:
            self.n_lp += 1
            sol = solve_matrix_game_lp(G)
            if sol.upper * scale > tol:
                raise SeparationFailed(z, sol.y, sol.upper * scale)
            x, upper = sol.x, sol.upper
        self.cache[key] = (x, upper)
        self.last_certificate = upper * scale
        return x


def blackwell_step(game, target, z, rounds=SELF_PLAY_ROUNDS):
    """Mixed action keeping every expected payoff behind the hyperplane at ``Pi(z)``.

    Returns the uniform action when ``z`` is in the target. The returned
    ``x`` satisfies ``max_j <rho(x, j) - p, z - p> <= 1e-3 ||z - p|| sqrt(B)``;
    otherwise :class:`SeparationFailed` is raised.
    """
    return BlackwellPlayer(game, target, rounds).step(z)


def _play_game(game, choose, adversary, n, seed, log_stages, metrics, log_fn, metadata,
               on_stage=None):
    # common loop: player draws i from choose(z), adversary answers from the
    # public history; log_fn(t, pair_counts, payoff_sum) returns a metric row
    if n < 1:
        raise ValueError("n must be >= 1")
    rng, rng_adv = spawn_rngs(seed)
    adversary.reset(rng_adv)
    history = PublicHistory(game.n_rows, game.n_cols)
    stages = log_schedule(n) if log_stages is None else set(log_stages)
    trace = MetricTrace(metadata, metrics)
    total = np.zeros(game.dim)
    pairs = np.zeros((game.n_rows, game.n_cols), dtype=np.int64)
    rho = game.payoffs
    for t in range(1, n + 1):
        z = total / (t - 1) if t > 1 else total
        x = choose(z, t)
        j = adversary.act(history)
        i = sample_index(x, rng)
        history.record(i, j)
        pairs[i, j] += 1
        total += rho[i, j]
        if on_stage is not None:
            on_stage(i, j)
        if t in stages:
            trace.append(t, **log_fn(t, pairs, total))
    return trace


def run_blackwell(game, target, adversary, n, seed, log_stages=None, rounds=SELF_PLAY_ROUNDS):
    """Play Blackwell's strategy for ``n`` stages.

    The trace logs ``distance`` = d(average payoff, target), its square, and
    the largest certificate slack ``max_j <rho(x, j) - p, z - p> - tolerance``
    seen so far (never positive).
    """
    player = BlackwellPlayer(game, target, rounds)
    worst = [-math.inf]

    def choose(z, t):
        x = player.step(z) if t > 1 else uniform(game.n_rows)
        worst[0] = max(worst[0], player.last_certificate - player.last_tolerance)
        return x

    def log_fn(t, pairs, total):
        d = target.distance(total / t)
        return {"distance": d, "distance_sq": d * d, "certificate_slack": worst[0]}

    meta = {"run": "approach-blackwell", "seed": seed, "adversary": adversary.describe(),
            "game": list(game.shape), "self_play_rounds": rounds}
    return _play_game(game, choose, adversary, n, seed, log_stages,
                      ["distance", "distance_sq", "certificate_slack"], log_fn, meta)


def halfspace_reduction(game, normals, offsets):
    """Auxiliary game with payoffs ``(<rho(i, j), c_l> - b_l)_l``.

    Approaching the negative orthant in the auxiliary game is the same as
    approaching the intersection of the halfspaces ``<w, c_l> <= b_l``.
    """
    C = np.atleast_2d(np.asarray(normals, dtype=float))
    b = np.atleast_1d(np.asarray(offsets, dtype=float))
    if C.shape[0] == 0 or C.shape[0] != b.shape[0]:
        raise ValueError("need a non-empty list of halfspaces with one offset each")
    if C.shape[1] != game.dim:
        raise ValueError(f"normals have dimension {C.shape[1]}, payoffs {game.dim}")
    return VectorPayoffGame(game.payoffs @ C.T - b)


def interval_halfspaces(center, epsilon):
    """Halfspaces of the box ``center +- epsilon`` (two per coordinate)."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    eye = np.eye(center.size)
    normals = np.vstack([eye, -eye])
    offsets = np.r_[center + epsilon, -center + epsilon]
    return normals, offsets


def run_halfspace(game, normals, offsets, adversary, n, seed, log_stages=None,
                  rounds=SELF_PLAY_ROUNDS):
    """Approach the intersection of halfspaces via the reduced game.

    Logs ``distance`` to the intersection in the original payoff space and
    ``aux_distance`` to the negative orthant in the auxiliary space.
    """
    aux = halfspace_reduction(game, normals, offsets)
    orthant = negative_orthant(aux.dim)
    polytope = Halfspaces(normals, offsets)
    player = BlackwellPlayer(aux, orthant, rounds)
    aux_total = np.zeros(aux.dim)
    aux_rho = aux.payoffs

    def choose(z, t):
        # z is the original average; the player works on the auxiliary one
        return player.step(aux_total / (t - 1)) if t > 1 else uniform(game.n_rows)

    def on_stage(i, j):
        np.add(aux_total, aux_rho[i, j], out=aux_total)

    def log_fn(t, pairs, total):
        return {"distance": polytope.distance(total / t),
                "aux_distance": orthant.distance(aux_total / t)}

    meta = {"run": "halfspace", "seed": seed, "adversary": adversary.describe(),
            "game": list(game.shape), "n_halfspaces": int(aux.dim)}
    return _play_game(game, choose, adversary, n, seed, log_stages,
                      ["distance", "aux_distance"], log_fn, meta, on_stage=on_stage)


# --------------------------------------------------------------------------
# calibration-based strategy


@dataclass(frozen=True)
class ExcludabilityWitness:
    """A forecast ``y`` against which every response stays ``distance`` away."""

    y: np.ndarray
    distance: float
    threshold: float


@dataclass(frozen=True)
class BestResponseTable:
    forecasts: FiniteGrid
    responses: np.ndarray
    distances: np.ndarray
    epsilon: float
    response_mesh: float

    def __len__(self):
        return len(self.forecasts)


def _response_distances(game, target, X, y):
    # d(rho(x, y), C) for every row x of X
    images = X @ np.tensordot(game.payoffs, y, axes=([1], [0]))
    return np.array([target.distance(v) for v in images])


def _min_distance_over_x(game, target, y, x0, iterations=2000):
    # Frank-Wolfe on x -> d^2(rho(x, y), C), which is convex and smooth
    P = np.tensordot(game.payoffs, y, axes=([1], [0])).T  # d x I
    x = np.array(x0, dtype=float)
    best = target.distance(P @ x)
    for k in range(iterations):
        v = P @ x
        w = v - project_convex(v, target)
        if w @ w == 0.0:
            return 0.0
        grad = P.T @ w
        s = int(np.argmin(grad))
        x *= 1.0 - 2.0 / (k + 2)
        x[s] += 2.0 / (k + 2)
        best = min(best, target.distance(P @ x))
    return best


def build_best_response_table(game, target, epsilon, forecast_mesh, response_mesh=None,
                              budget=10**6):
    """Best responses to each point of a forecast grid of ``Delta(J)``.

    The responses are searched on a grid of ``Delta(I)`` (default mesh
    ``epsilon / 2``); ties go to the point closest to uniform. Raises
    :class:`NotApproachable` with the forecast whose best distance is largest
    when that distance exceeds ``epsilon / 2``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    forecasts = simplex_grid(game.n_cols, forecast_mesh, budget)
    rmesh = epsilon / 2 if response_mesh is None else response_mesh
    X = simplex_grid(game.n_rows, rmesh, budget).points
    if len(forecasts) * X.shape[0] > budget:
        raise GridBudgetExceeded(len(forecasts) * X.shape[0], budget)
    to_uniform = np.linalg.norm(X - uniform(game.n_rows), axis=1)
    responses = np.empty((len(forecasts), game.n_rows))
    distances = np.empty(len(forecasts))
    for l, y in enumerate(forecasts.points):
        d = _response_distances(game, target, X, y)
        best = np.flatnonzero(d <= d.min() + 1e-12)
        k = best[np.argmin(to_uniform[best])]
        responses[l] = X[k]
        distances[l] = d[k]
    threshold = epsilon / 2
    worst = int(np.argmax(distances))
    if distances[worst] > threshold:
        y = forecasts.points[worst].copy()
        inf_d = _min_distance_over_x(game, target, y, responses[worst])
        raise NotApproachable(ExcludabilityWitness(y, inf_d, threshold))
    return BestResponseTable(forecasts, responses, distances, float(epsilon), float(rmesh))


def verify_table(game, target, table):
    """Largest ``d(rho(x(l), y(l)), C)``, recomputed from scratch."""
    return max(
        target.distance(expected_payoff(game, x, y))
        for x, y in zip(table.responses, table.forecasts.points)
    )


def run_calibrated_approach(game, target, table, adversary, n, seed, log_stages=None):
    """Forecast the opponent with a calibrator and play the tabled response.

    Logged metrics: ``distance`` to the target, the convex decomposition
    bound ``sum_l (N(l)/n) d(rho_bar(l), C)``, the calibration score, and per
    type ``freq_<l>`` and ``forecast_error_<l>`` (NaN while unused).
    """
    L = len(table)
    cal = Calibrator(table.forecasts, outcome_bound=1.0)
    n_j = game.n_cols
    vertices = np.eye(n_j)
    type_payoffs = np.zeros((L, game.dim))
    metrics = ["distance", "decomposition_bound", "calibration_score"]
    metrics += [f"freq_{l}" for l in range(L)] + [f"forecast_error_{l}" for l in range(L)]
    current = {}

    def choose(z, t):
        l = cal.forecast(rng_cal)
        current["l"] = l
        return table.responses[l]

    def on_stage(i, j):
        l = current["l"]
        cal.observe(vertices[j])
        type_payoffs[l] += game.payoffs[i, j]

    def log_fn(t, pairs, total):
        used = np.flatnonzero(cal.counts)
        bound = sum(cal.counts[l] / t * target.distance(type_payoffs[l] / cal.counts[l])
                    for l in used)
        freq = cal.counts / t
        err = np.full(L, np.nan)
        avg = cal.type_averages()
        err[used] = np.linalg.norm(avg[used] - table.forecasts.points[used], axis=1)
        row = {"distance": target.distance(total / t), "decomposition_bound": bound,
               "calibration_score": cal.calibration_score()}
        row.update({f"freq_{l}": freq[l] for l in range(L)})
        row.update({f"forecast_error_{l}": err[l] for l in range(L)})
        return row

    # the forecaster draws from its own stream so the table lookup does not
    # shift the player's action draws
    rng_cal = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[2])
    meta = {"run": "approach-calibrated", "seed": seed, "adversary": adversary.describe(),
            "game": list(game.shape), "epsilon": table.epsilon, "n_types": L,
            "forecast_mesh": float(table.forecasts.mesh)}
    return _play_game(game, choose, adversary, n, seed, log_stages, metrics, log_fn, meta,
                      on_stage=on_stage)

"""Repeated games with partial monitoring.

Player 1 never sees the opponent's action ``j`` nor the payoff; after
playing ``i`` a signal ``s`` is drawn from ``signals[i, j]``. The most it
can learn about a mixed action ``y`` is its *flag*, the matrix of signal
laws ``(s(i, y))_i``, stored flattened row by row (index ``i * S + s``).

The strategy forecasts flags with a calibrator fed by an unbiased
importance-weighted estimator, and best-responds to the forecast under an
evaluation such as the worst case ``W`` over the flag's preimage.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .adversaries import PublicHistory, spawn_rngs
from .calibration import Calibrator
from .errors import (
    AssumptionCheckFailed,
    EmptyHistory,
    EstimatorUndefined,
    GridBudgetExceeded,
    PreimageEmpty,
)
from .regret import sample_index
from .simplex import (
    DEFAULT_GRID_BUDGET,
    FiniteGrid,
    _compositions,
    frank_wolfe_quadratic,
    product_grid,
    project_linear_image,
    simplex_covering_radius,
    simplex_grid,
    uniform,
)
from .trace import MetricTrace, log_schedule

PREIMAGE_TOL = 1e-6
MAX_ENUMERATED_OUTCOMES = 12


class SignalStructure:
    """Scalar payoffs ``payoffs[i, j]`` and signal laws ``signals[i, j]`` in Delta(S)."""

    def __init__(self, payoffs, signals):
        rho = np.array(payoffs, dtype=float)
        sig = np.array(signals, dtype=float)
        if rho.ndim != 2 or sig.ndim != 3 or sig.shape[:2] != rho.shape:
            raise ValueError(
                f"payoffs (I, J) and signals (I, J, S) do not match: {rho.shape}, {sig.shape}"
            )
        if np.any(sig < 0) or np.any(np.abs(sig.sum(axis=2) - 1.0) > 1e-12):
            raise ValueError("every signals[i, j] must be a probability vector")
        rho.setflags(write=False)
        sig.setflags(write=False)
        self.payoffs = rho
        self.signals = sig
        self.radius = float(np.max(np.abs(rho)))
        n_i, n_j, n_s = sig.shape
        # column j is the flag of the pure action j
        F = sig.transpose(0, 2, 1).reshape(n_i * n_s, n_j)
        F.setflags(write=False)
        self.flag_matrix = F
        # norm of the flag map on directions tangent to Delta(J)
        centred = F - F.mean(axis=1, keepdims=True)
        self.tangent_norm = float(np.linalg.norm(centred, 2)) if n_j > 1 else 0.0
        self._subsets = None

    @property
    def n_actions(self):
        return self.payoffs.shape[0]

    @property
    def n_outcomes(self):
        return self.payoffs.shape[1]

    @property
    def n_signals(self):
        return self.signals.shape[2]

    @property
    def flag_dim(self):
        return self.n_actions * self.n_signals

    def flag_rows(self, mu):
        return np.asarray(mu, dtype=float).reshape(self.n_actions, self.n_signals)

    def _vertex_bases(self):
        # column subsets of [F; 1] with full column rank, with pseudo-inverses
        if self._subsets is None:
            A = np.vstack([self.flag_matrix, np.ones(self.n_outcomes)])
            rank = np.linalg.matrix_rank(A)
            bases = []
            for size in range(1, min(self.n_outcomes, rank) + 1):
                for T in itertools.combinations(range(self.n_outcomes), size):
                    AT = A[:, T]
                    if np.linalg.matrix_rank(AT) == size:
                        bases.append((np.array(T), AT, np.linalg.pinv(AT)))
            self._subsets = bases
        return self._subsets


def flag_of(structure, y):
    """Flag ``(s(i, y))_i`` of a mixed action of the opponent."""
    y = np.asarray(y, dtype=float)
    if y.shape != (structure.n_outcomes,):
        raise ValueError(f"y must have shape ({structure.n_outcomes},), got {y.shape}")
    return structure.flag_matrix @ y


@dataclass(frozen=True)
class RangeProjection:
    image: np.ndarray
    coeffs: np.ndarray
    gap: float


def range_projection(structure, mu, tol=1e-8):
    """Nearest flag in the range of ``y -> flag_of(y)``."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (structure.flag_dim,):
        raise ValueError(f"flag must have shape ({structure.flag_dim},)")
    res = project_linear_image(mu, structure.flag_matrix.T, tol=tol)
    return RangeProjection(res.image, res.coeffs, res.gap)


def preimage_vertices(structure, mu):
    """Vertices of ``{y in Delta(J): flag_of(y) = Pi(mu)}``.

    The flag is first projected on the range (tight Frank-Wolfe tolerance)
    and the vertices are then enumerated over column bases.
    """
    proj = range_projection(structure, mu, tol=1e-14)
    target = np.r_[proj.image, 1.0]
    if structure.n_outcomes > MAX_ENUMERATED_OUTCOMES:
        return proj.coeffs[None, :]
    verts = []
    scale = 1.0 + np.linalg.norm(target)
    for T, AT, pinv in structure._vertex_bases():
        yT = pinv @ target
        if yT.min() < -1e-9 or np.linalg.norm(AT @ yT - target) > 1e-9 * scale:
            continue
        y = np.zeros(structure.n_outcomes)
        y[T] = np.maximum(yT, 0.0)
        verts.append(y / y.sum())
    if not verts:
        return proj.coeffs[None, :]
    V = np.unique(np.round(np.array(verts), 12), axis=0)
    return V


def _maximin(Wmat):
    # max over x in the simplex of min_v <W_v, x>
    nv, n_i = Wmat.shape
    if nv == 1:
        return float(Wmat.max())
    if nv == 2:
        best = float(np.max(Wmat.min(axis=0)))
        a = Wmat[0] - Wmat[1]
        for i, k in itertools.combinations(range(n_i), 2):
            if a[i] * a[k] < 0:
                t = a[k] / (a[k] - a[i])
                best = max(best, t * Wmat[0, i] + (1 - t) * Wmat[0, k])
        return best
    res = linprog(
        np.r_[np.zeros(n_i), -1.0],
        A_ub=np.hstack([-Wmat, np.ones((nv, 1))]),
        b_ub=np.zeros(nv),
        A_eq=np.r_[np.ones(n_i), 0.0][None, :],
        b_eq=[1.0],
        bounds=[(0, None)] * n_i + [(None, None)],
        method="highs",
    )
    return float(-res.fun)


class Evaluation:
    """Payoff proxy ``G(x, mu)`` of a mixed action against a flag.

    ``values(X, mu)`` evaluates every row of ``X``; ``sup(mu, X)`` is the
    best value over the simplex (over the rows of ``X`` unless a subclass
    knows better).
    """

    name = "custom"

    def values(self, X, mu):
        raise NotImplementedError

    def __call__(self, x, mu):
        return float(self.values(np.atleast_2d(x), mu)[0])

    def sup(self, mu, X):
        return float(np.max(self.values(X, mu)))


class FunctionEvaluation(Evaluation):
    def __init__(self, fn, name="custom"):
        self.fn = fn
        self.name = name

    def values(self, X, mu):
        return np.asarray(self.fn(np.atleast_2d(X), np.asarray(mu, dtype=float)), dtype=float)


class _PreimageEvaluation(Evaluation):
    def __init__(self, structure):
        self.structure = structure
        self._cache = {}

    def vertex_payoffs(self, mu):
        # rows: rho(., y_v) for every preimage vertex y_v
        key = np.round(np.asarray(mu, dtype=float), 13).tobytes()
        W = self._cache.get(key)
        if W is None:
            if len(self._cache) > 50_000:
                self._cache.clear()
            W = preimage_vertices(self.structure, mu) @ self.structure.payoffs.T
            self._cache[key] = W
        return W


class WorstCase(_PreimageEvaluation):
    """``W(x, mu) = min over y with flag_of(y) = Pi(mu) of rho(x, y)``."""

    name = "worst-case"

    def values(self, X, mu):
        return (np.atleast_2d(X) @ self.vertex_payoffs(mu).T).min(axis=1)

    def sup(self, mu, X=None):
        return _maximin(self.vertex_payoffs(mu))


class Optimistic(_PreimageEvaluation):
    """``O(x, mu) = max over the same preimage of rho(x, y)``."""

    name = "optimistic"

    def values(self, X, mu):
        return (np.atleast_2d(X) @ self.vertex_payoffs(mu).T).max(axis=1)

    def sup(self, mu, X=None):
        return float(self.vertex_payoffs(mu).max())


def _penalised_preimage_opt(structure, x, mu, sign, penalty=None, max_iter=10**4,
                            max_rounds=50):
    # minimise sign * rho(x, y) over {y : flag_of(y) = Pi(mu)} by Frank-Wolfe on
    # the penalised objective, with multiplier updates to remove the penalty bias
    x = np.asarray(x, dtype=float)
    target = range_projection(structure, mu).image
    F = structure.flag_matrix
    K = 1e3 * max(structure.radius, 1e-12) if penalty is None else penalty
    c = sign * (x @ structure.payoffs)
    lam = np.zeros(F.shape[0])
    y = None
    resid = math.inf
    for _ in range(max_rounds):
        res = frank_wolfe_quadratic(F, target, c=c + F.T @ lam, weight=2 * K, y0=y,
                                    tol=1e-12, max_iter=max_iter)
        y = res.coeffs
        r = F @ y - target
        resid = float(np.linalg.norm(r))
        lam = lam + 2 * K * r
        if resid < 1e-10:
            break
    if resid > PREIMAGE_TOL:
        raise PreimageEmpty(resid)
    return float(x @ structure.payoffs @ y), y


def worst_case_grid(structure, x, mu, mesh=1e-2):
    """Grid-search evaluation of ``W``: minimum over grid points near the preimage.

    The range projection is approximated by the grid point whose flag is
    closest to ``mu``; grid points whose flag lies within the mesh-induced
    slack of that image count as the preimage.
    """
    Y = simplex_grid(structure.n_outcomes, mesh).points
    images = Y @ structure.flag_matrix.T
    best = images[np.argmin(np.linalg.norm(images - np.asarray(mu, dtype=float), axis=1))]
    slack = structure.tangent_norm * mesh + 1e-12
    near = np.linalg.norm(images - best, axis=1) <= slack
    return float(np.min(Y[near] @ (structure.payoffs.T @ np.asarray(x, dtype=float))))


def worst_case_W(structure, x, mu, cross_check=False):
    """Worst-case payoff of ``x`` over opponent actions consistent with ``mu``.

    Penalised Frank-Wolfe (penalty ``1e3 * r``) with multiplier updates. With
    ``cross_check`` and at most 4 outcomes, a mesh-0.01 grid search is run as
    well and a warning is emitted if the two disagree by more than the grid's
    resolution.
    """
    value, _ = _penalised_preimage_opt(structure, x, mu, 1.0)
    if cross_check and structure.n_outcomes <= 4:
        check = worst_case_grid(structure, x, mu, 1e-2)
        if abs(check - value) > 0.05 * max(structure.radius, 1.0):
            warnings.warn(f"worst-case value {value:.6g} disagrees with grid search {check:.6g}",
                          RuntimeWarning, stacklevel=2)
    return value


def optimistic_O(structure, x, mu):
    """Best payoff of ``x`` over opponent actions consistent with ``mu``."""
    value, _ = _penalised_preimage_opt(structure, x, mu, -1.0)
    return value


# --------------------------------------------------------------------------
# best-response grid


@dataclass
class BRGrid:
    """Flag types ``mu(l)`` with best responses ``x(l)`` and the constants used."""

    structure: SignalStructure
    evaluation: Evaluation
    flags: FiniteGrid
    responses: np.ndarray
    response_grid: FiniteGrid
    epsilon: float
    eta: float
    delta: float
    lipschitz: float
    cover: str
    flag_coeffs: np.ndarray | None = None
    refinements: int = 0
    checks: int = 0
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.flags)


def _dirichlet_mix(rng, d, k):
    # half pure/edge points, half Dirichlet(1) points
    out = rng.dirichlet(np.ones(d), size=k)
    pure = rng.random(k) < 0.25
    out[pure] = np.eye(d)[rng.integers(d, size=pure.sum())]
    return out


def _sample_near(center, radius, rng, metric=None):
    # random point of the simplex within `radius` of `center` (measured by
    # `metric`, a linear map on directions, Euclidean by default)
    d = center.size
    if d == 1 or radius <= 0:
        return center.copy()
    v = rng.standard_normal(d)
    v -= v.mean()
    n = np.linalg.norm(v if metric is None else metric @ v)
    if n < 1e-12 * np.linalg.norm(v):
        return center.copy()
    radius = min(radius, 1e6)
    v *= radius * rng.random() ** (1.0 / (d - 1)) / n
    neg = v < 0
    if np.any(neg):
        t = np.min(center[neg] / -v[neg])
        if t < 1.0:
            v *= t
    return np.maximum(center + v, 0.0) / np.maximum(center + v, 0.0).sum()


def _sample_flag(structure, rng, full):
    if full:
        rows = rng.dirichlet(np.ones(structure.n_signals), size=structure.n_actions)
        return rows.ravel()
    return structure.flag_matrix @ _dirichlet_mix(rng, structure.n_outcomes, 1)[0]


def estimate_flag_lipschitz(structure, G, n_pairs=1000, rng=None):
    """Largest observed ``|G(x, mu) - G(x, mu')| / ||mu - mu'||`` over random pairs.

    Half the pairs are flags in the range of the flag map, half anywhere in
    ``Delta(S)^I``; half of each are close pairs.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    n_i, n_j = structure.n_actions, structure.n_outcomes
    X = _dirichlet_mix(rng, n_i, n_pairs)
    best = 0.0
    for k in range(n_pairs):
        full = k % 2 == 1
        mu1 = _sample_flag(structure, rng, full)
        if k % 4 < 2:
            mu2 = _sample_flag(structure, rng, full)
        elif full:
            rows = structure.flag_rows(mu1)
            mu2 = np.concatenate([_sample_near(r, 0.05, rng) for r in rows])
        else:
            y = _dirichlet_mix(rng, n_j, 1)[0]
            mu1 = structure.flag_matrix @ y
            mu2 = structure.flag_matrix @ _sample_near(y, 0.05, rng)
        gap = np.linalg.norm(mu1 - mu2)
        if gap > 1e-9:
            best = max(best, abs(G(X[k], mu1) - G(X[k], mu2)) / gap)
    return best


def _range_flag_grid(structure, delta, budget):
    n_j = structure.n_outcomes
    if structure.tangent_norm == 0.0 or not math.isfinite(delta):
        y = uniform(n_j)
        mu = structure.flag_matrix @ y
        radius = float(np.max(np.linalg.norm(structure.flag_matrix.T - mu, axis=1)))
        return FiniteGrid(mu[None, :], radius), y[None, :]
    a = n_j // 2
    m = max(1, math.ceil(math.sqrt(a * (n_j - a) / n_j) * structure.tangent_norm / delta))
    count = math.comb(m + n_j - 1, n_j - 1)
    if count > budget:
        raise GridBudgetExceeded(count, budget)
    Y = _compositions(m, n_j) / m
    flags = Y @ structure.flag_matrix.T
    _, keep = np.unique(np.round(flags, 12), axis=0, return_index=True)
    keep = np.sort(keep)
    mesh = simplex_covering_radius(n_j, m) * structure.tangent_norm
    return FiniteGrid(flags[keep], mesh, m), Y[keep]


def _full_flag_grid(structure, delta, budget):
    n_i, n_s = structure.n_actions, structure.n_signals
    if n_s == 1:
        return FiniteGrid(np.ones((1, n_i)), 0.0)
    row_mesh = delta / math.sqrt(n_i)
    factor = simplex_grid(n_s, row_mesh, budget)
    if len(factor) ** n_i > budget:
        raise GridBudgetExceeded(len(factor) ** n_i, budget)
    return product_grid([factor] * n_i, budget)


def build_br_grid(structure, G, epsilon, cover="range", n_pairs=1000, n_checks=100,
                  seed=0, budget=DEFAULT_GRID_BUDGET, max_refinements=3):
    """Finite set of flag types and an epsilon-best response to each.

    The flag mesh is ``delta = epsilon / (4 L)`` with ``L`` a sampled
    Lipschitz constant of ``G`` in the flag, the response grid has mesh
    ``eta = epsilon / (4 max(r, 1))``. With ``cover="range"`` the types cover
    the range of the flag map, which holds every flag an opponent can
    generate; ``cover="full"`` covers all of ``Delta(S)^I``.

    After the build, ``n_checks`` random pairs ``(x, mu)`` with
    ``||x - x(l)|| <= 2 eta`` and ``||mu - mu(l)|| <= 2 delta`` are tested
    for ``G(x, mu) >= sup G(., mu) - epsilon``. On a violation both meshes
    are halved and the grid rebuilt, at most ``max_refinements`` times;
    after that :class:`AssumptionCheckFailed` is raised.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    if cover not in ("range", "full"):
        raise ValueError(f"cover must be 'range' or 'full', got {cover!r}")
    if not isinstance(G, Evaluation):
        G = FunctionEvaluation(G)
    rng = np.random.default_rng(seed)
    lip = estimate_flag_lipschitz(structure, G, n_pairs, rng)
    delta = epsilon / (4 * lip) if lip > 0 else math.inf
    eta = epsilon / (4 * max(structure.radius, 1.0))
    n_i = structure.n_actions
    for refinement in range(max_refinements + 1):
        if cover == "range":
            flags, coeffs = _range_flag_grid(structure, delta, budget)
        else:
            flags, coeffs = _full_flag_grid(structure, delta, budget), None
        X = simplex_grid(n_i, eta, budget)
        to_uniform = np.linalg.norm(X.points - uniform(n_i), axis=1)
        responses = np.empty((len(flags), n_i))
        for l, mu in enumerate(flags.points):
            v = G.values(X.points, mu)
            best = np.flatnonzero(v >= v.max() - 1e-12)
            responses[l] = X.points[best[np.argmin(to_uniform[best])]]
        br = BRGrid(structure, G, flags, responses, X, float(epsilon), float(eta),
                    float(delta), float(lip), cover, coeffs, refinement)
        failure = _spot_check(br, n_checks, rng)
        if failure is None:
            return br
        if refinement == max_refinements:
            break
        delta /= 2
        eta /= 2
    l, x, mu, value, sup = failure
    raise AssumptionCheckFailed(
        f"type {l}: G(x, mu) = {value:.6g} < sup {sup:.6g} - epsilon {epsilon:.6g}",
        {"type": l, "x": x, "mu": mu, "value": value, "sup": sup},
    )


def _spot_check(br, n_checks, rng):
    # returns None or the first violating sample (l, x, mu, G(x, mu), sup G(., mu))
    s = br.structure
    G = br.evaluation
    X = br.response_grid.points
    tangent = None
    if br.cover == "range":
        tangent = s.flag_matrix
    for l in range(len(br)):
        for _ in range(n_checks):
            x = _sample_near(br.responses[l], 2 * br.eta, rng)
            if br.cover == "range":
                y = _sample_near(br.flag_coeffs[l], 2 * br.delta, rng, metric=tangent)
                mu = s.flag_matrix @ y
            else:
                rows = s.flag_rows(br.flags.points[l])
                mu = np.concatenate(
                    [_sample_near(r, 2 * br.delta / math.sqrt(s.n_actions), rng) for r in rows]
                )
            value = G(x, mu)
            sup = G.sup(mu, X)
            br.checks += 1
            if value < sup - br.epsilon - 1e-6:
                return l, x, mu, value, sup
    return None


# --------------------------------------------------------------------------
# the strategy


def perturb(x, eta):
    """``(1 - eta) x + eta * uniform``."""
    if not 0 < eta <= 1:
        raise ValueError("eta must be in (0, 1]")
    x = np.asarray(x, dtype=float)
    return (1.0 - eta) * x + eta / x.size


def estimator(signal, action, x_used, n_signals):
    """Importance-weighted flag estimate: one-hot at (action, signal) over ``x_used[action]``.

    Arrays of signals and actions give one estimate per row.
    """
    x_used = np.asarray(x_used, dtype=float)
    signal = np.asarray(signal)
    action = np.asarray(action)
    w = x_used[action]
    if np.any(~(w > 0)):
        bad = int(np.atleast_1d(action)[np.flatnonzero(~(np.atleast_1d(w) > 0))[0]])
        raise EstimatorUndefined(f"estimator undefined: zero weight on played action {bad}")
    if action.ndim == 0:
        out = np.zeros(x_used.size * n_signals)
        out[int(action) * n_signals + int(signal)] = 1.0 / w
        return out
    out = np.zeros((action.size, x_used.size * n_signals))
    out[np.arange(action.size), action * n_signals + signal] = 1.0 / w
    return out


class PMState:
    """Calibrated flag forecaster plus per-type bookkeeping.

    Simulator-side records (true flags, payoffs) are kept for the reports
    only; the strategy uses the played actions and signals.
    """

    def __init__(self, br, eta=None):
        self.br = br
        s = br.structure
        self.structure = s
        self.eta = br.eta if eta is None else float(eta)
        self.played = np.array([perturb(x, self.eta) for x in br.responses])
        bound = 1.0 / self.played.min()
        self.calibrator = Calibrator(br.flags, outcome_bound=bound)
        L = len(br)
        self.action_counts = np.zeros((L, s.n_actions), dtype=np.int64)
        self.payoff_sums = np.zeros(L)
        self.flag_sums = np.zeros((L, s.flag_dim))
        self.max_estimate = 0.0

    @property
    def stage(self):
        return self.calibrator.stage

    @property
    def counts(self):
        return self.calibrator.counts

    def step(self, j, rng, nature_rng=None):
        """One stage against opponent action ``j``; returns ``(l, i, s)``."""
        s = self.structure
        nature_rng = rng if nature_rng is None else nature_rng
        l = self.calibrator.forecast(rng)
        x_used = self.played[l]
        i = sample_index(x_used, rng)
        sig = sample_index(s.signals[i, j], nature_rng)
        est = estimator(sig, i, x_used, s.n_signals)
        self.max_estimate = max(self.max_estimate, 1.0 / x_used[i])
        self.calibrator.observe(est)
        self.action_counts[l, i] += 1
        self.payoff_sums[l] += s.payoffs[i, j]
        self.flag_sums[l] += s.flag_matrix[:, j]
        return l, i, sig

    def used(self):
        return np.flatnonzero(self.counts)

    def estimated_flags(self):
        return self.calibrator.type_averages()

    def true_flags(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.flag_sums / self.counts[:, None]

    def action_averages(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.action_counts / self.counts[:, None]

    def payoff_averages(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.payoff_sums / self.counts


def pm_step(state, br, j, rng, nature_rng=None):
    """Advance ``state`` one stage; returns ``(state, i, s)``."""
    if state.br is not br:
        raise ValueError("state was built for a different BRGrid")
    _, i, s = state.step(j, rng, nature_rng)
    return state, i, s


def _check_history(state):
    if state.stage == 0:
        raise EmptyHistory("empty history")


def internal_regret_report(state, br, G=None, use_true_flags=True):
    """Per-type ``(N(l)/n) (sup_x G(x, m_l) - G(ibar(l), m_l))`` (NaN for unused types).

    ``m_l`` is the average true flag of the type, or the range projection of
    the estimated flag when ``use_true_flags`` is false.
    """
    _check_history(state)
    G = br.evaluation if G is None else G
    X = br.response_grid.points
    out = np.full(len(br), np.nan)
    flags = state.true_flags() if use_true_flags else state.estimated_flags()
    ibar = state.action_averages()
    n = state.stage
    for l in state.used():
        m = flags[l]
        if not use_true_flags:
            m = range_projection(br.structure, m).image
        out[l] = state.counts[l] / n * (G.sup(m, X) - G(ibar[l], m))
    return out


def actual_payoff_regret_report(state, br):
    """Per-type ``(N(l)/n) (sup_x W(x, mubar(l)) - rhobar(l))`` (NaN for unused types)."""
    _check_history(state)
    W = br.evaluation if isinstance(br.evaluation, WorstCase) else WorstCase(br.structure)
    flags = state.true_flags()
    rbar = state.payoff_averages()
    out = np.full(len(br), np.nan)
    for l in state.used():
        out[l] = state.counts[l] / state.stage * (W.sup(flags[l]) - rbar[l])
    return out


@dataclass(frozen=True)
class ExternalRegret:
    value: float
    bound: float


def external_regret_report(state, br=None):
    """``max_x W(x, mubar) - rhobar`` with its per-type decomposition bound.

    The bound is ``sum_l (N(l)/n) (sup_x W(x, mubar(l)) - rhobar(l))``, which
    dominates the value because the best worst-case payoff is convex in the
    flag. The inequality is asserted.
    """
    _check_history(state)
    br = state.br if br is None else br
    W = br.evaluation if isinstance(br.evaluation, WorstCase) else WorstCase(br.structure)
    n = state.stage
    mubar = state.flag_sums.sum(axis=0) / n
    value = W.sup(mubar) - state.payoff_sums.sum() / n
    bound = float(np.nansum(actual_payoff_regret_report(state, br)))
    if value > bound + 1e-6:
        raise AssertionError(f"external regret {value:.9g} above its decomposition {bound:.9g}")
    return ExternalRegret(float(value), bound)


# --------------------------------------------------------------------------
# simulations


PM_METRICS = [
    "max_actual_regret",
    "max_internal_regret",
    "max_internal_regret_estimated",
    "external_regret",
    "external_bound",
    "flag_estimation_error",
    "types_used",
]


def _pm_row(state, br):
    actual = actual_payoff_regret_report(state, br)
    internal = internal_regret_report(state, br, use_true_flags=True)
    est = internal_regret_report(state, br, use_true_flags=False)
    ext = external_regret_report(state, br)
    used = state.used()
    gap = np.linalg.norm(state.estimated_flags()[used] - state.true_flags()[used], axis=1)
    return {
        "max_actual_regret": float(np.nanmax(actual)),
        "max_internal_regret": float(np.nanmax(internal)),
        "max_internal_regret_estimated": float(np.nanmax(est)),
        "external_regret": ext.value,
        "external_bound": ext.bound,
        "flag_estimation_error": float(gap.max()),
        "types_used": float(used.size),
    }


def run_partial_monitoring(br, adversary, n, seed, log_stages=None, eta=None):
    """Play the calibrated strategy for ``n`` stages against ``adversary``.

    ``eta`` overrides the exploration rate (default: the grid's response mesh).
    Returns the trace and the final :class:`PMState`.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    s = br.structure
    rng, rng_adv, rng_nature = spawn_rngs(seed, 3)
    adversary.reset(rng_adv)
    history = PublicHistory(s.n_actions, s.n_outcomes)
    state = PMState(br, eta)
    stages = log_schedule(n) if log_stages is None else set(log_stages)
    meta = {"run": "partial-monitor", "seed": seed, "adversary": adversary.describe(),
            "evaluation": br.evaluation.name, "epsilon": br.epsilon, "eta": state.eta,
            "delta": br.delta, "n_types": len(br), "cover": br.cover}
    trace = MetricTrace(meta, list(PM_METRICS))
    for t in range(1, n + 1):
        j = adversary.act(history)
        _, i, _ = state.step(j, rng, rng_nature)
        history.record(i, j)
        if t in stages:
            trace.append(t, **_pm_row(state, br))
    return trace, state


def doubling_schedule(base, n_total):
    """Blocks ``(k, epsilon_k, length)`` with ``epsilon_k = 2^-(k+3)``, lengths ``base * 4^(k-1)``.

    The last block is cut to fit ``n_total``.
    """
    if base < 1:
        raise ValueError("schedule base must be >= 1")
    blocks = []
    done = 0
    k = 1
    while done < n_total:
        length = min(base * 4 ** (k - 1), n_total - done)
        blocks.append((k, 2.0 ** -(k + 3), length))
        done += length
        k += 1
    return blocks


def doubling_wrapper(structure, G, base, n_total, seed, adversary, log_stages=None,
                     cover="range", budget=DEFAULT_GRID_BUDGET):
    """Restart the strategy on blocks of growing length and shrinking epsilon.

    Each (block, type) pair is one cell of stages. ``cumulative_regret`` is
    the largest ``(N/n)(sup_x W(x, mubar) - rhobar)`` over all cells so far,
    with ``n`` the total stage count; ``aggregate_regret`` is the sum over
    cells. ``block_regret`` is the sum over the types of the current block,
    normalised by the block's stage count. Block ends are always logged.
    If a block's grid would exceed the budget the schedule stops there and
    the trace metadata says so.
    """
    if not isinstance(G, Evaluation):
        G = FunctionEvaluation(G)
    rng, rng_adv, rng_nature = spawn_rngs(seed, 3)
    adversary.reset(rng_adv)
    history = PublicHistory(structure.n_actions, structure.n_outcomes)
    blocks = doubling_schedule(base, n_total)
    stages = log_schedule(n_total) if log_stages is None else set(log_stages)
    W = WorstCase(structure)
    meta = {"run": "doubling", "seed": seed, "adversary": adversary.describe(),
            "base": base, "n_total": n_total, "evaluation": G.name,
            "blocks": [[k, eps, length] for k, eps, length in blocks], "truncated_at_block": None}
    trace = MetricTrace(meta, ["cumulative_regret", "aggregate_regret", "block_regret",
                               "max_type_regret", "block", "epsilon", "n_types", "block_end"])
    # sum and max over the cells of finished blocks of N * (sup W - rhobar)
    closed_sum = 0.0
    closed_max = -math.inf
    t = 0
    for k, eps, length in blocks:
        try:
            br = build_br_grid(structure, G, eps, cover=cover, seed=seed + k, budget=budget)
        except GridBudgetExceeded:
            meta["truncated_at_block"] = k
            break
        state = PMState(br)
        for step in range(1, length + 1):
            j = adversary.act(history)
            _, i, _ = state.step(j, rng, rng_nature)
            history.record(i, j)
            t += 1
            end = step == length
            if t in stages or end:
                per_type = _block_regret_sums(state, W)
                open_sum = float(per_type.sum())
                cell_max = max(closed_max, float(per_type.max()))
                trace.append(t, cumulative_regret=cell_max / t,
                             aggregate_regret=(closed_sum + open_sum) / t,
                             block_regret=open_sum / state.stage,
                             max_type_regret=float(per_type.max()) / state.stage,
                             block=k, epsilon=eps, n_types=len(br), block_end=float(end))
        per_type = _block_regret_sums(state, W)
        closed_sum += float(per_type.sum())
        closed_max = max(closed_max, float(per_type.max()))
    return trace


def _block_regret_sums(state, W):
    # N(l) * (sup_x W(x, mubar(l)) - rhobar(l)) for every used type
    flags = state.true_flags()
    used = state.used()
    return np.array([state.counts[l] * W.sup(flags[l]) - state.payoff_sums[l] for l in used])

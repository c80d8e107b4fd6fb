"""Internal-regret minimisation by approaching the nonpositive orthant.

The player keeps the matrix of cumulative internal regrets and at every
stage plays an invariant probability of its positive part.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg.lapack import dgesv
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import EmptyHistory, NotNonnegative, OutcomeOutOfRange
from .trace import MetricTrace, log_schedule

PIVOT_TOL = 1e-11
# systems up to this size are solved by the compiled elimination below;
# larger ones go to LAPACK, whose blocked kernels win there
SMALL_SYSTEM = 32
POWER_ITERATIONS = 10**4
POWER_DAMPING = 0.99


def instant_regret(i, u):
    """Regret matrix of one stage: row ``i`` holds ``u[j] - u[i]``, others are 0."""
    u = np.asarray(u, dtype=float)
    R = np.zeros((u.size, u.size))
    R[i] = u - u[i]
    return R


@dataclass(frozen=True)
class InvariantProbability:
    distribution: np.ndarray
    residual: float


def invariant_residual(A, lam):
    """Max over i of |sum_j lam_j a_ji - lam_i sum_j a_ij| (diagonal ignored)."""
    off = np.array(A, dtype=float)
    np.fill_diagonal(off, 0.0)
    return float(np.max(np.abs(lam @ off - lam * off.sum(axis=1))))


def _stochastic_matrix(off):
    # off: nonnegative with zero diagonal; kappa = largest off-diagonal row mass
    rows = off.sum(axis=1)
    kappa = rows.max()
    M = off / kappa
    M.flat[:: M.shape[0] + 1] = 1.0 - rows / kappa
    return M


@njit(cache=True)
def _eliminate(Q, rhs):
    # Gaussian elimination with partial pivoting on Q x = rhs, in place; the
    # second return value is the smallest pivot magnitude
    c = Q.shape[0]
    smallest = np.inf
    for k in range(c):
        p = k
        for r in range(k + 1, c):
            if abs(Q[r, k]) > abs(Q[p, k]):
                p = r
        if p != k:
            for col in range(c):
                Q[k, col], Q[p, col] = Q[p, col], Q[k, col]
            rhs[k], rhs[p] = rhs[p], rhs[k]
        piv = Q[k, k]
        smallest = min(smallest, abs(piv))
        if piv == 0.0:
            return rhs, 0.0
        for r in range(k + 1, c):
            f = Q[r, k] / piv
            if f != 0.0:
                for col in range(k, c):
                    Q[r, col] -= f * Q[k, col]
                rhs[r] -= f * rhs[k]
    for k in range(c - 1, -1, -1):
        acc = rhs[k]
        for col in range(k + 1, c):
            acc -= Q[k, col] * rhs[col]
        rhs[k] = acc / Q[k, k]
    return rhs, smallest


@njit(cache=True)
def _balance_law(A):
    # Invariant law of a nonnegative matrix through the linear system
    # M^T lam = lam, sum(lam) = 1, with M = off / kappa plus the remaining
    # mass on the diagonal. Returns (lam, status): status 1 solved, 0 zero
    # matrix, -1 singular or not a probability.
    c = A.shape[0]
    rows = np.zeros(c)
    for i in range(c):
        for j in range(c):
            if i != j:
                rows[i] += A[i, j]
    kappa = rows.max()
    lam = np.full(c, 1.0 / c)
    if not kappa > 0:
        return lam, 0
    Q = np.empty((c, c))
    for i in range(c):
        for j in range(c):
            Q[i, j] = A[j, i] / kappa if i != j else -rows[i] / kappa
    Q[c - 1, :] = 1.0
    rhs = np.zeros(c)
    rhs[c - 1] = 1.0
    x, smallest = _eliminate(Q, rhs)
    if not smallest >= PIVOT_TOL or not x.min() >= -1e-9:  # also rejects NaN
        return lam, -1
    x = np.maximum(x, 0.0)
    return x / x.sum(), 1


def _solve_balance(Q):
    # Q holds M^T - I with its last row replaced by ones; None when singular
    c = Q.shape[0]
    rhs = np.zeros(c)
    rhs[-1] = 1.0
    if c <= SMALL_SYSTEM:
        lam, smallest = _eliminate(np.array(Q, dtype=float), rhs)
    else:
        lu, _, lam, info = dgesv(Q, rhs)
        smallest = np.abs(lu.flat[:: c + 1]).min() if info == 0 else 0.0
    if not smallest >= PIVOT_TOL or not lam.min() >= -1e-9:  # also rejects NaN
        return None
    lam = np.maximum(lam, 0.0)
    return lam / lam.sum()


def _stationary(M):
    Q = M.T - np.eye(M.shape[0])
    Q[-1, :] = 1.0
    return _solve_balance(Q)


def _closed_classes(M):
    support = M > 0
    np.fill_diagonal(support, False)
    n_comp, labels = connected_components(csr_matrix(support), directed=True,
                                          connection="strong")
    leaves = np.ones(n_comp, dtype=bool)
    src, dst = np.nonzero(support)
    leaves[labels[src][labels[src] != labels[dst]]] = False
    return [np.flatnonzero(labels == k) for k in np.flatnonzero(leaves)]


def _min_norm_invariant(M):
    # Invariant laws of M form the convex hull of the stationary laws of its
    # closed classes; those have disjoint supports, so the minimum-norm
    # element weights class k proportionally to 1 / ||pi_k||^2.
    c = M.shape[0]
    lam = np.zeros(c)
    total = 0.0
    for cls in _closed_classes(M):
        if cls.size == 1:
            pi = np.ones(1)
        else:
            pi = _stationary(M[np.ix_(cls, cls)])
            if pi is None:
                return None
        w = 1.0 / (pi @ pi)
        lam[cls] += w * pi
        total += w
    return lam / total


def _power_iteration(M):
    lazy = POWER_DAMPING * M + (1.0 - POWER_DAMPING) * np.eye(M.shape[0])
    lam = np.full(M.shape[0], 1.0 / M.shape[0])
    for _ in range(POWER_ITERATIONS):
        lam = lam @ lazy
    return lam / lam.sum()


def _invariant_distribution(A):
    # A: nonnegative square matrix; its diagonal is irrelevant to the equation
    A = np.ascontiguousarray(A, dtype=float)
    c = A.shape[0]
    if c <= SMALL_SYSTEM:
        lam, status = _balance_law(A)
        if status >= 0:
            return lam
        off = A.copy()
        np.fill_diagonal(off, 0.0)
    else:
        off = A.copy()
        np.fill_diagonal(off, 0.0)
        rows = off.sum(axis=1)
        kappa = rows.max()
        if not kappa > 0:
            return np.full(c, 1.0 / c)
        # M^T - I for M = off / kappa with the remaining mass on the diagonal
        Q = off.T / kappa
        Q.flat[:: c + 1] = -rows / kappa
        Q[-1, :] = 1.0
        lam = _solve_balance(Q)
        if lam is not None:
            return lam
    M = _stochastic_matrix(off)
    lam = _min_norm_invariant(M)
    if lam is None:
        lam = _power_iteration(M)
    return lam


def invariant_probability(A):
    """Invariant probability of a nonnegative matrix.

    Returns ``lam`` in the simplex with
    ``sum_j lam_j a_ji = lam_i sum_j a_ij`` for all ``i``. The matrix is
    rescaled to a stochastic matrix and solved by Gaussian elimination with
    partial pivoting. When several invariant laws exist the minimum-norm one
    is returned, which is the uniform law for the zero matrix.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if np.any(A < 0):
        raise NotNonnegative("matrix not nonnegative")
    lam = _invariant_distribution(A)
    return InvariantProbability(lam, invariant_residual(A, lam))


class RegretEngine:
    """Internally consistent player over ``n_actions`` actions.

    Outcome vectors ``u`` give the payoff of every action at a stage and must
    satisfy ``max|u| <= bound``. The engine is mutable: :meth:`update`
    advances it one stage in place.
    """

    def __init__(self, n_actions, bound=1.0):
        if n_actions < 1:
            raise ValueError("n_actions must be >= 1")
        if not bound > 0:
            raise ValueError("bound must be > 0")
        self.n_actions = n_actions
        self.bound = float(bound)
        self.stage = 0
        self.cumulative = np.zeros((n_actions, n_actions))
        self.counts = np.zeros(n_actions, dtype=np.int64)
        self.outcome_sums = np.zeros((n_actions, n_actions))
        self._strategy = None

    def strategy(self):
        """Mixed action for the next stage (uniform before any history)."""
        if self._strategy is None:
            if self.stage == 0:
                lam = np.full(self.n_actions, 1.0 / self.n_actions)
            else:
                # the invariant law is scale free, so the cumulative matrix
                # stands in for the average
                lam = _invariant_distribution(np.maximum(self.cumulative, 0.0))
            self._strategy = lam
        return self._strategy

    def update(self, i, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_actions,):
            raise ValueError(f"outcome must have shape ({self.n_actions},)")
        if max(u.max(), -u.min()) > self.bound * (1 + 1e-12):
            raise OutcomeOutOfRange(
                f"outcome out of range: max|u|={np.max(np.abs(u)):.6g} > bound {self.bound:.6g}"
            )
        self.cumulative[i] += u - u[i]
        self.counts[i] += 1
        self.outcome_sums[i] += u
        self.stage += 1
        self._strategy = None
        return self

    def average_regret(self):
        if self.stage == 0:
            raise EmptyHistory("empty history")
        return self.cumulative / self.stage

    def max_positive_regret(self):
        """Largest entry of the average regret matrix, clipped below at 0."""
        if self.stage == 0:
            raise EmptyHistory("empty history")
        return max(float(self.cumulative.max()) / self.stage, 0.0)

    def copy(self):
        other = RegretEngine(self.n_actions, self.bound)
        other.stage = self.stage
        other.cumulative = self.cumulative.copy()
        other.counts = self.counts.copy()
        other.outcome_sums = self.outcome_sums.copy()
        return other


def sample_index(p, rng):
    """Inverse-CDF draw from ``p`` using one ``rng.random()`` call.

    Zero-mass entries are never returned: a quantile of 0 yields the first
    index with positive mass.
    """
    c = p.cumsum()
    k = int(c.searchsorted(rng.random() * c[-1], side="right"))
    return min(k, p.size - 1)


def run_internal_regret(n_actions, outcomes, n, seed, log_stages=None, on_play=None):
    """Play the engine against a fixed stream of outcome vectors.

    ``outcomes`` is either an ``(n, n_actions)`` array or a callable
    ``outcomes(stage, rng) -> u`` evaluated before the stage's action is
    revealed; ``on_play(i)`` is then called with the action played. Returns a
    :class:`~calapproach.trace.MetricTrace` with ``max_positive_regret`` and
    its ``sqrt(n)``-scaled version.
    """
    rng = np.random.default_rng(seed)
    engine = RegretEngine(n_actions)
    stages = log_schedule(n) if log_stages is None else set(log_stages)
    trace = MetricTrace({"run": "internal-regret", "seed": seed, "n_actions": n_actions},
                        ["max_positive_regret", "scaled_regret"])
    table = None if callable(outcomes) else np.asarray(outcomes, dtype=float)
    for t in range(1, n + 1):
        i = sample_index(engine.strategy(), rng)
        u = table[t - 1] if table is not None else outcomes(t, rng)
        engine.update(i, u)
        if on_play is not None:
            on_play(i)
        if t in stages:
            r = engine.max_positive_regret()
            trace.append(t, max_positive_regret=r, scaled_regret=r * np.sqrt(t))
    return trace

import numpy as np
import pytest

from calapproach.errors import EmptyHistory, NotNonnegative, OutcomeOutOfRange
from calapproach.regret import (
    RegretEngine,
    instant_regret,
    invariant_probability,
    invariant_residual,
    run_internal_regret,
    sample_index,
)


def power_oracle(A, iterations=200_000, tol=1e-15):
    # lazy random walk on the normalised chain, iterated to a fixed point
    A = np.array(A, dtype=float)
    np.fill_diagonal(A, 0.0)
    rows = A.sum(axis=1)
    kappa = rows.max()
    M = A / kappa + np.diag(1 - rows / kappa)
    P = 0.5 * (M + np.eye(len(A)))
    lam = np.full(len(A), 1 / len(A))
    for _ in range(iterations):
        nxt = lam @ P
        if np.abs(nxt - lam).max() < tol:
            break
        lam = nxt
    return nxt / nxt.sum()


def test_instant_regret_examples():
    R = instant_regret(0, [0.5, -0.5])
    assert R.tolist() == [[0.0, -1.0], [0.0, 0.0]]
    assert not instant_regret(1, [0.7, 0.7, 0.7]).any()
    R = instant_regret(1, [1.0, 0.0, -1.0])
    assert R.tolist() == [[0, 0, 0], [1, 0, -1], [0, 0, 0]]


def test_invariant_two_by_two():
    res = invariant_probability([[0, 2], [1, 0]])
    assert np.allclose(res.distribution, [1 / 3, 2 / 3], atol=1e-12)
    assert np.allclose(res.distribution, power_oracle([[0, 2], [1, 0]]), atol=1e-10)
    assert res.residual <= 1e-12


def test_invariant_zero_matrix_is_uniform():
    assert np.allclose(invariant_probability(np.zeros((4, 4))).distribution, 0.25)


def test_invariant_symmetric(rng):
    for _ in range(20):
        B = rng.random((5, 5))
        A = B + B.T
        res = invariant_probability(A)
        assert res.residual <= 1e-9 * np.abs(A).sum(axis=1).max()
        assert invariant_residual(A, np.full(5, 0.2)) <= 1e-12


def test_invariant_rejects_negative():
    with pytest.raises(NotNonnegative, match="not nonnegative"):
        invariant_probability([[0, -1], [1, 0]])
    with pytest.raises(ValueError):
        invariant_probability(np.zeros((2, 3)))


def test_invariant_random_against_oracle(rng):
    for _ in range(50):
        A = rng.random((6, 6)) * (rng.random((6, 6)) < 0.7)
        A += np.roll(np.eye(6), 1, axis=1)  # keep it irreducible
        lam = invariant_probability(A).distribution
        assert np.allclose(lam, power_oracle(A), atol=1e-9)


def test_invariant_reducible_minimum_norm():
    # two closed classes {0, 1} and {2}, transient state 3
    A = np.array([[0, 1, 0, 0],
                  [1, 0, 0, 0],
                  [0, 0, 0, 0],
                  [1, 0, 1, 0]], dtype=float)
    res = invariant_probability(A)
    # class laws (1/2, 1/2) and (1); weights 1/||pi||^2 = 2 and 1
    assert np.allclose(res.distribution, [1 / 3, 1 / 3, 1 / 3, 0.0], atol=1e-12)
    assert res.residual <= 1e-12
    # minimum norm over the segment between the two extreme invariant laws
    t = np.linspace(0, 1, 100001)
    laws = np.outer(t, [0.5, 0.5, 0, 0]) + np.outer(1 - t, [0, 0, 1, 0])
    best = laws[np.argmin(np.sum(laws**2, axis=1))]
    assert np.allclose(res.distribution, best, atol=1e-5)


def test_invariant_diagonal_is_ignored(rng):
    A = rng.random((4, 4))
    B = A.copy()
    np.fill_diagonal(B, 100.0)
    assert np.allclose(invariant_probability(A).distribution,
                       invariant_probability(B).distribution, atol=1e-12)


def test_engine_starts_uniform():
    assert np.allclose(RegretEngine(3).strategy(), 1 / 3)


def test_engine_nonpositive_regret_is_uniform():
    e = RegretEngine(2)
    e.update(0, [0.5, -0.5])  # regret of moving 0 -> 1 is -1
    assert np.allclose(e.strategy(), [0.5, 0.5])


def test_engine_scale_invariance():
    e = RegretEngine(2, bound=10.0)
    e.cumulative = np.array([[0.0, 2.0], [1.0, 0.0]])
    e.stage = 7
    assert np.allclose(e.strategy(), [1 / 3, 2 / 3], atol=1e-10)


def test_engine_update_examples():
    e = RegretEngine(2)
    e.update(0, [0.5, -0.5])
    assert e.average_regret()[0].tolist() == [0.0, -1.0]
    e.update(0, [-0.5, 0.5])
    assert not e.average_regret().any()
    e = RegretEngine(2)
    for _ in range(5):
        e.update(1, [0.1, 0.2])
    assert e.counts.tolist() == [0, 5]


def test_engine_bound():
    e = RegretEngine(2, bound=1.0)
    with pytest.raises(OutcomeOutOfRange, match="out of range"):
        e.update(0, [1.5, 0.0])
    with pytest.raises(ValueError):
        e.update(0, [0.1, 0.2, 0.3])


def test_max_positive_regret():
    e = RegretEngine(2)
    with pytest.raises(EmptyHistory):
        e.max_positive_regret()
    e.update(0, [0.5, -0.5])
    assert e.max_positive_regret() == 0.0
    e = RegretEngine(3)
    e.update(2, [0.3, 0.0, 0.0])
    assert e.max_positive_regret() == pytest.approx(0.3)


def test_engine_matches_batch_recomputation(rng):
    n, c = 1000, 4
    e = RegretEngine(c)
    actions, outcomes = [], []
    for _ in range(n):
        i = sample_index(e.strategy(), rng)
        u = rng.uniform(-1, 1, c)
        e.update(i, u)
        actions.append(i)
        outcomes.append(u)
    actions = np.array(actions)
    outcomes = np.array(outcomes)
    batch = np.zeros((c, c))
    for i in range(c):
        sel = outcomes[actions == i]
        if len(sel):
            ubar = sel.mean(axis=0)
            batch[i] = len(sel) / n * (ubar - ubar[i])
    assert np.allclose(e.average_regret(), batch, atol=1e-9)
    assert np.all(np.diag(e.average_regret()) == 0)
    assert e.counts.sum() == n
    assert e.max_positive_regret() == pytest.approx(max(batch.max(), 0.0), abs=1e-9)


def test_engine_100_steps_brute_force(rng):
    e = RegretEngine(3)
    hist = []
    for _ in range(100):
        i = int(rng.integers(3))
        u = rng.uniform(-1, 1, 3)
        e.update(i, u)
        hist.append((i, u))
    brute = max(max(sum(u[j] - u[i] for (i, u) in hist if i == a) / 100
                    for j in range(3)) for a in range(3))
    assert e.max_positive_regret() == pytest.approx(max(brute, 0.0), abs=1e-9)


def test_strategy_satisfies_invariant_equation(rng):
    e = RegretEngine(5)
    for _ in range(300):
        e.update(sample_index(e.strategy(), rng), rng.uniform(-1, 1, 5))
        A = np.maximum(e.average_regret(), 0)
        assert invariant_residual(A, e.strategy()) <= 1e-9 * max(A.sum(axis=1).max(), 1e-300)


class _Stub:
    def __init__(self, q):
        self.q = q

    def random(self):
        return self.q


def test_sample_index_contract():
    p = np.array([0.0, 0.3, 0.0, 0.7])
    assert sample_index(p, _Stub(0.0)) == 1
    assert sample_index(p, _Stub(0.2999)) == 1
    assert sample_index(p, _Stub(0.31)) == 3
    assert sample_index(p, _Stub(0.999999)) == 3


def test_run_internal_regret_deterministic():
    U = np.random.default_rng(0).uniform(-1, 1, (500, 3))
    a = run_internal_regret(3, U, 500, seed=4)
    b = run_internal_regret(3, U, 500, seed=4)
    assert a == b
    assert a.stages[0] == 1 and a.stages[-1] == 500

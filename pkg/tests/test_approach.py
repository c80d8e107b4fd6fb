import numpy as np
import pytest

from calapproach.adversaries import IID, Constant
from calapproach.approach import (
    BlackwellPlayer,
    VectorPayoffGame,
    blackwell_step,
    build_best_response_table,
    expected_payoff,
    halfspace_reduction,
    interval_halfspaces,
    run_blackwell,
    run_calibrated_approach,
    run_halfspace,
    separation_matrix,
    solve_matrix_game,
    solve_matrix_game_lp,
    verify_table,
)
from calapproach.errors import NotApproachable, SeparationFailed
from calapproach.simplex import (
    Halfspaces,
    ball_target,
    box_target,
    negative_orthant,
    point_target,
    simplex_grid,
    whole_space,
)


def test_game_radius():
    g = VectorPayoffGame(np.arange(12.0).reshape(2, 3, 2))
    assert g.shape == (2, 3, 2)
    assert g.bound == pytest.approx(10.0**2 + 11.0**2)
    with pytest.raises(ValueError):
        VectorPayoffGame([[np.inf, 0.0], [0.0, 0.0]])


def test_expected_payoff_vertices(rng):
    g = VectorPayoffGame(rng.normal(size=(3, 4, 2)))
    for i in range(3):
        for j in range(4):
            assert np.allclose(expected_payoff(g, np.eye(3)[i], np.eye(4)[j]), g.payoffs[i, j])


def test_expected_payoff_symmetric(pm_game):
    assert expected_payoff(pm_game, [0.5, 0.5], [0.5, 0.5]) == pytest.approx([0.0])


def test_expected_payoff_shape_mismatch(pm_game):
    with pytest.raises(ValueError):
        expected_payoff(pm_game, [1.0, 0.0, 0.0], [0.5, 0.5])


def test_expected_payoff_monte_carlo(rng):
    g = VectorPayoffGame(rng.normal(size=(3, 4, 2)))
    x, y = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(4))
    n = 10**6
    draws = g.payoffs[rng.choice(3, n, p=x), rng.choice(4, n, p=y)]
    se = draws.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(draws.mean(axis=0) - expected_payoff(g, x, y)) <= 3 * se)


def test_matrix_game_solvers_agree(rng):
    for _ in range(20):
        G = rng.uniform(-1, 1, (4, 5))
        mw, lp = solve_matrix_game(G), solve_matrix_game_lp(G)
        assert lp.gap <= 1e-8
        assert mw.upper >= lp.upper - 1e-8
        assert mw.upper - lp.upper <= 0.05
        assert np.max(mw.x @ G) == pytest.approx(mw.upper, abs=1e-12)


def test_blackwell_step_inside_is_uniform(pm_game):
    assert np.allclose(blackwell_step(pm_game, point_target([0.0]), [0.0]), 0.5)


def test_blackwell_step_pm_game(pm_game):
    x = blackwell_step(pm_game, point_target([0.0]), [1.0])
    # oracle: fine grid search for the minimax of g(i, j) = rho(i, j)
    grid = np.linspace(0, 1, 100001)
    worst = np.maximum(2 * grid - 1, 1 - 2 * grid)
    assert x[0] == pytest.approx(grid[np.argmin(worst)], abs=1e-3)
    tol = 1e-3 * 1.0 * np.sqrt(pm_game.bound)
    assert np.max(x @ separation_matrix(pm_game, np.array([1.0]), np.array([0.0]))) <= tol


def test_blackwell_step_whole_space(pm_game):
    x = blackwell_step(pm_game, whole_space(1), [0.7])
    assert np.allclose(x, 0.5)


def test_blackwell_step_not_b_set():
    # the payoff is always 1; {0} cannot be approached
    g = VectorPayoffGame(np.ones((2, 2)))
    with pytest.raises(SeparationFailed, match="separation failed"):
        blackwell_step(g, point_target([0.0]), [0.5])


def test_blackwell_certificate_per_step(rng):
    g = VectorPayoffGame(rng.uniform(-1, 1, (3, 3, 2)))
    target = ball_target([0.0, 0.0], 0.2)
    player = BlackwellPlayer(g, target)
    for _ in range(30):
        z = rng.uniform(-1, 1, 2)
        try:
            x = player.step(z)
        except SeparationFailed:
            continue
        if target.distance(z) > 1e-9:
            p = target.project(z)
            assert np.max(x @ separation_matrix(g, z, p)) <= player.last_tolerance


def test_run_blackwell_bound(pm_game):
    tr = run_blackwell(pm_game, point_target([0.0]), IID([0.5, 0.5]), 10**4, seed=1)
    assert tr.last("distance") <= 2 * np.sqrt(4 * pm_game.bound / 10**4)


def test_run_blackwell_whole_space(pm_game):
    tr = run_blackwell(pm_game, whole_space(1), Constant(0), 200, seed=0)
    assert np.all(tr.column("distance") == 0)


def test_run_blackwell_deterministic(pm_game):
    a = run_blackwell(pm_game, point_target([0.0]), IID([0.3, 0.7]), 500, seed=9)
    b = run_blackwell(pm_game, point_target([0.0]), IID([0.3, 0.7]), 500, seed=9)
    assert a == b


def test_table_pm_game_zero(pm_game):
    # response mesh 0.2 gives m = 8, so (1/2, 1/2) is a grid point
    t = build_best_response_table(pm_game, point_target([0.0]), 0.4, 0.2)
    assert np.allclose(t.responses, 0.5)
    assert np.allclose(t.distances, 0.0)
    assert verify_table(pm_game, point_target([0.0]), t) == 0.0


def test_table_pm_game_one(pm_game):
    with pytest.raises(NotApproachable) as exc:
        build_best_response_table(pm_game, point_target([1.0]), 0.2, 0.2)
    w = exc.value.witness
    assert np.allclose(w.y, [0.5, 0.5])
    assert w.distance == pytest.approx(1.0, abs=1e-9)
    assert w.threshold == pytest.approx(0.1)


def test_table_large_target(rng):
    g = VectorPayoffGame(rng.uniform(-1, 1, (3, 2, 2)))
    target = box_target([-1, -1], [1, 1])
    t = build_best_response_table(g, target, 0.1, 0.3)
    assert np.all(t.distances == 0)


def test_table_recheck_independent(rng):
    g = VectorPayoffGame(rng.uniform(-1, 1, (3, 3, 1)))
    target = box_target([-0.3], [0.3])
    try:
        t = build_best_response_table(g, target, 0.2, 0.25)
    except NotApproachable:
        pytest.skip("random game not approachable")
    for x, y in zip(t.responses, t.forecasts.points):
        v = np.einsum("i,j,ijd->d", x, y, g.payoffs)
        assert target.distance(v) <= 0.1 + 1e-12


def test_calibrated_single_stage(pm_game):
    target = point_target([0.0])
    t = build_best_response_table(pm_game, target, 0.2, 0.2)
    tr = run_calibrated_approach(pm_game, target, t, Constant(0), 1, seed=0)
    assert len(tr) == 1
    assert tr.last("distance") == pytest.approx(1.0)


def test_calibrated_decomposition(pm_game):
    target = point_target([0.0])
    t = build_best_response_table(pm_game, target, 0.2, 0.2)
    tr = run_calibrated_approach(pm_game, target, t, IID([0.3, 0.7]), 3000, seed=2)
    assert np.all(tr.column("distance") <= tr.column("decomposition_bound") + 1e-12)


def test_calibrated_constant_concentrates(pm_game):
    target = point_target([0.0])
    t = build_best_response_table(pm_game, target, 0.2, 0.2)
    tr = run_calibrated_approach(pm_game, target, t, Constant(1), 10**5, seed=0,
                                 log_stages=[10**5])
    nearest = int(np.argmin(np.linalg.norm(t.forecasts.points - [0.0, 1.0], axis=1)))
    assert tr.last(f"freq_{nearest}") >= 0.95


def test_halfspace_identity(pm_game):
    aux = halfspace_reduction(pm_game, [[1.0]], [0.0])
    assert np.array_equal(aux.payoffs, pm_game.payoffs)


def test_halfspace_four_sides(pm_game):
    normals = [[1.0], [-1.0], [2.0], [-2.0]]
    aux = halfspace_reduction(pm_game, normals, [0.1, 0.1, 0.2, 0.2])
    assert aux.dim == 4


def test_interval_halfspaces():
    normals, offsets = interval_halfspaces([0.0], 0.1)
    C = Halfspaces(normals, offsets)
    assert C.distance([0.5]) == pytest.approx(0.4)
    assert C.distance([0.05]) == 0.0


def test_halfspace_end_to_end(pm_game):
    normals, offsets = interval_halfspaces([0.0], 0.1)
    tr = run_halfspace(pm_game, normals, offsets, IID([0.3, 0.7]), 20_000, seed=3)
    assert tr.last("distance") <= 0.05
    assert tr.last("aux_distance") >= 0
    target = negative_orthant(2)
    assert target.distance([0.0, -1.0]) == 0.0


def test_forecast_grid_for_table():
    assert len(simplex_grid(2, 0.2)) == 9

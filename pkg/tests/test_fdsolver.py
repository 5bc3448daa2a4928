import math

import numpy as np
import pytest

from wavecauchy.errors import CFLError, DivergenceError
from wavecauchy.fdsolver import (
    FDGrid,
    boundary_normal_derivative,
    laplacian,
    run,
    solve_rectangle,
)
from wavecauchy.synthdata import Domain, RectMode, exact_trace, make_ground_truth, trace_l2_distance

RECT = Domain.rectangle(1.0, 0.5)


def _solve(gt, n, t_max=0.5, cfl=0.5, dom=RECT, **kw):
    grid = FDGrid.for_domain(dom, n, t_max, cfl)
    return grid, solve_rectangle(dom, lambda X, Y: gt.u(X, Y, 0.0), lambda X, Y: gt.u_t(X, Y, 0.0), grid, **kw)


def test_cfl_violation_raises():
    with pytest.raises(CFLError):
        FDGrid(10, 10, 0.1, 0.1, 0.1, 5)
    FDGrid(10, 10, 0.1, 0.1, 0.05, 5)


def test_grid_for_domain():
    g = FDGrid.for_domain(RECT, 16, 1.0, 0.5)
    assert (g.nx, g.ny) == (16, 8)
    assert g.dx == g.dy == pytest.approx(1 / 16)
    assert g.t_steps * g.dt == pytest.approx(1.0)
    assert g.dt <= 0.5 * g.dx
    with pytest.raises(ValueError):
        FDGrid.for_domain(Domain.rectangle(1.0, 0.3), 16, 1.0)


def test_laplacian_exact_for_quadratics():
    g = FDGrid(8, 6, 0.25, 0.25, 0.1, 1)
    X, Y = np.meshgrid(g.nodes_x, g.nodes_y, indexing="ij")
    lap = laplacian(X**2 + 3 * Y**2, g)
    np.testing.assert_allclose(lap[1:-1, 1:-1], 8.0)
    assert np.all(lap[0] == 0) and np.all(lap[:, -1] == 0)


def test_boundary_derivative_order_matches_domain_sampling():
    g = FDGrid(8, 4, 0.125, 0.125, 0.05, 1)
    X, Y = np.meshgrid(g.nodes_x, g.nodes_y, indexing="ij")
    # u = x (1 - x) y (0.5 - y): quadratic in each direction, so one-sided
    # second-order differences are exact
    u = X * (1 - X) * Y * (0.5 - Y)
    got = boundary_normal_derivative(u, g)
    bs = RECT.boundary(2 * (g.nx + g.ny))
    gx = (1 - 2 * bs.x) * bs.y * (0.5 - bs.y)
    gy = bs.x * (1 - bs.x) * (0.5 - 2 * bs.y)
    want = np.where(bs.weights > 0, gx * bs.nu_x + gy * bs.nu_y, 0.0)
    np.testing.assert_allclose(got, want, atol=1e-14)


def test_trace_converges_at_second_order():
    gt = make_ground_truth(RECT, [RectMode(1, 2)])
    errs = []
    for n in (16, 32, 64):
        _, res = _solve(gt, n)
        tr = res.trace
        ex = exact_trace(gt, RECT, tr.n_b, tr.t_min, tr.t_max, tr.n_t)
        errs.append(trace_l2_distance(tr, ex))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(3.0 <= q <= 5.0 for q in ratios), ratios


def test_energy_is_conserved():
    gt = make_ground_truth(RECT, [RectMode(1, 1), RectMode(2, 1, 0.5, 0.3)])
    _, res = _solve(gt, 32, t_max=2.0)
    e = res.energy
    assert (e.max() - e.min()) / e.mean() < 1e-3


def test_solution_and_snapshots(rng):
    gt = make_ground_truth(RECT, [RectMode(1, 1)])
    grid, res = _solve(gt, 64, t_max=0.5, snapshot_every=8)
    snaps, trace = res
    assert trace.provenance == "fd"
    assert trace.t_min == pytest.approx(-0.5) and trace.t_max == pytest.approx(0.5)
    assert np.all(np.diff(res.times) > 0)
    assert 0.0 in res.times
    X, Y = np.meshgrid(grid.nodes_x, grid.nodes_y, indexing="ij")
    for t, u in zip(res.times, snaps):
        assert np.max(np.abs(u - gt.u(X, Y, t))) < 5e-3


def test_time_reversal_symmetry():
    # a pure cosine mode is even in time; the backward run must mirror the forward one
    gt = make_ground_truth(RECT, [RectMode(2, 1)])
    _, res = _solve(gt, 32)
    v = res.trace.values
    np.testing.assert_allclose(v, v[:, ::-1], atol=1e-12 * np.max(np.abs(v)))


def test_zero_data_gives_zero_trace():
    grid = FDGrid.for_domain(RECT, 16, 0.5)
    res = solve_rectangle(RECT, 0.0, 0.0, grid)
    assert not np.any(res.trace.values)


def test_leapfrog_is_time_reversible():
    gt = make_ground_truth(RECT, [RectMode(1, 1), RectMode(3, 2, 0.4)])
    grid = FDGrid.for_domain(RECT, 32, 1.0)
    X, Y = np.meshgrid(grid.nodes_x, grid.nodes_y, indexing="ij")
    u0 = gt.u(X, Y, 0.0)
    u1 = gt.u(X, Y, grid.dt)
    n = 200
    prev, cur = run(u0, u1, grid, n)
    # swapping the two levels runs the same recursion backwards
    back_prev, back_cur = run(cur, prev, grid, n)
    assert np.max(np.abs(back_cur - u0)) <= 1e-10 * np.max(np.abs(u0))


def test_bad_inputs():
    gt = make_ground_truth(RECT, [RectMode(1, 1)])
    grid = FDGrid.for_domain(RECT, 16, 0.5)
    with pytest.raises(ValueError):
        solve_rectangle(Domain.disk(1.0), 0.0, 0.0, grid)
    with pytest.raises(ValueError):
        solve_rectangle(RECT, lambda X, Y: np.ones_like(X), 0.0, grid)
    with pytest.raises(ValueError):
        solve_rectangle(RECT, np.zeros((3, 3)), 0.0, grid)
    uneven = FDGrid(16, 10, 1 / 16, 0.05, 0.02, 5)
    with pytest.raises(ValueError):
        solve_rectangle(RECT, lambda X, Y: gt.u(X, Y, 0.0), 0.0, uneven)


def test_divergence_is_reported():
    g = FDGrid(8, 8, 0.125, 0.125, 0.05, 4)
    u = np.zeros((9, 9))
    u[4, 4] = math.inf
    with pytest.raises(DivergenceError) as info:
        run(u, u, g, 3)
    assert info.value.step == 1

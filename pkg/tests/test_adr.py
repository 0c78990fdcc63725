import numpy as np
import pytest

from embgp.errors import DomainError
from embgp.kernels import SquaredExpKernel, UniformMeasure, nystrom_basis
from embgp.models import (AdrGrid, adr_embedded_model, adr_solve, adr_truth_field,
                          generate_data, sample_field_nodes)
from embgp.models.adr import TWO_PI, solve_adr_pde, truth_source_spatial


def manufactured_error(n):
    grid = AdrGrid(n, n)
    field = solve_adr_pde(grid, lambda x, t: np.exp(-t) * truth_source_spatial(x))
    exact = np.exp(-grid.t_nodes)[:, None] * np.sin(TWO_PI * grid.x_nodes)[None, :]
    return np.abs(field - exact).max()


def test_manufactured_solution_accuracy():
    assert manufactured_error(200) < 1e-3


def test_second_order_convergence():
    errs = [manufactured_error(n) for n in (50, 100, 200)]
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    for order in orders:
        assert abs(order - 2.0) < 0.2


def test_homogeneous_problem_stays_zero():
    grid = AdrGrid(64, 64)
    field = solve_adr_pde(grid, lambda x, t: np.zeros_like(x), init=lambda x: np.zeros_like(x))
    assert np.abs(field).max() < 1e-12


def _setup(nx=100, m=10, n_obs=50, seed=3):
    grid = AdrGrid(nx, nx)
    basis = nystrom_basis(SquaredExpKernel(100.0, 0.6), UniformMeasure(0.0, 1.0), m, order=64)
    xs, ts = sample_field_nodes(grid, n_obs, seed=seed)
    model = adr_embedded_model(grid, basis, np.column_stack([xs, ts]))
    return grid, basis, model, xs, ts


def test_embedded_zero_weights_match_plain_solve():
    grid, _, model, xs, ts = _setup()
    lam = 5.9
    direct = adr_solve(grid, lam)
    ix = np.rint(xs * grid.nx).astype(int)
    it = np.rint(ts * grid.nt).astype(int)
    pred = model.predict(np.array([lam]), np.zeros(model.m))
    assert np.abs(pred - direct[it, ix]).max() < 1e-12


def test_embedded_superposition_exact():
    _, _, model, _, _ = _setup()
    rng = np.random.default_rng(0)
    lam = np.array([6.1])
    w1, w2 = rng.normal(size=model.m), rng.normal(size=model.m)
    lhs = (model.predict(lam, w1 + w2) - model.predict(lam, w1)
           - model.predict(lam, w2) + model.predict(lam, np.zeros(model.m)))
    assert np.abs(lhs).max() < 1e-12


def test_embedded_weight_gradient_matches_finite_difference():
    grid, basis, model, xs, ts = _setup(n_obs=20)
    lam = np.array([6.0])
    rng = np.random.default_rng(1)
    w = rng.normal(0, 1, model.m)
    jac = model.grad_weights(lam, w)
    # finite differences of a fresh PDE solve with perturbed source
    ix = np.rint(xs * grid.nx).astype(int)
    it = np.rint(ts * grid.nt).astype(int)
    eps = 1e-6
    for j in (0, 3, model.m - 1):
        up, dn = w.copy(), w.copy()
        up[j] += eps
        dn[j] -= eps
        phi_j = basis.eigenfunction(j)
        f_up = adr_solve(grid, lam[0], delta=lambda x: basis.phi(x) @ up)
        f_dn = adr_solve(grid, lam[0], delta=lambda x: basis.phi(x) @ dn)
        fd = (f_up[it, ix] - f_dn[it, ix]) / (2 * eps)
        assert np.abs(jac[:, j] - fd).max() < 1e-6


def test_embedded_lambda_gradient_matches_finite_difference():
    _, _, model, _, _ = _setup(n_obs=30)
    w = np.random.default_rng(2).normal(size=model.m)
    lam = np.array([5.7])
    eps = 1e-6
    fd = (model.predict(lam + eps, w) - model.predict(lam - eps, w)) / (2 * eps)
    g = model.grad_lambda(lam, w)[..., 0]
    assert np.abs(g - fd).max() / (1 + np.abs(fd).max()) < 1e-6


def test_obs_points_must_lie_on_grid():
    grid = AdrGrid(50, 50)
    basis = nystrom_basis(SquaredExpKernel(1.0, 0.6), UniformMeasure(0.0, 1.0), 4, order=32)
    with pytest.raises(DomainError):
        adr_embedded_model(grid, basis, np.array([[0.505, 0.5]]))
    with pytest.raises(DomainError):
        adr_embedded_model(grid, basis, np.array([[1.2, 0.5]]))


def test_truth_field_lookup_and_data():
    grid = AdrGrid(64, 64)
    field, truth = adr_truth_field(grid)
    xs, ts = sample_field_nodes(grid, 40, seed=7)
    data = generate_data(truth, xs, 0.02, seed=8, times=ts)
    ix = np.rint(xs * grid.nx).astype(int)
    it = np.rint(ts * grid.nt).astype(int)
    assert np.abs(data.y - field[it, ix]).std() < 0.03
    assert np.abs((data.y - field[it, ix])).max() < 0.1

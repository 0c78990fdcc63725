import numpy as np
import pytest

from embgp.errors import DegenerateConstraints, ModelOverflow
from embgp.gp import Dataset, GaussianDensity
from embgp.kernels import (EmpiricalMeasure, QuadratureRule, SquaredExpKernel, UniformMeasure,
                           kernel_eval, nystrom_basis)
from embgp.models import linear_pair, sinexp_pair
from embgp.models.algebraic import EmbeddedModel
from embgp.ogp import (additive_ogp_kernel, adr_rogp_constraints, conditioned_weight_basis,
                       constraint_coefficients, logp_kernel, rogp_constraints)

K03 = SquaredExpKernel(1.0, 0.3)
U11 = UniformMeasure(-1.0, 1.0)
U22 = UniformMeasure(-2.0, 2.0)
LAM_LIN = np.array([1.0, -2.0])
LAM_SE = np.array([-4.79, 5.84])


def _normalized_coeff(model, lam, rule, mode):
    c = constraint_coefficients(model, lam, rule.nodes, mode)
    return c / np.sqrt(rule.weights @ (c * c))


def test_degenerate_constraints_zero_gradient_component():
    _, lin = linear_pair()
    bad = EmbeddedModel("bad", 2, "additive", lin.value,
                        lambda x, l, d: np.stack([np.ones_like(x), np.zeros_like(x)], -1),
                        lin.grad_delta)
    with pytest.raises(DegenerateConstraints) as exc:
        additive_ogp_kernel(K03, bad, LAM_LIN, U11)
    assert exc.value.null_direction is not None


def test_degenerate_constraints_collinear_gradients():
    _, lin = linear_pair()
    colinear = EmbeddedModel("col", 2, "additive", lin.value,
                             lambda x, l, d: np.stack([x, 2.0 * x], -1),
                             lin.grad_delta)
    with pytest.raises(DegenerateConstraints):
        additive_ogp_kernel(K03, colinear, LAM_LIN, U11)


def test_additive_ogp_sampled_path_orthogonality():
    _, lin = linear_pair()
    mk = additive_ogp_kernel(K03, lin, LAM_LIN, U11)
    basis = nystrom_basis(K03, U11, 20, order=128, kernel_fn=mk)
    rule = U11.quadrature(256)
    chat = _normalized_coeff(lin, LAM_LIN, rule, "additive")
    rng = np.random.default_rng(7)
    paths = (rng.standard_normal((200, 20)) * np.sqrt(basis.eigenvalues)) @ basis.phi(rule.nodes).T
    constraint_vals = (paths * rule.weights) @ chat
    assert np.abs(constraint_vals).max() < 1e-6 * K03.signal_std


def test_logp_sampled_path_orthogonality_sinexp():
    _, model = sinexp_pair("S2")
    mk = logp_kernel(K03, model, LAM_SE, U22)
    basis = nystrom_basis(K03, U22, 40, order=160, kernel_fn=mk)
    rule = U22.quadrature(256)
    chat = _normalized_coeff(model, LAM_SE, rule, "linearized")
    rng = np.random.default_rng(8)
    paths = (rng.standard_normal((200, 40)) * np.sqrt(basis.eigenvalues)) @ basis.phi(rule.nodes).T
    constraint_vals = (paths * rule.weights) @ chat
    assert np.abs(constraint_vals).max() < 1e-6 * K03.signal_std


def test_quadrature_doubling_converges_constraint_gram():
    _, lin = linear_pair()
    h64 = additive_ogp_kernel(K03, lin, LAM_LIN, U11, order=64).H
    h128 = additive_ogp_kernel(K03, lin, LAM_LIN, U11, order=128).H
    scale = np.abs(h64).max()
    assert np.abs(h128 - h64).max() < 1e-10 * scale


def test_logp_reduces_to_additive_for_additive_embedding():
    _, lin = linear_pair()
    mk_add = additive_ogp_kernel(K03, lin, LAM_LIN, U11)
    mk_lin = logp_kernel(K03, lin, LAM_LIN, U11)
    nodes = U11.quadrature(64).nodes
    a = mk_add(nodes[:, None], nodes[None, :])
    b = mk_lin(nodes[:, None], nodes[None, :])
    assert np.abs(a - b).max() < 1e-12


def test_modified_kernel_variance_never_exceeds_base():
    _, lin = linear_pair()
    mk = additive_ogp_kernel(K03, lin, LAM_LIN, U11)
    xs = np.linspace(-1.5, 1.5, 31)
    assert np.all(mk(xs, xs) <= kernel_eval(K03, xs, xs) + 1e-12)


def test_modified_kernel_gram_stays_psd():
    _, model = sinexp_pair("S2")
    mk = logp_kernel(K03, model, LAM_SE, U22)
    rule = U22.quadrature(64)
    gram = mk(rule.nodes[:, None], rule.nodes[None, :])
    sq = np.sqrt(rule.weights)
    vals = np.linalg.eigvalsh(sq[:, None] * gram * sq[None, :])
    assert vals.min() >= -1e-8 * K03.signal_std**2


def test_constraint_covariance_annihilated_in_distribution():
    _, lin = linear_pair()
    mk = additive_ogp_kernel(K03, lin, LAM_LIN, U11)
    rule = U11.quadrature(256)
    c = constraint_coefficients(lin, LAM_LIN, rule.nodes, "additive")
    wc = rule.weights[:, None] * c
    gram_mod = mk(rule.nodes[:, None], rule.nodes[None, :])
    cov = wc.T @ gram_mod @ wc
    assert np.abs(cov).max() < 1e-8 * K03.signal_std**2


def test_posterior_decorrelation_linear_additive():
    # with data drawn from the constraint measure, the exact joint posterior
    # loses its parameter/weight cross-correlation at the 1/sqrt(N) level
    from embgp.calibrate import PosteriorSpec, PriorSpec, embedded_linear_posterior
    from embgp.models import generate_data

    truth, lin = linear_pair()
    n = 500
    rng = np.random.default_rng(12)
    xs = rng.uniform(-1, 1, n)
    data = generate_data(truth, xs, 0.2, seed=13)
    mk = additive_ogp_kernel(K03, lin, LAM_LIN, U11)
    basis = nystrom_basis(K03, U11, 20, order=128, kernel_fn=mk)
    prior = PriorSpec(GaussianDensity([-2.0, 4.0], np.eye(2)),
                      GaussianDensity(np.zeros(20), np.diag(basis.eigenvalues)))
    post = embedded_linear_posterior(PosteriorSpec(lin, basis, data, prior))
    cross = post.cov[:2, 2:]
    scale = np.sqrt(np.outer(np.diag(post.cov)[:2], np.diag(post.cov)[2:]))
    assert np.abs(cross / scale).max() < 5.0 / np.sqrt(n)


def test_rogp_zero_weights_give_zero_constraints():
    _, model = sinexp_pair("S2")
    basis = nystrom_basis(K03, U22, 10, order=64)
    con = rogp_constraints(model, LAM_SE, basis, U22)
    assert np.array_equal(con(np.zeros(10)), np.zeros(2))


def test_rogp_linear_moment_matrix_hand_oracle():
    # additive embedding: R(w) = M w with M from the weighted basis moments
    _, lin = linear_pair()
    basis = nystrom_basis(K03, U11, 3, order=64)
    con = rogp_constraints(lin, LAM_LIN, basis, U11, normalize=False)
    rule = con.rule
    phi = basis.phi(rule.nodes)
    grads = lin.grad_lambda(rule.nodes, LAM_LIN, 0.0)
    m_hand = np.empty((2, 3))
    for k in range(2):
        for j in range(3):
            m_hand[k, j] = np.sum(rule.weights * grads[:, k] * phi[:, j])
    assert np.abs(con.moment - m_hand).max() < 1e-12
    rng = np.random.default_rng(3)
    w = rng.standard_normal(3)
    assert np.abs(con(w) - m_hand @ w).max() < 1e-12


def test_rogp_matches_linearized_functionals_for_small_weights():
    _, model = sinexp_pair("S2")
    basis = nystrom_basis(K03, U22, 12, order=96)
    con = rogp_constraints(model, LAM_SE, basis, U22)
    rule = con.rule
    chat = con.grad_nodes  # already normalized gradient weight
    dd = model.grad_delta(rule.nodes, LAM_SE, 0.0)
    lin_map = (chat * (rule.weights * dd)[:, None]).T @ basis.phi(rule.nodes)
    rng = np.random.default_rng(5)
    w = rng.standard_normal(12)
    w = 0.01 * w / np.linalg.norm(w)
    exact = con(w)
    linear = lin_map @ w
    assert np.abs(exact - linear).max() < 0.05 * np.abs(linear).max()


def test_rogp_overflow_propagates():
    _, model = sinexp_pair("S2")
    basis = nystrom_basis(K03, U22, 5, order=64)
    con = rogp_constraints(model, np.array([0.0, 300.0]), basis, U22)
    with pytest.raises(ModelOverflow):
        con(np.full(5, 200.0))


def test_rogp_gradient_matches_finite_difference():
    _, model = sinexp_pair("S2")
    basis = nystrom_basis(K03, U22, 8, order=64)
    con = rogp_constraints(model, LAM_SE, basis, U22)
    rng = np.random.default_rng(6)
    w = 0.1 * rng.standard_normal(8)
    g = con.grad(w)
    eps = 1e-7
    for j in range(8):
        up, dn = w.copy(), w.copy()
        up[j] += eps
        dn[j] -= eps
        fd = (con(up) - con(dn)) / (2 * eps)
        assert np.abs(g[:, j] - fd).max() < 1e-5 * (1 + np.abs(fd).max())


def test_conditioned_basis_matches_modified_kernel_route():
    _, model = sinexp_pair("S2")
    mk = logp_kernel(K03, model, LAM_SE, U22)
    via_kernel = nystrom_basis(K03, U22, 40, order=160, kernel_fn=mk)
    base = nystrom_basis(K03, U22, 39, order=1600)
    via_weights = conditioned_weight_basis(base, model, LAM_SE)
    xs = np.linspace(-2, 2, 41)
    assert np.abs(via_kernel.prior_variance(xs) - via_weights.prior_variance(xs)).max() < 1e-7
    rule = U22.quadrature(256)
    p = via_weights.phi(rule.nodes)
    gram = (p * rule.weights[:, None]).T @ p
    assert np.abs(gram - np.eye(via_weights.m)).max() < 1e-6


def test_empirical_measure_constraint_matches_data_sum():
    _, model = sinexp_pair("S2")
    xd = np.linspace(-2, 2, 17)
    basis = nystrom_basis(K03, U22, 6, order=64)
    con = rogp_constraints(model, LAM_SE, basis, EmpiricalMeasure(xd), normalize=False)
    w = np.full(6, 0.05)
    delta = basis.phi(xd) @ w
    by_hand = np.mean((model.value(xd, LAM_SE, delta) - model.plain_value(xd, LAM_SE))[:, None]
                      * model.grad_lambda(xd, LAM_SE, 0.0), axis=0)
    assert np.abs(con(w) - by_hand).max() < 1e-12 * np.abs(by_hand).max()


def test_adr_constraint_is_linear_and_matches_trapezoid():
    from embgp.models import AdrGrid, adr_embedded_model, sample_field_nodes
    from embgp.models.adr import SRC_COEFF, solve_adr_pde

    grid = AdrGrid(40, 40)
    basis = nystrom_basis(SquaredExpKernel(10.0, 0.6), UniformMeasure(0.0, 1.0), 4, order=32)
    xs, ts = sample_field_nodes(grid, 10, seed=1)
    model = adr_embedded_model(grid, basis, np.column_stack([xs, ts]))
    lam_star = 6.0
    con = adr_rogp_constraints(model, lam_star, normalize=False)
    rng = np.random.default_rng(2)
    w = rng.standard_normal(4)
    # independent trapezoid evaluation of the field inner product
    zero = lambda x: np.zeros_like(x)
    u_w = solve_adr_pde(grid, lambda x, t: np.exp(-t) * (basis.phi(x) @ w), init=zero)
    du = solve_adr_pde(grid, lambda x, t: np.exp(-t) * SRC_COEFF * x * np.cos(lam_star * x),
                       init=zero)
    wx = np.full(grid.nx + 1, grid.dx)
    wx[[0, -1]] *= 0.5
    wt = np.full(grid.nt + 1, grid.dt)
    wt[[0, -1]] *= 0.5
    expect = np.sum((wt[:, None] * wx[None, :]) * u_w * du)
    assert abs(con(w)[0] - expect) < 1e-12 * max(1.0, abs(expect))
    # linearity
    w2 = rng.standard_normal(4)
    assert np.isclose(con(w + w2)[0], con(w)[0] + con(w2)[0], atol=1e-14)

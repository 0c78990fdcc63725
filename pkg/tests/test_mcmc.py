import numpy as np
import pytest

from embgp.errors import BadInit, DegenerateChain, StuckChain
from embgp.kernels import SquaredExpKernel, UniformMeasure, nystrom_basis
from embgp.mcmc import BandTable, ChainSet, SamplerSettings, ess, pushforward_bands, sample
from embgp.models import linear_pair


class StdNormal:
    def __init__(self, dim):
        self.dim = dim

    def logpdf(self, theta):
        theta = np.asarray(theta)
        return -0.5 * np.sum(theta * theta, axis=-1)


def test_known_gaussian_target_moments():
    target = StdNormal(5)
    chain = sample(target, np.zeros(5),
                   SamplerSettings(n_steps=5000, burn_in=1000, n_walkers=64, seed=1))
    flat = chain.flat()
    n_eff = min(ess(chain, i) for i in range(5))
    se = 1.0 / np.sqrt(n_eff)
    assert np.abs(flat.mean(axis=0)).max() < 3 * se
    assert np.abs(np.cov(flat.T) - np.eye(5)).max() < 0.05


def test_linear_ogp_closed_form_target():
    from embgp.calibrate import PosteriorSpec, PriorSpec, embedded_linear_posterior
    from embgp.gp import GaussianDensity
    from embgp.models import generate_data
    from embgp.ogp import additive_ogp_kernel

    truth, lin = linear_pair()
    xs = np.random.default_rng(21).uniform(-1, 1, 20)
    data = generate_data(truth, xs, 0.2, seed=22)
    kernel = SquaredExpKernel(1.0, 0.3)
    mk = additive_ogp_kernel(kernel, lin, np.array([2.0, -1.0]), UniformMeasure(-1, 1))
    basis = nystrom_basis(kernel, UniformMeasure(-1, 1), 12, order=64, kernel_fn=mk)
    prior = PriorSpec(GaussianDensity([-2.0, 4.0], np.eye(2)),
                      GaussianDensity(np.zeros(12), np.diag(basis.eigenvalues)))
    spec = PosteriorSpec(lin, basis, data, prior)
    closed = embedded_linear_posterior(spec)
    chain = sample(spec, closed.mean,
                   SamplerSettings(n_steps=16000, burn_in=4000, n_walkers=64, seed=5,
                                   initial_scale=0.05))
    flat = chain.flat()
    n_eff = min(ess(chain, i) for i in range(14))
    se = closed.std() / np.sqrt(n_eff)
    assert np.all(np.abs(flat.mean(axis=0) - closed.mean) < 3.5 * se)
    cov_err = np.linalg.norm(np.cov(flat.T) - closed.cov) / np.linalg.norm(closed.cov)
    assert cov_err < 0.05


def test_determinism_bit_identical():
    target = StdNormal(3)
    settings = SamplerSettings(n_steps=500, burn_in=100, n_walkers=16, seed=9)
    a = sample(target, np.zeros(3), settings)
    b = sample(target, np.zeros(3), settings)
    assert np.array_equal(a.draws, b.draws)
    assert a.acceptance == b.acceptance


def test_rwm_sampler_targets_gaussian():
    target = StdNormal(2)
    chain = sample(target, np.zeros(2),
                   SamplerSettings(algorithm="rwm", n_steps=60000, burn_in=10000, seed=4,
                                   initial_scale=0.5))
    flat = chain.flat()
    assert np.abs(flat.mean(axis=0)).max() < 0.1
    assert np.abs(np.cov(flat.T) - np.eye(2)).max() < 0.12
    assert 0.1 < chain.acceptance < 0.6


def test_affine_invariance_exact_transport():
    # the stretch move is exactly affine-equivariant: transforming the target
    # and the initial cloud maps the chain through the same transform
    target = StdNormal(3)
    amat = np.array([[2.0, 0.3, 0.0], [0.0, 0.5, -0.2], [0.1, 0.0, 1.5]])
    bvec = np.array([1.0, -2.0, 0.5])

    class Transformed:
        def logpdf(self, theta):
            return target.logpdf(np.asarray(theta) @ amat.T + bvec)

    rng = np.random.default_rng(0)
    cloud = rng.standard_normal((16, 3))
    settings = SamplerSettings(n_steps=400, burn_in=0, n_walkers=16, seed=11)
    base = sample(target, cloud @ amat.T + bvec, settings)
    trans = sample(Transformed(), cloud, settings)
    mapped = trans.draws @ amat.T + bvec
    # identical accept decisions; trajectories agree up to accumulated roundoff
    assert np.abs(mapped - base.draws).max() < 1e-5
    assert np.abs(mapped.mean(axis=(0, 1)) - base.draws.mean(axis=(0, 1))).max() < 1e-7


def test_bad_init_raises():
    class HalfLine:
        def logpdf(self, theta):
            theta = np.atleast_2d(theta)
            out = np.where(theta[..., 0] > 0, -0.5 * np.sum(theta**2, axis=-1), -np.inf)
            return out if out.size > 1 else float(out)

    with pytest.raises(BadInit):
        sample(HalfLine(), np.array([-5.0, 0.0]),
               SamplerSettings(n_steps=100, burn_in=10, n_walkers=8, seed=1))


def test_stuck_chain_raises():
    cloud = np.random.default_rng(7).standard_normal((8, 2))
    allowed = {tuple(row) for row in cloud}

    class Atoms:
        def logpdf(self, theta):
            theta = np.atleast_2d(np.asarray(theta))
            out = np.array([0.0 if tuple(row) in allowed else -np.inf for row in theta])
            return out if out.size > 1 else float(out[0])

    with pytest.raises(StuckChain):
        sample(Atoms(), cloud,
               SamplerSettings(n_steps=5000, burn_in=0, n_walkers=8, seed=2))


def test_ess_iid_oracle():
    rng = np.random.default_rng(0)
    chain = ChainSet(rng.standard_normal((10000, 1, 1)), np.zeros((10000, 1)), 0.5, 0, 0)
    assert 0.8e4 < ess(chain, 0) < 1.2e4


def test_ess_ar1_oracle():
    rng = np.random.default_rng(1)
    n, rho = 100000, 0.9
    eps = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = eps[0]
    for i in range(1, n):
        x[i] = rho * x[i - 1] + eps[i]
    chain = ChainSet(x.reshape(-1, 1, 1), np.zeros((n, 1)), 0.5, 0, 0)
    analytic = n * (1 - rho) / (1 + rho)
    assert abs(ess(chain, 0) / analytic - 1.0) < 0.2


def test_ess_ar1_family_consistency():
    rng = np.random.default_rng(2)
    n = 60000
    for rho in (0.0, 0.5, 0.9):
        eps = rng.standard_normal(n)
        x = np.empty(n)
        x[0] = eps[0]
        for i in range(1, n):
            x[i] = rho * x[i - 1] + eps[i]
        chain = ChainSet(x.reshape(-1, 1, 1), np.zeros((n, 1)), 0.5, 0, 0)
        analytic = n * (1 - rho) / (1 + rho)
        assert abs(ess(chain, 0) / analytic - 1.0) < 0.2


def test_ess_duplicated_draws_halve():
    rng = np.random.default_rng(3)
    base = rng.standard_normal((5000, 1, 1))
    dup = ChainSet(np.repeat(base, 2, axis=0), np.zeros((10000, 1)), 0.5, 0, 0)
    assert abs(ess(dup, 0) / 5000.0 - 1.0) < 0.2


def test_ess_degenerate_chain():
    chain = ChainSet(np.ones((500, 2, 1)), np.zeros((500, 2)), 0.5, 0, 0)
    with pytest.raises(DegenerateChain):
        ess(chain, 0)


def test_ess_requires_enough_draws():
    chain = ChainSet(np.random.default_rng(0).standard_normal((50, 1, 1)),
                     np.zeros((50, 1)), 0.5, 0, 0)
    with pytest.raises(ValueError):
        ess(chain, 0)


def _band_setup():
    _, lin = linear_pair()
    basis = nystrom_basis(SquaredExpKernel(1.0, 0.3), UniformMeasure(-1, 1), 6, order=48)
    return lin, basis


def test_bands_point_mass_sample():
    lin, basis = _band_setup()
    theta = np.concatenate([[1.0, 2.0], 0.1 * np.ones(6)])
    grid = np.linspace(-1, 1, 9)
    table = pushforward_bands(theta, lin, basis, grid, noise_std=0.3)
    assert np.abs(table.pfp_f_std).max() == 0.0
    assert np.abs(table.pfp_g_std).max() == 0.0
    assert np.allclose(table.pp_std, 0.3)


def test_bands_pp_equals_pfp_g_plus_noise():
    lin, basis = _band_setup()
    rng = np.random.default_rng(5)
    thetas = np.column_stack([rng.normal(1, 0.5, 200), rng.normal(2, 0.5, 200),
                              rng.normal(0, 0.2, (200, 6)).reshape(200, 6)])
    grid = np.linspace(-1, 1, 11)
    table = pushforward_bands(thetas, lin, basis, grid, noise_std=0.25)
    assert np.all(table.pp_std >= table.pfp_g_std)
    assert np.abs(table.pp_std**2 - table.pfp_g_std**2 - 0.25**2).max() < 1e-12


def test_bands_skip_overflowing_samples():
    from embgp.models import sinexp_pair

    _, model = sinexp_pair("S2")
    basis = nystrom_basis(SquaredExpKernel(1.0, 0.3), UniformMeasure(-2, 2), 4, order=32)
    thetas = np.array([[0.0, 1.0, 0, 0, 0, 0], [0.0, 500.0, 0, 0, 0, 0]])
    table = pushforward_bands(thetas, model, basis, np.linspace(-2, 2, 5), noise_std=1.0)
    assert table.skipped_samples == 1

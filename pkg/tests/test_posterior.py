import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, optimize, special

from pdbal.errors import ContractViolation, ImpossibleEvidenceError, InitializationError
from pdbal.likelihoods import FiniteModelClass, LinearGaussian, Logistic, Poisson
from pdbal.posterior import (
    Dataset,
    FinitePosterior,
    GaussianPosterior,
    MCMCConfig,
    PosteriorEnsemble,
    chains_of,
    conjugate_linear_gaussian,
    effective_sample_size,
    finite_posterior_update,
    metropolis_glm_posterior,
    posterior_predictive,
    sample_gaussian_posterior,
)


def test_conjugate_empty_is_prior():
    post = conjugate_linear_gaussian(Dataset.empty(3), 0.5, prior_var=2.0)
    assert np.array_equal(post.mean, np.zeros(3))
    assert np.allclose(post.covariance, 2 * np.eye(3), atol=1e-15)


def test_conjugate_rank_one():
    c = 1.7
    post = conjugate_linear_gaussian(Dataset([[1.0, 0, 0]], [c]), 1.0, 1.0)
    assert np.allclose(post.mean, [c / 2, 0, 0], atol=1e-15)
    assert np.allclose(post.covariance, np.diag([0.5, 1, 1]), atol=1e-15)


def test_conjugate_matches_optimizer(rng):
    X = rng.normal(size=(20, 3))
    y = X @ np.array([1.0, -2.0, 0.5]) + rng.normal(size=20) * 0.3
    sigma2, v = 0.09, 1.0

    def neg_log_post(t):
        r = y - X @ t
        return 0.5 * r @ r / sigma2 + 0.5 * t @ t / v

    opt = optimize.minimize(neg_log_post, np.zeros(3), method="BFGS", options={"gtol": 1e-10})
    post = conjugate_linear_gaussian(Dataset(X, y), sigma2, v)
    assert np.max(np.abs(post.mean - opt.x)) < 1e-6


def test_conjugate_validation():
    with pytest.raises(ContractViolation):
        conjugate_linear_gaussian(Dataset.empty(2), 0.0)
    with pytest.raises(ContractViolation):
        GaussianPosterior(np.zeros(2), np.array([[1.0, 0.5], [0.4, 1.0]]))
    with pytest.raises(ContractViolation):
        Dataset(np.zeros((2, 3)), np.zeros(3))


@given(st.integers(0, 2**31))
def test_conjugate_covariance_shrinks(seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(6, 3))
    y = r.normal(size=6)
    prev = conjugate_linear_gaussian(Dataset.empty(3), 0.5).covariance
    for i in range(1, 7):
        cov = conjugate_linear_gaussian(Dataset(X[:i], y[:i]), 0.5).covariance
        assert np.linalg.eigvalsh(prev - cov).min() >= -1e-12
        prev = cov


def test_sample_gaussian_posterior(rng):
    post = GaussianPosterior(np.zeros(3), np.eye(3))
    ens = sample_gaussian_posterior(post, 10**5, rng)
    assert np.max(np.abs(np.cov(ens.samples.T) - np.eye(3))) < 0.05
    a = sample_gaussian_posterior(post, 3, np.random.default_rng(1))
    b = sample_gaussian_posterior(post, 3, np.random.default_rng(1))
    assert a.m == 3 and a.provenance == "Exact"
    assert np.array_equal(a.samples, b.samples)
    with pytest.raises(ContractViolation):
        sample_gaussian_posterior(post, 2, rng)


def _ess_se(ens):
    ess = effective_sample_size(chains_of(ens))
    return ens.samples.std(axis=0) / np.sqrt(ess)


def test_metropolis_matches_conjugate(rng):
    d, n = 10, 20
    X = rng.normal(size=(n, d))
    fam = LinearGaussian(0.5)
    y = X @ rng.normal(size=d) + rng.normal(size=n) * math.sqrt(0.5)
    data = Dataset(X, y)
    exact = conjugate_linear_gaussian(data, 0.5, 1.0)
    ens = metropolis_glm_posterior(fam, data, 3000, MCMCConfig(), np.random.default_rng(5))
    assert ens.m == 3000 and ens.provenance == "MCMC"
    se = _ess_se(ens)
    assert np.all(np.abs(ens.samples.mean(axis=0) - exact.mean) <= 5 * se)
    ratio = ens.samples.var(axis=0) / np.diag(exact.covariance)
    assert np.all(np.abs(ratio - 1) <= 0.1)


def test_metropolis_logistic_one_observation():
    x, y = 1.5, 1
    w = lambda t: math.exp(-0.5 * t * t) * special.expit(x * t)  # noqa: E731
    z = integrate.quad(w, -12, 12, epsabs=1e-13)[0]
    mean = integrate.quad(lambda t: t * w(t), -12, 12, epsabs=1e-13)[0] / z
    ens = metropolis_glm_posterior(Logistic(), Dataset([[x]], [y]), 3000, MCMCConfig(), np.random.default_rng(2))
    se = _ess_se(ens)[0]
    assert abs(ens.samples[:, 0].mean() - mean) <= 3 * se


def test_metropolis_empty_dataset_is_prior():
    ens = metropolis_glm_posterior(Poisson(), Dataset.empty(4), 3000, MCMCConfig(), np.random.default_rng(9))
    se = _ess_se(ens)
    assert np.all(np.abs(ens.samples.mean(axis=0)) <= 5 * se)
    assert np.all(np.abs(ens.samples.var(axis=0) - 1) <= 0.15)


def test_metropolis_deterministic_and_healthy(rng):
    X = rng.normal(size=(15, 10))
    y = (X @ rng.normal(size=10) > 0).astype(float)
    data = Dataset(X, y)
    a = metropolis_glm_posterior(Logistic(), data, 300, MCMCConfig(), np.random.default_rng(4))
    b = metropolis_glm_posterior(Logistic(), data, 300, MCMCConfig(), np.random.default_rng(4))
    assert np.array_equal(a.samples, b.samples)
    assert 0.1 <= a.info["rw_accept"] <= 0.5


def test_metropolis_errors(rng):
    with pytest.raises(ContractViolation):
        metropolis_glm_posterior(Logistic(), Dataset.empty(2), 2, MCMCConfig(), rng)
    with pytest.raises(ContractViolation):
        metropolis_glm_posterior(Logistic(), Dataset([[1.0, 0.0]], [0.5]), 10, MCMCConfig(), rng)
    with pytest.raises(ContractViolation):
        MCMCConfig(thin=0)


def test_metropolis_initialization_error(rng):
    class Broken(Logistic):
        def log_density_eta(self, eta, y):
            return np.full(np.shape(eta), np.nan)

    with pytest.raises(InitializationError):
        metropolis_glm_posterior(Broken(), Dataset([[1.0]], [1]), 10, MCMCConfig(), rng)


# -- finite classes --------------------------------------------------------------


def _three_param_class():
    table = np.array(
        [
            [[0.2, 0.8], [0.5, 0.5]],
            [[0.6, 0.4], [0.5, 0.5]],
            [[0.9, 0.1], [0.5, 0.5]],
        ]
    )
    return FiniteModelClass(table, np.array([0.5, 0.3, 0.2]))


def test_finite_update_hand_computed():
    post = finite_posterior_update(FinitePosterior.prior(_three_param_class()), 0, 1)
    unnorm = np.array([0.5 * 0.8, 0.3 * 0.4, 0.2 * 0.1])
    assert np.allclose(post.weights, unnorm / unnorm.sum(), atol=1e-15)
    assert post.evidence_ratio == pytest.approx(unnorm.sum(), rel=1e-15)


def test_finite_update_uninformative():
    prior = FinitePosterior.prior(_three_param_class())
    post = finite_posterior_update(prior, 1, 0)
    assert np.allclose(post.weights, prior.weights, atol=1e-15)


def test_finite_update_eliminates_inconsistent():
    table = np.array([[[1.0, 0.0]], [[0.0, 1.0]], [[1.0, 0.0]]])
    post = finite_posterior_update(FinitePosterior.prior(FiniteModelClass(table, np.full(3, 1 / 3))), 0, 0)
    assert post.weights[1] == 0
    with pytest.raises(ImpossibleEvidenceError):
        finite_posterior_update(finite_posterior_update(post, 0, 0), 0, 1)


@given(st.integers(0, 2**31))
def test_finite_update_order_invariant(seed):
    r = np.random.default_rng(seed)
    P, X, K = 5, 4, 3
    table = r.dirichlet(np.ones(K), size=(P, X))
    model = FiniteModelClass(table, r.dirichlet(np.ones(P)))
    obs = [(int(r.integers(X)), int(r.integers(K))) for _ in range(6)]
    seq = FinitePosterior.prior(model)
    for x, y in obs:
        seq = finite_posterior_update(seq, x, y)
    batch = model.prior * np.prod([table[:, x, y] for x, y in obs], axis=0)
    assert np.max(np.abs(seq.weights - batch / batch.sum())) <= 1e-12
    perm = [obs[i] for i in r.permutation(len(obs))]
    other = FinitePosterior.prior(model)
    for x, y in perm:
        other = finite_posterior_update(other, x, y)
    assert np.max(np.abs(seq.weights - other.weights)) <= 1e-12


def test_posterior_predictive_cases(rng):
    fam = Logistic()
    th = np.array([[0.7, -0.2]])
    x = np.array([1.0, 2.0])
    assert posterior_predictive(PosteriorEnsemble(th), fam, x, 1) == pytest.approx(special.expit(0.3), rel=1e-14)
    model = _three_param_class()
    half = FinitePosterior(model, np.array([0.5, 0.5, 0.0]))
    assert posterior_predictive(half, model, 0, 1) == pytest.approx(0.6, rel=1e-15)


def test_posterior_predictive_gaussian_limit(rng):
    fam = LinearGaussian(0.4)
    post = GaussianPosterior(np.array([0.3, -0.5]), np.array([[0.5, 0.1], [0.1, 0.3]]))
    x, y = np.array([1.0, 0.5]), 0.2
    exact = posterior_predictive(post, fam, x, y)
    ens = sample_gaussian_posterior(post, 10**5, rng)
    vals = np.exp(fam.log_density(ens.samples, x, y))
    assert abs(posterior_predictive(ens, fam, x, y) - exact) <= 5 * vals.std() / math.sqrt(vals.size)

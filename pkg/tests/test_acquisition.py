import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special, stats

from pdbal.acquisition import (
    CLOSED_FORM,
    SAMPLED_Y,
    AcquisitionConfig,
    ScoreReport,
    dbal_score_deterministic,
    draw_triples,
    eig_score,
    eig_scores,
    normalize_strategy,
    pdbal_score_exact,
    pdbal_score_mc,
    score_pool,
    select_query,
    variance_score,
)
from pdbal.distances import EuclideanScaled, First
from pdbal.errors import ContractViolation
from pdbal.likelihoods import BetaMean, FiniteModelClass, LinearGaussian, Logistic, Poisson
from pdbal.posterior import FinitePosterior, GaussianPosterior, PosteriorEnsemble, sample_finite_posterior


def brute_force_score(weights, table, x, D):
    """Quadruple loop over (t*, t, t', y); written without vectorisation on purpose."""
    n, _, K = table.shape
    total = 0.0
    for s in range(n):
        h = -sum(p * math.log(p) for p in table[s, x] if p > 0)
        for a in range(n):
            for b in range(n):
                for y in range(K):
                    total += (weights[s] * weights[a] * weights[b] * table[s, x, y] * D[a, b]
                              * table[a, x, y] * table[b, x, y] * math.exp(2 * h))
    return total


def random_class(r, P, X, K):
    table = r.dirichlet(np.full(K, 0.7), size=(P, X))
    D = np.triu(r.uniform(size=(P, P)), 1)
    return FiniteModelClass(table, r.dirichlet(np.ones(P))), D + D.T


# -- exact objective -------------------------------------------------------------


def test_exact_score_concentrated_posterior():
    model, D = random_class(np.random.default_rng(0), 4, 2, 3)
    post = FinitePosterior(model, np.array([0, 1.0, 0, 0]))
    assert pdbal_score_exact(post, 0, D) == 0.0


def test_exact_score_no_split_equals_avg_diameter():
    table = np.array([[[1.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]]])
    model = FiniteModelClass(table, np.array([0.4, 0.6]))
    D = np.array([[0.0, 0.7], [0.7, 0.0]])
    post = FinitePosterior.prior(model)
    assert pdbal_score_exact(post, 0, D) == pytest.approx(2 * 0.4 * 0.6 * 0.7, abs=1e-15)
    assert pdbal_score_exact(post, 1, D) == 0.0


def test_exact_score_hand_table():
    table = np.array([[[0.2, 0.3, 0.5]], [[0.6, 0.2, 0.2]], [[0.1, 0.1, 0.8]]])
    model = FiniteModelClass(table, np.array([0.5, 0.25, 0.25]))
    D = np.array([[0, 0.3, 1.0], [0.3, 0, 0.6], [1.0, 0.6, 0]])
    got = pdbal_score_exact(FinitePosterior.prior(model), 0, D)
    assert abs(got - brute_force_score(model.prior, table, 0, D)) <= 1e-14


@given(st.integers(0, 2**31))
def test_exact_score_matches_brute_force(seed):
    r = np.random.default_rng(seed)
    model, D = random_class(r, int(r.integers(2, 6)), 3, int(r.integers(2, 5)))
    for x in range(3):
        ref = brute_force_score(model.prior, model.table, x, D)
        assert pdbal_score_exact(FinitePosterior.prior(model), x, D) == pytest.approx(ref, rel=1e-12, abs=1e-15)


# -- DBAL -------------------------------------------------------------------------


def test_dbal_examples():
    # 4 params, design 0 gives outcomes (0, 0, 1, 1), design 1 is uninformative
    f = np.array([[0, 0], [0, 0], [1, 0], [1, 0]])
    table = np.eye(2)[f]
    w = np.array([0.1, 0.2, 0.3, 0.4])
    model = FiniteModelClass(table, w)
    D = np.array([[0, 1, 0.5, 0.2], [1, 0, 0.4, 0.9], [0.5, 0.4, 0, 0.8], [0.2, 0.9, 0.8, 0]])
    post = FinitePosterior.prior(model)
    avg = float(w @ D @ w)
    assert dbal_score_deterministic(post, 1, D) == pytest.approx(avg, abs=1e-15)
    cell0 = 2 * 0.1 * 0.2 * 1.0
    cell1 = 2 * 0.3 * 0.4 * 0.8
    assert dbal_score_deterministic(post, 0, D) == pytest.approx(max(cell0, cell1), abs=1e-15)


def test_dbal_two_atom_split_and_rejection():
    model = FiniteModelClass(np.eye(2)[[[0], [1]]], np.array([0.5, 0.5]))
    D = np.array([[0, 1.0], [1.0, 0]])
    assert dbal_score_deterministic(FinitePosterior.prior(model), 0, D) == 0
    noisy = FiniteModelClass(np.array([[[0.5, 0.5]], [[1, 0]]]), np.array([0.5, 0.5]))
    with pytest.raises(ContractViolation):
        dbal_score_deterministic(FinitePosterior.prior(noisy), 0, D)


# -- Monte-Carlo PDBAL --------------------------------------------------------------


def test_draw_triples_uniform(rng):
    i, j, k = draw_triples(5, 100000, rng)
    assert np.all((i < j) & (j < k))
    codes = i * 25 + j * 5 + k
    counts = np.unique(codes, return_counts=True)[1]
    assert counts.size == 10
    assert stats.chisquare(counts).pvalue > 1e-4
    with pytest.raises(ContractViolation):
        draw_triples(2, 10, rng)


def test_mc_identical_members_score_zero(rng):
    ens = PosteriorEnsemble(np.tile([0.5, -1.0], (20, 1)))
    cfg = AcquisitionConfig(n_mc=500)
    assert pdbal_score_mc(ens, Logistic(), np.array([1.0, 1.0]), First(), cfg, rng) == 0.0


def test_mc_requires_three_members(rng):
    ens = PosteriorEnsemble(np.ones((2, 2)))
    with pytest.raises(ContractViolation):
        pdbal_score_mc(ens, Logistic(), np.ones(2), First(), AcquisitionConfig(), rng)


def test_mc_path_dispatch(rng):
    ens = PosteriorEnsemble(rng.normal(size=(30, 2)))
    X = rng.normal(size=(4, 2))
    for fam, path in [(LinearGaussian(0.5), CLOSED_FORM), (Logistic(), CLOSED_FORM),
                      (Poisson(), SAMPLED_Y), (BetaMean(), SAMPLED_Y)]:
        rep = score_pool(ens, fam, X, First(), AcquisitionConfig(n_mc=200), seed=1)
        assert rep.path == path
        assert rep.rng_draws_consumed == 600 + (4 * 30 if path == SAMPLED_Y else 0)
    rep = score_pool(ens, Logistic(), X, First(), AcquisitionConfig(n_mc=200, force_sampled=True), seed=1)
    assert rep.path == SAMPLED_Y


def _unbiased_t(model, D, x, weights, r, reruns=200, m=12, n_mc=400, force_sampled=False):
    post = FinitePosterior(model, weights)
    exact = pdbal_score_exact(post, x, D)
    cfg = AcquisitionConfig(n_mc=n_mc, force_sampled=force_sampled)
    vals = []
    for _ in range(reruns):
        ens = sample_finite_posterior(post, m, r)
        vals.append(pdbal_score_mc(ens, model, x, D, cfg, r))
    vals = np.array(vals)
    return (vals.mean() - exact) / (vals.std(ddof=1) / math.sqrt(reruns))


@pytest.mark.parametrize("force_sampled", [False, True])
def test_mc_unbiased_on_finite_classes(force_sampled):
    r = np.random.default_rng(11)
    ts = []
    for _ in range(6):
        model, D = random_class(r, int(r.integers(3, 7)), 2, int(r.integers(2, 6)))
        ts.append(_unbiased_t(model, D, 0, model.prior, r, force_sampled=force_sampled))
    assert sum(abs(t) <= 3 for t in ts) >= 5, ts


def test_sampled_path_agrees_with_closed_form_gaussian(rng):
    fam = LinearGaussian(0.3)
    ens = PosteriorEnsemble(rng.normal(size=(25, 3)))
    x = np.array([0.5, -1.0, 0.2])
    dist = EuclideanScaled(4.0)
    closed = [pdbal_score_mc(ens, fam, x, dist, AcquisitionConfig(n_mc=300), rng) for _ in range(200)]
    sampled = [pdbal_score_mc(ens, fam, x, dist, AcquisitionConfig(n_mc=300, force_sampled=True), rng) for _ in range(200)]
    se = math.sqrt(np.var(sampled, ddof=1) / 200 + np.var(closed, ddof=1) / 200)
    assert abs(np.mean(sampled) - np.mean(closed)) <= 3 * se


@given(st.integers(0, 2**31), st.floats(0.05, 20))
def test_score_scales_with_distance(seed, c):
    r = np.random.default_rng(seed)
    fam = LinearGaussian(0.5)
    ens = PosteriorEnsemble(r.normal(size=(15, 2)))
    X = r.normal(size=(5, 2))
    base = EuclideanScaled(100.0)
    cfg = AcquisitionConfig(n_mc=300)
    a = score_pool(ens, fam, X, base, cfg, seed=3)
    b = score_pool(ens, fam, X, base.scaled(c), cfg, seed=3)
    assert np.allclose(b.scores, c * a.scores, rtol=1e-12, atol=0)
    if np.ptp(a.scores) > 1e-9 * np.max(a.scores):
        assert a.chosen_index == b.chosen_index


def test_score_pool_candidate_order_independent(rng):
    ens = PosteriorEnsemble(rng.normal(size=(20, 3)))
    X = rng.normal(size=(6, 3))
    keys = list(range(6))
    perm = rng.permutation(6)
    cfg = AcquisitionConfig(n_mc=500)
    a = score_pool(ens, Poisson(), X, First(), cfg, seed=5, keys=keys)
    b = score_pool(ens, Poisson(), X[perm], First(), cfg, seed=5, keys=[keys[p] for p in perm])
    assert np.array_equal(a.scores[perm], b.scores)


# -- Variance -----------------------------------------------------------------------


def test_variance_examples():
    x = np.array([1.0, 0.0])
    ens = PosteriorEnsemble(np.tile([0.3, 1.0], (5, 1)))
    assert variance_score(ens, LinearGaussian(0.7), x) == pytest.approx(0.7, abs=1e-15)
    limits = PosteriorEnsemble(np.array([[-800.0, 0.0], [800.0, 0.0]]))
    assert variance_score(limits, Logistic(), x) == pytest.approx(0.25, abs=1e-15)
    any_ens = PosteriorEnsemble(np.random.default_rng(0).normal(size=(7, 2)))
    assert variance_score(any_ens, Logistic(), np.zeros(2)) == pytest.approx(0.25, abs=1e-15)


def test_variance_population_normalisation():
    ens = PosteriorEnsemble(np.array([[0.0], [1.0], [2.0]]))
    fam = LinearGaussian(0.1)
    assert variance_score(ens, fam, np.array([1.0])) == pytest.approx(0.1 + 2 / 3, abs=1e-14)


# -- EIG ------------------------------------------------------------------------------


def test_eig_single_sample_zero():
    x = np.array([0.4, -0.2])
    ens = PosteriorEnsemble(np.array([[1.0, 2.0]]))
    for fam in (Logistic(), Poisson(), LinearGaussian(0.5), BetaMean(5.0)):
        assert abs(eig_score(ens, fam, x)) <= 1e-8


def test_eig_logistic_two_samples():
    mus = np.array([0.2, 0.8])
    ens = PosteriorEnsemble(special.logit(mus)[:, None])
    hb = lambda p: -p * math.log(p) - (1 - p) * math.log(1 - p)  # noqa: E731
    assert eig_score(ens, Logistic(), np.array([1.0])) == pytest.approx(math.log(2) - hb(0.2), abs=1e-14)


def test_eig_gaussian_exact_posterior():
    post = GaussianPosterior(np.array([0.1, 0.4]), np.array([[0.6, 0.2], [0.2, 0.5]]))
    x = np.array([1.0, -0.5])
    fam = LinearGaussian(0.25)
    ref = 0.5 * math.log(1 + x @ post.covariance @ x / 0.25)
    assert eig_score(post, fam, x) == pytest.approx(ref, abs=1e-6)


def test_eig_gaussian_mixture_quadrature(rng):
    means = rng.normal(size=4)
    ens = PosteriorEnsemble(means[:, None])
    fam = LinearGaussian(0.3)
    s = math.sqrt(0.3)
    mix = lambda y: np.mean(stats.norm.pdf(y, means, s))  # noqa: E731
    h = integrate.quad(lambda y: -mix(y) * math.log(mix(y)), -12, 12, epsabs=1e-13, limit=400)[0]
    ref = h - 0.5 * math.log(2 * math.pi * math.e * 0.3)
    assert eig_score(ens, fam, np.array([1.0])) == pytest.approx(ref, abs=1e-9)


def test_eig_beta_and_poisson_against_direct(rng):
    th = rng.normal(size=(5, 1))
    x = np.array([0.8])
    fam = BetaMean(6.0)
    mu = special.expit(th[:, 0] * 0.8)
    a, b = 6 * mu, 6 * (1 - mu)
    mix = lambda y: np.mean(stats.beta.pdf(y, a, b))  # noqa: E731
    h = integrate.quad(lambda y: -mix(y) * math.log(mix(y)) if mix(y) > 0 else 0.0, 0, 1, epsabs=1e-12, limit=400)[0]
    ref = h - np.mean([stats.beta(ai, bi).entropy() for ai, bi in zip(a, b)])
    assert eig_score(PosteriorEnsemble(th), fam, x) == pytest.approx(ref, abs=1e-7)

    rates = np.exp(th[:, 0] * 0.8)
    k = np.arange(300)
    pm = np.mean([stats.poisson.pmf(k, r) for r in rates], axis=0)
    ref = -np.sum(special.xlogy(pm, pm)) - np.mean([-np.sum(special.xlogy(p, p)) for p in (stats.poisson.pmf(k, r) for r in rates)])
    assert eig_score(PosteriorEnsemble(th), Poisson(), x) == pytest.approx(ref, abs=1e-10)


@given(st.integers(0, 2**31))
def test_eig_nonnegative(seed):
    r = np.random.default_rng(seed)
    ens = PosteriorEnsemble(r.normal(size=(6, 2)) * 2)
    X = r.normal(size=(3, 2))
    for fam in (Logistic(), Poisson(), LinearGaussian(0.2), BetaMean(3.0)):
        assert np.all(eig_scores(ens, fam, X, AcquisitionConfig(strategy="EIG")) >= -1e-8)


# -- selection --------------------------------------------------------------------------


def test_select_query_examples(rng):
    c = [0, 1, 2]
    assert select_query(c, [0.3, 0.1, 0.5], "PDBAL") == 1
    assert select_query(c, [0.3, 0.1, 0.5], "EIG") == 2
    assert select_query(c, [0.3, 0.1, 0.5], "Variance") == 2
    assert select_query([0, 1], [0.1, 0.1], "PDBAL") == 0
    assert select_query(c, [0, 0, 0], "Random", rng) in c
    with pytest.raises(ContractViolation):
        select_query(c, [0.1, 0.2], "PDBAL")
    with pytest.raises(ContractViolation):
        select_query([], [], "PDBAL")
    with pytest.raises(ContractViolation):
        select_query(c, [0.1, np.nan, 0.2], "PDBAL")
    with pytest.raises(ContractViolation):
        select_query(c, [0.1, 0.2, 0.3], "Random")


def test_strategy_aliases_and_config():
    assert normalize_strategy("bald") == "EIG"
    assert normalize_strategy("VAR") == "Variance"
    with pytest.raises(ContractViolation):
        normalize_strategy("greedy")
    with pytest.raises(ContractViolation):
        AcquisitionConfig(n_mc=0)
    with pytest.raises(ContractViolation):
        ScoreReport(np.zeros(2), 2, 0, "PDBAL")


def test_score_pool_deterministic(rng):
    ens = PosteriorEnsemble(rng.normal(size=(30, 3)))
    X = rng.normal(size=(8, 3))
    for strategy in ("PDBAL", "Random", "Variance", "EIG"):
        cfg = AcquisitionConfig(strategy=strategy, n_mc=300)
        a = score_pool(ens, Poisson(), X, First(), cfg, seed=7, step=2)
        b = score_pool(ens, Poisson(), X, First(), cfg, seed=7, step=2)
        assert np.array_equal(a.scores, b.scores) and a.chosen_index == b.chosen_index

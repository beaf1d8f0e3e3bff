"""Query scoring and selection.

Four strategies are supported:

``PDBAL``     minimise the entropy-weighted expected surviving distance mass
``Variance``  maximise the posterior predictive variance
``EIG``       maximise the mutual information between outcome and parameter
``Random``    uniform choice

The PDBAL Monte-Carlo estimator averages ``d(t_i, t_j) * K_ijk * e^{2H_k}``
over index triples ``i < j < k`` drawn uniformly with replacement, where
member ``k`` plays the outcome-generating parameter.  ``K_ijk`` is the
closed-form triple kernel when one exists and ``P_i(y_k) P_j(y_k)`` with
``y_k ~ P_k`` otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from . import rng as rngmod
from ._backend import kernels, prepare
from .distances import Distance
from .errors import ContractViolation
from .likelihoods import (
    BetaMean,
    FiniteModelClass,
    GLMFamily,
    LinearGaussian,
    Logistic,
    Poisson,
    binary_entropy,
    sample_categorical,
)
from .posterior import FinitePosterior, GaussianPosterior, PosteriorEnsemble
from .quadrature import adaptive_gauss_legendre

STRATEGIES = ("PDBAL", "Random", "Variance", "EIG")
_ALIASES = {"pdbal": "PDBAL", "random": "Random", "variance": "Variance", "var": "Variance", "eig": "EIG", "bald": "EIG"}

CLOSED_FORM = "closed-form"
SAMPLED_Y = "sampled-y"


def normalize_strategy(name: str) -> str:
    try:
        return _ALIASES[str(name).lower()]
    except KeyError:
        raise ContractViolation(f"unknown strategy {name!r}; expected one of {STRATEGIES}") from None


@dataclass(frozen=True)
class AcquisitionConfig:
    """``n_mc`` triples per pool; ``eig_nodes`` Gauss-Legendre nodes per panel.

    ``force_sampled`` routes PDBAL through the sampled-outcome estimator even
    when a closed-form kernel exists.
    """

    strategy: str = "PDBAL"
    n_mc: int = 10000
    eig_nodes: int = 64
    force_sampled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "strategy", normalize_strategy(self.strategy))
        if int(self.n_mc) < 1:
            raise ContractViolation("n_mc must be >= 1")
        if int(self.eig_nodes) < 2:
            raise ContractViolation("eig_nodes must be >= 2")
        object.__setattr__(self, "n_mc", int(self.n_mc))
        object.__setattr__(self, "eig_nodes", int(self.eig_nodes))

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "n_mc": self.n_mc, "eig_nodes": self.eig_nodes}


@dataclass(frozen=True, eq=False)
class ScoreReport:
    scores: np.ndarray
    chosen_index: int
    rng_draws_consumed: int
    strategy: str
    path: str | None = None

    def __post_init__(self):
        if not 0 <= self.chosen_index < len(self.scores):
            raise ContractViolation("chosen_index outside the candidate range")


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def distance_matrix(dist, n: int | None = None, samples=None) -> np.ndarray:
    """Pairwise distances, from a :class:`Distance` or an explicit table."""
    if isinstance(dist, Distance):
        return dist.matrix(np.arange(n) if samples is None else samples)
    table = np.asarray(dist, dtype=float)
    if table.ndim != 2 or table.shape[0] != table.shape[1]:
        raise ContractViolation("distance table must be square")
    if n is not None and table.shape[0] != n:
        raise ContractViolation(f"distance table has {table.shape[0]} rows, class has {n} parameters")
    if samples is not None:
        idx = np.asarray(samples, dtype=np.int64)
        return table[np.ix_(idx, idx)]
    return table


def draw_triples(m: int, n: int, rng: np.random.Generator):
    """``n`` index triples ``i < j < k`` drawn uniformly with replacement from ``range(m)``."""
    if m < 3:
        raise ContractViolation(f"need at least 3 ensemble members, got {m}")
    i = rng.integers(0, m, n)
    j = rng.integers(0, m - 1, n)
    k = rng.integers(0, m - 2, n)
    j = j + (j >= i)
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    k = k + (k >= lo)
    k = k + (k >= hi)
    trip = np.sort(np.stack([i, j, k], axis=1), axis=1)
    return trip[:, 0].copy(), trip[:, 1].copy(), trip[:, 2].copy()


def _candidate_array(family, candidates):
    if isinstance(family, FiniteModelClass):
        X = np.asarray(candidates, dtype=np.int64).reshape(-1)
        if np.any(X < 0) or np.any(X >= family.n_designs):
            raise ContractViolation("design index outside the class")
        return X
    X = np.asarray(candidates, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise ContractViolation("candidates must be a finite (B, d) array")
    return X


def _member_tables(family: FiniteModelClass, samples, X):
    """Outcome probabilities (B, m, K) and entropies (B, m) of each member at each design."""
    A = np.ascontiguousarray(family.table[np.asarray(samples, dtype=np.int64)][:, X, :].transpose(1, 0, 2))
    return A, special.entr(A).sum(axis=-1)


def _eta(samples, X):
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != X.shape[1]:
        raise ContractViolation(f"candidates have dimension {X.shape[1]}, parameters {samples.shape[-1]}")
    return X @ samples.T


# ---------------------------------------------------------------------------
# PDBAL
# ---------------------------------------------------------------------------


def pdbal_score_exact(post: FinitePosterior, x: int, dist) -> float:
    """Exact objective on a finite class, summing over every (t*, t, t', y)."""
    model = post.model
    D = distance_matrix(dist, model.n_params)
    P = model.table[:, int(x), :]
    w = post.weights
    weight = w * np.exp(2.0 * special.entr(P).sum(axis=1))
    q = weight @ P
    wP = w[:, None] * P
    inner = np.einsum("ik,ij,jk->k", wP, D, wP)
    return float(q @ inner)


def pdbal_scores(ens: PosteriorEnsemble, family, candidates, dist, cfg: AcquisitionConfig,
                 triple_rng: np.random.Generator, candidate_rng=None):
    """PDBAL estimates for every candidate of a pool.

    One set of triples (from ``triple_rng``) is shared by the whole pool.
    ``candidate_rng(b)`` returns the generator for candidate ``b``'s sampled
    outcomes; it is called only on the sampled-outcome path.  Returns
    ``(scores, path, draws)``.
    """
    m = ens.m
    if m < 3:
        raise ContractViolation(f"PDBAL needs an ensemble of at least 3 samples, got {m}")
    X = _candidate_array(family, candidates)
    B = X.shape[0]
    ti, tj, tk = draw_triples(m, cfg.n_mc, triple_rng)
    draws = 3 * cfg.n_mc
    dv = distance_matrix(dist, samples=ens.samples)[ti, tj]
    keep = dv != 0.0
    ti, tj, tk, dv = prepare(ti[keep], tj[keep], tk[keep], dv[keep])
    n_total = cfg.n_mc

    finite = isinstance(family, FiniteModelClass)
    closed = not cfg.force_sampled and (finite or isinstance(family, (LinearGaussian, Logistic)))
    path = CLOSED_FORM if closed else SAMPLED_Y
    if ti.size == 0:
        return np.zeros(B), path, draws

    if finite:
        A, H = _member_tables(family, ens.samples, X)
        (W,) = prepare(np.exp(2.0 * H))
        if closed:
            return kernels.categorical_closed(A, W, ti, tj, tk, dv, n_total), path, draws
        Y = np.empty((B, m), dtype=np.int64)
        for b in range(B):
            Y[b] = sample_categorical(A[b], candidate_rng(b))
        return kernels.categorical_sampled(A, Y, W, ti, tj, tk, dv, n_total), path, draws + B * m

    eta = _eta(ens.samples, X)
    if family.constant_entropy:
        W = np.ones_like(eta)
    else:
        W = np.exp(2.0 * family.entropy_eta(eta))
    eta, W = prepare(eta, W)
    if closed and isinstance(family, LinearGaussian):
        return kernels.gaussian_closed(eta, family.noise_var, W, ti, tj, tk, dv, n_total), path, draws
    if closed:
        A, = prepare(family.outcome_probs(eta))
        return kernels.categorical_closed(A, W, ti, tj, tk, dv, n_total), path, draws
    Y = np.empty_like(eta)
    for b in range(B):
        Y[b] = family.sample_eta(eta[b], candidate_rng(b))
    C, S = prepare(family.expfam_coefficients(eta), family.sufficient_stats(Y))
    return kernels.expfam_sampled(C, S, W, ti, tj, tk, dv, n_total), path, draws + B * m


def pdbal_score_mc(ens: PosteriorEnsemble, family, x, dist, cfg: AcquisitionConfig,
                   rng: np.random.Generator) -> float:
    """Monte-Carlo PDBAL score of a single design; ``rng`` feeds triples then outcomes."""
    X = _candidate_array(family, x)
    if X.shape[0] != 1:
        raise ContractViolation("pdbal_score_mc scores one design; use score_pool for several")
    scores, _, _ = pdbal_scores(ens, family, X, dist, cfg, rng, lambda b: rng)
    return float(scores[0])


def dbal_score_deterministic(post: FinitePosterior, x: int, dist) -> float:
    """Largest distance mass left in one outcome cell of a deterministic class."""
    model = post.model
    P = model.table[:, int(x), :]
    if not np.all((P == 0.0) | (P == 1.0)):
        raise ContractViolation(f"design {x} is not deterministic under every parameter")
    D = distance_matrix(dist, model.n_params)
    wP = post.weights[:, None] * P
    return float(np.max(np.einsum("ik,ij,jk->k", wP, D, wP)))


# ---------------------------------------------------------------------------
# Variance and EIG
# ---------------------------------------------------------------------------


def _member_moments(ens, family, X):
    if isinstance(family, FiniteModelClass):
        A, _ = _member_tables(family, ens.samples, X)
        k = np.arange(family.n_outcomes, dtype=float)
        mean = A @ k
        return mean, A @ (k * k) - mean**2
    return family.moments_eta(_eta(ens.samples, X))


def variance_scores(ens: PosteriorEnsemble, family, candidates) -> np.ndarray:
    """Law of total variance over the ensemble, population normalisation."""
    if ens.m < 2:
        raise ContractViolation("variance scoring needs at least 2 samples")
    mean, var = _member_moments(ens, family, _candidate_array(family, candidates))
    return var.mean(axis=1) + mean.var(axis=1)


def variance_score(ens: PosteriorEnsemble, family, x) -> float:
    return float(variance_scores(ens, family, x)[0])


def _gaussian_mixture_entropy(means, var, nodes):
    """Differential entropy of equal-weight mixtures of ``N(means[b, i], var)``."""
    means = np.asarray(means, dtype=float)
    B, m = means.shape
    sd = math.sqrt(var)
    centre = means.mean(axis=1)
    pred_sd = np.sqrt(var + means.var(axis=1))
    lo = np.minimum(means.min(axis=1) - 8.0 * sd, centre - 8.0 * pred_sd)
    hi = np.maximum(means.max(axis=1) + 8.0 * sd, centre + 8.0 * pred_sd)
    log_norm = -math.log(m) - 0.5 * math.log(2.0 * math.pi * var)

    def integrand(pts, rows):
        z = (pts[:, :, None] - means[rows][:, None, :]) / sd
        logp = special.logsumexp(-0.5 * z * z, axis=2) + log_norm
        return -np.exp(logp) * logp

    initial = np.ceil((hi - lo) / (8.0 * sd)).astype(np.int64)
    return _chunked(integrand, lo, hi, nodes, initial, B, m)


_MAX_PANELS = 512
_POISSON_DIRECT = 200_000
_POISSON_CONTINUOUS = 1e4


def _beta_mixture_entropy(a, b, nodes):
    """Differential entropy of equal-weight Beta(a[r, i], b[r, i]) mixtures, integrated on the logit scale.

    Rows whose components differ wildly in scale are handled through
    ``H = mean_i E_i[-log p]``, so each component is integrated on its own
    window rather than one grid fine enough for all of them.
    """
    R, m = a.shape
    log_beta = special.betaln(a, b)
    centre = special.digamma(a) - special.digamma(b)
    spread = np.sqrt(special.polygamma(1, a) + special.polygamma(1, b))
    lo_i = centre - 40.0 / a - 5.0 * spread
    hi_i = centre + 40.0 / b + 5.0 * spread

    def log_mix(u, rows):
        # y-scale log density of the row's mixture and the logit Jacobian, at logit points u
        lyp = special.log_expit(u)[:, :, None]
        lym = special.log_expit(-u)[:, :, None]
        ar, br = a[rows][:, None, :], b[rows][:, None, :]
        terms = (ar - 1.0) * lyp + (br - 1.0) * lym - log_beta[rows][:, None, :]
        return special.logsumexp(terms, axis=2) - math.log(m), lyp[..., 0] + lym[..., 0]

    def integrand(u, rows):
        log_py, jac = log_mix(u, rows)
        out = -np.exp(log_py + jac) * log_py
        return np.where(np.isfinite(out), out, 0.0)

    lo, hi = lo_i.min(axis=1), hi_i.max(axis=1)
    initial = np.ceil((hi - lo) / (8.0 * spread.min(axis=1))).astype(np.int64)
    out = np.empty(R)
    easy = np.flatnonzero(initial <= _MAX_PANELS)
    hard = np.flatnonzero(initial > _MAX_PANELS)
    if easy.size:
        sub = lambda u, rows: integrand(u, easy[rows])  # noqa: E731
        out[easy] = _chunked(sub, lo[easy], hi[easy], nodes, initial[easy], easy.size, m)
    if hard.size:
        owner = np.repeat(hard, m)
        comp = np.tile(np.arange(m), hard.size)

        def cross(u, rows):
            r, c = owner[rows], comp[rows]
            log_py, jac = log_mix(u, r)
            lq = ((a[r, c] - 1.0)[:, None] * special.log_expit(u) + (b[r, c] - 1.0)[:, None]
                  * special.log_expit(-u) - log_beta[r, c][:, None] + jac)
            val = -np.exp(lq) * log_py
            return np.where(np.isfinite(val), val, 0.0)

        # the unit-scale features of the mixture sit near u = 0, so that stretch
        # gets its own piece while wide tails are covered at their own scale
        lo_c, hi_c = lo_i[owner, comp], hi_i[owner, comp]
        cuts = np.stack([lo_c, np.clip(-30.0, lo_c, hi_c), np.clip(30.0, lo_c, hi_c), hi_c])
        n = owner.size
        piece_lo, piece_hi = cuts[:-1].reshape(-1), cuts[1:].reshape(-1)
        scale = np.tile(np.array([1.0, 0.0, 1.0])[:, None], (1, n)).reshape(-1)
        sd = np.tile(spread[owner, comp], 3)
        init_c = np.ceil((piece_hi - piece_lo) / (8.0 * np.where(scale > 0, sd, 1.0))).astype(np.int64)
        init_c = np.clip(init_c, 1, _MAX_PANELS)
        rows3 = np.tile(np.arange(n), 3)
        sub = lambda u, rows: cross(u, rows3[rows])  # noqa: E731
        per = _chunked(sub, piece_lo, piece_hi, nodes, init_c, 3 * n, m).reshape(3, n).sum(axis=0)
        out[hard] = per.reshape(hard.size, m).mean(axis=1)
    return out


def _chunked(integrand, lo, hi, nodes, initial, B, m, budget=1 << 21):
    """Adaptive quadrature per row, evaluating the (rows, points, m) integrand in bounded blocks."""

    def blockwise(pts, rows):
        out = np.empty(pts.shape)
        cols = max(1, budget // (m * max(1, pts.shape[0])))
        rstep = max(1, budget // (m * min(cols, pts.shape[1])))
        for r0 in range(0, pts.shape[0], rstep):
            r1 = min(pts.shape[0], r0 + rstep)
            for c0 in range(0, pts.shape[1], cols):
                c1 = min(pts.shape[1], c0 + cols)
                out[r0:r1, c0:c1] = integrand(pts[r0:r1, c0:c1], rows[r0:r1])
        return out

    return adaptive_gauss_legendre(blockwise, lo, hi, nodes, initial)


def _poisson_log_pmf(k, lam):
    """(len(k), m) log pmf, continuous in ``k`` through the gamma function."""
    k = k[:, None]
    return special.xlogy(k, lam[None, :]) - lam[None, :] - special.gammaln(k + 1.0)


def _poisson_mixture_entropy(rates, nodes=64, budget=1 << 21):
    out = np.empty(rates.shape[0])
    for b in range(rates.shape[0]):
        lam = rates[b]
        m = lam.size
        step = max(1, budget // m)
        lo = math.floor(max(0.0, lam.min() - 14.0 * math.sqrt(lam.min()) - 5.0))
        hi = int(stats.poisson.isf(1e-14, lam.max())) + 2
        if hi - lo <= _POISSON_DIRECT:
            total = 0.0
            for k0 in range(lo, hi + 1, step):
                k = np.arange(k0, min(hi, k0 + step - 1) + 1, dtype=float)
                total += special.entr(np.exp(_poisson_log_pmf(k, lam)).mean(axis=1)).sum()
            out[b] = total
            continue
        # wide spread of rates: H = mean_i E_i[-log p_mix], component by component
        def log_mix(k):
            return special.logsumexp(_poisson_log_pmf(k, lam), axis=1) - math.log(m)

        small = lam <= _POISSON_CONTINUOUS
        acc = 0.0
        if small.any():
            ls = lam[small]
            top = int(stats.poisson.isf(1e-16, ls.max())) + 2
            for k0 in range(0, top + 1, step):
                k = np.arange(k0, min(top, k0 + step - 1) + 1, dtype=float)
                pi = np.exp(_poisson_log_pmf(k, ls))
                acc += float(np.sum(pi.sum(axis=1) * -log_mix(k)))
        big = lam[~small]
        if big.size:
            w = 40.0 * np.sqrt(big)

            def f(t, rows):
                lam_r = big[rows][:, None]
                lp = special.xlogy(t, lam_r) - lam_r - special.gammaln(t + 1.0)
                flat = t.reshape(-1)
                lm = np.concatenate([log_mix(flat[i : i + step]) for i in range(0, flat.size, step)])
                return np.exp(lp) * -lm.reshape(t.shape)

            acc += float(adaptive_gauss_legendre(f, big - w, big + w, nodes, 16).sum())
        out[b] = acc / m
    return out


def eig_scores(post, family, candidates, cfg: AcquisitionConfig | None = None) -> np.ndarray:
    """Mutual information between the outcome at each candidate and the parameter.

    ``post`` is an ensemble (predictive = equal-weight mixture of members) or,
    for ``LinearGaussian``, an exact :class:`GaussianPosterior`.
    """
    cfg = cfg or AcquisitionConfig(strategy="EIG")
    X = _candidate_array(family, candidates)
    if isinstance(post, GaussianPosterior):
        if not isinstance(family, LinearGaussian):
            raise ContractViolation("a Gaussian posterior pairs with the LinearGaussian family")
        mean = X @ post.mean
        pred_var = family.noise_var + np.einsum("bi,ij,bj->b", X, post.covariance, X)
        h_pred = np.array([
            _gaussian_mixture_entropy(mean[b : b + 1, None], pred_var[b], cfg.eig_nodes)[0] for b in range(len(mean))
        ])
        return h_pred - family.entropy_eta(np.zeros(1))[0]
    if not isinstance(post, PosteriorEnsemble):
        raise ContractViolation("eig scoring needs an ensemble or an exact Gaussian posterior")
    if isinstance(family, FiniteModelClass):
        A, H = _member_tables(family, post.samples, X)
        return special.entr(A.mean(axis=1)).sum(axis=-1) - H.mean(axis=1)
    eta = _eta(post.samples, X)
    h_member = family.entropy_eta(eta).mean(axis=1)
    if isinstance(family, Logistic):
        h_pred = binary_entropy(special.expit(eta).mean(axis=1))
    elif isinstance(family, LinearGaussian):
        h_pred = _gaussian_mixture_entropy(eta, family.noise_var, cfg.eig_nodes)
    elif isinstance(family, Poisson):
        h_pred = _poisson_mixture_entropy(np.exp(eta))
    elif isinstance(family, BetaMean):
        a, b = family.shapes(eta)
        h_pred = _beta_mixture_entropy(a, b, cfg.eig_nodes)
    else:
        raise ContractViolation(f"no predictive entropy for family {type(family).__name__}")
    return h_pred - h_member


def eig_score(post, family, x, cfg: AcquisitionConfig | None = None) -> float:
    return float(eig_scores(post, family, x, cfg)[0])


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------


def select_query(candidates, scores, strategy, rng: np.random.Generator | None = None) -> int:
    """PDBAL picks the smallest score, Variance and EIG the largest; ties go to the lowest index."""
    n = len(candidates)
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if n < 1 or scores.size != n:
        raise ContractViolation(f"need equal, nonzero numbers of candidates and scores ({n} vs {scores.size})")
    strategy = normalize_strategy(strategy)
    if strategy == "Random":
        if rng is None:
            raise ContractViolation("Random selection needs a generator")
        return int(rng.integers(n))
    if np.any(np.isnan(scores)):
        raise ContractViolation("scores contain NaN")
    return int(np.argmin(scores) if strategy == "PDBAL" else np.argmax(scores))


def score_pool(post, family, candidates, dist, cfg: AcquisitionConfig, seed: int, step: int = 0,
               keys=None) -> ScoreReport:
    """Score a pool and pick a query, with every random draw keyed by ``(seed, step, ...)``.

    ``keys`` labels candidates for their outcome substreams; the default is
    the candidate index.  Pass content hashes to make duplicate rows score
    identically regardless of position.
    """
    X = _candidate_array(family, candidates)
    B = X.shape[0]
    strategy = cfg.strategy
    path = None
    draws = 0
    if strategy == "PDBAL":
        keys = range(B) if keys is None else keys
        keys = [int(k) for k in keys]
        scores, path, draws = pdbal_scores(
            post, family, X, dist, cfg,
            rngmod.substream(seed, rngmod.TRIPLES, step),
            lambda b: rngmod.substream(seed, rngmod.CANDIDATE, step, keys[b]),
        )
    elif strategy == "Variance":
        scores = variance_scores(post, family, X)
    elif strategy == "EIG":
        scores = eig_scores(post, family, X, cfg)
    else:
        scores = np.zeros(B)
    select_rng = None
    if strategy == "Random":
        select_rng = rngmod.substream(seed, rngmod.SELECT, step)
        draws = 1
    chosen = select_query(X, scores, strategy, select_rng)
    return ScoreReport(scores, chosen, draws, strategy, path)

"""Posterior representations: conjugate Gaussian, Metropolis ensembles, finite classes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .errors import ContractViolation, ImpossibleEvidenceError, InitializationError
from .likelihoods import FiniteModelClass, GLMFamily, LinearGaussian


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labelled pairs stored as a design matrix ``X`` (n, d) and outcomes ``y`` (n,)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        y = np.array(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ContractViolation(f"{X.shape[0]} design points but {y.shape[0]} outcomes")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def empty(cls, d: int) -> "Dataset":
        return cls(np.zeros((0, d)), np.zeros(0))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def append(self, x, y) -> "Dataset":
        return Dataset(np.vstack([self.X, np.asarray(x, dtype=float)[None, :]]), np.append(self.y, y))

    def validated(self, family: GLMFamily) -> "Dataset":
        if self.n:
            family.check_outcome(self.y)
        return self


@dataclass(frozen=True, eq=False)
class GaussianPosterior:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12:
            raise ContractViolation("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ContractViolation("covariance must be positive definite") from exc
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "_chol", chol)

    @property
    def cholesky(self) -> np.ndarray:
        return self._chol


@dataclass(frozen=True)
class MCMCConfig:
    """Adaptive Metropolis settings.  Defaults retain 300 draws from 2 chains."""

    chains: int = 2
    burn_in: int = 750
    thin: int = 5
    target_accept: float = 0.234
    independence_prob: float = 0.5
    independence_df: float = 7.0

    def __post_init__(self):
        if self.chains < 1 or self.burn_in < 0 or self.thin < 1:
            raise ContractViolation("chains >= 1, burn_in >= 0 and thin >= 1 required")
        if not 0.0 < self.target_accept < 1.0:
            raise ContractViolation("target_accept must lie in (0, 1)")
        if not 0.0 <= self.independence_prob < 1.0:
            raise ContractViolation("independence_prob must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class PosteriorEnsemble:
    """Samples ``theta_1..theta_m`` standing in for the posterior.

    ``samples`` is an (m, d) float array for regression models or an (m,)
    integer array of parameter ids for a finite class.
    """

    samples: np.ndarray
    provenance: str = "Exact"
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.shape[0] < 1:
            raise ContractViolation("an ensemble needs at least one sample")
        object.__setattr__(self, "samples", s)

    @property
    def m(self) -> int:
        return self.samples.shape[0]

    def __len__(self):
        return self.m


@dataclass(frozen=True, eq=False)
class FinitePosterior:
    """Exact posterior weights over a finite class.

    ``log_evidence`` is ``log Z_t`` accumulated through updates, and
    ``entropy_sum`` the running ``sum_i H(x_i)`` over queried designs (NaN
    once a design without a parameter-independent entropy is queried).
    """

    model: FiniteModelClass
    weights: np.ndarray
    log_evidence: float = 0.0
    entropy_sum: float = 0.0
    evidence_ratio: float = 1.0
    n_updates: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.model.n_params,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ContractViolation("weights must be a probability vector over the class")
        object.__setattr__(self, "weights", w)

    @classmethod
    def prior(cls, model: FiniteModelClass) -> "FinitePosterior":
        return cls(model, model.prior.copy())

    @property
    def potential(self) -> float:
        """``W_t = exp(sum_i H(x_i)) * Z_t``."""
        return math.exp(self.entropy_sum + self.log_evidence)


# ---------------------------------------------------------------------------
# Conjugate linear-Gaussian model
# ---------------------------------------------------------------------------


def conjugate_linear_gaussian(data: Dataset, noise_var: float, prior_var: float = 1.0) -> GaussianPosterior:
    """Closed-form posterior under a ``N(0, prior_var I)`` prior."""
    if not (noise_var > 0 and prior_var > 0):
        raise ContractViolation("noise_var and prior_var must be positive")
    d = data.dim
    precision = data.X.T @ data.X / noise_var + np.eye(d) / prior_var
    chol = linalg.cho_factor(precision, lower=True)
    cov = linalg.cho_solve(chol, np.eye(d))
    cov = 0.5 * (cov + cov.T)
    mean = linalg.cho_solve(chol, data.X.T @ data.y / noise_var)
    return GaussianPosterior(mean, cov)


def sample_gaussian_posterior(post: GaussianPosterior, m: int, rng: np.random.Generator) -> PosteriorEnsemble:
    if m < 3:
        raise ContractViolation(f"need m >= 3 samples, got {m}")
    z = rng.standard_normal((m, post.mean.shape[0]))
    return PosteriorEnsemble(post.mean + z @ post.cholesky.T, "Exact")


# ---------------------------------------------------------------------------
# Metropolis sampler for GLM posteriors
# ---------------------------------------------------------------------------


def log_posterior(family: GLMFamily, data: Dataset, thetas: np.ndarray) -> np.ndarray:
    """Unnormalised log posterior under a standard-normal prior, one value per row."""
    thetas = np.atleast_2d(thetas)
    prior = -0.5 * np.sum(thetas * thetas, axis=1)
    if data.n == 0:
        return prior
    eta = thetas @ data.X.T
    return prior + family.log_density_eta(eta, data.y).sum(axis=1)


def laplace_approximation(family: GLMFamily, data: Dataset, max_iter: int = 100):
    """Posterior mode and inverse Fisher information by damped Fisher scoring."""
    d = data.dim
    theta = np.zeros(d)
    lp = log_posterior(family, data, theta)[0]
    eye = np.eye(d)

    def info_at(th):
        if data.n == 0:
            return eye.copy()
        w = family.fisher_weight_eta(data.X @ th)
        return data.X.T @ (w[:, None] * data.X) + eye

    for _ in range(max_iter):
        eta = data.X @ theta
        grad = (data.X.T @ family.score_eta(eta, data.y) if data.n else 0.0) - theta
        step = np.linalg.solve(info_at(theta), grad)
        t = 1.0
        while t > 1e-8:
            cand = theta + t * step
            lp_cand = log_posterior(family, data, cand)[0]
            if np.isfinite(lp_cand) and lp_cand >= lp - 1e-12:
                break
            t *= 0.5
        else:
            break
        theta, lp = cand, lp_cand
        if np.max(np.abs(t * step)) < 1e-10:
            break
    cov = np.linalg.inv(info_at(theta))
    return theta, 0.5 * (cov + cov.T)


def metropolis_glm_posterior(
    family: GLMFamily,
    data: Dataset,
    m: int,
    cfg: MCMCConfig | None = None,
    rng: np.random.Generator | None = None,
) -> PosteriorEnsemble:
    """Adaptive Metropolis ensemble for a GLM posterior with a standard-normal prior.

    Every chain starts at the zero vector.  Each iteration makes one of two
    Metropolis moves: a random walk preconditioned by the Laplace covariance
    whose scale is tuned by Robbins-Monro toward ``cfg.target_accept`` during
    burn-in, or (with probability ``cfg.independence_prob``) an independence
    proposal from a multivariate t centred at the posterior mode.  Both moves
    leave the posterior invariant and nothing adapts after burn-in.

    Chains are returned interleaved: sample 0 of every chain, then sample 1,
    and so on, truncated to ``m``.
    """
    cfg = cfg or MCMCConfig()
    if m < 3:
        raise ContractViolation(f"need m >= 3 samples, got {m}")
    if rng is None:
        raise ContractViolation("an explicit random generator is required")
    data = data.validated(family)
    d = data.dim
    n_chains = cfg.chains
    per_chain = -(-m // n_chains)
    n_iter = cfg.burn_in + cfg.thin * per_chain

    start = np.zeros((n_chains, d))
    lp = log_posterior(family, data, start)
    if not np.all(np.isfinite(lp)):
        raise InitializationError("log posterior is not finite at the zero vector")

    mode, cov = laplace_approximation(family, data)
    chol = np.linalg.cholesky(cov)
    nu = cfg.independence_df

    # all randomness is drawn up front from per-chain substreams
    chain_rngs = rng.spawn(n_chains)
    Z = np.stack([r.standard_normal((n_iter, d)) for r in chain_rngs], axis=1)
    U = np.stack([r.random((n_iter, 3)) for r in chain_rngs], axis=1)
    CHI = np.stack([r.chisquare(nu, n_iter) for r in chain_rngs], axis=1)

    def log_q(thetas):
        r = linalg.solve_triangular(chol, (thetas - mode).T, lower=True)
        return -0.5 * (nu + d) * np.log1p(np.sum(r * r, axis=0) / nu)

    theta = start
    lq = log_q(theta)
    log_scale = np.full(n_chains, math.log(2.38 / math.sqrt(d)))
    rw_acc = np.zeros(n_chains)
    rw_tot = np.zeros(n_chains)
    ind_acc = np.zeros(n_chains)
    ind_tot = np.zeros(n_chains)
    kept = np.empty((per_chain, n_chains, d))
    X, y = data.X, data.y
    has_data = data.n > 0

    for t in range(n_iter):
        z = Z[t] @ chol.T
        indep = U[t, :, 0] < cfg.independence_prob
        prop_rw = theta + np.exp(log_scale)[:, None] * z
        prop_ind = mode + z * np.sqrt(nu / CHI[t])[:, None]
        prop = np.where(indep[:, None], prop_ind, prop_rw)
        lp_prop = -0.5 * np.sum(prop * prop, axis=1)
        if has_data:
            lp_prop = lp_prop + family.log_density_eta(prop @ X.T, y).sum(axis=1)
        lq_prop = log_q(prop)
        log_ratio = lp_prop - lp + np.where(indep, lq - lq_prop, 0.0)
        with np.errstate(invalid="ignore"):
            accept = np.log(U[t, :, 1]) < log_ratio
        theta = np.where(accept[:, None], prop, theta)
        lp = np.where(accept, lp_prop, lp)
        lq = np.where(accept, lq_prop, lq)
        if t < cfg.burn_in:
            gain = (t + 1.0) ** -0.6
            log_scale = np.where(indep, log_scale, log_scale + gain * (accept - cfg.target_accept))
        else:
            rw_tot += ~indep
            rw_acc += accept & ~indep
            ind_tot += indep
            ind_acc += accept & indep
            s = t - cfg.burn_in
            if (s + 1) % cfg.thin == 0:
                kept[s // cfg.thin] = theta

    samples = kept.reshape(per_chain * n_chains, d)[:m]
    info = {
        "chains": n_chains,
        "burn_in": cfg.burn_in,
        "thin": cfg.thin,
        "rw_accept": float(rw_acc.sum() / max(rw_tot.sum(), 1)),
        "independence_accept": float(ind_acc.sum() / max(ind_tot.sum(), 1)),
        "rw_scale": np.exp(log_scale).tolist(),
    }
    return PosteriorEnsemble(samples, "MCMC", info)


def chains_of(ens: PosteriorEnsemble) -> np.ndarray:
    """(chains, draws, d) view of an interleaved MCMC ensemble."""
    c = int(ens.info.get("chains", 1))
    n = ens.m // c
    s = ens.samples[: n * c]
    return s.reshape(n, c, -1).transpose(1, 0, 2)


def effective_sample_size(chains: np.ndarray) -> np.ndarray:
    """Per-coordinate ESS from (chains, draws, d) using Geyer's initial monotone sequence."""
    chains = np.asarray(chains, dtype=float)
    if chains.ndim == 2:
        chains = chains[:, :, None]
    c, n, d = chains.shape
    x = chains - chains.mean(axis=1, keepdims=True)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, n=nfft, axis=1)
    acov = np.fft.irfft(f * np.conj(f), n=nfft, axis=1)[:, :n, :] / n
    acov = acov.mean(axis=0)
    within = acov[0]
    chain_means = chains.mean(axis=1)
    between = n * chain_means.var(axis=0, ddof=1) if c > 1 else np.zeros(d)
    var_plus = (n - 1) / n * within + between / n
    rho = 1.0 - (within - acov) / np.where(var_plus > 0, var_plus, 1.0)
    ess = np.empty(d)
    for j in range(d):
        r = rho[:, j]
        pairs = r[0 : n - 1 : 2][: (n - 1) // 2] + r[1:n:2][: (n - 1) // 2]
        total = 0.0
        prev = np.inf
        for p in pairs:
            if p <= 0:
                break
            p = min(p, prev)
            total += p
            prev = p
        tau = -1.0 + 2.0 * total
        ess[j] = c * n / max(tau, 1.0 / math.log10(max(c * n, 10)))
    return ess


# ---------------------------------------------------------------------------
# Finite classes
# ---------------------------------------------------------------------------


def finite_posterior_update(post: FinitePosterior, x: int, y: int) -> FinitePosterior:
    """Exact Bayes update of ``post`` after observing outcome ``y`` at design ``x``."""
    model = post.model
    y = int(model.check_outcome(y))
    lik = model.table[:, x, y]
    unnorm = post.weights * lik
    ratio = float(unnorm.sum())
    if ratio <= 0.0:
        raise ImpossibleEvidenceError(f"outcome {y} at design {x} has zero probability under every parameter")
    h = model.design_entropy(x)
    entropy_sum = post.entropy_sum + h if h is not None else math.nan
    return replace(
        post,
        weights=unnorm / ratio,
        log_evidence=post.log_evidence + math.log(ratio),
        entropy_sum=entropy_sum,
        evidence_ratio=ratio,
        n_updates=post.n_updates + 1,
    )


def sample_finite_posterior(post: FinitePosterior, m: int, rng: np.random.Generator) -> PosteriorEnsemble:
    """``m`` i.i.d. parameter ids from the exact posterior."""
    ids = rng.choice(post.model.n_params, size=m, p=post.weights)
    return PosteriorEnsemble(ids.astype(np.int64), "FiniteEnumeration")


def posterior_predictive(post, family, x, y) -> float:
    """Posterior predictive density ``E_theta[P_theta(y; x)]``."""
    if isinstance(post, FinitePosterior):
        y = int(post.model.check_outcome(y))
        return float(post.weights @ post.model.table[:, x, y])
    if isinstance(post, GaussianPosterior):
        if not isinstance(family, LinearGaussian):
            raise ContractViolation("a Gaussian posterior pairs with the LinearGaussian family")
        mean = float(np.asarray(x) @ post.mean)
        var = family.noise_var + float(np.asarray(x) @ post.covariance @ np.asarray(x))
        return math.exp(-0.5 * (y - mean) ** 2 / var) / math.sqrt(2.0 * math.pi * var)
    if isinstance(family, FiniteModelClass):
        y = int(family.check_outcome(y))
        return float(np.mean(family.table[post.samples, x, y]))
    return float(np.mean(np.exp(family.log_density(post.samples, x, y))))

"""Observation models and their closed-form triple kernels.

Four regression families are provided, all driven by the linear predictor
``eta = <x, theta>``:

``LinearGaussian``  y ~ N(eta, noise_var)
``Logistic``        y ~ Bernoulli(sigmoid(eta))
``Poisson``         y ~ Poisson(exp(eta))
``BetaMean``        y ~ Beta(phi * mu, phi * (1 - mu)),  mu = sigmoid(eta)

plus :class:`FiniteModelClass`, an explicitly tabulated model class over
finitely many parameters, designs and outcomes that backs the exact
computations elsewhere in the package.

The triple kernel of three models is ``M = E_{y ~ P1}[P2(y) P3(y)]``.  It is
symmetric in its three arguments, since it equals the integral of the
product of the three densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
from scipy import special, stats

from .errors import ContractViolation, DomainError

LOG_2PI = math.log(2.0 * math.pi)
POISSON_TAIL = 1e-12
_POISSON_ASYMPTOTIC = 1000.0


def _as_vector(v, name="vector"):
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ContractViolation(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} has non-finite entries")
    return arr


def linear_predictor(theta, x) -> np.ndarray:
    """``<x, theta>`` broadcast over leading axes of ``theta``."""
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    if theta.shape[-1] != x.shape[-1]:
        raise ContractViolation(
            f"dimension mismatch: theta has {theta.shape[-1]} entries, x has {x.shape[-1]}"
        )
    return theta @ x


def binary_entropy(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    return special.entr(mu) + special.entr(1.0 - mu)


class GLMFamily:
    """Shared plumbing for families parameterised through ``eta``.

    Subclasses implement the ``*_eta`` methods on arrays of linear
    predictors; the public methods take ``(theta, x)`` and validate.
    """

    name: ClassVar[str]
    outcome_tag: ClassVar[str]
    constant_entropy: ClassVar[bool] = False

    # -- public, validated surface -------------------------------------
    def log_density(self, theta, x, y):
        y = self.check_outcome(y)
        return self.log_density_eta(linear_predictor(theta, x), y)

    def sample(self, theta, x, rng: np.random.Generator):
        eta = linear_predictor(theta, x)
        if not np.all(np.isfinite(eta)):
            raise ContractViolation("linear predictor must be finite")
        return self.sample_eta(eta, rng)

    def entropy(self, theta, x):
        return self.entropy_eta(linear_predictor(theta, x))

    def moments(self, theta, x):
        return self.moments_eta(linear_predictor(theta, x))

    # -- hooks ----------------------------------------------------------
    def check_outcome(self, y):
        raise NotImplementedError

    def log_density_eta(self, eta, y):
        raise NotImplementedError

    def sample_eta(self, eta, rng):
        raise NotImplementedError

    def entropy_eta(self, eta):
        raise NotImplementedError

    def moments_eta(self, eta):
        raise NotImplementedError

    def score_eta(self, eta, y):
        """Derivative of the log density with respect to ``eta``."""
        raise NotImplementedError

    def fisher_weight_eta(self, eta):
        """Expected negative second derivative of the log density in ``eta``."""
        raise NotImplementedError

    def expfam_coefficients(self, eta) -> np.ndarray:
        """Coefficients ``c`` with ``log P(y) = c0 + c1*T1(y) + c2*T2(y) + base(y)``."""
        raise NotImplementedError

    def sufficient_stats(self, y) -> np.ndarray:
        """``(T1(y), T2(y), base(y))`` stacked on the last axis."""
        raise NotImplementedError

    def outcome_probs(self, eta):
        """Outcome probability vectors for finite-outcome families, else ``None``."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class LinearGaussian(GLMFamily):
    """Homoscedastic Gaussian regression with known noise variance."""

    noise_var: float = 0.0625

    name: ClassVar[str] = "LinearGaussian"
    outcome_tag: ClassVar[str] = "Real"
    constant_entropy: ClassVar[bool] = True

    def __post_init__(self):
        if not self.noise_var > 0:
            raise DomainError(f"noise_var must be positive, got {self.noise_var}")

    def check_outcome(self, y):
        try:
            arr = np.asarray(y, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ContractViolation(f"Real outcome expected, got {y!r}") from exc
        if not np.all(np.isfinite(arr)):
            raise ContractViolation("Real outcome must be finite")
        return arr

    def log_density_eta(self, eta, y):
        return -0.5 * (LOG_2PI + math.log(self.noise_var)) - 0.5 * (y - eta) ** 2 / self.noise_var

    def sample_eta(self, eta, rng):
        eta = np.asarray(eta, dtype=float)
        return eta + math.sqrt(self.noise_var) * rng.standard_normal(eta.shape)

    def entropy_eta(self, eta):
        h = 0.5 * math.log(2.0 * math.pi * math.e * self.noise_var)
        return np.full(np.shape(eta), h) if np.ndim(eta) else h

    def moments_eta(self, eta):
        eta = np.asarray(eta, dtype=float)
        return eta, np.full(eta.shape, self.noise_var) if eta.ndim else self.noise_var

    def score_eta(self, eta, y):
        return (y - eta) / self.noise_var

    def fisher_weight_eta(self, eta):
        return np.full(np.shape(eta), 1.0 / self.noise_var)

    def expfam_coefficients(self, eta):
        eta = np.asarray(eta, dtype=float)
        s2 = self.noise_var
        c0 = -0.5 * (LOG_2PI + math.log(s2)) - 0.5 * eta**2 / s2
        return np.stack([c0, eta / s2, np.full(eta.shape, -0.5 / s2)], axis=-1)

    def sufficient_stats(self, y):
        y = np.asarray(y, dtype=float)
        return np.stack([y, y * y, np.zeros(y.shape)], axis=-1)

    def to_dict(self):
        return {"kind": self.name, "noise_var": self.noise_var}


@dataclass(frozen=True)
class Logistic(GLMFamily):
    """Bernoulli outcomes with a logit link."""

    name: ClassVar[str] = "Logistic"
    outcome_tag: ClassVar[str] = "Binary"

    def check_outcome(self, y):
        arr = np.asarray(y)
        if arr.dtype == bool:
            return arr.astype(float)
        try:
            arr = arr.astype(float)
        except (TypeError, ValueError) as exc:
            raise ContractViolation(f"Binary outcome expected, got {y!r}") from exc
        if not np.all((arr == 0.0) | (arr == 1.0)):
            raise ContractViolation(f"Binary outcome must be 0 or 1, got {y!r}")
        return arr

    def log_density_eta(self, eta, y):
        eta = np.asarray(eta, dtype=float)
        return y * eta - np.logaddexp(0.0, eta)

    def sample_eta(self, eta, rng):
        mu = special.expit(np.asarray(eta, dtype=float))
        return (rng.random(mu.shape) < mu).astype(np.int64)

    def entropy_eta(self, eta):
        return binary_entropy(special.expit(eta))

    def moments_eta(self, eta):
        mu = special.expit(np.asarray(eta, dtype=float))
        return mu, mu * (1.0 - mu)

    def score_eta(self, eta, y):
        return y - special.expit(eta)

    def fisher_weight_eta(self, eta):
        mu = special.expit(eta)
        return mu * (1.0 - mu)

    def expfam_coefficients(self, eta):
        eta = np.asarray(eta, dtype=float)
        return np.stack([-np.logaddexp(0.0, eta), eta, np.zeros(eta.shape)], axis=-1)

    def sufficient_stats(self, y):
        y = np.asarray(y, dtype=float)
        return np.stack([y, np.zeros(y.shape), np.zeros(y.shape)], axis=-1)

    def outcome_probs(self, eta):
        mu = special.expit(np.asarray(eta, dtype=float))
        return np.stack([1.0 - mu, mu], axis=-1)

    def to_dict(self):
        return {"kind": self.name}


@dataclass(frozen=True)
class Poisson(GLMFamily):
    """Count outcomes with a log link."""

    name: ClassVar[str] = "Poisson"
    outcome_tag: ClassVar[str] = "Count"

    def check_outcome(self, y):
        try:
            arr = np.asarray(y, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ContractViolation(f"Count outcome expected, got {y!r}") from exc
        if not np.all((arr >= 0) & (arr == np.floor(arr)) & np.isfinite(arr)):
            raise ContractViolation(f"Count outcome must be a nonnegative integer, got {y!r}")
        return arr

    def log_density_eta(self, eta, y):
        eta = np.asarray(eta, dtype=float)
        return y * eta - np.exp(eta) - special.gammaln(y + 1.0)

    def sample_eta(self, eta, rng):
        return rng.poisson(np.exp(np.asarray(eta, dtype=float)))

    def entropy_eta(self, eta):
        rate = np.exp(np.asarray(eta, dtype=float))
        return poisson_entropy(rate)

    def moments_eta(self, eta):
        rate = np.exp(np.asarray(eta, dtype=float))
        return rate, rate

    def score_eta(self, eta, y):
        return y - np.exp(eta)

    def fisher_weight_eta(self, eta):
        return np.exp(eta)

    def expfam_coefficients(self, eta):
        eta = np.asarray(eta, dtype=float)
        return np.stack([-np.exp(eta), eta, np.zeros(eta.shape)], axis=-1)

    def sufficient_stats(self, y):
        y = np.asarray(y, dtype=float)
        return np.stack([y, np.zeros(y.shape), -special.gammaln(y + 1.0)], axis=-1)

    def to_dict(self):
        return {"kind": self.name}


@dataclass(frozen=True)
class BetaMean(GLMFamily):
    """Beta regression in the mean/precision parameterisation."""

    phi: float = 10.0

    name: ClassVar[str] = "BetaMean"
    outcome_tag: ClassVar[str] = "UnitInterval"

    def __post_init__(self):
        if not self.phi > 0:
            raise DomainError(f"phi must be positive, got {self.phi}")

    def check_outcome(self, y):
        try:
            arr = np.asarray(y, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ContractViolation(f"UnitInterval outcome expected, got {y!r}") from exc
        if not np.all((arr >= 0.0) & (arr <= 1.0)):
            raise ContractViolation(f"UnitInterval outcome must lie in (0, 1), got {y!r}")
        if np.any((arr == 0.0) | (arr == 1.0)):
            raise DomainError("Beta density is undefined at y = 0 or y = 1")
        return arr

    def shapes(self, eta):
        mu = special.expit(np.asarray(eta, dtype=float))
        return self.phi * mu, self.phi * (1.0 - mu)

    def log_density_eta(self, eta, y):
        a, b = self.shapes(eta)
        return (a - 1.0) * np.log(y) + (b - 1.0) * np.log1p(-y) - special.betaln(a, b)

    def sample_eta(self, eta, rng):
        a, b = self.shapes(eta)
        # float draws can round onto the boundary where the density is undefined
        return np.clip(rng.beta(a, b), 1e-12, 1.0 - 1e-12)

    def entropy_eta(self, eta):
        a, b = self.shapes(eta)
        return (
            special.betaln(a, b)
            - (a - 1.0) * special.digamma(a)
            - (b - 1.0) * special.digamma(b)
            + (a + b - 2.0) * special.digamma(a + b)
        )

    def moments_eta(self, eta):
        mu = special.expit(np.asarray(eta, dtype=float))
        return mu, mu * (1.0 - mu) / (1.0 + self.phi)

    def score_eta(self, eta, y):
        a, b = self.shapes(eta)
        mu = a / self.phi
        ystar = np.log(y) - np.log1p(-y)
        mustar = special.digamma(a) - special.digamma(b)
        return self.phi * (ystar - mustar) * mu * (1.0 - mu)

    def fisher_weight_eta(self, eta):
        a, b = self.shapes(eta)
        mu = a / self.phi
        return self.phi**2 * (special.polygamma(1, a) + special.polygamma(1, b)) * (mu * (1.0 - mu)) ** 2

    def expfam_coefficients(self, eta):
        a, b = self.shapes(eta)
        return np.stack([-special.betaln(a, b), a - 1.0, b - 1.0], axis=-1)

    def sufficient_stats(self, y):
        y = np.asarray(y, dtype=float)
        return np.stack([np.log(y), np.log1p(-y), np.zeros(y.shape)], axis=-1)

    def to_dict(self):
        return {"kind": self.name, "phi": self.phi}


FAMILIES = {cls.name: cls for cls in (LinearGaussian, Logistic, Poisson, BetaMean)}


def family_from_dict(spec) -> GLMFamily:
    """Build a family from ``{"kind": ..., **hyperparameters}`` or a bare name."""
    if isinstance(spec, str):
        spec = {"kind": spec}
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in FAMILIES:
        raise ContractViolation(f"unknown likelihood family {kind!r}; expected one of {sorted(FAMILIES)}")
    return FAMILIES[kind](**spec)


def poisson_entropy(rate) -> np.ndarray:
    """Entropy of Poisson(rate).

    Rates up to 1000 are summed directly over a window around the mean
    whose excluded mass is below 1e-12; larger rates use the asymptotic
    series, whose truncation error there is below 1e-13.
    """
    rate = np.asarray(rate, dtype=float)
    flat = rate.reshape(-1)
    h = np.empty(flat.size)
    big = flat > _POISSON_ASYMPTOTIC
    lam = flat[big]
    h[big] = (
        0.5 * np.log(2.0 * math.pi * math.e * lam)
        - 1.0 / (12.0 * lam)
        - 1.0 / (24.0 * lam**2)
        - 19.0 / (360.0 * lam**3)
    )
    small = np.flatnonzero(~big)
    if small.size:
        order = small[np.argsort(flat[small])]
        for chunk in np.array_split(order, max(1, order.size // 4096)):
            lam = flat[chunk]
            lo = np.floor(np.maximum(0.0, lam - 14.0 * np.sqrt(lam) - 5.0))
            hi = int(stats.poisson.isf(POISSON_TAIL * 1e-2, lam.max())) + 2
            width = int(hi - lo.min()) + 1
            k = lo[:, None] + np.arange(width)
            logp = stats.poisson.logpmf(k, lam[:, None])
            h[chunk] = -np.sum(np.exp(logp) * logp, axis=1)
    return h.reshape(rate.shape) if rate.ndim else float(h[0])


# ---------------------------------------------------------------------------
# Finite model classes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FiniteModelClass:
    """An enumerated model class: ``table[param, design, outcome]`` probabilities.

    Parameters, designs and outcomes are addressed by integer index.  The
    optional label tuples are carried for reporting only.
    """

    table: np.ndarray
    prior: np.ndarray
    param_labels: tuple = field(default=())
    outcome_labels: tuple = field(default=())

    name: ClassVar[str] = "Finite"
    outcome_tag: ClassVar[str] = "Category"
    constant_entropy: ClassVar[bool] = False

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        if table.ndim == 2:
            table = table[:, None, :]
        if table.ndim != 3:
            raise ContractViolation("table must have shape (params, designs, outcomes)")
        if np.any(table < 0) or not np.all(np.isfinite(table)):
            raise ContractViolation("table entries must be finite and nonnegative")
        if np.max(np.abs(table.sum(axis=2) - 1.0)) > 1e-12:
            raise ContractViolation("each (param, design) row must sum to 1 within 1e-12")
        prior = np.array(self.prior, dtype=float)
        if prior.shape != (table.shape[0],):
            raise ContractViolation("prior must have one weight per parameter")
        if np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-12:
            raise ContractViolation("prior weights must be nonnegative and sum to 1")
        table.setflags(write=False)
        prior.setflags(write=False)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "prior", prior)

    @property
    def n_params(self) -> int:
        return self.table.shape[0]

    @property
    def n_designs(self) -> int:
        return self.table.shape[1]

    @property
    def n_outcomes(self) -> int:
        return self.table.shape[2]

    def probs(self, theta, x) -> np.ndarray:
        return self.table[theta, x]

    def check_outcome(self, y):
        arr = np.asarray(y)
        if not np.issubdtype(arr.dtype, np.integer) or np.any(arr < 0) or np.any(arr >= self.n_outcomes):
            raise ContractViolation(f"Category outcome must be an index in [0, {self.n_outcomes}), got {y!r}")
        return arr

    def log_density(self, theta, x, y):
        y = self.check_outcome(y)
        with np.errstate(divide="ignore"):
            return np.log(self.table[theta, x, y])

    def sample(self, theta, x, rng):
        p = self.table[theta, x]
        return sample_categorical(p, rng)

    def entropy(self, theta, x):
        return special.entr(self.table[theta, x]).sum(axis=-1)

    def moments(self, theta, x):
        p = self.table[theta, x]
        k = np.arange(self.n_outcomes, dtype=float)
        mean = p @ k
        return mean, p @ (k * k) - mean**2

    def outcome_probs_at(self, theta, x):
        return self.table[theta, x]

    def design_entropy(self, x, tol=1e-12) -> float:
        """The common entropy ``H(x)`` if every parameter shares it, else ``None``."""
        h = self.entropy(np.arange(self.n_params), x)
        if np.ptp(h) > tol:
            return None
        return float(h[0])

    def is_deterministic(self) -> bool:
        return bool(np.all((self.table == 0.0) | (self.table == 1.0)))

    def combine(self, x1: int, x2: int) -> "FiniteModelClass":
        """Class with a single design: the pair ``(x1, x2)`` under the product likelihood."""
        p1 = self.table[:, x1, :]
        p2 = self.table[:, x2, :]
        joint = (p1[:, :, None] * p2[:, None, :]).reshape(self.n_params, 1, -1)
        return FiniteModelClass(joint, self.prior, self.param_labels)

    def with_prior(self, prior) -> "FiniteModelClass":
        return FiniteModelClass(self.table, prior, self.param_labels, self.outcome_labels)


def sample_categorical(p, rng) -> np.ndarray:
    """One index per row of ``p`` by inverse-CDF sampling."""
    p = np.asarray(p, dtype=float)
    u = rng.random(p.shape[:-1])
    cdf = np.cumsum(p, axis=-1)
    idx = (cdf < u[..., None]).sum(axis=-1)
    return np.minimum(idx, p.shape[-1] - 1).astype(np.int64)


# ---------------------------------------------------------------------------
# Spec-level operations
# ---------------------------------------------------------------------------


def log_density(family, theta, x, y):
    """``log P_theta(y; x)``."""
    out = family.log_density(theta, x, y)
    return float(out) if np.ndim(out) == 0 else out


def sample_outcome(family, theta, x, rng: np.random.Generator):
    """Draw ``y ~ P_theta(x)``."""
    out = family.sample(theta, x, rng)
    return np.asarray(out).item() if np.ndim(out) == 0 else out


def entropy(family, theta, x):
    """Entropy of the response at ``x`` in nats."""
    out = family.entropy(theta, x)
    return float(out) if np.ndim(out) == 0 else out


def predictive_moments(family, theta, x):
    """Mean and variance of ``y ~ P_theta(x)``."""
    mean, var = family.moments(theta, x)
    if np.ndim(mean) == 0:
        return float(mean), float(var)
    return mean, var


def triple_kernel_gaussian(mu1, s1, mu2, s2, mu3, s3) -> float:
    """``E_{y ~ N(mu1, s1 I)}[N(y; mu2, s2 I) N(y; mu3, s3 I)]`` for variances ``s1, s2, s3``.

    The exponent weights each of the three pairwise squared distances by
    the variance of the index left out of the pair, divided by ``2*alpha``
    with ``alpha = s1 s2 + s2 s3 + s1 s3``.
    """
    if not (s1 > 0 and s2 > 0 and s3 > 0):
        raise DomainError("variances must be positive")
    m1, m2, m3 = (np.atleast_1d(np.asarray(m, dtype=float)) for m in (mu1, mu2, mu3))
    if not (m1.shape == m2.shape == m3.shape) or m1.ndim != 1:
        raise ContractViolation("mean vectors must share one length")
    d = m1.shape[0]
    alpha = s1 * s2 + s2 * s3 + s1 * s3
    spread = s3 * np.sum((m1 - m2) ** 2) + s1 * np.sum((m2 - m3) ** 2) + s2 * np.sum((m1 - m3) ** 2)
    return float(math.exp(-0.5 * d * (math.log(alpha) + 2.0 * LOG_2PI) - spread / (2.0 * alpha)))


def _check_simplex(p, name):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ContractViolation(f"{name} must lie on the probability simplex")
    return p


def triple_kernel_categorical(p1, p2, p3) -> float:
    p1, p2, p3 = (_check_simplex(p, f"p{i}") for i, p in enumerate((p1, p2, p3), 1))
    if not (p1.shape == p2.shape == p3.shape):
        raise ContractViolation("probability vectors must share one length")
    return float(np.sum(p1 * p2 * p3))


def triple_kernel_exponential(l1, l2, l3) -> float:
    if not (l1 > 0 and l2 > 0 and l3 > 0):
        raise DomainError("exponential rates must be positive")
    return l1 * l2 * l3 / (l1 + l2 + l3)


def triple_kernel_geometric(p1, p2, p3) -> float:
    """Geometric pmf ``p (1-p)^k`` on k = 0, 1, ..."""
    for p in (p1, p2, p3):
        if not 0.0 < p <= 1.0:
            raise DomainError(f"geometric success probability must lie in (0, 1], got {p}")
    denom = p1 + p2 + p3 - p1 * p2 - p2 * p3 - p1 * p3 + p1 * p2 * p3
    return p1 * p2 * p3 / denom


def triple_kernel_gamma(a1, b1, a2, b2, a3, b3) -> float:
    """Gamma densities with shapes ``a`` and rates ``b``; needs ``a1 + a2 + a3 > 2``."""
    if min(a1, a2, a3, b1, b2, b3) <= 0:
        raise DomainError("gamma shapes and rates must be positive")
    s = a1 + a2 + a3 - 2.0
    if s <= 0:
        raise DomainError("sum of shapes must exceed 2 for the integral to converge")
    logv = (
        a1 * math.log(b1)
        + a2 * math.log(b2)
        + a3 * math.log(b3)
        + math.lgamma(s)
        - s * math.log(b1 + b2 + b3)
        - math.lgamma(a1)
        - math.lgamma(a2)
        - math.lgamma(a3)
    )
    return math.exp(logv)


def triple_kernel_negbinom(r, p1, p2, p3) -> float:
    """Negative binomial pmf ``C(k+r-1, k) (1-p)^r p^k`` with shared integer ``r``."""
    if int(r) != r or r < 1:
        raise DomainError(f"r must be a positive integer, got {r}")
    r = int(r)
    for p in (p1, p2, p3):
        if not 0.0 < p < 1.0:
            raise DomainError(f"negative binomial p must lie in (0, 1), got {p}")
    z = p1 * p2 * p3
    log_prefix = r * (math.log1p(-p1) + math.log1p(-p2) + math.log1p(-p3)) - r * math.log1p(-z)
    log_ratio = math.log(4.0 * z) - 2.0 * math.log1p(-z)
    k = np.arange(r, dtype=float)
    log_terms = (
        special.gammaln(r) - special.gammaln(k + 1.0) - special.gammaln(r - k)
        - 2.0 * k * math.log(2.0)
        + special.gammaln(2.0 * k + r)
        - special.gammaln(float(r))
        - 2.0 * special.gammaln(k + 1.0)
        + k * log_ratio
    )
    return float(math.exp(log_prefix + special.logsumexp(log_terms)))


def triple_kernel(family, t1, t2, t3, x):
    """``M(x; t1, t2, t3)`` when a closed form is available, else ``None``.

    Gaussian regression uses the Gaussian kernel on the scalar outcome;
    Bernoulli and finite classes go through the categorical kernel.  Poisson
    and Beta regression return ``None``.
    """
    if isinstance(family, LinearGaussian):
        s = family.noise_var
        return triple_kernel_gaussian(
            linear_predictor(t1, x), s, linear_predictor(t2, x), s, linear_predictor(t3, x), s
        )
    if isinstance(family, FiniteModelClass):
        return triple_kernel_categorical(*(family.table[t, x] for t in (t1, t2, t3)))
    if isinstance(family, Logistic):
        return triple_kernel_categorical(*(family.outcome_probs(linear_predictor(t, x)) for t in (t1, t2, t3)))
    return None

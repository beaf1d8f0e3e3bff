"""Exact theory checks on finite model classes.

Everything here enumerates outcomes and parameters exactly; nothing is
Monte Carlo.  ``margin`` fields are ``bound - value`` so that a check
passes when its margin is at least ``-TOL``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .acquisition import distance_matrix, pdbal_score_exact
from .distances import Distance, TableDistance
from .errors import AssumptionError, ContractViolation
from .likelihoods import FiniteModelClass
from .posterior import FinitePosterior, PosteriorEnsemble, finite_posterior_update

TOL = 1e-12


def avg_diameter(post, dist) -> float:
    """Expected distance between two independent posterior draws.

    Finite posteriors are summed exactly; ensembles give the U-statistic
    over distinct pairs (0 for a single sample).
    """
    if isinstance(post, FinitePosterior):
        D = distance_matrix(dist, post.model.n_params)
        return float(post.weights @ D @ post.weights)
    if not isinstance(post, PosteriorEnsemble):
        raise ContractViolation("avg_diameter takes a FinitePosterior or a PosteriorEnsemble")
    m = post.m
    if m < 2:
        return 0.0
    samples = post.samples
    if np.issubdtype(samples.dtype, np.integer) and not isinstance(dist, Distance) or isinstance(dist, TableDistance):
        table = dist.table if isinstance(dist, TableDistance) else np.asarray(dist, dtype=float)
        counts = np.bincount(samples, minlength=table.shape[0]).astype(float)
        return float(counts @ table @ counts / (m * (m - 1)))
    D = dist.matrix(samples)
    return float(D.sum() / (m * (m - 1)))


@dataclass(frozen=True)
class SplitReport:
    """``rho`` is clamped to [0, 1]; ``rho_raw = 1 - s_value / avg_diam`` is kept as computed."""

    rho: float
    rho_raw: float
    s_value: float
    avg_diam: float

    @property
    def clamped(self) -> bool:
        return self.rho != self.rho_raw


def splitting_value(post: FinitePosterior, x: int, dist) -> SplitReport:
    ad = avg_diameter(post, dist)
    if not ad > 0:
        raise ContractViolation("splitting value is undefined for a posterior with zero average diameter")
    s = pdbal_score_exact(post, x, dist)
    raw = 1.0 - s / ad
    return SplitReport(min(1.0, max(0.0, raw)), raw, s, ad)


@dataclass(frozen=True, eq=False)
class PotentialTrace:
    W: np.ndarray
    avg_diam: np.ndarray
    product: np.ndarray
    posteriors: tuple = field(repr=False, default=())


def _discrete_metric(n):
    return 1.0 - np.eye(n)


def potential_trace(model: FiniteModelClass, queries, dist=None, prior=None) -> PotentialTrace:
    """``W_t``, the average diameter and ``W_t^2 * avg_diam`` along a query/outcome sequence.

    ``dist`` defaults to the discrete metric on parameter ids.  Every queried
    design must have a parameter-independent entropy.
    """
    dist = _discrete_metric(model.n_params) if dist is None else dist
    post = FinitePosterior.prior(model) if prior is None else prior
    posts = [post]
    for x, y in queries:
        if model.design_entropy(x) is None:
            raise AssumptionError(f"design {x} has parameter-dependent entropy")
        post = finite_posterior_update(post, x, y)
        posts.append(post)
    W = np.array([p.potential for p in posts])
    ad = np.array([avg_diameter(p, dist) for p in posts])
    return PotentialTrace(W, ad, W**2 * ad, tuple(posts))


@dataclass(frozen=True)
class CheckReport:
    name: str
    status: str  # "pass", "fail" or "skip"
    margin: float
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status != "fail"

    def line(self) -> str:
        extra = " ".join(f"{k}={_fmt(v)}" for k, v in self.detail.items())
        return f"{self.name} {self.status} margin={_fmt(self.margin)}" + (f" {extra}" if extra else "")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6e}"
    return str(v)


def check_lemma1(post: FinitePosterior, x: int, dist, tol: float = TOL) -> CheckReport:
    """Expected ``W^2 * avg_diam`` after querying ``x`` against ``(1 - rho) W^2 avg_diam`` now.

    The left side enumerates outcomes, weighting each by its posterior
    predictive mass, and performs the Bayes update explicitly.  ``rho`` is the
    unclamped splitting value: with it the two sides coincide, whereas the
    clamp would turn noise-dominated designs into spurious failures.
    """
    model = post.model
    if model.design_entropy(x) is None:
        raise AssumptionError(f"design {x} has parameter-dependent entropy")
    if math.isnan(post.entropy_sum):
        raise AssumptionError("posterior history includes a design with parameter-dependent entropy")
    W = post.potential
    ad = avg_diameter(post, dist)
    split = splitting_value(post, x, dist) if ad > 0 else SplitReport(0.0, 0.0, 0.0, 0.0)
    lhs = 0.0
    for y in range(model.n_outcomes):
        mass = float(post.weights @ model.table[:, x, y])
        if mass <= 0.0:
            continue
        nxt = finite_posterior_update(post, x, y)
        lhs += mass * nxt.potential**2 * avg_diameter(nxt, dist)
    rhs = (1.0 - split.rho_raw) * W**2 * ad
    margin = rhs - lhs
    ok = margin >= -tol * max(1.0, abs(rhs))
    return CheckReport(
        "lemma1", "pass" if ok else "fail", margin,
        {"lhs": lhs, "rhs": rhs, "rho": split.rho, "rho_raw": split.rho_raw},
    )


def check_combine_split(model: FiniteModelClass, x1: int, x2: int, dist, tol: float = TOL,
                        prior=None) -> CheckReport:
    """Sub-additivity of splitting values for the paired query ``(x1, x2)``.

    Bounds: ``rho12 <= rho1 + rho2`` when the shared entropy ``h`` is 0 and
    ``rho12 <= 2 (rho1 + rho2)`` when ``0 <= h < (rho1 + rho2) / 6``; both
    require ``rho1 + rho2 < 1``.  Other cases are skipped with a reason.
    """
    h1, h2 = model.design_entropy(x1), model.design_entropy(x2)
    if h1 is None or h2 is None or abs(h1 - h2) > 1e-12:
        raise AssumptionError("both designs need the same parameter-independent entropy")
    h = 0.5 * (h1 + h2)
    post = FinitePosterior.prior(model) if prior is None else prior
    if not avg_diameter(post, dist) > 0:
        return CheckReport("lemma4", "skip", math.inf, {"reason": "zero-average-diameter"})
    r1 = splitting_value(post, x1, dist).rho_raw
    r2 = splitting_value(post, x2, dist).rho_raw
    pair = model.combine(x1, x2)
    pair_post = FinitePosterior(pair, post.weights)
    r12 = splitting_value(pair_post, 0, dist).rho_raw
    detail = {"rho1": r1, "rho2": r2, "rho12": r12, "h": h}
    total = r1 + r2
    if not total < 1.0:
        return CheckReport("lemma4", "skip", math.inf, {**detail, "reason": "rho1+rho2>=1"})
    if abs(h) <= 1e-12:
        bound, case = total, "h=0"
    elif 0.0 <= h < total / 6.0:
        bound, case = 2.0 * total, "low-entropy"
    else:
        return CheckReport("lemma4", "skip", math.inf, {**detail, "reason": "h>=(rho1+rho2)/6"})
    margin = bound - r12
    return CheckReport("lemma4", "pass" if margin >= -tol else "fail", margin, {**detail, "case": case})


# ---------------------------------------------------------------------------
# Random class generators for the property suites
# ---------------------------------------------------------------------------


def random_distance_table(n: int, rng: np.random.Generator) -> np.ndarray:
    D = rng.uniform(size=(n, n))
    D = np.triu(D, 1)
    return D + D.T


def random_finite_class(rng: np.random.Generator, n_params: int, n_designs: int, n_outcomes: int,
                        kind: str = "dirichlet", concentration: float = 1.0,
                        noise: float = 0.05, flip: float = 1.0) -> FiniteModelClass:
    """Random finite class with a Dirichlet prior.

    ``dirichlet``         every (param, design) row drawn independently
    ``constant_entropy``  per design, every parameter permutes one shared Dirichlet row
    ``deterministic``     every row a point mass
    ``low_entropy``       every row puts ``1 - noise`` on one outcome and a permutation
                          of one shared remainder on the others, so all designs share
                          the entropy

    For the last two kinds the heavy outcome is 0 except with probability
    ``flip``, when it is uniform; small ``flip`` gives weakly splitting designs.
    """
    P, X, K = n_params, n_designs, n_outcomes
    if kind == "dirichlet":
        table = rng.dirichlet(np.full(K, concentration), size=(P, X))
        table = table / table.sum(axis=2, keepdims=True)
    elif kind == "constant_entropy":
        table = np.empty((P, X, K))
        for x in range(X):
            base = rng.dirichlet(np.full(K, concentration))
            base = base / base.sum()
            for p in range(P):
                table[p, x] = base[rng.permutation(K)]
    elif kind in ("deterministic", "low_entropy"):
        heavy = np.where(rng.random((P, X)) < flip, rng.integers(0, K, size=(P, X)), 0)
        rest = noise * rng.dirichlet(np.ones(K - 1)) if kind == "low_entropy" else np.zeros(K - 1)
        base = np.concatenate([[1.0 - rest.sum()], rest])
        table = np.empty((P, X, K))
        for p in range(P):
            for x in range(X):
                others = [k for k in range(K) if k != heavy[p, x]]
                table[p, x, heavy[p, x]] = base[0]
                table[p, x, others] = base[1:][rng.permutation(K - 1)]
    else:
        raise ContractViolation(f"unknown class kind {kind!r}")
    prior = rng.dirichlet(np.ones(P))
    return FiniteModelClass(table, prior)


# ---------------------------------------------------------------------------
# Suites driven by the ``check`` command
# ---------------------------------------------------------------------------

FAULTS = ("gaussian-kernel-constant", "lemma1-clamped-rho")


def _quad_product(densities, lo=-np.inf, hi=np.inf, points=None):
    from scipy import integrate

    f = lambda y: densities[0](y) * densities[1](y) * densities[2](y)  # noqa: E731
    if points is not None and np.isfinite(lo) and np.isfinite(hi):
        return integrate.quad(f, lo, hi, points=points, epsabs=0.0, epsrel=1e-13, limit=500)[0]
    return integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-13, limit=500)[0]


def kernel_oracle_suite(rng: np.random.Generator, n: int = 20, fault: str | None = None) -> list[CheckReport]:
    """Closed-form triple kernels against numerical integration or series summation."""
    from scipy import stats

    from . import likelihoods as lk

    gauss = lk.triple_kernel_gaussian
    if fault == "gaussian-kernel-constant":
        def gauss(*args):
            return 1.001 * lk.triple_kernel_gaussian(*args)

    worst = {"gaussian": 0.0, "exponential": 0.0, "gamma": 0.0, "geometric": 0.0, "negbinom": 0.0, "categorical": 0.0}
    for _ in range(n):
        d = int(rng.choice([1, 3]))
        mus = rng.normal(scale=0.7, size=(3, d))
        vs = rng.uniform(0.2, 2.0, size=3)
        ref = 1.0
        for c in range(d):
            dens = [stats.norm(mus[i, c], math.sqrt(vs[i])).pdf for i in range(3)]
            lo, hi = mus[:, c].min() - 40.0, mus[:, c].max() + 40.0
            ref *= _quad_product(dens, lo, hi, points=sorted(mus[:, c]))
        got = gauss(mus[0], vs[0], mus[1], vs[1], mus[2], vs[2])
        worst["gaussian"] = max(worst["gaussian"], abs(got - ref) / ref)

        lam = rng.uniform(0.2, 3.0, size=3)
        ref = _quad_product([stats.expon(scale=1.0 / l).pdf for l in lam], 0.0, np.inf)
        worst["exponential"] = max(worst["exponential"], abs(lk.triple_kernel_exponential(*lam) - ref) / ref)

        a = rng.uniform(1.0, 5.0, size=3)
        b = rng.uniform(0.5, 3.0, size=3)
        ref = _quad_product([stats.gamma(a[i], scale=1.0 / b[i]).pdf for i in range(3)], 0.0, np.inf)
        got = lk.triple_kernel_gamma(a[0], b[0], a[1], b[1], a[2], b[2])
        worst["gamma"] = max(worst["gamma"], abs(got - ref) / ref)

        p = rng.uniform(0.1, 0.9, size=3)
        kmax = int(math.ceil(math.log(1e-16) / math.log(float(np.prod(1.0 - p))))) + 1
        k = np.arange(kmax)
        ref = math.fsum(np.prod([stats.geom.pmf(k + 1, pi) for pi in p], axis=0))
        worst["geometric"] = max(worst["geometric"], abs(lk.triple_kernel_geometric(*p) - ref) / ref)

        r = int(rng.integers(1, 8))
        q = rng.uniform(0.05, 0.8, size=3)
        k = np.arange(4000)
        ref = math.fsum(np.prod([stats.nbinom.pmf(k, r, 1.0 - qi) for qi in q], axis=0))
        worst["negbinom"] = max(worst["negbinom"], abs(lk.triple_kernel_negbinom(r, *q) - ref) / ref)

        K = int(rng.integers(2, 6))
        ps = rng.dirichlet(np.ones(K), size=3)
        ps = ps / ps.sum(axis=1, keepdims=True)
        ref = math.fsum(ps[0, y] * ps[1, y] * ps[2, y] for y in range(K))
        worst["categorical"] = max(worst["categorical"], abs(lk.triple_kernel_categorical(*ps) - ref))

    tols = {"gaussian": 1e-8, "exponential": 1e-9, "gamma": 1e-9, "geometric": 1e-10, "negbinom": 1e-10,
            "categorical": 1e-15}
    return [
        CheckReport(f"kernel-{name}", "pass" if worst[name] <= tols[name] else "fail", tols[name] - worst[name],
                    {"n": n, "max_error": worst[name]})
        for name in worst
    ]


def lemma1_suite(rng: np.random.Generator, n_classes: int, fault: str | None = None) -> CheckReport:
    """``check_lemma1`` on random constant-entropy classes after a random observation history."""
    worst = math.inf
    fails = 0
    for _ in range(n_classes):
        P = int(rng.integers(2, 7))
        K = int(rng.integers(2, 6))
        model = random_finite_class(rng, P, 3, K, "constant_entropy", concentration=float(rng.uniform(0.2, 3.0)))
        D = random_distance_table(P, rng)
        post = FinitePosterior.prior(model)
        for _ in range(int(rng.integers(0, 3))):
            x = int(rng.integers(model.n_designs))
            probs = post.weights @ model.table[:, x, :]
            post = finite_posterior_update(post, x, int(rng.choice(K, p=probs / probs.sum())))
        x = int(rng.integers(model.n_designs))
        rep = check_lemma1(post, x, D)
        if fault == "lemma1-clamped-rho":
            rhs = (1.0 - rep.detail["rho"]) * post.potential**2 * avg_diameter(post, D)
            margin = rhs - rep.detail["lhs"]
            rep = CheckReport("lemma1", "pass" if margin >= -TOL * max(1.0, abs(rhs)) else "fail", margin, rep.detail)
        worst = min(worst, rep.margin)
        fails += rep.status == "fail"
    return CheckReport("lemma1", "fail" if fails else "pass", worst, {"n": n_classes, "violations": fails})


def lemma4_suite(rng: np.random.Generator, n_classes: int, kind: str, max_draws: int | None = None) -> CheckReport:
    """``check_combine_split`` until ``n_classes`` random classes meet the lemma's preconditions."""
    max_draws = max_draws or 50 * n_classes
    worst = math.inf
    fails = checked = skipped = 0
    for _ in range(max_draws):
        if checked >= n_classes:
            break
        P = int(rng.integers(2, 7))
        K = int(rng.integers(2, 5))
        model = random_finite_class(rng, P, 2, K, kind, noise=float(rng.uniform(0.0, 0.02)),
                                    flip=float(rng.uniform(0.1, 0.4)))
        rep = check_combine_split(model, 0, 1, random_distance_table(P, rng))
        if rep.status == "skip":
            skipped += 1
            continue
        checked += 1
        worst = min(worst, rep.margin)
        fails += rep.status == "fail"
    name = "lemma4-h0" if kind == "deterministic" else "lemma4-low-entropy"
    status = "fail" if fails or checked < n_classes else "pass"
    return CheckReport(name, status, worst, {"n": checked, "skipped": skipped, "violations": fails})


def run_check_suite(seed: int, n_classes: int, fault: str | None = None) -> list[CheckReport]:
    if n_classes < 1:
        raise ContractViolation("n_classes must be >= 1")
    if fault is not None and fault not in FAULTS:
        raise ContractViolation(f"unknown fault {fault!r}; expected one of {FAULTS}")
    from . import rng as rngmod

    reports = kernel_oracle_suite(rngmod.substream(seed, 0), min(n_classes, 20), fault)
    reports.append(lemma1_suite(rngmod.substream(seed, 1), n_classes, fault))
    reports.append(lemma4_suite(rngmod.substream(seed, 2), n_classes, "deterministic"))
    reports.append(lemma4_suite(rngmod.substream(seed, 3), n_classes, "low_entropy"))
    return reports

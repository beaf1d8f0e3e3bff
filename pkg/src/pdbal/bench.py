"""Synthetic active-learning benchmark and the targeted least-squares demonstration."""

from __future__ import annotations

import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from . import rng as rngmod
from .acquisition import AcquisitionConfig, score_pool
from .diagnostics import avg_diameter
from .distances import Distance, distance_from_dict
from .errors import ContractViolation, PDBALError, SamplerFailure
from .likelihoods import GLMFamily, LinearGaussian, family_from_dict
from .posterior import (
    Dataset,
    MCMCConfig,
    PosteriorEnsemble,
    conjugate_linear_gaussian,
    metropolis_glm_posterior,
    sample_gaussian_posterior,
)

CSV_HEADER = "scenario,strategy,seed,step,n_labels,avg_diam,target_error,chosen_candidate,wall_ms"


# ---------------------------------------------------------------------------
# Scenario generation
# ---------------------------------------------------------------------------


def gen_ground_truth(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the sphere of radius 2."""
    if d < 1:
        raise ContractViolation("d must be >= 1")
    while True:
        g = rng.standard_normal(d)
        norm = np.linalg.norm(g)
        if norm > 0:
            return 2.0 * g / norm


def gen_covariates(n: int, d: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws from the sphere/sparse mixture.

    With probability ``1 - p`` a row is uniform on the unit sphere.  Otherwise
    each coordinate survives with probability ``1/d``, survivors get Gaussian
    values and the row is normalised; a row with no survivors stays zero.
    """
    if d < 1 or not 0.0 <= p <= 1.0:
        raise ContractViolation("need d >= 1 and p in [0, 1]")
    sparse = rng.random(n) < p
    dense = rng.standard_normal((n, d))
    keep = rng.random((n, d)) < 1.0 / d
    fill = rng.standard_normal((n, d))
    X = np.where(sparse[:, None], np.where(keep, fill, 0.0), dense)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)


def gen_covariate(d: int, p: float, rng: np.random.Generator) -> np.ndarray:
    return gen_covariates(1, d, p, rng)[0]


def target_error(ens: PosteriorEnsemble, truth, dist: Distance) -> float:
    """Average distance from the ensemble members to the true parameter."""
    truth = np.asarray(truth, dtype=float)
    samples = np.asarray(ens.samples, dtype=float)
    return float(np.mean(dist.paired(samples, np.broadcast_to(truth, samples.shape))))


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    family: GLMFamily = field(default_factory=LinearGaussian)
    distance: dict = field(default_factory=lambda: {"kind": "First"})
    d: int = 10
    mix_p: float = 0.1
    pool_size: int = 2000
    n_queries: int = 40
    m_samples: int = 300
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    seed: int = 0
    name: str = "scenario"
    mcmc: MCMCConfig = field(default_factory=MCMCConfig)
    prior_var: float = 1.0
    n_reference: int = 2000
    record_timing: bool = False

    def __post_init__(self):
        if self.d < 2:
            raise ContractViolation("d must be >= 2")
        if not 0.0 <= self.mix_p <= 1.0:
            raise ContractViolation("mix_p must lie in [0, 1]")
        if self.pool_size < 1 or self.n_queries < 0 or self.m_samples < 3:
            raise ContractViolation("need pool_size >= 1, n_queries >= 0 and m_samples >= 3")
        if self.prior_var != 1.0 and not isinstance(self.family, LinearGaussian):
            raise ContractViolation("non-unit prior variance is only supported for LinearGaussian")

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        doc = dict(doc)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ContractViolation(f"unknown scenario keys: {sorted(unknown)}")
        if "family" in doc:
            doc["family"] = family_from_dict(doc["family"])
        if "distance" in doc:
            dist = doc["distance"]
            doc["distance"] = {"kind": dist} if isinstance(dist, str) else dict(dist)
        if "acquisition" in doc:
            doc["acquisition"] = AcquisitionConfig(**doc["acquisition"])
        if "mcmc" in doc:
            doc["mcmc"] = MCMCConfig(**doc["mcmc"])
        return cls(**doc)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "family": self.family.to_dict(),
            "distance": dict(self.distance),
            "d": self.d,
            "mix_p": self.mix_p,
            "pool_size": self.pool_size,
            "n_queries": self.n_queries,
            "m_samples": self.m_samples,
            "acquisition": self.acquisition.to_dict(),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class TrajectoryRecord:
    scenario: str
    strategy: str
    seed: int
    step: int
    n_labels: int
    avg_diam: float
    target_error: float
    chosen_candidate: int
    wall_ms: float = math.nan

    def csv_row(self) -> str:
        return ",".join([
            self.scenario,
            self.strategy,
            str(self.seed),
            str(self.step),
            str(self.n_labels),
            _num(self.avg_diam),
            _num(self.target_error),
            str(self.chosen_candidate),
            _num(self.wall_ms),
        ])


def _num(v: float) -> str:
    return "NA" if math.isnan(v) else repr(float(v))


def write_csv(records, stream: io.TextIOBase, header: bool = True) -> None:
    if header:
        stream.write(CSV_HEADER + "\n")
    for r in records:
        stream.write(r.csv_row() + "\n")


def build_distance(cfg: ScenarioConfig) -> Distance:
    ref = None
    if cfg.distance.get("kind") == "Influence":
        ref = gen_covariates(cfg.n_reference, cfg.d, cfg.mix_p, rngmod.substream(cfg.seed, rngmod.REFERENCE))
    return distance_from_dict(cfg.distance, dim=cfg.d, reference_sample=ref)


# ---------------------------------------------------------------------------
# Active-learning loop
# ---------------------------------------------------------------------------


def fit_posterior(cfg: ScenarioConfig, data: Dataset, rng: np.random.Generator) -> PosteriorEnsemble:
    """Posterior ensemble: exact conjugate draws for LinearGaussian, Metropolis otherwise."""
    if isinstance(cfg.family, LinearGaussian):
        post = conjugate_linear_gaussian(data, cfg.family.noise_var, cfg.prior_var)
        return sample_gaussian_posterior(post, cfg.m_samples, rng)
    return metropolis_glm_posterior(cfg.family, data, cfg.m_samples, cfg.mcmc, rng)


def run_active_loop(cfg: ScenarioConfig) -> list[TrajectoryRecord]:
    """One seeded run: ``n_queries + 1`` records, the last with ``chosen_candidate = -1``.

    Record ``t`` holds metrics of the posterior after ``t`` labels.  Every
    random draw comes from a substream keyed by ``(cfg.seed, role, step)``, so
    runs that differ only in strategy share truth and candidate pools.
    """
    seed = cfg.seed
    truth = gen_ground_truth(cfg.d, rngmod.substream(seed, rngmod.TRUTH))
    dist = build_distance(cfg)
    data = Dataset.empty(cfg.d)
    records = []
    for step in range(cfg.n_queries + 1):
        t0 = time.perf_counter()
        try:
            ens = fit_posterior(cfg, data, rngmod.substream(seed, rngmod.POSTERIOR, step))
        except (PDBALError, np.linalg.LinAlgError, FloatingPointError) as exc:
            raise SamplerFailure(f"{cfg.name} seed {seed} step {step}: posterior sampling failed: {exc}") from exc
        chosen = -1
        if step < cfg.n_queries:
            pool = gen_covariates(cfg.pool_size, cfg.d, cfg.mix_p, rngmod.substream(seed, rngmod.POOL, step))
            report = score_pool(ens, cfg.family, pool, dist, cfg.acquisition, seed, step)
            chosen = report.chosen_index
            x = pool[chosen]
            y = cfg.family.sample_eta(np.array([x @ truth]), rngmod.substream(seed, rngmod.OBSERVE, step))[0]
            data = data.append(x, y)
        wall = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else math.nan
        records.append(TrajectoryRecord(
            cfg.name, cfg.acquisition.strategy, seed, step, step,
            avg_diameter(ens, dist), target_error(ens, truth, dist), chosen, wall,
        ))
    return records


def run_many(cfgs, jobs: int = 1):
    """Yield each configuration's records in input order, running ``jobs`` processes."""
    cfgs = list(cfgs)
    if jobs <= 1 or len(cfgs) <= 1:
        for cfg in cfgs:
            yield run_active_loop(cfg)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        yield from pool.map(run_active_loop, cfgs)


def final_errors(records) -> dict:
    """``{(scenario, strategy): {seed: final target_error}}``."""
    out: dict = {}
    for r in records:
        key = (r.scenario, r.strategy)
        prev = out.setdefault(key, {}).get(r.seed)
        if prev is None or r.step > prev[0]:
            out[key][r.seed] = (r.step, r.target_error)
    return {k: {s: v[1] for s, v in d.items()} for k, d in out.items()}


def bootstrap_ci(values, seed: int = 0, level: float = 0.95, n_resamples: int = 10000):
    """Percentile bootstrap interval for the mean."""
    values = np.asarray(values, dtype=float)
    res = stats.bootstrap(
        (values,), np.mean, confidence_level=level, n_resamples=n_resamples,
        method="percentile", random_state=np.random.default_rng(seed),
    )
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


# ---------------------------------------------------------------------------
# Targeted least squares
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetedLSReport:
    restricted_error: float
    full_error: float
    lambda_min: float
    cross_bound: float
    beta: np.ndarray = field(repr=False)


def _unit_rows(n, k, rng):
    g = rng.standard_normal((n, k))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sample_filtered_sphere(n: int, d: int, k: int, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform points on the unit sphere conditioned on ``||x_S||^2 >= 1 - alpha``, ``S`` the first ``k`` coordinates.

    ``1 - ||x_S||^2`` is Beta((d - k)/2, k/2) under the uniform law, so it is
    drawn from that Beta truncated to ``[0, alpha]`` by inverse CDF; the
    directions within ``S`` and its complement stay uniform.
    """
    tail = stats.beta((d - k) / 2.0, k / 2.0)
    u = rng.random(n) * tail.cdf(alpha)
    c = np.minimum(tail.ppf(u), alpha)
    X = np.empty((n, d))
    X[:, :k] = np.sqrt(1.0 - c)[:, None] * _unit_rows(n, k, rng)
    X[:, k:] = np.sqrt(c)[:, None] * _unit_rows(n, d - k, rng)
    return X


def targeted_ls_demo(d: int, k: int, alpha: float, n: int, rng: np.random.Generator,
                     noise_sd: float = 1.0, beta=None) -> TargetedLSReport:
    """Squared error on the first ``k`` coefficients: restricted LS on filtered queries vs full LS.

    The restricted estimator regresses on the ``k`` coordinates of interest
    using ``n`` points with ``||x_S||^2 >= 1 - alpha``; the full estimator uses
    ``n`` unfiltered sphere points and all ``d`` coordinates (minimum-norm
    solution when ``n < d``).  With ``alpha >= 1`` both share one design and
    noise draw.
    """
    if not 1 <= k <= d:
        raise ContractViolation("need 1 <= k <= d")
    if not alpha > 0:
        raise ContractViolation("alpha must be positive")
    if n < k:
        raise ContractViolation("need n >= k")
    beta = _unit_rows(1, d, rng)[0] if beta is None else np.asarray(beta, dtype=float)
    full_X = _unit_rows(n, d, rng)
    full_y = full_X @ beta + noise_sd * rng.standard_normal(n)
    if alpha >= 1.0 or k == d:
        X, y = full_X, full_y
    else:
        X = sample_filtered_sphere(n, d, k, alpha, rng)
        y = X @ beta + noise_sd * rng.standard_normal(n)
    XS = X[:, :k]
    b_restricted = linalg.lstsq(XS, y)[0]
    b_full = linalg.lstsq(full_X, full_y)[0]
    lam = float(np.linalg.eigvalsh(XS.T @ XS)[0])
    cross = n * min(alpha, 1.0) * float(beta[k:] @ beta[k:]) / lam if lam > 0 else math.inf
    return TargetedLSReport(
        float(np.sum((b_restricted - beta[:k]) ** 2)),
        float(np.sum((b_full[:k] - beta[:k]) ** 2)),
        lam,
        cross,
        beta,
    )

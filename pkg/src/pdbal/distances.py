"""Risk-aligned distances between parameter vectors.

Every distance here is symmetric, vanishes on identical arguments and takes
values in [0, 1].  Each class exposes

``__call__(t1, t2)``   the distance between two parameters,
``paired(a, b)``       row-wise distances for two stacks of parameters,
``matrix(samples)``    the full pairwise matrix of an ensemble.

``sign(0)`` is taken as +1 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, DomainError


def _rows(a):
    a = np.asarray(a, dtype=float)
    return a[None, :] if a.ndim == 1 else a


def _positive(v):
    return v >= 0


class Distance:
    """Base class: subclasses implement :meth:`paired`."""

    kind: str = ""

    def paired(self, a, b) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t1, t2) -> float:
        t1 = np.asarray(t1)
        t2 = np.asarray(t2)
        if t1.ndim == 1 and t1.size == 0:
            raise ContractViolation("parameter vectors must be nonempty")
        if t1.shape != t2.shape:
            raise ContractViolation(f"parameter shapes differ: {t1.shape} vs {t2.shape}")
        return float(self.paired(t1[None], t2[None])[0])

    def matrix(self, samples) -> np.ndarray:
        samples = np.asarray(samples)
        n = samples.shape[0]
        i, j = np.triu_indices(n, k=1)
        out = np.zeros((n, n))
        if i.size:
            vals = self.paired(samples[i], samples[j])
            out[i, j] = vals
            out[j, i] = vals
        return out

    def scaled(self, factor: float) -> "Scaled":
        return Scaled(self, factor)

    def to_dict(self) -> dict:
        return {"kind": self.kind}


class First(Distance):
    """Disagreement in the sign of the first coordinate."""

    kind = "First"

    def paired(self, a, b):
        a, b = _rows(a), _rows(b)
        return (_positive(a[:, 0]) != _positive(b[:, 0])).astype(float)


class Max(Distance):
    """Disagreement in which coordinate has the largest magnitude (lowest index wins ties)."""

    kind = "Max"

    def paired(self, a, b):
        a, b = _rows(a), _rows(b)
        return (np.argmax(np.abs(a), axis=1) != np.argmax(np.abs(b), axis=1)).astype(float)


def kendall_tau_b(a, b) -> np.ndarray:
    """Row-wise Kendall tau-b between two stacks of vectors.

    Returns 1 for a pair of fully tied vectors and 0 when exactly one of the
    two is fully tied, so that identical inputs always correlate perfectly.
    """
    a, b = _rows(a), _rows(b)
    n = a.shape[1]
    if n < 2:
        raise ContractViolation("Kendall tau needs vectors of length >= 2")
    i, j = np.triu_indices(n, k=1)
    sa = np.sign(a[:, i] - a[:, j])
    sb = np.sign(b[:, i] - b[:, j])
    num = np.sum(sa * sb, axis=1)
    untied_a = np.count_nonzero(sa, axis=1)
    untied_b = np.count_nonzero(sb, axis=1)
    denom = np.sqrt(untied_a.astype(float) * untied_b)
    tau = np.divide(num, denom, out=np.zeros(a.shape[0]), where=denom > 0)
    both_flat = (untied_a == 0) & (untied_b == 0)
    tau[both_flat] = 1.0
    return tau


class Kendall(Distance):
    """``(1 - tau_b(|t1|, |t2|)) / 2``: disagreement in the ranking of magnitudes."""

    kind = "Kendall"

    def paired(self, a, b):
        tau = kendall_tau_b(np.abs(_rows(a)), np.abs(_rows(b)))
        return np.clip(0.5 * (1.0 - tau), 0.0, 1.0)


@dataclass(frozen=True)
class EuclideanScaled(Distance):
    """``min(1, ||t1 - t2|| / scale)``."""

    scale: float = 4.0
    kind = "EuclideanScaled"

    def __post_init__(self):
        if not self.scale > 0:
            raise DomainError(f"scale must be positive, got {self.scale}")

    def paired(self, a, b):
        a, b = _rows(a), _rows(b)
        return np.minimum(1.0, np.linalg.norm(a - b, axis=1) / self.scale)

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale}


@dataclass(frozen=True, eq=False)
class Influence(Distance):
    """Fraction of reference covariates on which the leading-block sign prediction differs.

    Only the first ``half_dim`` coordinates of both the covariates and the
    parameters enter.  The reference sample is fixed at construction, so the
    distance is a deterministic function of its two arguments.
    """

    reference_sample: np.ndarray = field(repr=False)
    half_dim: int = 1
    kind = "Influence"

    def __post_init__(self):
        ref = np.array(self.reference_sample, dtype=float)
        if ref.ndim != 2 or ref.shape[0] == 0:
            raise ContractViolation("reference_sample must be a nonempty 2-D array")
        if not 1 <= self.half_dim <= ref.shape[1]:
            raise ContractViolation(f"half_dim must lie in [1, {ref.shape[1]}], got {self.half_dim}")
        ref.setflags(write=False)
        object.__setattr__(self, "reference_sample", ref)

    def signs(self, samples) -> np.ndarray:
        """Boolean (n_ref, n_samples) matrix of ``<x_S, theta_S> >= 0``."""
        k = self.half_dim
        samples = _rows(samples)
        return _positive(self.reference_sample[:, :k] @ samples[:, :k].T)

    def paired(self, a, b):
        return np.mean(self.signs(a) != self.signs(b), axis=0)

    def matrix(self, samples):
        s = self.signs(samples).astype(float)
        n_ref = s.shape[0]
        agree_pos = s.T @ s
        agree_neg = (1.0 - s).T @ (1.0 - s)
        out = 1.0 - (agree_pos + agree_neg) / n_ref
        np.fill_diagonal(out, 0.0)
        return np.clip(out, 0.0, 1.0)

    def to_dict(self):
        return {"kind": self.kind, "half_dim": self.half_dim, "n_reference": self.reference_sample.shape[0]}


@dataclass(frozen=True, eq=False)
class TableDistance(Distance):
    """Distance given as an explicit symmetric matrix over integer parameter ids."""

    table: np.ndarray
    kind = "Table"

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ContractViolation("distance table must be square")
        if np.any(np.diag(t) != 0) or np.any(t != t.T) or np.any(t < 0) or np.any(t > 1):
            raise ContractViolation("distance table must be symmetric with zero diagonal and values in [0, 1]")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    def __call__(self, t1, t2):
        return float(self.table[int(t1), int(t2)])

    def paired(self, a, b):
        return self.table[np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)]

    def matrix(self, samples):
        idx = np.asarray(samples, dtype=np.int64)
        return self.table[np.ix_(idx, idx)]


@dataclass(frozen=True, eq=False)
class Scaled(Distance):
    """A base distance multiplied by a positive constant (used for invariance checks)."""

    base: Distance
    factor: float = 1.0

    def __post_init__(self):
        if not self.factor > 0:
            raise DomainError("scale factor must be positive")

    @property
    def kind(self):
        return self.base.kind

    def __call__(self, t1, t2):
        return self.factor * self.base(t1, t2)

    def paired(self, a, b):
        return self.factor * self.base.paired(a, b)

    def matrix(self, samples):
        return self.factor * self.base.matrix(samples)

    def to_dict(self):
        return {**self.base.to_dict(), "factor": self.factor}


def d_first(t1, t2) -> float:
    return First()(t1, t2)


def d_max(t1, t2) -> float:
    return Max()(t1, t2)


def d_kendall(t1, t2) -> float:
    return Kendall()(t1, t2)


def d_euclidean_scaled(t1, t2, scale: float = 4.0) -> float:
    return EuclideanScaled(scale)(t1, t2)


def d_influence(t1, t2, spec: Influence) -> float:
    return spec(t1, t2)


def distance_from_dict(spec, *, dim: int | None = None, reference_sample=None) -> Distance:
    """Build a distance from its configuration entry.

    ``Influence`` needs a reference sample; callers pass one drawn from the
    scenario's covariate distribution.  ``half_dim`` defaults to ``dim // 2``.
    """
    if isinstance(spec, str):
        spec = {"kind": spec}
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "First":
        return First()
    if kind == "Max":
        return Max()
    if kind == "Kendall":
        return Kendall()
    if kind == "EuclideanScaled":
        return EuclideanScaled(float(spec.get("scale", 4.0)))
    if kind == "Influence":
        if reference_sample is None:
            raise ContractViolation("Influence distance needs a reference sample")
        half_dim = int(spec.get("half_dim", (dim or reference_sample.shape[1]) // 2))
        return Influence(reference_sample, half_dim)
    raise ContractViolation(f"unknown distance kind {kind!r}")

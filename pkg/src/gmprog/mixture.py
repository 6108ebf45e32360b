"""Degenerate Gaussian mixtures: construction, moments, marginals, density.

A mixture stores its parameters as stacked numpy arrays (weights ``(C,)``,
means ``(C, d)``, covariances ``(C, d, d)``).  All arrays are marked
read-only so instances can be shared freely between threads.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyKeepSet,
    IndexOutOfRange,
    NameCollision,
    NegativeWeight,
    NotPositiveSemidefinite,
    WeightSumError,
)

PSD_TOL = 1e-9
RANK_TOL = 1e-10
DELTA_TOL = 1e-9
WEIGHT_DROP = 1e-12
RENORM_TOL = 1e-6


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def symmetrize(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    return 0.5 * (cov + np.swapaxes(cov, -1, -2))


def psd_repair(cov: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    """Symmetrize and clip tiny negative eigenvalues of one or many matrices.

    Eigenvalues in ``[-tol * max(1, lambda_max), 0)`` are set to zero; anything
    more negative raises ``NotPositiveSemidefinite``.  Matrices that are already
    PSD are returned symmetrized but otherwise untouched.
    """
    cov = symmetrize(cov)
    if cov.shape[-1] == 0:
        return cov
    flat = cov.reshape(-1, cov.shape[-1], cov.shape[-1])
    vals = np.linalg.eigvalsh(flat)
    lo = vals[:, 0]
    scale = np.maximum(1.0, vals[:, -1])
    bad = lo < -tol * scale
    if np.any(bad):
        raise NotPositiveSemidefinite(
            f"covariance has eigenvalue {lo[bad].min():.3e} below tolerance"
        )
    need = lo < 0
    if np.any(need):
        out = flat.copy()
        for k in np.flatnonzero(need):
            w, v = np.linalg.eigh(flat[k])
            w = np.clip(w, 0.0, None)
            out[k] = symmetrize((v * w) @ v.T)
        flat = out
    return flat.reshape(cov.shape)


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """One multivariate Gaussian, possibly degenerate (rank 0 is a delta)."""

    mean: np.ndarray
    cov: np.ndarray

    def __init__(self, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.asarray(cov, dtype=float)
        d = mean.shape[0]
        if mean.ndim != 1:
            raise DimensionMismatch("mean must be a vector")
        if cov.ndim == 0 and d == 1:
            cov = cov.reshape(1, 1)
        if cov.shape != (d, d):
            raise DimensionMismatch(f"cov shape {cov.shape} does not match mean length {d}")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(psd_repair(cov)))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def rank(self) -> int:
        vals = np.linalg.eigvalsh(self.cov)
        thr = RANK_TOL * max(1.0, float(vals[-1])) if vals.size else 0.0
        return int(np.sum(vals > thr))

    def is_delta(self) -> bool:
        return self.rank() == 0

    def __repr__(self):
        return f"GaussianComponent(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


class GaussianMixture:
    """Normalized mixture of Gaussian components over named variables."""

    __slots__ = ("var_names", "weights", "means", "covs")

    def __init__(self, var_names, weights, means, covs):
        # trusted constructor: callers must pass validated arrays
        self.var_names = tuple(var_names)
        self.weights = _frozen(weights)
        self.means = _frozen(means)
        self.covs = _frozen(covs)

    @property
    def dim(self) -> int:
        return len(self.var_names)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def components(self) -> list[GaussianComponent]:
        return [GaussianComponent(m, c) for m, c in zip(self.means, self.covs)]

    def index(self, name: str) -> int:
        try:
            return self.var_names.index(name)
        except ValueError:
            raise IndexOutOfRange(f"unknown variable {name!r}") from None

    def __len__(self):
        return self.n_components

    def __repr__(self):
        return f"GaussianMixture(vars={list(self.var_names)}, C={self.n_components})"

    def to_json(self) -> dict:
        return {
            "vars": list(self.var_names),
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covs": self.covs.tolist(),
        }

    @classmethod
    def from_json(cls, obj) -> "GaussianMixture":
        if isinstance(obj, str):
            obj = json.loads(obj)
        # validate through the normal path, but keep the stored bits verbatim
        # so that serialization round-trips exactly
        checked = make_mixture(
            obj["vars"], obj["weights"],
            [GaussianComponent(m, c) for m, c in zip(obj["means"], obj["covs"])],
        )
        weights = np.asarray(obj["weights"], dtype=float)
        if checked.n_components != weights.size:
            return checked
        d = len(obj["vars"])
        return cls(
            obj["vars"], weights,
            np.asarray(obj["means"], dtype=float).reshape(-1, d),
            np.asarray(obj["covs"], dtype=float).reshape(-1, d, d),
        )


@dataclass(frozen=True)
class WeightedDist:
    """Unnormalized path mass paired with a normalized mixture."""

    mass: float
    dist: GaussianMixture

    def __post_init__(self):
        if not self.mass >= 0:
            raise NegativeWeight(f"mass must be nonnegative, got {self.mass}")


def make_mixture(var_names: Sequence[str], weights, components) -> GaussianMixture:
    var_names = list(var_names)
    weights = np.asarray(weights, dtype=float).ravel()
    components = list(components)
    if len(components) == 0 or weights.size == 0:
        raise DimensionMismatch("a mixture needs at least one component")
    if weights.size != len(components):
        raise DimensionMismatch(
            f"{weights.size} weights for {len(components)} components"
        )
    if len(set(var_names)) != len(var_names):
        raise NameCollision("duplicate variable names")
    d = len(var_names)
    comps = []
    for c in components:
        if not isinstance(c, GaussianComponent):
            c = GaussianComponent(*c)
        if c.dim != d:
            raise DimensionMismatch(f"component of dimension {c.dim}, expected {d}")
        comps.append(c)
    if not np.all(np.isfinite(weights)):
        raise NegativeWeight("weights must be finite")
    if np.any(weights < 0):
        raise NegativeWeight("weights must be nonnegative")
    total = weights.sum()
    if abs(total - 1.0) > RENORM_TOL:
        raise WeightSumError(f"weights sum to {total}, not 1")
    keep = weights >= WEIGHT_DROP
    if not np.any(keep):
        raise WeightSumError("all weights are negligible")
    weights = weights[keep]
    if abs(weights.sum() - 1.0) > 1e-12:
        weights = weights / weights.sum()
    comps = [c for c, k in zip(comps, keep) if k]
    means = np.stack([c.mean for c in comps]).reshape(len(comps), d)
    covs = np.stack([c.cov for c in comps]).reshape(len(comps), d, d)
    return GaussianMixture(var_names, weights, means, covs)


def single(var_names, mean, cov) -> GaussianMixture:
    return make_mixture(var_names, [1.0], [GaussianComponent(mean, cov)])


def mixture_mean(m: GaussianMixture) -> np.ndarray:
    return m.weights @ m.means


def mixture_cov(m: GaussianMixture) -> np.ndarray:
    mu = mixture_mean(m)
    second = np.einsum("c,cij->ij", m.weights, m.covs) + np.einsum(
        "c,ci,cj->ij", m.weights, m.means, m.means
    )
    return symmetrize(second - np.outer(mu, mu))


def _check_keep(m: GaussianMixture, keep) -> np.ndarray:
    keep = np.asarray(list(keep), dtype=int).ravel()
    if keep.size == 0:
        raise EmptyKeepSet("keep set is empty")
    if np.any(keep < 0) or np.any(keep >= m.dim):
        raise IndexOutOfRange(f"keep indices {keep.tolist()} out of range for d={m.dim}")
    return keep


def marginalize(m: GaussianMixture, keep) -> GaussianMixture:
    keep = _check_keep(m, keep)
    names = [m.var_names[k] for k in keep]
    return GaussianMixture(
        names, m.weights, m.means[:, keep], m.covs[:, keep][:, :, keep]
    )


def extend(m: GaussianMixture, aux: GaussianMixture, name: str | None = None) -> GaussianMixture:
    """Append an independent univariate variable; components multiply out.

    Components are ordered ``m``-major: the result index is ``i * C_aux + j``.
    """
    if aux.dim != 1:
        raise DimensionMismatch("aux must be univariate")
    name = aux.var_names[0] if name is None else name
    if name in m.var_names:
        raise NameCollision(f"variable {name!r} already present")
    cm, ca, d = m.n_components, aux.n_components, m.dim
    weights = np.outer(m.weights, aux.weights).ravel()
    means = np.empty((cm, ca, d + 1))
    means[:, :, :d] = m.means[:, None, :]
    means[:, :, d] = aux.means[None, :, 0]
    covs = np.zeros((cm, ca, d + 1, d + 1))
    covs[:, :, :d, :d] = m.covs[:, None]
    covs[:, :, d, d] = aux.covs[None, :, 0, 0]
    return GaussianMixture(
        list(m.var_names) + [name],
        weights,
        means.reshape(cm * ca, d + 1),
        covs.reshape(cm * ca, d + 1, d + 1),
    )


class _DeltaMass(float):
    """Infinite density marker returned at the location of a Dirac atom."""

    def __new__(cls):
        return super().__new__(cls, math.inf)

    def __repr__(self):
        return "Delta"


DELTA = _DeltaMass()


def pdf_eval(c: GaussianComponent, x) -> float:
    """Density of a possibly degenerate Gaussian w.r.t. its support measure.

    Uses the pseudo-determinant and pseudo-inverse on the support subspace.
    Points off the support get density 0; a rank-0 component returns
    ``DELTA`` (an infinite float) at its mean.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != c.mean.shape:
        raise DimensionMismatch(f"point of shape {x.shape}, expected {c.mean.shape}")
    diff = x - c.mean
    vals, vecs = np.linalg.eigh(c.cov)
    thr = RANK_TOL * max(1.0, float(vals[-1]))
    on = vals > thr
    proj = vecs.T @ diff
    if np.any(np.abs(proj[~on]) > DELTA_TOL):
        return 0.0
    k = int(on.sum())
    if k == 0:
        return DELTA
    lam = vals[on]
    q = float(np.sum(proj[on] ** 2 / lam))
    logdet = float(np.sum(np.log(lam)))
    return math.exp(-0.5 * (q + logdet + k * math.log(2 * math.pi)))


def map_estimate(m: GaussianMixture) -> np.ndarray:
    # np.argmax returns the first maximum, which is the lowest index on ties
    return m.means[int(np.argmax(m.weights))].copy()


def dumps(m: GaussianMixture) -> str:
    return json.dumps(m.to_json())


def loads(text: str) -> GaussianMixture:
    return GaussianMixture.from_json(json.loads(text))

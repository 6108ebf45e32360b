"""Exact first and second moments of Gaussians under program transformations.

Covers affine maps, pairwise products (Isserlis), truncation to an axis
interval or a halfspace (Kan's recursion), and conditioning on a coordinate
taking a fixed value.  Each operation exists in a single-component form
taking a ``GaussianComponent`` and a batched form working on stacked
``(C, d)`` / ``(C, d, d)`` arrays, which is what the engine calls.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import ndtr

from .errors import (
    DegenerateTruncationAxis,
    DimensionMismatch,
    IndexOutOfRange,
    UnsupportedBox,
    ZeroCoefficients,
)
from .mixture import GaussianComponent, psd_repair, symmetrize

MASS_FLOOR = 1e-15
BOUNDARY_TOL = 1e-9
DEGENERATE_TOL = 1e-10

_SQRT2PI = math.sqrt(2.0 * math.pi)
OPS = ("<", "<=", ">", ">=")


@dataclass(frozen=True)
class AffineMap:
    matrix: np.ndarray
    offset: np.ndarray

    def __init__(self, matrix, offset=None):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        if offset is None:
            offset = np.zeros(matrix.shape[0])
        offset = np.atleast_1d(np.asarray(offset, dtype=float))
        if offset.shape != (matrix.shape[0],):
            raise DimensionMismatch("offset length must equal the number of rows")
        if not (np.all(np.isfinite(matrix)) and np.all(np.isfinite(offset))):
            raise ValueError("affine map entries must be finite")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "offset", offset)


@dataclass(frozen=True)
class TruncationResult:
    mass: float
    mean: np.ndarray
    cov: np.ndarray


def _phi(z):
    return np.exp(-0.5 * np.square(z)) / _SQRT2PI


def _sf(z):
    return ndtr(-z)


# -- affine and product ------------------------------------------------------

def affine_moments(c: GaussianComponent, f: AffineMap) -> GaussianComponent:
    if f.matrix.shape[1] != c.dim:
        raise DimensionMismatch(
            f"map expects {f.matrix.shape[1]} inputs, component has {c.dim}"
        )
    A = f.matrix
    return GaussianComponent(A @ c.mean + f.offset, A @ c.cov @ A.T)


def product_moments(c: GaussianComponent, i: int, j: int):
    """Mean and variance of ``z_i * z_j`` and its covariance with every ``z_k``."""
    d = c.dim
    for k in (i, j):
        if not 0 <= k < d:
            raise IndexOutOfRange(f"index {k} out of range for d={d}")
    mp, vp, cross = batch_product_moments(c.mean[None], c.cov[None], i, j)
    return float(mp[0]), float(vp[0]), cross[0]


def batch_product_moments(means, covs, i: int, j: int):
    mi, mj = means[:, i], means[:, j]
    sii, sjj, sij = covs[:, i, i], covs[:, j, j], covs[:, i, j]
    mean_p = mi * mj + sij
    var_p = mi**2 * sjj + mj**2 * sii + sii * sjj + sij**2 + 2.0 * mi * mj * sij
    cross = mi[:, None] * covs[:, :, j] + mj[:, None] * covs[:, :, i]
    return mean_p, np.maximum(var_p, 0.0), cross


# -- Kan recursion ---------------------------------------------------------

class _KanRecursion:
    """Memoized raw moments F_r = int_{[a,b]} x^r phi_{mu,Sigma}(x) dx.

    At most one coordinate carries finite bounds.  Boundary terms of the
    recursion reduce the problem to an unbounded (d-1)-dimensional Gaussian
    whose moments come from the same recursion with no bounded axis.
    """

    def __init__(self, a, b, mu, sigma):
        self.a, self.b, self.mu, self.sigma = a, b, mu, sigma
        self.d = mu.shape[0]
        finite = np.flatnonzero(np.isfinite(a) | np.isfinite(b))
        self.axis = int(finite[0]) if finite.size else None
        self.cache: dict = {}
        self.sub = {}
        if self.axis is not None:
            k = self.axis
            s = sigma[k, k]
            sd = math.sqrt(s)
            rest = [j for j in range(self.d) if j != k]
            self.rest = rest
            schur = sigma[np.ix_(rest, rest)] - np.outer(sigma[rest, k], sigma[rest, k]) / s
            for side, bound in (("a", a[k]), ("b", b[k])):
                if not math.isfinite(bound):
                    continue
                dens = math.exp(-0.5 * ((bound - mu[k]) / sd) ** 2) / (sd * _SQRT2PI)
                cond_mu = mu[rest] + sigma[rest, k] * (bound - mu[k]) / s
                inner = _KanRecursion(
                    np.full(len(rest), -np.inf), np.full(len(rest), np.inf), cond_mu, schur
                ) if rest else None
                self.sub[side] = (bound, dens, inner)

    def mass(self) -> float:
        if self.axis is None:
            return 1.0
        k = self.axis
        sd = math.sqrt(self.sigma[k, k])
        lo = (self.a[k] - self.mu[k]) / sd
        hi = (self.b[k] - self.mu[k]) / sd
        if lo > 0:
            return float(_sf(lo) - _sf(hi))
        return float(ndtr(hi) - ndtr(lo))

    def _boundary(self, r: tuple, j: int) -> float:
        if j != self.axis:
            return 0.0
        total = 0.0
        reduced = tuple(r[m] for m in self.rest)
        for side, sign in (("a", 1.0), ("b", -1.0)):
            if side not in self.sub:
                continue
            bound, dens, inner = self.sub[side]
            val = inner(reduced) if inner is not None else 1.0
            total += sign * bound ** r[j] * dens * val
        return total

    def __call__(self, r: tuple) -> float:
        hit = self.cache.get(r)
        if hit is not None:
            return hit
        if not any(r):
            val = self.mass()
        else:
            i = next(k for k, n in enumerate(r) if n > 0)
            rm = list(r)
            rm[i] -= 1
            rm = tuple(rm)
            c = np.zeros(self.d)
            for j in range(self.d):
                term = 0.0
                if rm[j] > 0:
                    lower = list(rm)
                    lower[j] -= 1
                    term += rm[j] * self(tuple(lower))
                term += self._boundary(rm, j)
                c[j] = term
            val = float(self.mu[i] * self(rm) + self.sigma[i] @ c)
        self.cache[r] = val
        return val


def _check_box(a, b, mu, sigma):
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    d = mu.shape[0]
    sigma = np.asarray(sigma, dtype=float).reshape(d, d)
    a = np.broadcast_to(np.asarray(a, dtype=float), (d,)).copy()
    b = np.broadcast_to(np.asarray(b, dtype=float), (d,)).copy()
    finite = np.flatnonzero(np.isfinite(a) | np.isfinite(b))
    if finite.size > 1:
        raise UnsupportedBox("at most one coordinate may carry finite bounds")
    if finite.size == 1:
        k = int(finite[0])
        if sigma[k, k] <= DEGENERATE_TOL * max(1.0, float(np.max(np.diag(sigma)))):
            raise DegenerateTruncationAxis(f"zero variance on truncated axis {k}")
    return a, b, mu, sigma


def kan_F(r, a, b, mu, sigma) -> float:
    """Raw moment ``int_[a,b] x^r N(x; mu, sigma) dx`` for a multi-index ``r``."""
    a, b, mu, sigma = _check_box(a, b, mu, sigma)
    r = tuple(int(n) for n in np.atleast_1d(r))
    if len(r) != mu.shape[0] or any(n < 0 for n in r):
        raise DimensionMismatch("multi-index must be nonnegative with length d")
    return _KanRecursion(a, b, mu, sigma)(r)


# -- truncation --------------------------------------------------------------

def _inside(x: float, lower: float, upper: float, lower_strict=False, upper_strict=False) -> bool:
    if lower_strict:
        ok_lo = x > lower + BOUNDARY_TOL
    else:
        ok_lo = x >= lower - BOUNDARY_TOL
    if upper_strict:
        ok_hi = x < upper - BOUNDARY_TOL
    else:
        ok_hi = x <= upper + BOUNDARY_TOL
    return bool(ok_lo and ok_hi)


def _is_degenerate(var: float, cov) -> bool:
    scale = max(1.0, float(np.max(np.diag(cov)))) if cov.size else 1.0
    return var <= DEGENERATE_TOL * scale


def truncate_axis(c: GaussianComponent, axis: int, lower=-np.inf, upper=np.inf,
                  lower_strict=False, upper_strict=False) -> TruncationResult:
    """Condition a Gaussian on ``lower <= z_axis <= upper``."""
    d = c.dim
    if not 0 <= axis < d:
        raise IndexOutOfRange(f"axis {axis} out of range for d={d}")
    lower, upper = float(lower), float(upper)
    mu, sigma = c.mean, c.cov
    if _is_degenerate(sigma[axis, axis], sigma):
        ok = _inside(mu[axis], lower, upper, lower_strict, upper_strict)
        return TruncationResult(1.0 if ok else 0.0, mu.copy(), sigma.copy())
    if not (math.isfinite(lower) or math.isfinite(upper)):
        return TruncationResult(1.0, mu.copy(), sigma.copy())
    # work in centered coordinates for accuracy
    a = np.full(d, -np.inf)
    b = np.full(d, np.inf)
    a[axis] = lower - mu[axis]
    b[axis] = upper - mu[axis]
    rec = _KanRecursion(a, b, np.zeros(d), sigma)
    mass = rec(tuple([0] * d))
    if mass < MASS_FLOOR:
        return TruncationResult(0.0, mu.copy(), sigma.copy())
    eye = np.eye(d, dtype=int)
    first = np.array([rec(tuple(eye[k])) for k in range(d)]) / mass
    raw = np.empty((d, d))
    for k in range(d):
        for m in range(k, d):
            raw[k, m] = raw[m, k] = rec(tuple(eye[k] + eye[m])) / mass
    cov = psd_repair(raw - np.outer(first, first))
    return TruncationResult(min(float(mass), 1.0), mu + first, cov)


def householder(u: np.ndarray) -> np.ndarray:
    """Symmetric orthogonal ``Q`` with ``Q @ u == e_0`` for a unit vector ``u``.

    The reflector vector is ``u + sign(u_0) e_0`` so no cancellation occurs.
    """
    d = u.shape[0]
    sigma = 1.0 if u[0] >= 0 else -1.0
    w = u.copy()
    w[0] += sigma
    H = np.eye(d) - 2.0 * np.outer(w, w) / (w @ w)
    return -sigma * H


def _sqrt_rounded(q: Fraction) -> float:
    """Correctly rounded ``sqrt(q)`` for a nonnegative rational."""
    if q == 0:
        return 0.0
    n, d = q.numerator, q.denominator
    k = 64 - (n.bit_length() - d.bit_length()) // 2   # >= 60 bits in the root
    if k >= 0:
        M, rem = divmod(n << (2 * k), d)
    else:
        M, rem = divmod(n, d << (-2 * k))
    r = math.isqrt(M)
    sticky = 0 if (rem == 0 and r * r == M) else 1
    return float(Fraction(2 * r + sticky, 1 << (k + 1)) if k >= 0
                 else Fraction((2 * r + sticky) << (-k - 1)))


def _normalize(coeffs, bound):
    """Unit normal and offset of a halfspace, rounded from exact values.

    Each output is the correctly rounded value of its real counterpart, so it
    depends only on the halfspace: ``(s*coeffs, s*bound)`` gives bitwise the
    same result whenever the scaling itself is exact.
    """
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
    bound = float(bound)
    if not (np.all(np.isfinite(coeffs)) and np.any(coeffs != 0.0)):
        raise ZeroCoefficients("halfspace coefficients must be a nonzero finite vector")
    exact = [Fraction(float(c)) for c in coeffs]
    sq = sum(c * c for c in exact)
    u = np.array([math.copysign(_sqrt_rounded(c * c / sq), c) for c in exact])
    beta = math.copysign(_sqrt_rounded(Fraction(bound) ** 2 / sq), bound) if math.isfinite(bound) else bound
    return u, beta


def _op_bounds(op: str, beta: float):
    if op not in OPS:
        raise ValueError(f"unknown comparison {op!r}")
    if op in (">", ">="):
        return beta, np.inf, op == ">", False
    return -np.inf, beta, False, op == "<"


def truncate_halfspace(c: GaussianComponent, coeffs, bound: float, op: str) -> TruncationResult:
    """Condition a Gaussian on ``coeffs . z  op  bound``."""
    u, beta = _normalize(coeffs, bound)
    if u.shape[0] != c.dim:
        raise DimensionMismatch("coefficient length must equal component dimension")
    lower, upper, ls, us = _op_bounds(op, beta)
    var = float(u @ c.cov @ u)
    if _is_degenerate(var, c.cov):
        ok = _inside(float(u @ c.mean), lower, upper, ls, us)
        return TruncationResult(1.0 if ok else 0.0, c.mean.copy(), c.cov.copy())
    Q = householder(u)
    rotated = GaussianComponent(Q @ c.mean, Q @ c.cov @ Q)
    res = truncate_axis(rotated, 0, lower, upper, ls, us)
    if res.mass == 0.0:
        return TruncationResult(0.0, c.mean.copy(), c.cov.copy())
    return TruncationResult(res.mass, Q @ res.mean, psd_repair(Q @ res.cov @ Q))


def condition_equality(c: GaussianComponent, i: int, value: float):
    """Condition on ``z_i == value``; returns the slice density and result."""
    d = c.dim
    if not 0 <= i < d:
        raise IndexOutOfRange(f"index {i} out of range for d={d}")
    norm, mean, cov = batch_condition_equality(c.mean[None], c.cov[None], i, float(value))
    return float(norm[0]), GaussianComponent(mean[0], cov[0])


# -- batched kernels used by the engine ------------------------------------

def batch_condition_equality(means, covs, i: int, value: float):
    C, d = means.shape
    s = covs[:, i, i]
    scale = np.maximum(1.0, np.max(np.diagonal(covs, axis1=1, axis2=2), axis=1))
    cont = s > DEGENERATE_TOL * scale
    norm = np.where(np.abs(means[:, i] - value) <= BOUNDARY_TOL, 1.0, 0.0)
    out_m = means.copy()
    out_c = covs.copy()
    if np.any(cont):
        sc = s[cont]
        col = covs[cont, :, i]
        diff = value - means[cont, i]
        norm[cont] = np.exp(-0.5 * diff**2 / sc) / np.sqrt(2.0 * np.pi * sc)
        out_m[cont] = means[cont] + col * (diff / sc)[:, None]
        out_m[cont, i] = value
        newc = covs[cont] - col[:, :, None] * col[:, None, :] / sc[:, None, None]
        newc[:, i, :] = 0.0
        newc[:, :, i] = 0.0
        out_c[cont] = symmetrize(newc)
    return norm, out_m, out_c


def batch_truncate_halfspace(means, covs, coeffs, bound: float, op: str):
    """Vectorized halfspace truncation of ``C`` components sharing one condition.

    Returns ``(mass, means, covs)``; components whose mass falls below the
    floor keep their input moments and report mass 0.
    """
    u, beta = _normalize(coeffs, bound)
    lower, upper, ls, us = _op_bounds(op, beta)
    C, d = means.shape
    proj_m = means @ u
    Su = covs @ u
    var = Su @ u
    scale = np.maximum(1.0, np.max(np.diagonal(covs, axis1=1, axis2=2), axis=1))
    degen = var <= DEGENERATE_TOL * scale
    mass = np.zeros(C)
    out_m = means.copy()
    out_c = covs.copy()
    for k in np.flatnonzero(degen):
        mass[k] = 1.0 if _inside(proj_m[k], lower, upper, ls, us) else 0.0
    cont = ~degen
    if not np.any(cont):
        return mass, out_m, out_c
    Q = householder(u)
    mu_r = means[cont] @ Q
    S_r = Q @ covs[cont] @ Q
    s00 = S_r[:, 0, 0]
    sd = np.sqrt(s00)
    col = S_r[:, :, 0]
    if math.isfinite(lower):
        shift = lower - mu_r[:, 0]
        z = shift / sd
        F0 = _sf(z)
        sign = 1.0
    else:
        shift = upper - mu_r[:, 0]
        z = shift / sd
        F0 = ndtr(z)
        sign = -1.0
    dens = sign * _phi(z) / sd
    t = col * (shift / s00)[:, None]
    ok = F0 >= MASS_FLOOR
    F0s = np.where(ok, F0, 1.0)
    m1 = col * (dens / F0s)[:, None]
    raw2 = S_r + col[:, :, None] * t[:, None, :] * (dens / F0s)[:, None, None]
    cov_r = symmetrize(raw2 - m1[:, :, None] * m1[:, None, :])
    new_m = (mu_r + m1) @ Q
    new_c = Q @ cov_r @ Q
    idx = np.flatnonzero(cont)
    keep = idx[ok]
    mass[keep] = np.minimum(F0[ok], 1.0)
    out_m[keep] = new_m[ok]
    if keep.size:
        out_c[keep] = psd_repair(new_c[ok])
    return mass, out_m, out_c

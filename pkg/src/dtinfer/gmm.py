"""Warped Gaussian mixtures: construction, density evaluation, sampling, quadrature.

Mixtures are parametrized by Cholesky factors end-to-end; dense covariances
never appear outside test oracles. Densities are always combined in log space
with log-sum-exp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import solve_triangular

_LOG_2PI = math.log(2.0 * math.pi)

WARP_TAGS = ("identity", "log", "logit")


class DomainError(ValueError):
    """Raised when an input lies outside the domain an operation is defined on."""


@dataclass(frozen=True)
class GmmParams:
    """A k-component Gaussian mixture over R^n.

    Attributes:
        weights: (k,) simplex vector.
        means: (k, n) component means.
        chol_factors: (k, n, n) lower-triangular factors L with positive
            diagonal, so that each covariance is L @ L.T.
    """

    weights: np.ndarray
    means: np.ndarray
    chol_factors: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.asarray(self.means, dtype=np.float64)
        ch = np.asarray(self.chol_factors, dtype=np.float64)
        if mu.ndim != 2 or w.ndim != 1 or ch.ndim != 3:
            raise ValueError("expected weights (k,), means (k, n), chol_factors (k, n, n)")
        k, n = mu.shape
        if k < 1 or n < 1:
            raise ValueError("need k >= 1 components and dim >= 1")
        if w.shape != (k,) or ch.shape != (k, n, n):
            raise ValueError(f"inconsistent shapes for k={k}, n={n}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(ch))):
            raise ValueError("non-finite mixture parameters")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1 within 1e-9")
        diag = np.diagonal(ch, axis1=1, axis2=2)
        if np.any(diag <= 0):
            raise ValueError("Cholesky factors need strictly positive diagonals")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "chol_factors", np.tril(ch))

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def permuted(self, order) -> "GmmParams":
        order = np.asarray(order)
        return GmmParams(self.weights[order], self.means[order], self.chol_factors[order])


@dataclass(frozen=True)
class Warp:
    """Dimension-wise invertible map f to R^n with tractable log|det J_f|.

    Each dimension carries one of the tags 'identity' (R -> R), 'log'
    ((0, inf) -> R) or 'logit' ((0, 1) -> R).
    """

    tags: tuple

    def __post_init__(self):
        tags = tuple(self.tags)
        for t in tags:
            if t not in WARP_TAGS:
                raise ValueError(f"unknown warp tag {t!r}")
        object.__setattr__(self, "tags", tags)

    @property
    def dim(self) -> int:
        return len(self.tags)

    def contains(self, x) -> np.ndarray:
        """Strict-interior domain mask, reduced over the last axis."""
        x = np.asarray(x, dtype=np.float64)
        ok = np.isfinite(x)
        for d, t in enumerate(self.tags):
            xd = x[..., d]
            if t == "log":
                ok[..., d] &= xd > 0
            elif t == "logit":
                ok[..., d] &= (xd > 0) & (xd < 1)
        return ok.all(axis=-1)

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        u = np.array(x, copy=True)
        for d, t in enumerate(self.tags):
            if t == "log":
                u[..., d] = np.log(x[..., d])
            elif t == "logit":
                u[..., d] = np.log(x[..., d]) - np.log1p(-x[..., d])
        return u

    def inverse(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        x = np.array(u, copy=True)
        for d, t in enumerate(self.tags):
            if t == "log":
                x[..., d] = np.exp(u[..., d])
            elif t == "logit":
                x[..., d] = 1.0 / (1.0 + np.exp(-u[..., d]))
        return x

    def log_abs_det_jacobian(self, x) -> np.ndarray:
        """log|det J_f(x)| as a sum of per-dimension log-derivatives."""
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(x.shape[:-1], dtype=np.float64)
        for d, t in enumerate(self.tags):
            if t == "log":
                out -= np.log(x[..., d])
            elif t == "logit":
                out -= np.log(x[..., d]) + np.log1p(-x[..., d])
        return out


def identity_warp(dim: int) -> Warp:
    return Warp(("identity",) * dim)


@dataclass(frozen=True)
class WarpedGmm:
    """A GMM over warped space together with the warp that maps back to the
    sample space of interest."""

    gmm: GmmParams
    warp: Warp

    def __post_init__(self):
        if self.warp.dim != self.gmm.dim:
            raise ValueError("warp dimension does not match mixture dimension")

    def log_density(self, x) -> np.ndarray:
        return warped_log_density(self, x)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return self.warp.inverse(gmm_sample(self.gmm, count, rng))


def _component_log_densities(gmm: GmmParams, x: np.ndarray) -> np.ndarray:
    """(m, k) matrix of per-component Gaussian log-densities at points x (m, n)."""
    m, n = x.shape
    out = np.empty((m, gmm.k), dtype=np.float64)
    for i in range(gmm.k):
        L = gmm.chol_factors[i]
        # triangular solve, never an explicit inverse
        y = solve_triangular(L, (x - gmm.means[i]).T, lower=True).T
        log_det = np.sum(np.log(np.diagonal(L)))
        out[:, i] = -0.5 * (n * _LOG_2PI + np.sum(y * y, axis=1)) - log_det
    return out


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    hi = np.max(a, axis=axis, keepdims=True)
    hi = np.where(np.isfinite(hi), hi, 0.0)
    return np.squeeze(hi, axis=axis) + np.log(np.sum(np.exp(a - hi), axis=axis))


def gmm_log_density(gmm: GmmParams, x) -> np.ndarray:
    """log sum_i w_i N(x; mu_i, L_i L_i^T) via log-sum-exp.

    Accepts a single point (n,) or a batch (m, n); returns a scalar or (m,).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.ndim != 2 or pts.shape[1] != gmm.dim:
        raise ValueError(f"expected points of dimension {gmm.dim}")
    if not np.all(np.isfinite(pts)):
        raise DomainError("non-finite evaluation point")
    with np.errstate(divide="ignore"):
        logw = np.log(gmm.weights)
    lp = _logsumexp(logw[None, :] + _component_log_densities(gmm, pts), axis=1)
    return float(lp[0]) if single else lp


def warped_log_density(wg: WarpedGmm, x) -> np.ndarray:
    """Density of the warped mixture in the original sample space.

    log q(x) = log q_gmm(f(x)) + log|det J_f(x)|; x must lie strictly inside
    the warp's domain.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if not np.all(wg.warp.contains(pts)):
        raise DomainError("point on or outside the warp domain boundary")
    lp = gmm_log_density(wg.gmm, wg.warp.forward(pts)) + wg.warp.log_abs_det_jacobian(pts)
    return float(lp[0]) if single else lp


def gmm_sample(gmm: GmmParams, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw `count` points: component ~ Categorical(weights), point = mu + L eps."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return np.empty((0, gmm.dim))
    idx = rng.choice(gmm.k, size=count, p=gmm.weights)
    eps = rng.standard_normal((count, gmm.dim))
    return gmm.means[idx] + np.einsum("mij,mj->mi", gmm.chol_factors[idx], eps)


def weights_from_logits(logits) -> np.ndarray:
    """Softmax over component logits; invariant to a constant shift."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise DomainError("non-finite logits")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def quad_grid(lo: float, hi: float, nodes: int = 2001) -> np.ndarray:
    """Uniform composite-Simpson grid with an odd node count."""
    if hi <= lo:
        raise ValueError("need hi > lo")
    if nodes % 2 == 0:
        nodes += 1
    return np.linspace(lo, hi, nodes)


def kl_quadrature(p_logpdf, q_logpdf, grid) -> float:
    """KL(p || q) = integral p (log p - log q) by composite Simpson on a 1-D grid.

    Both evaluators take a vector of grid points. Regions where p underflows
    to zero contribute nothing; q = 0 where p exceeds 1e-12 yields +inf.
    """
    grid = np.asarray(grid, dtype=np.float64)
    lp = np.asarray(p_logpdf(grid), dtype=np.float64)
    lq = np.asarray(q_logpdf(grid), dtype=np.float64)
    p = np.exp(lp)
    starved = (~np.isfinite(lq)) & (p > 1e-12)
    if np.any(starved):
        return math.inf
    integrand = np.where(p > 0, p * (lp - lq), 0.0)
    integrand = np.where(np.isfinite(integrand), integrand, 0.0)
    return max(float(simpson(integrand, x=grid)), 0.0)

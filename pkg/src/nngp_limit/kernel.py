"""Infinite-width kernel engine.

Iterates

    K'[a, b] = C_b + C_W * E[sigma(u_a) sigma(u_b)],   (u_a, u_b) ~ N(0, K[[a, b]][:, [a, b]])

from the covariance of the first-layer pre-activations. Gaussian expectations
are evaluated with tensor Gauss-Hermite quadrature for polynomial
nonlinearities (exact) and otherwise with a polar rule: Gauss-Legendre in
angle, split where either coordinate changes sign, and Gauss-Laguerre in
radius. Kinks at the origin and the steep zero crossings of saturating
nonlinearities at large variance both sit on those split lines.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import roots_genlaguerre, roots_laguerre, roots_legendre

from .distributions import Kind, RngStream
from .errors import DegenerateCovarianceError, DimensionMismatchError, PSDViolationError
from .network import sample_first_layer
from .nonlinearity import Nonlinearity
from .stats import exact_mean

DEFAULT_ORDER = 64
RHO_DEGENERATE = 1.0 - 1e-12


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite rule normalised to the standard Gaussian measure."""

    order: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @classmethod
    def gauss_hermite(cls, order: int = DEFAULT_ORDER) -> "QuadratureRule":
        return _gauss_hermite(int(order))

    def expect(self, f) -> float:
        """E[f(u)] for u ~ N(0, 1)."""
        return float(self.weights @ f(self.nodes))


@lru_cache(maxsize=None)
def _gauss_hermite(order: int) -> QuadratureRule:
    if order < 1:
        raise ValueError("quadrature order must be positive")
    x, w = hermegauss(order)
    w = w / math.sqrt(2.0 * math.pi)
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(order, x, w)


@lru_cache(maxsize=None)
def _half_line_rule(order: int):
    # E[f(u) 1{u>0}] = (2 pi)^-1/2 * int_0^inf e^-t f(sqrt(2t)) (2t)^-1/2 dt
    t, w = roots_genlaguerre(order, -0.5)
    return np.sqrt(2.0 * t), w / (2.0 * math.sqrt(math.pi))


@lru_cache(maxsize=None)
def _radial_rule(order: int):
    # int_0^inf r e^{-r^2/2} h(r) dr = int_0^inf e^-t h(sqrt(2t)) dt
    t, w = roots_laguerre(order)
    return np.sqrt(2.0 * t), w


@lru_cache(maxsize=None)
def _legendre(order: int):
    return roots_legendre(order)


@dataclass(frozen=True)
class BivariateSlice:
    """A 2x2 covariance block ``[[v_a, c], [c, v_b]]``."""

    v_a: float
    v_b: float
    c: float

    def check(self) -> None:
        tol = 1e-12 * (1.0 + self.v_a * self.v_b)
        if self.v_a < 0 or self.v_b < 0 or not np.isfinite([self.v_a, self.v_b, self.c]).all():
            raise DegenerateCovarianceError(f"invalid variances in slice {self}")
        if self.c * self.c > self.v_a * self.v_b + tol:
            raise DegenerateCovarianceError(f"slice violates Cauchy-Schwarz: {self}")

    @property
    def rho(self) -> float:
        if self.v_a <= 0 or self.v_b <= 0:
            return 0.0
        return float(np.clip(self.c / (math.sqrt(self.v_a) * math.sqrt(self.v_b)), -1.0, 1.0))


def _is_polynomial(nl: Nonlinearity) -> bool:
    return nl.name == "identity"


def _expect_1d(f, nl: Nonlinearity, quad: QuadratureRule) -> float:
    """E[f(u)], u ~ N(0,1), splitting at 0 unless ``nl`` is a polynomial."""
    if not _is_polynomial(nl):
        r, w = _half_line_rule(quad.order)
        return float(w @ f(r) + w @ f(-r))
    return quad.expect(f)


def _polar_expectation(sd_a: float, sd_b: float, rho: float, nl: Nonlinearity, order: int) -> float:
    s = math.sqrt(max(0.0, 1.0 - rho * rho))
    theta0 = math.atan2(s, rho)
    # u = r cos(t), v = r sin(t); z_a = sd_a r cos(t), z_b = sd_b r cos(t - theta0)
    kinks = np.mod([math.pi / 2, 3 * math.pi / 2, theta0 + math.pi / 2, theta0 - math.pi / 2], 2 * math.pi)
    edges = np.unique(np.concatenate([[0.0, 2 * math.pi], kinks]))
    x, wx = _legendre(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    theta = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    w_theta = (half[:, None] * wx[None, :]).ravel()
    r, w_r = _radial_rule(order)
    za = sd_a * np.outer(r, np.cos(theta))
    zb = sd_b * np.outer(r, np.cos(theta - theta0))
    vals = nl(za) * nl(zb)
    return float(w_r @ vals @ w_theta) / (2.0 * math.pi)


def bivariate_expectation(slice_: BivariateSlice, nl: Nonlinearity, quad: QuadratureRule) -> float:
    """E[sigma(z_a) sigma(z_b)] for (z_a, z_b) centered Gaussian with covariance ``slice_``."""
    slice_.check()
    va, vb = slice_.v_a, slice_.v_b
    if va <= 0.0 and vb <= 0.0:
        return float(nl(0.0)) ** 2
    if va <= 0.0 or vb <= 0.0:
        sd = math.sqrt(max(va, vb))
        return float(nl(0.0)) * _expect_1d(lambda u: nl(sd * u), nl, quad)
    sd_a, sd_b = math.sqrt(va), math.sqrt(vb)
    rho = slice_.rho
    if abs(rho) >= RHO_DEGENERATE:
        sign = 1.0 if rho > 0 else -1.0
        return _expect_1d(lambda u: nl(sd_a * u) * nl(sign * sd_b * u), nl, quad)
    if not _is_polynomial(nl):
        return _polar_expectation(sd_a, sd_b, rho, nl, quad.order)
    u, w = quad.nodes, quad.weights
    s = math.sqrt(1.0 - rho * rho)
    fa = nl(sd_a * u)
    fb = nl(sd_b * (rho * u[:, None] + s * u[None, :]))
    return float((w * fa) @ fb @ w)


def relu_pair_oracle(slice_: BivariateSlice) -> float:
    """Closed-form E[relu(z_a) relu(z_b)] (first-order arc-cosine kernel)."""
    slice_.check()
    scale = math.sqrt(max(slice_.v_a, 0.0) * max(slice_.v_b, 0.0))
    if scale == 0.0:
        return 0.0
    theta = math.acos(slice_.rho)
    return scale / (2 * math.pi) * (math.sin(theta) + (math.pi - theta) * math.cos(theta))


@dataclass
class KernelMatrix:
    """Symmetric PSD matrix of kernel entries over an input set at one layer."""

    entries: np.ndarray
    layer: int
    se: Optional[np.ndarray] = None
    provenance: str = "exact"
    labels: Optional[Sequence[str]] = None

    def __post_init__(self):
        self.entries = np.atleast_2d(np.asarray(self.entries, dtype=np.float64))
        n, m = self.entries.shape
        if n != m:
            raise DimensionMismatchError("kernel matrix must be square")
        if self.labels is None:
            self.labels = [str(i) for i in range(n)]

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def tol_psd(self) -> float:
        return 1e-10 * max(float(np.trace(self.entries)), 0.0)

    def check(self) -> None:
        """Raise :class:`PSDViolationError` unless symmetric and PSD within tolerance."""
        K = self.entries
        if not np.all(np.isfinite(K)):
            raise PSDViolationError(f"non-finite kernel entries at layer {self.layer}")
        if not np.array_equal(K, K.T):
            raise PSDViolationError(f"kernel at layer {self.layer} is not symmetric")
        lam = np.linalg.eigvalsh(K)[0]
        if lam < -self.tol_psd():
            raise PSDViolationError(
                f"kernel at layer {self.layer} has eigenvalue {lam:.3e} below -{self.tol_psd():.3e}"
            )

    def slice(self, a: int, b: int) -> BivariateSlice:
        K = self.entries
        return BivariateSlice(float(K[a, a]), float(K[b, b]), float(K[a, b]))


def kernel_step(K: KernelMatrix, nl: Nonlinearity, C_b: float, C_W: float,
                quad: QuadratureRule) -> KernelMatrix:
    n = K.size
    out = np.empty((n, n))
    for a in range(n):
        for b in range(a, n):
            try:
                e = bivariate_expectation(K.slice(a, b), nl, quad)
            except DegenerateCovarianceError as exc:
                raise DegenerateCovarianceError(
                    f"layer {K.layer} entry ({K.labels[a]}, {K.labels[b]}): {exc}"
                ) from exc
            out[a, b] = out[b, a] = C_b + C_W * e
    out = 0.5 * (out + out.T)
    provenance = "closed-form" if nl.name == "identity" else "quadrature"
    if K.provenance.startswith("mc"):
        provenance = f"{provenance} from mc"
    res = KernelMatrix(out, K.layer + 1, provenance=provenance, labels=K.labels)
    res.check()
    return res


def first_layer_kernel_gaussian(x, n_0: int, C_b: float, C_W: float,
                                labels: Optional[Sequence[str]] = None) -> KernelMatrix:
    """Exact covariance ``C_b + (C_W / n_0) <x_a, x_b>`` of the first-layer pre-activations."""
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if X.shape[1] != n_0:
        raise DimensionMismatchError(f"inputs have dimension {X.shape[1]}, expected n_0={n_0}")
    G = X @ X.T
    K = C_b + (C_W / n_0) * 0.5 * (G + G.T)
    res = KernelMatrix(K, 1, provenance="closed-form", labels=labels)
    res.check()
    return res


def second_layer_kernel_general(x, config, trials: int, rng: RngStream,
                                labels: Optional[Sequence[str]] = None) -> KernelMatrix:
    """Monte Carlo estimate of K^(2) for an arbitrary first-layer weight law.

    Each trial draws one first layer of width ``n_1``; its ``n_1`` neurons are
    iid, so the per-trial average of ``sigma(z_a) sigma(z_b)`` is one unbiased
    sample and the standard error comes from the spread across trials.
    """
    if trials < 100:
        raise ValueError("second_layer_kernel_general needs at least 100 trials")
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n_0, n_1 = config.dims[0], config.dims[1]
    if X.shape[1] != n_0:
        raise DimensionMismatchError(f"inputs have dimension {X.shape[1]}, expected n_0={n_0}")
    per_trial = np.empty((trials, X.shape[0], X.shape[0]))
    for t in range(trials):
        W, b = sample_first_layer(config, rng)
        h = config.nl(W @ X.T + b[:, None])
        per_trial[t] = h.T @ h / n_1
    mean = exact_mean(per_trial)
    se = np.sqrt(exact_mean((per_trial - mean) ** 2) * trials / (trials - 1) / trials)
    K = config.C_b + config.C_W * mean
    K = 0.5 * (K + K.T)
    res = KernelMatrix(K, 2, se=config.C_W * se, provenance="mc", labels=labels)
    return res


def kernel_forward(x, config, quad: Optional[QuadratureRule] = None, mc_trials: int = 2000,
                   rng: Optional[RngStream] = None,
                   labels: Optional[Sequence[str]] = None) -> list[KernelMatrix]:
    """Kernels for layers 2..L+1."""
    quad = quad or QuadratureRule.gauss_hermite()
    if config.weight_dist_first.kind is Kind.GAUSSIAN:
        K1 = first_layer_kernel_gaussian(x, config.dims[0], config.C_b, config.C_W, labels)
        K = kernel_step(K1, config.nl, config.C_b, config.C_W, quad)
    else:
        K = second_layer_kernel_general(x, config, mc_trials, rng or RngStream(0, 0), labels)
    out = [K]
    for _ in range(config.depth - 1):
        # Monte Carlo uncertainty of K^(2) is not propagated through the recursion
        K = kernel_step(K, config.nl, config.C_b, config.C_W, quad)
        out.append(K)
    return out


def affine_closed_form(K1: np.ndarray, layer: int, C_b: float, C_W: float) -> np.ndarray:
    """Identity-nonlinearity kernel ``C_b * sum_{j<l} C_W**j + C_W**l * K1`` at layer ``l + 1``."""
    l = layer - 1
    return C_b * sum(C_W**j for j in range(l)) + C_W**l * np.asarray(K1)

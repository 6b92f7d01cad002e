"""Estimators for convergence diagnostics.

Every sum over trials goes through :func:`exact_mean`, which uses correctly
rounded summation, so estimates are bit-identical under any reordering of
the trials.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy import stats as _sps

from .errors import ConfigError, InsufficientDataError, NonPositiveValueError


def exact_mean(x, axis: int = 0) -> np.ndarray:
    """Mean along ``axis`` computed with :func:`math.fsum` (order independent)."""
    a = np.moveaxis(np.asarray(x, dtype=np.float64), axis, 0)
    n = a.shape[0]
    if n == 0:
        raise InsufficientDataError("mean of empty sample")
    flat = a.reshape(n, -1)
    out = np.array([math.fsum(col) for col in flat.T]) / n
    return out.reshape(a.shape[1:]) if a.ndim > 1 else float(out[0])


@dataclass(frozen=True)
class ConvergencePoint:
    width: Union[int, None]
    metric: str
    value: float
    se: float
    arm: str = "network"

    def __post_init__(self):
        if not self.se >= 0:
            raise ValueError(f"standard error must be non-negative, got {self.se}")


def sample_covariance(samples) -> tuple[np.ndarray, np.ndarray]:
    """Unbiased covariance of the rows of ``samples`` (shape ``(M, d)``) with per-entry SEs."""
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    M = X.shape[0]
    if M < 2:
        raise InsufficientDataError("covariance needs at least 2 samples")
    D = X - exact_mean(X)
    prods = D[:, :, None] * D[:, None, :]
    cov = exact_mean(prods) * M / (M - 1)
    var_prod = exact_mean((prods - exact_mean(prods)) ** 2) * M / (M - 1)
    se = np.sqrt(var_prod / M)
    return cov, se


def pooled_covariance(z) -> tuple[np.ndarray, np.ndarray]:
    """Covariance across trials of ``z`` with shape ``(M, n, |A|)``, pooled over the ``n``
    exchangeable coordinates. The SE treats each trial's pooled product as one sample."""
    Z = np.asarray(z, dtype=np.float64)
    M = Z.shape[0]
    if M < 2:
        raise InsufficientDataError("covariance needs at least 2 samples")
    D = Z - exact_mean(Z)
    q = np.einsum("tia,tib->tab", D, D) / Z.shape[1]
    cov = exact_mean(q) * M / (M - 1)
    se = np.sqrt(exact_mean((q - exact_mean(q)) ** 2) / (M - 1))
    return cov, se


def empirical_covariance(ensemble, layer: int, i: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Covariance across trials of ``z[layer][:, i, :]`` (one coordinate over the input set)."""
    return sample_covariance(ensemble.layer(layer)[:, i, :])


def _central_moments(x: np.ndarray, kmax: int) -> list:
    d = x - exact_mean(x)
    return [None, 0.0] + [exact_mean(d**k) for k in range(2, kmax + 1)]


@dataclass(frozen=True)
class Cumulants:
    k3: float
    k4: float
    se_k3: float
    se_k4: float
    k2: float


def excess_cumulants(samples, min_samples: int = 10) -> Cumulants:
    """Unbiased k-statistics k3, k4 with large-sample standard errors.

    The SEs use the general (not Gaussian-only) sampling variances of k3 and
    k4, with cumulants up to order 8 estimated by plug-in.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    n = x.size
    if n < max(min_samples, 4):
        raise InsufficientDataError(f"need at least {max(min_samples, 4)} samples, got {n}")
    m = _central_moments(x, 8)
    s2, s3, s4 = n * m[2], n * m[3], n * m[4]  # central power sums
    k2 = s2 / (n - 1)
    k3 = n * s3 / ((n - 1) * (n - 2))
    k4 = n * ((n + 1) * s4 - 3 * (n - 1) * s2**2 / n) / ((n - 1) * (n - 2) * (n - 3))
    c2, c3 = m[2], m[3]
    c4 = m[4] - 3 * m[2] ** 2
    c5 = m[5] - 10 * m[3] * m[2]
    c6 = m[6] - 15 * m[4] * m[2] - 10 * m[3] ** 2 + 30 * m[2] ** 3
    c8 = (m[8] - 28 * m[6] * m[2] - 56 * m[5] * m[3] - 35 * m[4] ** 2
          + 420 * m[4] * m[2] ** 2 + 560 * m[3] ** 2 * m[2] - 630 * m[2] ** 4)
    var3 = (c6 + 9 * c2 * c4 + 9 * c3**2 + 6 * c2**3) / n
    var4 = (c8 + 16 * c2 * c6 + 48 * c3 * c5 + 34 * c4**2 + 72 * c2**2 * c4
            + 144 * c2 * c3**2 + 24 * c2**4) / n
    # plug-in higher cumulants are noisy; never report less than the Gaussian value
    var3 = max(var3, 6 * c2**3 / n)
    var4 = max(var4, 24 * c2**4 / n)
    return Cumulants(float(k3), float(k4), math.sqrt(var3), math.sqrt(var4), float(k2))


@dataclass(frozen=True)
class CfProbeSet:
    """Frequency matrices ``Xi`` of shape ``(P, n_out, |A|)`` with Frobenius norm <= ``max_norm``."""

    probes: np.ndarray
    seed: int
    max_norm: float = 3.0

    @classmethod
    def generate(cls, count: int, n_out: int, n_inputs: int, seed: int,
                 max_norm: float = 3.0) -> "CfProbeSet":
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((count, n_out, n_inputs))
        norms = np.sqrt((g**2).sum(axis=(1, 2), keepdims=True))
        radius = max_norm * rng.uniform(0.05, 1.0, size=(count, 1, 1))
        return cls(g / norms * radius, seed, max_norm)


def gaussian_cf(K, probes: np.ndarray) -> np.ndarray:
    """exp(-1/2 sum_i <K xi_i, xi_i>) for each probe."""
    K = np.asarray(getattr(K, "entries", K))
    quad = np.einsum("pia,ab,pib->p", probes, K, probes)
    return np.exp(-0.5 * quad)


def cf_distance(outputs, K, probes: CfProbeSet, min_trials: int = 100) -> tuple[float, float]:
    """Max over probes of |empirical CF - Gaussian CF| with the SE of the maximising probe.

    ``outputs`` has shape ``(M, n_out, |A|)``.
    """
    Z = np.asarray(outputs, dtype=np.float64)
    M = Z.shape[0]
    if M < min_trials:
        raise InsufficientDataError(f"cf_distance needs at least {min_trials} trials, got {M}")
    phase = np.einsum("tia,pia->tp", Z, probes.probes)
    re = exact_mean(np.cos(phase))
    im = -exact_mean(np.sin(phase))
    target = gaussian_cf(K, probes.probes)
    dist = np.hypot(re - target, im)
    p = int(np.argmax(dist))
    # |e^{-i<z,Xi>}| = 1, so the per-trial variance is 1 - |chi|^2
    var = max(1.0 - (re[p] ** 2 + im[p] ** 2), 0.0) * M / (M - 1)
    return float(min(dist[p], 2.0)), math.sqrt(var / M)


def _neuron_fn(f: Union[str, Callable], alpha: int) -> Callable[[np.ndarray], np.ndarray]:
    if callable(f):
        return f
    table = {
        "identity": lambda z: z[..., alpha],
        "square": lambda z: z[..., alpha] ** 2,
        "tanh": lambda z: np.tanh(z[..., alpha]),
        "abs": lambda z: np.abs(z[..., alpha]),
    }
    if f not in table:
        raise ConfigError(f"unknown neuron function {f!r}; choose from {sorted(table)}")
    return table[f]


def cross_neuron_cov(outputs, f: Union[str, Callable] = "square", alpha: int = 0,
                     min_trials: int = 100) -> tuple[float, float]:
    """Cov(f(z_1), f(z_2)) across trials for output neurons 1 and 2 (shape ``(M, n_out, |A|)``)."""
    Z = np.asarray(outputs, dtype=np.float64)
    if Z.shape[1] < 2:
        raise ConfigError("cross-neuron covariance needs at least 2 output neurons")
    M = Z.shape[0]
    if M < min_trials:
        raise InsufficientDataError(f"cross_neuron_cov needs at least {min_trials} trials, got {M}")
    fn = _neuron_fn(f, alpha)
    a, b = fn(Z[:, 0, :]), fn(Z[:, 1, :])
    p = (a - exact_mean(a)) * (b - exact_mean(b))
    cov = exact_mean(p) * M / (M - 1)
    se = math.sqrt(exact_mean((p - exact_mean(p)) ** 2) / (M - 1))
    return float(cov), se


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    se: float
    ci_low: float
    ci_high: float
    intercept: float


def loglog_slope(widths: Sequence[float], values: Sequence[float],
                 ses: Sequence[float] = None, level: float = 0.95) -> SlopeFit:
    """Weighted least squares of log(value) on log(width).

    Weights are ``(value / se)**2`` (delta method for the log); if any SE is
    zero all points get equal weight. The CI uses the weighted residual scale
    and Student t with ``k - 2`` degrees of freedom.
    """
    w_ = np.asarray(widths, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if w_.size < 3 or w_.size != v.size:
        raise ConfigError("slope fit needs at least 3 (width, value) points")
    if np.any(v <= 0) or np.any(w_ <= 0):
        raise NonPositiveValueError("log-log fit needs positive values; increase trials")
    s = np.ones_like(v) if ses is None else np.asarray(ses, dtype=np.float64)
    if ses is None or np.any(s <= 0):
        wt = np.ones_like(v)
    else:
        wt = (v / s) ** 2
    x, y = np.log(w_), np.log(v)
    A = np.column_stack([np.ones_like(x), x])
    sw = np.sqrt(wt)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    resid = (y - A @ coef) * sw
    dof = x.size - 2
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv((A * wt[:, None]).T @ A)
    se = math.sqrt(max(cov[1, 1], 0.0))
    t = _sps.t.ppf(0.5 + level / 2, dof)
    return SlopeFit(float(coef[1]), se, float(coef[1] - t * se), float(coef[1] + t * se), float(coef[0]))

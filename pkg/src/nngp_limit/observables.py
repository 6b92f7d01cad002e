"""Collective observables and the conditional covariance.

A collective observable at layer ``l`` is the neuron average
``(1/n_l) * sum_i f(z_l[i, :])`` of one fixed function of a neuron's
pre-activations over the input set. The conditional covariance of the next
layer given layer ``l`` is the collective observable

    Sigma[a, b] = C_b + (C_W / n_l) * sum_j sigma(z_l[j, a]) sigma(z_l[j, b]).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InsufficientDataError, PSDViolationError
from .network import LayerwiseActivations
from .nonlinearity import Nonlinearity
from .stats import exact_mean


@dataclass(frozen=True)
class ObservableFn:
    """``fn`` maps an ``(n, |A|)`` array of neuron pre-activations to ``n`` values."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    growth_degree: int = 0
    arity: int | None = None

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self.fn(z)


def constant(c: float = 1.0) -> ObservableFn:
    return ObservableFn(f"constant({c})", lambda z: np.full(z.shape[0], float(c)), 0)


def overlap(a: int, b: int) -> ObservableFn:
    return ObservableFn(f"overlap({a},{b})", lambda z: z[:, a] * z[:, b], 2)


def post_product(a: int, b: int, nl: Nonlinearity) -> ObservableFn:
    k = 2 * (nl.growth_degree + 1)
    return ObservableFn(f"post_product({a},{b},{nl.name})", lambda z: nl(z[:, a]) * nl(z[:, b]), k)


def abs_power(a: int, k: int) -> ObservableFn:
    if not 1 <= k <= 4:
        raise ValueError("abs_power supports k in 1..4")
    return ObservableFn(f"abs_power({a},{k})", lambda z: np.abs(z[:, a]) ** k, k)


def collective_observable(acts: LayerwiseActivations, layer: int, f: ObservableFn) -> float:
    z = acts.layer(layer)
    return exact_mean(f(z))


@dataclass
class ConditionalCovariance:
    entries: np.ndarray
    layer: int  # layer whose pre-activations condition; the covariance is of layer + 1

    def check(self) -> None:
        S = self.entries
        tol = 1e-10 * max(float(np.trace(S)), 0.0)
        if not np.array_equal(S, S.T) or np.linalg.eigvalsh(S)[0] < -tol:
            raise PSDViolationError(f"conditional covariance from layer {self.layer} not PSD")


def conditional_covariance(acts: LayerwiseActivations, layer: int, C_b: float, C_W: float,
                           nl: Nonlinearity) -> ConditionalCovariance:
    return ConditionalCovariance(sigma_from_layer(acts.layer(layer), C_b, C_W, nl), layer)


def sigma_from_layer(z: np.ndarray, C_b: float, C_W: float, nl: Nonlinearity) -> np.ndarray:
    """Array version of :func:`conditional_covariance` for one ``(n_l, |A|)`` slice."""
    h = nl(z)
    G = h.T @ h
    return C_b + (C_W / z.shape[0]) * 0.5 * (G + G.T)


@dataclass(frozen=True)
class ObservableMoments:
    mean: float
    variance: float
    se_mean: float
    se_variance: float


def observable_moments(values) -> ObservableMoments:
    """Unbiased mean and variance of per-trial values with their standard errors.

    SE of the variance uses ``Var(s^2) ~ (mu4 - (m-3)/(m-1) * s^4) / m``.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    m = x.size
    if m < 2:
        raise InsufficientDataError("need at least 2 values")
    mean = exact_mean(x)
    d = x - mean
    var = exact_mean(d * d) * m / (m - 1)
    mu4 = exact_mean(d**4)
    if m > 3:
        var_var = max((mu4 - (m - 3) / (m - 1) * var * var) / m, 0.0)
    else:
        var_var = 0.0
    return ObservableMoments(float(mean), float(var), math.sqrt(var / m), math.sqrt(var_var))


def write_values_csv(path, values, name: str = "value") -> None:
    """Per-trial observable values, one row per trial."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", name])
        for t, v in enumerate(np.asarray(values, dtype=np.float64).ravel()):
            w.writerow([t, repr(float(v))])

"""Nonlinearities with derivatives and growth/symmetry metadata.

Every built-in is absolutely continuous with a polynomially bounded
derivative, ``|sigma'(x)| <= B (1 + |x|**growth_degree)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import erf as _erf
from scipy.special import ndtr

from .errors import ConfigError

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Nonlinearity:
    """A scalar activation applied componentwise.

    ``kink_at_origin`` marks piecewise-linear functions whose only
    non-differentiable point is 0; the kernel engine switches to a quadrature
    that integrates exactly across that kink.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    deriv: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    growth_degree: int = 0
    parity: str = "none"  # "odd" | "even" | "none"
    homogeneity_degree: Optional[float] = None
    kink_at_origin: bool = False
    params: tuple = ()

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=np.float64))

    def eval(self, x):
        return self(x)

    def derivative(self, x):
        return self.deriv(np.asarray(x, dtype=np.float64))

    def to_dict(self) -> dict:
        """JSON-able description, inverse of :func:`get`."""
        return {"name": self.name, **dict(self.params)}


def eval(nl: Nonlinearity, x):  # noqa: A001 - mirrors the operation name
    return nl(x)


def derivative(nl: Nonlinearity, x):
    return nl.derivative(x)


def growth_degree(nl: Nonlinearity) -> int:
    return nl.growth_degree


def _gelu(x):
    return x * ndtr(x)


def _gelu_prime(x):
    return ndtr(x) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


IDENTITY = Nonlinearity(
    "identity", lambda x: x * 1.0, lambda x: np.ones_like(x),
    parity="odd", homogeneity_degree=1.0,
)
RELU = Nonlinearity(
    "relu", lambda x: np.maximum(x, 0.0), lambda x: (x > 0).astype(np.float64),
    homogeneity_degree=1.0, kink_at_origin=True,
)
TANH = Nonlinearity("tanh", np.tanh, lambda x: 1.0 - np.tanh(x) ** 2, parity="odd")
ERF = Nonlinearity(
    "erf", _erf, lambda x: 2.0 / math.sqrt(math.pi) * np.exp(-x * x), parity="odd",
)
GELU = Nonlinearity("gelu", _gelu, _gelu_prime)


def leaky_relu(slope: float = 0.01) -> Nonlinearity:
    slope = float(slope)
    if not math.isfinite(slope):
        raise ConfigError("leaky_relu slope must be finite")
    return Nonlinearity(
        "leaky_relu",
        lambda x: np.where(x > 0, x, slope * x),
        lambda x: np.where(x > 0, 1.0, slope),
        homogeneity_degree=1.0,
        kink_at_origin=True,
        params=(("slope", slope),),
    )


_BUILTINS = {nl.name: nl for nl in (IDENTITY, RELU, TANH, ERF, GELU)}
SUPPORTED = tuple(sorted([*_BUILTINS, "leaky_relu"]))


def get(name: str, **params) -> Nonlinearity:
    """Look up a nonlinearity by name; ``leaky_relu`` accepts ``slope``."""
    if name == "leaky_relu":
        unknown = set(params) - {"slope"}
        if unknown:
            raise ConfigError(f"unknown leaky_relu parameters: {sorted(unknown)}")
        return leaky_relu(**params)
    if name not in _BUILTINS:
        raise ConfigError(
            f"unsupported nonlinearity {name!r}; supported nonlinearities: {', '.join(SUPPORTED)}"
        )
    if params:
        raise ConfigError(f"nonlinearity {name!r} takes no parameters")
    return _BUILTINS[name]

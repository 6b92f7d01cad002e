"""Weight and bias laws with reproducible, stream-keyed sampling.

Every built-in weight law is symmetric with mean 0, variance 1 and finite
moments of all orders. Layer weights are obtained by scaling draws from these
laws by ``sqrt(C_W / fan_in)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError


class Kind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    UNIFORM_SYM = "uniform"


_SQRT3 = math.sqrt(3.0)
_ALIASES = {"uniform_sym": "uniform", "normal": "gaussian"}


def derive_seed(master_seed: int, *keys: int) -> int:
    """Deterministically derive a 64-bit seed from a master seed and integer keys."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class RngStream:
    """An independent random stream keyed by ``(master_seed, stream_id)``.

    The key is hashed by :class:`numpy.random.SeedSequence`, so distinct stream
    ids give statistically independent generators and the same key always
    replays the same sequence, whatever order streams are created in.
    """

    def __init__(self, master_seed: int, stream_id: int = 0):
        if not 0 <= int(master_seed) < 2**64 or not 0 <= int(stream_id) < 2**64:
            raise ConfigError("master_seed and stream_id must be unsigned 64-bit integers")
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def child(self, key: int) -> "RngStream":
        """Independent sub-stream, e.g. for a nested inner Monte Carlo loop."""
        return RngStream(derive_seed(self.master_seed, self.stream_id, key), 0)

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id})"


@dataclass(frozen=True)
class WeightDistribution:
    """A mean-0, variance-1 law for the unscaled weights."""

    kind: Kind
    label: str = field(default="")

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if not self.label:
            object.__setattr__(self, "label", self.kind.value)

    @classmethod
    def from_name(cls, name: str) -> "WeightDistribution":
        try:
            return cls(Kind(_ALIASES.get(name, name)))
        except ValueError:
            supported = ", ".join(k.value for k in Kind)
            raise ConfigError(f"unknown weight distribution {name!r}; supported: {supported}") from None

    def sample(self, count, rng: RngStream) -> np.ndarray:
        """Draw ``count`` iid values (``count`` may be an int or a shape tuple)."""
        g = rng.generator
        if self.kind is Kind.GAUSSIAN:
            return g.standard_normal(count)
        if self.kind is Kind.RADEMACHER:
            return 2.0 * g.integers(0, 2, size=count).astype(np.float64) - 1.0
        return g.uniform(-_SQRT3, _SQRT3, size=count)

    def from_standard_normal(self, g: np.ndarray) -> np.ndarray:
        """Quantile transform of standard normal draws into this law.

        Applying this to one shared array of normals couples several laws
        comonotonically (common random numbers).
        """
        if self.kind is Kind.GAUSSIAN:
            return np.asarray(g, dtype=np.float64)
        if self.kind is Kind.RADEMACHER:
            return np.where(g >= 0.0, 1.0, -1.0)
        return _SQRT3 * (2.0 * ndtr(g) - 1.0)

    def quadrature(self, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and probability weights integrating polynomials of degree
        ``< 2 * order`` exactly against this law (Rademacher needs only 2)."""
        if order < 1:
            raise ConfigError("quadrature order must be >= 1")
        if self.kind is Kind.GAUSSIAN:
            x, w = np.polynomial.hermite_e.hermegauss(order)
            return x, w / w.sum()
        if self.kind is Kind.RADEMACHER:
            return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
        x, w = np.polynomial.legendre.leggauss(order)
        return _SQRT3 * x, 0.5 * w

    def moment(self, k: int) -> float:
        """Exact k-th raw moment."""
        if k < 1:
            raise ConfigError("moment order must be >= 1")
        if k % 2:
            return 0.0
        if self.kind is Kind.GAUSSIAN:
            return float(math.prod(range(k - 1, 0, -2)))
        if self.kind is Kind.RADEMACHER:
            return 1.0
        return 3.0 ** (k / 2) / (k + 1)


def sample(dist: WeightDistribution, count, rng: RngStream) -> np.ndarray:
    return dist.sample(count, rng)


def moment(dist: WeightDistribution, k: int) -> float:
    return dist.moment(k)


@dataclass(frozen=True)
class BiasLaw:
    """Centered Gaussian biases with variance ``C_b``."""

    variance: float = 0.0

    def __post_init__(self):
        if not self.variance >= 0.0:
            raise ConfigError("C_b must be non-negative")

    def sample(self, count, rng: RngStream) -> np.ndarray:
        if self.variance == 0.0:
            # consumes no randomness
            return np.zeros(count)
        return math.sqrt(self.variance) * rng.generator.standard_normal(count)


GAUSSIAN = WeightDistribution(Kind.GAUSSIAN)
RADEMACHER = WeightDistribution(Kind.RADEMACHER)
UNIFORM = WeightDistribution(Kind.UNIFORM_SYM)

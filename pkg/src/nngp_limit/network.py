"""Finite-width random fully connected networks.

``z1 = W1 x + b1`` and ``z_l = W_l sigma(z_{l-1}) + b_l`` for ``l = 2..L+1``,
with ``W_l[i, j] = sqrt(C_W / n_{l-1}) * What`` (``What`` iid from the
configured unit-variance law) and ``b_l[i] ~ N(0, C_b)``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import nonlinearity as nonlin
from .distributions import GAUSSIAN, BiasLaw, RngStream, WeightDistribution
from .errors import ConfigError, DimensionMismatchError, MissingLayerError, ResourceError

DEFAULT_MAX_VALUES = 100_000_000


@dataclass(frozen=True)
class NetworkConfig:
    depth: int
    dims: tuple
    C_W: float = 1.0
    C_b: float = 0.0
    nl: nonlin.Nonlinearity = nonlin.RELU
    weight_dist_first: WeightDistribution = GAUSSIAN
    weight_dist_rest: WeightDistribution = GAUSSIAN

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if not isinstance(self.depth, int) or self.depth < 1:
            raise ConfigError("depth L must be a positive integer")
        if len(self.dims) != self.depth + 2:
            raise ConfigError(f"dims must have length L+2 = {self.depth + 2}, got {len(self.dims)}")
        if any(d < 1 for d in self.dims):
            raise ConfigError("all layer dimensions must be >= 1")
        if not (math.isfinite(self.C_W) and self.C_W > 0):
            raise ConfigError("C_W must be positive")
        if not (math.isfinite(self.C_b) and self.C_b >= 0):
            raise ConfigError("C_b must be non-negative")

    @property
    def n_in(self) -> int:
        return self.dims[0]

    @property
    def n_out(self) -> int:
        return self.dims[-1]

    def with_width(self, n: int) -> "NetworkConfig":
        """Same network with every hidden layer of width ``n``."""
        dims = (self.dims[0], *([int(n)] * self.depth), self.dims[-1])
        return NetworkConfig(self.depth, dims, self.C_W, self.C_b, self.nl,
                             self.weight_dist_first, self.weight_dist_rest)

    def with_rest(self, dist: WeightDistribution) -> "NetworkConfig":
        return NetworkConfig(self.depth, self.dims, self.C_W, self.C_b, self.nl,
                             self.weight_dist_first, dist)

    def to_dict(self) -> dict:
        return {
            "L": self.depth,
            "dims": list(self.dims),
            "C_W": self.C_W,
            "C_b": self.C_b,
            "nonlinearity": self.nl.to_dict(),
            "weights": {"first": self.weight_dist_first.kind.value,
                        "rest": self.weight_dist_rest.kind.value},
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class NetworkDraw:
    weights: list
    biases: list

    def check(self, config: NetworkConfig) -> None:
        for l, (W, b) in enumerate(zip(self.weights, self.biases), start=1):
            if W.shape != (config.dims[l], config.dims[l - 1]) or b.shape != (config.dims[l],):
                raise DimensionMismatchError(f"layer {l} parameters do not match config dims")


@dataclass
class InputSet:
    """Distinct network inputs ``x_alpha`` stored as rows."""

    points: np.ndarray
    labels: Optional[list] = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if self.labels is None:
            self.labels = [f"x{i}" for i in range(len(self.points))]
        self.labels = [str(s) for s in self.labels]
        if len(self.labels) != len(self.points):
            raise ConfigError("one label per input point is required")
        if len(set(self.labels)) != len(self.labels):
            raise ConfigError("input labels must be distinct")
        if len(np.unique(self.points, axis=0)) != len(self.points):
            raise ConfigError("input points must be pairwise distinct")
        if not np.all(np.isfinite(self.points)):
            raise ConfigError("input points must be finite")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def from_csv(cls, path) -> "InputSet":
        """Read one input per row; an optional header may name a ``label`` column."""
        with open(path, newline="") as fh:
            rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if any(c.strip() for c in r)]
        if not rows:
            raise ConfigError(f"{path}: no input rows")
        label_col = None
        header = [c.strip() for c in rows[0][1]]
        if _is_header(header):
            rows = rows[1:]
            label_col = header.index("label") if "label" in header else None
        points, labels = [], []
        for lineno, row in rows:
            vals = [c.strip() for i, c in enumerate(row) if i != label_col]
            try:
                points.append([float(v) for v in vals])
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: non-numeric input value") from None
            if label_col is not None:
                labels.append(row[label_col].strip())
        if len({len(p) for p in points}) != 1:
            raise DimensionMismatchError(f"{path}: inputs do not all have the same dimension")
        return cls(np.array(points), labels or None)


def _is_header(row: Sequence[str]) -> bool:
    try:
        [float(c) for c in row]
        return False
    except ValueError:
        return True


def default_inputs() -> InputSet:
    """Two unit vectors in R^2 and their average."""
    return InputSet(np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]), ["e1", "e2", "mid"])


@dataclass
class LayerwiseActivations:
    """Pre-activations ``z[l]`` of shape ``(n_l, |A|)``, for the recorded layers."""

    z: dict

    def layer(self, l: int) -> np.ndarray:
        try:
            return self.z[l]
        except KeyError:
            raise MissingLayerError(f"layer {l} not recorded (have {sorted(self.z)})") from None


def sample_first_layer(config: NetworkConfig, rng: RngStream):
    n0, n1 = config.dims[0], config.dims[1]
    W = math.sqrt(config.C_W / n0) * config.weight_dist_first.sample((n1, n0), rng)
    b = BiasLaw(config.C_b).sample(n1, rng)
    return W, b


def sample_network(config: NetworkConfig, rng: RngStream) -> NetworkDraw:
    W, b = sample_first_layer(config, rng)
    weights, biases = [W], [b]
    bias_law = BiasLaw(config.C_b)
    for l in range(2, config.depth + 2):
        fan_in, fan_out = config.dims[l - 1], config.dims[l]
        weights.append(math.sqrt(config.C_W / fan_in) * config.weight_dist_rest.sample((fan_out, fan_in), rng))
        biases.append(bias_law.sample(fan_out, rng))
    return NetworkDraw(weights, biases)


def forward(draw: NetworkDraw, inputs, nl: nonlin.Nonlinearity,
            keep: Optional[Iterable[int]] = None) -> LayerwiseActivations:
    """Propagate every input through the network, recording layers in ``keep`` (all by default)."""
    X = inputs.points if isinstance(inputs, InputSet) else np.atleast_2d(np.asarray(inputs, float))
    if X.shape[1] != draw.weights[0].shape[1]:
        raise DimensionMismatchError(
            f"inputs have dimension {X.shape[1]}, network expects {draw.weights[0].shape[1]}"
        )
    n_layers = len(draw.weights)
    keep = set(range(1, n_layers + 1)) if keep is None else set(keep)
    z = draw.weights[0] @ X.T + draw.biases[0][:, None]
    out = {}
    if 1 in keep:
        out[1] = z
    for l in range(2, n_layers + 1):
        z = draw.weights[l - 1] @ nl(z) + draw.biases[l - 1][:, None]
        if l in keep:
            out[l] = z
    return LayerwiseActivations(out)


def run_trials(M: int, fn: Callable[[int], object], threads: int = 1) -> list:
    """Evaluate ``fn(t)`` for ``t = 0..M-1`` and return results in trial order.

    Each trial owns its own stream, so the result list is identical for any
    thread count.
    """
    if threads <= 1:
        return [fn(t) for t in range(M)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(M), chunksize=max(1, M // (8 * threads))))


@dataclass
class SampleEnsemble:
    """``M`` independent network draws evaluated on one input set.

    ``z[l]`` has shape ``(M, n_l, |A|)``; only requested layers are stored.
    """

    M: int
    z: dict
    master_seed: int
    config_hash: str = ""
    labels: list = field(default_factory=list)

    def layer(self, l: int) -> np.ndarray:
        try:
            return self.z[l]
        except KeyError:
            raise MissingLayerError(f"layer {l} not stored (have {sorted(self.z)})") from None

    def trial(self, t: int) -> LayerwiseActivations:
        return LayerwiseActivations({l: v[t] for l, v in self.z.items()})

    @property
    def n_values(self) -> int:
        return sum(v.size for v in self.z.values())

    def save(self, path) -> Path:
        """Flat little-endian float64 file plus a ``.json`` sidecar describing it."""
        path = Path(path)
        layers = sorted(self.z)
        with open(path, "wb") as fh:
            for l in layers:
                np.ascontiguousarray(self.z[l], dtype="<f8").tofile(fh)
        meta = {
            "format": "float64-le, layers concatenated in listed order, each C-ordered (M, n_l, |A|)",
            "M": self.M,
            "layers": [{"layer": l, "shape": list(self.z[l].shape)} for l in layers],
            "master_seed": self.master_seed,
            "config_hash": self.config_hash,
            "labels": self.labels,
        }
        side = path.with_suffix(path.suffix + ".json")
        side.write_text(json.dumps(meta, indent=2) + "\n")
        return side

    @classmethod
    def load(cls, path) -> "SampleEnsemble":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        flat = np.fromfile(path, dtype="<f8")
        z, pos = {}, 0
        for entry in meta["layers"]:
            shape = tuple(entry["shape"])
            size = int(np.prod(shape))
            z[int(entry["layer"])] = flat[pos:pos + size].reshape(shape)
            pos += size
        return cls(meta["M"], z, meta["master_seed"], meta["config_hash"], meta["labels"])


def sample_ensemble(config: NetworkConfig, inputs: InputSet, M: int, layers_to_keep: Iterable[int],
                    master_seed: int, threads: int = 1,
                    max_values: int = DEFAULT_MAX_VALUES) -> SampleEnsemble:
    """Trial ``t`` uses ``RngStream(master_seed, t)``."""
    if M < 1:
        raise ConfigError("M must be >= 1")
    keep = sorted(set(layers_to_keep))
    for l in keep:
        if not 1 <= l <= config.depth + 1:
            raise ConfigError(f"layer {l} outside 1..{config.depth + 1}")
    needed = M * len(inputs) * sum(config.dims[l] for l in keep)
    if needed > max_values:
        raise ResourceError(f"ensemble needs {needed} values, cap is {max_values}")

    def one(t):
        draw = sample_network(config, RngStream(master_seed, t))
        return forward(draw, inputs, config.nl, keep).z

    results = run_trials(M, one, threads)
    z = {l: np.stack([r[l] for r in results]) for l in keep}
    return SampleEnsemble(M, z, master_seed, config.config_hash(), list(inputs.labels))

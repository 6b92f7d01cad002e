"""Width-ladder studies comparing finite-width networks with the kernel limit.

* :func:`convergence_study` - output covariance error, cumulants, characteristic
  function distance, conditional-covariance fluctuations and cross-neuron
  dependence per width, next to an oracle arm sampled directly from N(0, K).
* :func:`universality_study` - weight laws in layers >= 2 compared at matched
  width with common random numbers.
* :func:`tightness_study` - empirical Lipschitz ratio and sup norm over a grid.
* :func:`kernel_report` - the kernels themselves with provenance.

Every study is a pure function of its arguments and seed. Rungs draw from
streams keyed by the width, so adding or removing a rung leaves the others
unchanged.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .distributions import GAUSSIAN, BiasLaw, Kind, RngStream, WeightDistribution, derive_seed
from .errors import ConfigError, DegenerateGridError, NonPositiveValueError
from .kernel import KernelMatrix, QuadratureRule, kernel_forward, kernel_step
from .network import (
    InputSet,
    NetworkConfig,
    forward,
    run_trials,
    sample_first_layer,
    sample_network,
)
from .observables import observable_moments, sigma_from_layer
from .stats import (
    CfProbeSet,
    ConvergencePoint,
    SlopeFit,
    cf_distance,
    cross_neuron_cov,
    exact_mean,
    excess_cumulants,
    loglog_slope,
    pooled_covariance,
)

log = logging.getLogger(__name__)

# stream namespaces under the master seed
_KERNEL_KEY, _PROBE_KEY, _ORACLE_KEY, _NETWORK_KEY, _BOOT_KEY = 1, 2, 3, 4, 5
_INNER_KEY, _INNER_HIDDEN_KEY = 7, 8

# thresholds used by report flags
Z_ZERO = 5.0
SLOPE_WINDOW = (-1.35, -0.65)


@dataclass(frozen=True)
class WidthLadder:
    widths: tuple
    trials: Union[int, tuple] = 2000

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if not widths or any(w < 1 for w in widths):
            raise ConfigError("ladder widths must be positive")
        if any(b <= a for a, b in zip(widths, widths[1:])):
            raise ConfigError("ladder widths must be strictly increasing")
        if isinstance(self.trials, (list, tuple)):
            trials = tuple(int(t) for t in self.trials)
            if len(trials) != len(widths):
                raise ConfigError("need one trial count per rung")
        else:
            trials = int(self.trials)
        object.__setattr__(self, "trials", trials)
        if min(self.trials_per_rung()) < 2:
            raise ConfigError("each rung needs at least 2 trials")

    def trials_per_rung(self) -> tuple:
        if isinstance(self.trials, tuple):
            return self.trials
        return (self.trials,) * len(self.widths)

    def to_dict(self) -> dict:
        return {"widths": list(self.widths), "trials": list(self.trials_per_rung())}


@dataclass
class ExperimentGrid:
    """Finite sample of a compact input set, with its bounding box."""

    points: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if np.any(self.points < self.lower - 1e-12) or np.any(self.points > self.upper + 1e-12):
            raise ConfigError("grid points leave the declared bounding box")

    @classmethod
    def circle(cls, n_points: int = 50, radius: float = 1.0) -> "ExperimentGrid":
        theta = 2 * np.pi * np.arange(n_points) / n_points
        pts = radius * np.column_stack([np.cos(theta), np.sin(theta)])
        return cls(pts, np.full(2, -radius), np.full(2, radius))

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float], resolution: int) -> "ExperimentGrid":
        lower, upper = np.asarray(lower, float), np.asarray(upper, float)
        axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(lower, upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(np.column_stack([m.ravel() for m in mesh]), lower, upper)

    def inputs(self) -> InputSet:
        return InputSet(self.points, [f"g{i}" for i in range(len(self.points))])


@dataclass
class ConvergenceReport:
    study: str
    config_hash: str
    ladder: Optional[WidthLadder]
    points: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add(self, width, metric, value, se, arm="network") -> None:
        self.points.append(ConvergencePoint(width, metric, float(value), float(se), arm))

    def get(self, metric: str, width: int, arm: str = "network") -> ConvergencePoint:
        for p in self.points:
            if p.metric == metric and p.width == width and p.arm == arm:
                return p
        raise KeyError(f"no point {metric!r} at width {width} for arm {arm!r}")

    def series(self, metric: str, arm: str = "network"):
        pts = sorted((p for p in self.points if p.metric == metric and p.arm == arm),
                     key=lambda p: p.width)
        return (np.array([p.width for p in pts]), np.array([p.value for p in pts]),
                np.array([p.se for p in pts]))

    def metrics(self, prefix: str = "", arm: str = "network") -> list:
        seen = []
        for p in self.points:
            if p.arm == arm and p.metric.startswith(prefix) and p.metric not in seen:
                seen.append(p.metric)
        return seen

    def rows(self) -> list:
        """Long-format rows ``(study, arm, width, metric, value, se)``; slopes have no width."""
        out = [(self.study, p.arm, p.width, p.metric, p.value, p.se) for p in self.points]
        for key in sorted(self.slopes):
            fit = self.slopes[key]
            if fit is not None:
                arm, metric = key.split("/", 1) if "/" in key else ("network", key)
                out.append((self.study, arm, None, f"slope:{metric}", fit.slope, fit.se))
        return out


def _fit_slope(report: ConvergenceReport, metric: str, arm: str = "network") -> Optional[SlopeFit]:
    w, v, s = report.series(metric, arm)
    key = metric if arm == "network" else f"{arm}/{metric}"
    if len(w) < 3:
        return None
    try:
        fit = loglog_slope(w, v, s)
    except NonPositiveValueError:
        report.flags[f"degenerate:{key}"] = True
        fit = None
    report.slopes[key] = fit
    return fit


def sample_gaussian_outputs(K, M: int, n_out: int, rng: RngStream) -> np.ndarray:
    """``M`` draws of an ``(n_out, |A|)`` matrix with iid N(0, K) rows."""
    K = np.asarray(getattr(K, "entries", K))
    lam, V = np.linalg.eigh(K)
    root = V * np.sqrt(np.clip(lam, 0.0, None))
    G = rng.generator.standard_normal((M, n_out, K.shape[0]))
    return G @ root.T


def _pair_label(a: int, b: int) -> str:
    return f"[{a},{b}]"


def _gaussianity_metrics(report, width, arm, Z, K, probes, cross_fn):
    n_out, nA = Z.shape[1], Z.shape[2]
    Kd = np.diag(K)
    C, se = pooled_covariance(Z)
    diff = np.abs(C - K)
    a, b = np.unravel_index(np.argmax(diff), diff.shape)
    report.add(width, "cov_err", diff[a, b], se[a, b], arm)
    for a in range(nA):
        for b in range(a, nA):
            report.add(width, f"cov{_pair_label(a, b)}", C[a, b], se[a, b], arm)
    for i in range(n_out):
        for a in range(nA):
            c = excess_cumulants(Z[:, i, a])
            report.add(width, f"kappa3_rel[{i},{a}]", c.k3 / Kd[a] ** 1.5, c.se_k3 / Kd[a] ** 1.5, arm)
            report.add(width, f"kappa4_rel[{i},{a}]", c.k4 / Kd[a] ** 2, c.se_k4 / Kd[a] ** 2, arm)
    d, dse = cf_distance(Z, K, probes, min_trials=min(100, Z.shape[0]))
    report.add(width, "cf_distance", d, dse, arm)
    if n_out >= 2:
        cc, cse = cross_neuron_cov(Z, cross_fn, 0, min_trials=min(100, Z.shape[0]))
        report.add(width, "cross_cov", cc, cse, arm)


def convergence_study(config: NetworkConfig, inputs: InputSet, ladder: WidthLadder,
                      master_seed: int, quad_order: int = 64, n_probes: int = 32,
                      mc_trials: int = 2000, cross_fn: str = "square", oracle: bool = True,
                      threads: int = 1) -> ConvergenceReport:
    """Per rung: output-covariance error against the kernel, cumulants, CF distance,
    moments of the conditional covariance Sigma^(L+1), and cross-neuron covariance."""
    L, nA = config.depth, len(inputs)
    quad = QuadratureRule.gauss_hermite(quad_order)
    kernels = kernel_forward(inputs.points, config.with_width(max(ladder.widths)), quad, mc_trials,
                             RngStream(master_seed, _KERNEL_KEY), inputs.labels)
    K = kernels[-1].entries
    probes = CfProbeSet.generate(n_probes, config.n_out, nA, derive_seed(master_seed, _PROBE_KEY))
    report = ConvergenceReport("converge", config.config_hash(), ladder, meta={
        "kernel": K.tolist(), "kernel_provenance": kernels[-1].provenance, "seed": master_seed,
    })
    for width, M in zip(ladder.widths, ladder.trials_per_rung()):
        cfg = config.with_width(width)
        seed = derive_seed(master_seed, _NETWORK_KEY, width)
        log.info("converge: width %d, %d trials", width, M)

        def trial(t, cfg=cfg, seed=seed):
            acts = forward(sample_network(cfg, RngStream(seed, t)), inputs, cfg.nl, keep=(L, L + 1))
            return acts.z[L + 1], sigma_from_layer(acts.z[L], cfg.C_b, cfg.C_W, cfg.nl)

        res = run_trials(M, trial, threads)
        Z = np.stack([r[0] for r in res])
        S = np.stack([r[1] for r in res])
        _gaussianity_metrics(report, width, "network", Z, K, probes, cross_fn)
        for a in range(nA):
            for b in range(a, nA):
                mom = observable_moments(S[:, a, b])
                report.add(width, f"sigma_mean{_pair_label(a, b)}", mom.mean, mom.se_mean)
                report.add(width, f"sigma_var{_pair_label(a, b)}", mom.variance, mom.se_variance)
        if oracle:
            Zo = sample_gaussian_outputs(K, M, cfg.n_out, RngStream(derive_seed(master_seed, _ORACLE_KEY, width), 0))
            _gaussianity_metrics(report, width, "oracle", Zo, K, probes, cross_fn)

    for metric in report.metrics("sigma_var"):
        fit = _fit_slope(report, metric)
        if fit is not None:
            report.flags[f"slope_in_window:{metric}"] = SLOPE_WINDOW[0] <= fit.slope <= SLOPE_WINDOW[1]
    for arm in (["network", "oracle"] if oracle else ["network"]):
        for width in ladder.widths:
            for metric in ("cov_err", "cf_distance", "cross_cov"):
                try:
                    p = report.get(metric, width, arm)
                except KeyError:
                    continue
                report.flags[f"{arm}:{metric}_zero@{width}"] = abs(p.value) <= Z_ZERO * p.se
    return report


# --- universality -----------------------------------------------------------------

def _gauss_bump(Z: np.ndarray) -> np.ndarray:
    return np.exp(-np.sum(Z * Z, axis=-1))


def _tanh_product(Z: np.ndarray) -> np.ndarray:
    return np.prod(np.tanh(Z), axis=-1)


# Test functions are given per output neuron, phi: (..., |A|) -> (...); the
# statistic is g(z) = prod_i phi(z_i), which keeps the neurons' conditional
# independence given the last hidden layer usable.
TEST_FUNCTIONS: dict = {"gauss_bump": _gauss_bump, "tanh_product": _tanh_product}

# tensor Gauss-Hermite order by |A| for the Gaussian conditional expectation;
# the control-variate slope only affects variance, so a coarse rule suffices
_GH_ORDER = {1: 128, 2: 64, 3: 24, 4: 12}
_GH_ORDER_CV = {1: 16, 2: 10, 3: 6, 4: 4}
_SWAP_ORDER = 10


def _resolve_g(g_set) -> dict:
    out = {}
    for g in g_set:
        if callable(g):
            out[getattr(g, "__name__", repr(g))] = g
        elif g in TEST_FUNCTIONS:
            out[g] = TEST_FUNCTIONS[g]
        else:
            raise ConfigError(f"unknown test function {g!r}; choose from {sorted(TEST_FUNCTIONS)}")
    return out


def _gh_nodes(dim: int, order: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.hermite_e.hermegauss(order or _GH_ORDER[dim])
    w = w / w.sum()
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    wts = np.meshgrid(*([w] * dim), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1), np.prod([v.ravel() for v in wts], axis=0)


def _gaussian_expectation(phi, S: np.ndarray, nodes: np.ndarray, weights: np.ndarray) -> float:
    """E[phi(z)] for z ~ N(0, S), by a tensor rule on a symmetric square root of S."""
    lam, V = np.linalg.eigh(S)
    root = V * np.sqrt(np.clip(lam, 0.0, None))
    return float(weights @ phi(nodes @ root.T))


def _swap_correction(phi, h: np.ndarray, scale: float, G: np.ndarray, b: np.ndarray,
                     dist: WeightDistribution, rule_d, rule_g) -> np.ndarray:
    """Unbiased estimate of E[phi(z)] - E[phi(z_gauss)] for ``z = b + scale * w @ h``.

    Weights ``w`` are swapped from ``dist`` to Gaussian one at a time; the
    k-th swap is averaged exactly over the k-th weight with each law's
    quadrature rule while the other weights come from one coupled draw. Each
    term is a smooth difference of size O(fan_in**-2), so the estimate has far
    less noise than differencing sampled outputs. ``G`` is ``(R, m, n)``
    standard normals and ``b`` is ``(R, m)``, for ``m`` independent neurons;
    returns ``(R, m) + phi``'s value shape.
    """
    c = scale * h                                          # (n, |A|)
    tg = G[..., None] * c                                  # Gaussian terms
    td = dist.from_standard_normal(G)[..., None] * c       # terms under ``dist``
    before = np.cumsum(tg, axis=2) - tg                    # sum over j < k of Gaussian terms
    after = td.sum(axis=2, keepdims=True) - np.cumsum(td, axis=2)  # j > k under ``dist``
    Y = b[..., None, None] + before + after                # (R, m, n, |A|)
    diff = 0.0
    for (x, w), sign in ((rule_d, 1.0), (rule_g, -1.0)):
        vals = phi(Y[..., None, :] + x[:, None] * c[:, None, :])  # (R, m, n, q, ...)
        diff = diff + sign * np.tensordot(vals, w, axes=([3], [0]))
    return diff.sum(axis=2)


def _outer_activation(nl):
    def psi(z):
        a = nl(z)
        return a[..., :, None] * a[..., None, :]
    return psi


def _sym_gradient(fn, S: np.ndarray) -> np.ndarray:
    """Central-difference derivatives of ``fn`` along each symmetric unit direction
    (``E_aa`` and ``E_ab + E_ba``), so ``sum(grad * triu(dS))`` is the linear term."""
    n = S.shape[0]
    eps = 1e-5 * max(1.0, float(np.max(np.diag(S))))
    grad = np.zeros_like(S)
    for a in range(n):
        for b in range(a, n):
            D = np.zeros_like(S)
            D[a, b] = D[b, a] = eps
            grad[a, b] = (fn(S + D) - fn(S - D)) / (2 * eps)
    return grad


def universality_study(config: NetworkConfig, dists: Sequence[WeightDistribution], inputs: InputSet,
                       ladder: WidthLadder, master_seed: int,
                       g_set: Sequence = ("gauss_bump", "tanh_product"),
                       inner_draws: int = 8, threads: int = 1) -> ConvergenceReport:
    """Compare weight laws in layers >= 2 at matched width.

    All arms share the first layer and every bias, and their weights in
    layers >= 2 are quantile transforms of one shared array of standard
    normals, so arm differences are estimated with common random numbers.

    For each draw of layers 1..L, ``E[g(z_out) | last hidden layer]`` is
    computed rather than sampled: by Gauss-Hermite quadrature for Gaussian
    last-layer weights, plus a one-weight-at-a-time swapping correction
    (``inner_draws`` coupled draws) for other laws. When ``L >= 2`` the
    result is further corrected by the control variate ``grad . (S - E[S | u])``,
    where ``S`` is the output conditional covariance and ``u`` the previous
    activations; its mean is zero, so estimates stay unbiased while the
    O(width**-1/2) fluctuation of ``S`` drops out. Covariance differences use
    one realised output per draw.

    ``g_set`` entries are names from :data:`TEST_FUNCTIONS` or callables
    ``phi`` acting on one output neuron's ``(..., |A|)`` values.
    """
    if len(dists) < 2:
        raise ConfigError("universality needs at least two weight distributions")
    if inner_draws < 1:
        raise ConfigError("inner_draws must be >= 1")
    gs = _resolve_g(g_set)
    L, nA, n_out = config.depth, len(inputs), config.n_out
    if nA not in _GH_ORDER:
        raise ConfigError(f"universality supports 1 to {max(_GH_ORDER)} inputs, got {nA}")
    X = inputs.points
    bias = BiasLaw(config.C_b)
    names = [d.label for d in dists]
    if len(set(names)) != len(names):
        names = [f"{d.label}#{i}" for i, d in enumerate(dists)]
    nodes, weights = _gh_nodes(nA)
    cv_nodes, cv_weights = _gh_nodes(nA, _GH_ORDER_CV[nA])
    rule_g = GAUSSIAN.quadrature(_SWAP_ORDER)
    psi = _outer_activation(config.nl)
    quad = QuadratureRule.gauss_hermite()
    rules = [d.quadrature(_SWAP_ORDER) for d in dists]
    report = ConvergenceReport("universality", config.config_hash(), ladder,
                               meta={"arms": names, "inner_draws": inner_draws, "seed": master_seed,
                                     "test_functions": list(gs)})
    for width, M in zip(ladder.widths, ladder.trials_per_rung()):
        cfg = config.with_width(width)
        seed = derive_seed(master_seed, _NETWORK_KEY, width)
        scale = math.sqrt(cfg.C_W / width)
        log.info("universality: width %d, %d trials", width, M)

        def trial(t, cfg=cfg, seed=seed, scale=scale, width=width):
            rng = RngStream(seed, t)
            W1, b1 = sample_first_layer(cfg, rng)
            hidden = [(rng.generator.standard_normal((width, width)), bias.sample(width, rng))
                      for _ in range(2, L + 1)]
            G_out, b_out = rng.generator.standard_normal((n_out, width)), bias.sample(n_out, rng)
            inner = rng.child(_INNER_KEY)
            G_in = inner.generator.standard_normal((inner_draws, n_out, width))
            b_in = bias.sample((inner_draws, n_out), inner)
            inner_h = rng.child(_INNER_HIDDEN_KEY)
            G_h = inner_h.generator.standard_normal((inner_draws, 1, width))
            b_h = bias.sample((inner_draws, 1), inner_h)
            z1 = W1 @ X.T + b1[:, None]
            outs, gvals = [], []
            for d, rule in zip(dists, rules):
                z, u = z1, None
                for G, b in hidden:
                    u = cfg.nl(z)
                    z = scale * d.from_standard_normal(G) @ u + b[:, None]
                h = cfg.nl(z)
                outs.append(scale * d.from_standard_normal(G_out) @ h + b_out[:, None])
                S = cfg.C_b + scale**2 * (h.T @ h)
                if u is not None:
                    # E[S | u]: the Gaussian part from the kernel engine, plus the swap correction
                    prev = KernelMatrix(cfg.C_b + scale**2 * (u.T @ u), L - 1)
                    S_bar = kernel_step(prev, cfg.nl, cfg.C_b, cfg.C_W, quad).entries
                    S_mean = S_bar
                    if d.kind is not Kind.GAUSSIAN:
                        corr = _swap_correction(psi, u, scale, G_h, b_h, d, rule, rule_g)
                        S_mean = S_bar + cfg.C_W * corr.mean(axis=(0, 1))
                    dS = np.triu(S - S_mean)
                row = []
                for phi in gs.values():
                    base = _gaussian_expectation(phi, S, nodes, weights)
                    if d.kind is Kind.GAUSSIAN:
                        val = base**n_out
                    else:
                        corr = _swap_correction(phi, h, scale, G_in, b_in, d, rule, rule_g)
                        val = float(np.mean(np.prod(base + corr, axis=1)))
                    if u is not None:
                        # control variate: S - E[S | u] has mean zero and carries the
                        # O(width**-1/2) fluctuation shared by every arm
                        grad = _sym_gradient(
                            lambda T, phi=phi: _gaussian_expectation(phi, T, cv_nodes, cv_weights) ** n_out, S_bar)
                        val -= float(np.sum(grad * dS))
                    row.append(val)
                gvals.append(row)
            return np.stack(outs), np.array(gvals)

        res = run_trials(M, trial, threads)
        Z = np.stack([r[0] for r in res])      # (M, arms, n_out, |A|)
        H = np.stack([r[1] for r in res])      # (M, arms, |g|)
        D = Z - exact_mean(Z)
        q = np.einsum("tkia,tkib->tkab", D, D) / n_out
        for k, name in enumerate(names):
            for j, gname in enumerate(gs):
                mom = observable_moments(H[:, k, j])
                report.add(width, f"mean:{gname}", mom.mean, mom.se_mean, name)
        for i, j in combinations(range(len(dists)), 2):
            arm = f"{names[i]}|{names[j]}"
            dq = q[:, i] - q[:, j]
            cd = exact_mean(dq) * M / (M - 1)
            cse = np.sqrt(exact_mean((dq - exact_mean(dq)) ** 2) / (M - 1))
            a, b = np.unravel_index(np.argmax(np.abs(cd)), cd.shape)
            report.add(width, "cov_diff", abs(cd[a, b]), cse[a, b], arm)
            for k, gname in enumerate(gs):
                mom = observable_moments(H[:, i, k] - H[:, j, k])
                report.add(width, f"gap:{gname}", abs(mom.mean), mom.se_mean, arm)
    for i, j in combinations(range(len(dists)), 2):
        for gname in gs:
            _fit_slope(report, f"gap:{gname}", f"{names[i]}|{names[j]}")
    for p in report.points:
        if p.metric == "cov_diff":
            report.flags[f"{p.arm}:cov_diff_zero@{p.width}"] = p.value <= 4.0 * p.se
    return report


# --- tightness --------------------------------------------------------------------

def lipschitz_ratio(outputs: np.ndarray, X: np.ndarray) -> float:
    """max over input pairs of ||z_a - z_b|| / ||x_a - x_b||; ``outputs`` is ``(n_out, |A|)``."""
    dz = outputs.T[:, None, :] - outputs.T[None, :, :]
    dx = X[:, None, :] - X[None, :, :]
    num = np.sqrt(np.sum(dz * dz, axis=-1))
    den = np.sqrt(np.sum(dx * dx, axis=-1))
    iu = np.triu_indices(len(X), 1)
    if np.any(den[iu] == 0):
        raise DegenerateGridError("grid contains coinciding points")
    return float(np.max(num[iu] / den[iu]))


def sup_norm(outputs: np.ndarray) -> float:
    return float(np.max(np.sqrt(np.sum(outputs * outputs, axis=0))))


def _bootstrap_quantile_se(x: np.ndarray, q: float, rng: np.random.Generator, reps: int) -> float:
    idx = rng.integers(0, x.size, size=(reps, x.size))
    return float(np.std(np.quantile(x[idx], q, axis=1), ddof=1))


def tightness_study(config: NetworkConfig, grid: ExperimentGrid, widths: Sequence[int],
                    draws_per_width: int, master_seed: int, bootstrap: int = 200,
                    threads: int = 1) -> ConvergenceReport:
    """Empirical Lipschitz ratio and sup norm of the network over ``grid``, per draw;
    reported as median and 95th percentile across draws (bootstrap SEs)."""
    X = grid.points
    if len(X) < 20:
        raise ConfigError("tightness grid needs at least 20 points")
    if X.shape[1] < 2:
        raise ConfigError("tightness study needs n_0 >= 2")
    d = np.sqrt(np.sum((X[:, None] - X[None]) ** 2, axis=-1))
    if np.any(d[np.triu_indices(len(X), 1)] == 0):
        raise DegenerateGridError("grid contains coinciding points")
    inputs = grid.inputs()
    ladder = WidthLadder(tuple(widths), draws_per_width)
    report = ConvergenceReport("tightness", config.config_hash(), ladder,
                               meta={"grid_points": len(X), "seed": master_seed, "samples": {}})
    boot = np.random.default_rng(derive_seed(master_seed, _BOOT_KEY))
    for width in ladder.widths:
        cfg = config.with_width(width)
        seed = derive_seed(master_seed, _NETWORK_KEY, width)

        def trial(t, cfg=cfg, seed=seed):
            out = forward(sample_network(cfg, RngStream(seed, t)), inputs, cfg.nl,
                          keep=(cfg.depth + 1,)).z[cfg.depth + 1]
            return lipschitz_ratio(out, X), sup_norm(out)

        res = np.array(run_trials(draws_per_width, trial, threads))
        report.meta["samples"][width] = {"lipschitz": res[:, 0].tolist(), "sup": res[:, 1].tolist()}
        for col, name in ((0, "lipschitz"), (1, "sup")):
            x = res[:, col]
            for q, tag in ((0.5, "median"), (0.95, "p95")):
                report.add(width, f"{name}_{tag}", np.quantile(x, q),
                           _bootstrap_quantile_se(x, q, boot, bootstrap))
    return report


# --- kernels ----------------------------------------------------------------------

def kernel_report(config: NetworkConfig, inputs: InputSet, quad_order: int = 64,
                  master_seed: int = 0, mc_trials: int = 2000) -> list[KernelMatrix]:
    """K^(2)..K^(L+1). Provenance is ``closed-form`` (identity), ``quadrature``, or
    ``mc`` (non-Gaussian first layer, with per-entry SEs on K^(2))."""
    return kernel_forward(inputs.points, config, QuadratureRule.gauss_hermite(quad_order), mc_trials,
                          RngStream(master_seed, _KERNEL_KEY), inputs.labels)

"""End-to-end acceptance criteria, each at its stated tolerance.

Every test records one ``criterion N: PASS|FAIL`` line; the lines are
collected in :data:`RESULTS` and repeated in the pytest terminal summary.
Run just this suite with ``pytest -m acceptance -s``.
"""
import math
import time

import numpy as np
import pytest

from nngp_limit import nonlinearity as nl
from nngp_limit.cli import run as cli_run
from nngp_limit.distributions import GAUSSIAN, RADEMACHER, UNIFORM, RngStream
from nngp_limit.experiments import (
    ExperimentGrid,
    WidthLadder,
    convergence_study,
    kernel_report,
    lipschitz_ratio,
    tightness_study,
    universality_study,
)
from nngp_limit.kernel import (
    BivariateSlice,
    QuadratureRule,
    affine_closed_form,
    bivariate_expectation,
    first_layer_kernel_gaussian,
    relu_pair_oracle,
)
from nngp_limit.network import InputSet, NetworkConfig, default_inputs, forward, sample_ensemble, sample_network
from nngp_limit.reporting import parse_report_csv
from nngp_limit.stats import pooled_covariance

pytestmark = pytest.mark.acceptance

RESULTS: list = []

# "beyond combined SEs": the difference exceeds Z_BEYOND combined standard errors
Z_BEYOND = 2.0


def record(number: int, title: str, ok: bool, detail: str, elapsed: float = None, limit: float = None):
    timing = ""
    if elapsed is not None:
        timing = f" [{elapsed:.1f} s" + (f" < {limit:g} s]" if limit is not None else "]")
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {title}: {detail}{timing}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def beyond(a, b) -> tuple[bool, float]:
    """``a`` exceeds ``b`` by more than ``Z_BEYOND`` combined SEs; returns the z-score too."""
    z = (a.value - b.value) / math.hypot(a.se, b.se)
    return z > Z_BEYOND, z


def tanh_net(L, width, n_out=1, n0=2, C_W=1.5, C_b=0.1, **kw):
    return NetworkConfig(L, (n0,) + (width,) * L + (n_out,), C_W, C_b, nl.TANH, **kw)


# --- 1 ------------------------------------------------------------------------------

def test_criterion_1_exact_linear_oracle():
    t0 = time.perf_counter()
    L, C_b, C_W = 3, 0.1, 1.5
    inputs = default_inputs()
    cfg = NetworkConfig(L, (2, 64, 64, 64, 1), C_W, C_b, nl.IDENTITY)
    kernels = kernel_report(cfg, inputs)
    K1 = first_layer_kernel_gaussian(inputs.points, 2, C_b, C_W).entries
    err = max(float(np.max(np.abs(K.entries - affine_closed_form(K1, K.layer, C_b, C_W)))) for K in kernels)
    ens = sample_ensemble(cfg, inputs, 10_000, [L + 1], master_seed=101)
    C, se = pooled_covariance(ens.layer(L + 1))
    z = float(np.max(np.abs(C - kernels[-1].entries) / se))
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-12 and z <= 5.0 and elapsed < 30
    record(1, "exact linear oracle", ok,
           f"max |K - closed form| = {err:.1e} (<= 1e-12), worst covariance z = {z:.2f} (<= 5)", elapsed, 30)


# --- 2 ------------------------------------------------------------------------------

def test_criterion_2_relu_quadrature_vs_closed_form():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    quad = QuadratureRule.gauss_hermite(200)
    worst, worst_rel = 0.0, 0.0
    for _ in range(200):
        va, vb = 10.0 ** rng.uniform(-2, 1, size=2)
        rho = rng.uniform(-0.99, 0.99)
        s = BivariateSlice(va, vb, rho * math.sqrt(va * vb))
        q, o = bivariate_expectation(s, nl.RELU, quad), relu_pair_oracle(s)
        worst = max(worst, abs(q - o) / max(1e-4 * abs(o), 1e-8))
        worst_rel = max(worst_rel, abs(q - o) / abs(o))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1.0 and elapsed < 10
    record(2, "ReLU quadrature vs closed form", ok,
           f"worst relative error {worst_rel:.1e} over 200 slices (tolerance 1e-4, floor 1e-8)", elapsed, 10)


# --- 3 ------------------------------------------------------------------------------

def test_criterion_3_width_independence_at_depth_one():
    t0 = time.perf_counter()
    widths = (8, 64, 1024)
    rep = convergence_study(tanh_net(1, 8), default_inputs(), WidthLadder(widths, 10_000), master_seed=3,
                            oracle=False)
    K2 = np.asarray(rep.meta["kernel"])
    worst_pair, worst_kernel = 0.0, 0.0
    for metric in rep.metrics("sigma_mean"):
        a, b = (int(i) for i in metric[len("sigma_mean["):-1].split(","))
        pts = [rep.get(metric, w) for w in widths]
        for i in range(3):
            worst_kernel = max(worst_kernel, abs(pts[i].value - K2[a, b]) / pts[i].se)
            for j in range(i + 1, 3):
                worst_pair = max(worst_pair, abs(pts[i].value - pts[j].value) / math.hypot(pts[i].se, pts[j].se))
    elapsed = time.perf_counter() - t0
    ok = worst_pair <= 4 and worst_kernel <= 4 and elapsed < 120
    record(3, "width independence at L = 1", ok,
           f"worst between-width z = {worst_pair:.2f}, worst z against K^(2) = {worst_kernel:.2f} (<= 4)",
           elapsed, 120)


# --- 4 ------------------------------------------------------------------------------

# critical tanh (C_W = 1, C_b = 0) stays in its near-linear range, where
# finite-width non-Gaussianity is large enough to resolve at small widths
LADDER_NET = tanh_net(3, 32, n_out=2, C_W=1.0, C_b=0.0)


def test_criterion_4_collective_observable_variance_decay():
    t0 = time.perf_counter()
    rep = convergence_study(LADDER_NET, default_inputs(), WidthLadder((32, 64, 128, 256, 512), 2000),
                            master_seed=4, oracle=False)
    slopes = {k: f.slope for k, f in rep.slopes.items() if k.startswith("sigma_var")}
    elapsed = time.perf_counter() - t0
    ok = len(slopes) == 6 and all(-1.35 <= s <= -0.65 for s in slopes.values()) and elapsed < 600
    record(4, "variance decay of Sigma", ok,
           "slopes " + ", ".join(f"{k[len('sigma_var'):]} {s:+.3f}" for k, s in sorted(slopes.items()))
           + " (window [-1.35, -0.65])", elapsed, 600)


# --- 5, 6, 9: one ladder with an oracle arm ---------------------------------------------

GAUSS_WIDTHS = (16, 32, 64, 128, 256, 512)
GAUSS_TRIALS = (10_000, 60_000, 5_000, 5_000, 5_000, 40_000)


@pytest.fixture(scope="module")
def gaussianization():
    t0 = time.perf_counter()
    rep = convergence_study(LADDER_NET, default_inputs(), WidthLadder(GAUSS_WIDTHS, GAUSS_TRIALS),
                            master_seed=5)
    return rep, time.perf_counter() - t0


def test_criterion_5_gaussianization(gaussianization):
    rep, elapsed = gaussianization
    kappa4 = rep.metrics("kappa4_rel")
    worst_size, weakest = 0.0, math.inf
    for m in kappa4:
        hi, lo = rep.get(m, 32), rep.get(m, 512)
        worst_size = max(worst_size, abs(lo.value))
        z = (abs(hi.value) - abs(lo.value)) / math.hypot(hi.se, lo.se)
        weakest = min(weakest, z)
    net, orc = rep.get("cf_distance", 512), rep.get("cf_distance", 512, "oracle")
    cf_z = abs(net.value - orc.value) / math.hypot(net.se, orc.se)
    ok = len(kappa4) == 6 and worst_size <= 0.1 and weakest > Z_BEYOND and cf_z <= 5
    record(5, "Gaussianization", ok,
           f"max |kappa4|/K^2 at 512 = {worst_size:.3f} (<= 0.1), weakest drop from 32 z = {weakest:.2f} "
           f"(> {Z_BEYOND:g}), cf_distance network {net.value:.4f} vs oracle {orc.value:.4f}, z = {cf_z:.2f} (<= 5)",
           elapsed)


def test_criterion_6_cross_neuron_decorrelation(gaussianization):
    rep, _ = gaussianization
    hi, lo = rep.get("cross_cov", 16), rep.get("cross_cov", 512)
    z_drop = (abs(hi.value) - abs(lo.value)) / math.hypot(hi.se, lo.se)
    z_zero = abs(lo.value) / lo.se
    ok = z_drop > Z_BEYOND and z_zero <= 5
    record(6, "cross-neuron decorrelation", ok,
           f"Cov(z1^2, z2^2) {hi.value:.4f} at 16 -> {lo.value:.5f} at 512, drop z = {z_drop:.2f} "
           f"(> {Z_BEYOND:g}), zero z = {z_zero:.2f} (<= 5)")


def test_criterion_9_oracle_self_calibration(gaussianization):
    rep, _ = gaussianization
    worst, where = 0.0, ""
    for w in GAUSS_WIDTHS:
        for m in rep.metrics("kappa", "oracle") + ["cf_distance", "cross_cov"]:
            p = rep.get(m, w, "oracle")
            if abs(p.value) / p.se > worst:
                worst, where = abs(p.value) / p.se, f"{m} at {w}"
    ok = worst <= 5
    record(9, "oracle arm self-calibration", ok, f"worst |value|/SE = {worst:.2f} ({where}), limit 5")


# --- 7 ------------------------------------------------------------------------------

def test_criterion_7_universality():
    t0 = time.perf_counter()
    cfg = tanh_net(2, 64)
    rep = universality_study(cfg, [GAUSSIAN, RADEMACHER, UNIFORM], InputSet([[1.0, 0.0], [0.6, 0.8]]),
                             WidthLadder((64, 256, 512), 2000), master_seed=7, inner_draws=8)
    elapsed = time.perf_counter() - t0
    pairs = rep.meta["arms"]
    arms = [f"{a}|{b}" for i, a in enumerate(pairs) for b in pairs[i + 1:]]
    cov_z = max(rep.get("cov_diff", 512, a).value / rep.get("cov_diff", 512, a).se for a in arms)
    weakest, where = math.inf, ""
    for a in arms:
        for g in ("gauss_bump", "tanh_product"):
            _, z = beyond(rep.get(f"gap:{g}", 64, a), rep.get(f"gap:{g}", 256, a))
            if z < weakest:
                weakest, where = z, f"{a} {g}"
    ok = cov_z <= 4 and weakest > Z_BEYOND and elapsed < 600
    record(7, "universality", ok,
           f"worst covariance difference at 512 z = {cov_z:.2f} (<= 4), weakest gap drop 64 -> 256 "
           f"z = {weakest:.2f} ({where}, > {Z_BEYOND:g})", elapsed, 600)


# --- 8 ------------------------------------------------------------------------------

def test_criterion_8_tightness_stability():
    t0 = time.perf_counter()
    grid = ExperimentGrid.circle(50)
    rep = tightness_study(tanh_net(2, 64, n_out=2), grid, (64, 512), 200, master_seed=8)
    p64, p512 = rep.get("lipschitz_p95", 64).value, rep.get("lipschitz_p95", 512).value
    ratio = p512 / p64
    lin = NetworkConfig(2, (2, 64, 64, 2), 1.5, 0.1, nl.IDENTITY)
    draw = sample_network(lin, RngStream(8, 0))
    out = forward(draw, grid.inputs(), nl.IDENTITY, keep=(3,)).z[3]
    A = draw.weights[2] @ draw.weights[1] @ draw.weights[0]
    svd = float(np.linalg.svd(A, compute_uv=False)[0])
    lin_err = abs(lipschitz_ratio(out, grid.points) / svd - 1)
    elapsed = time.perf_counter() - t0
    ok = 0.5 <= ratio <= 2 and lin_err <= 0.02 and elapsed < 300
    record(8, "tightness stability", ok,
           f"p95 Lipschitz {p64:.3f} at 64 vs {p512:.3f} at 512, ratio {ratio:.3f} (within factor 2); "
           f"identity ratio vs SVD norm off by {lin_err:.1e} (<= 2%)", elapsed, 300)


# --- 10 -----------------------------------------------------------------------------

REPRO_CONFIGS = {
    "kernel": {"L": 2, "dims": [2, 8, 8, 1], "nonlinearity": "tanh", "weights": {"first": "uniform"},
               "study": {"mc_trials": 200}},
    "converge": {"L": 2, "dims": [2, 8, 8, 2], "nonlinearity": "tanh", "C_b": 0.1,
                 "study": {"widths": [4, 8, 16], "trials": 200, "mc_trials": 200}},
    "universality": {"L": 2, "dims": [2, 8, 8, 1], "nonlinearity": "tanh",
                     "inputs": [[1.0, 0.0], [0.6, 0.8]],
                     "study": {"widths": [4, 8, 16], "trials": 100, "dists": ["gaussian", "rademacher"],
                               "inner_draws": 4}},
    "tightness": {"L": 1, "dims": [2, 8, 1], "nonlinearity": "tanh",
                  "study": {"widths": [4, 8], "draws_per_width": 50, "bootstrap": 20,
                            "grid": {"kind": "circle", "points": 20}}},
}


def test_criterion_10_reproducibility(tmp_path):
    import json

    t0 = time.perf_counter()
    bad = []
    for command, cfg in REPRO_CONFIGS.items():
        path = tmp_path / f"{command}.json"
        path.write_text(json.dumps({**cfg, "seed": 10}))
        outs = {}
        for tag, threads in (("a", 1), ("b", 1), ("mt", 4)):
            out = tmp_path / f"{command}-{tag}.csv"
            assert cli_run([command, "--config", str(path), "--threads", str(threads), "--out", str(out), "-q"]) == 0
            outs[tag] = out.read_bytes()
        if outs["a"] != outs["b"]:
            bad.append(f"{command}: single-threaded reruns differ")
        if command == "kernel":
            same = outs["a"] == outs["mt"]
        else:
            same = parse_report_csv(outs["a"].decode()) == parse_report_csv(outs["mt"].decode())
        if not same:
            bad.append(f"{command}: threaded values differ")
    elapsed = time.perf_counter() - t0
    record(10, "reproducibility", not bad,
           "; ".join(bad) or "byte-identical reruns and identical threaded values for "
           + ", ".join(REPRO_CONFIGS), elapsed)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))

"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the terminal summary (see ``conftest.py``).  The two
Monte Carlo criteria (size and power) take most of the wall-clock time.
"""

import math
import time

import numpy as np
import pytest
from click.testing import CliRunner
from pathlib import Path
from scipy import stats

from regime_lr.armle import fit_ar
from regime_lr.cli import main
from regime_lr.config import GAConfig, LrTestConfig
from regime_lr.cone import cone_infimum, v_map
from regime_lr.estimation import AlphaGrid, profile_alpha
from regime_lr.lrtest import lr_statistic, simulate_null_distribution
from regime_lr.mixture import MixtureSpec, log_np_density
from regime_lr.montecarlo import preset, run_power_study, run_size_study
from regime_lr.scores import ar_hessian_terms, ar_score_terms, build_score_panel, gmar_nabla_np_over_np
from regime_lr.timeseries import ArParams, gamma_inverse_toeplitz, simulate_ar, yule_walker_gamma

from conftest import random_stationary, record_acceptance

GOLDEN = Path(__file__).parent / "golden"


def log_f(theta, y, lags):
    mu = theta[0] + theta[1:-1] @ lags
    return -0.5 * math.log(2 * math.pi * theta[-1]) - 0.5 * (y - mu) ** 2 / theta[-1]


def fd_grad(fun, x, h=1e-3):
    """Fourth-order central differences."""
    g = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h * max(1.0, abs(x[i]))
        g[i] = (8 * (fun(x + e) - fun(x - e)) - (fun(x + 2 * e) - fun(x - 2 * e))) / (12 * e[i])
    return g


def fd_hess(fun, x, h=1e-3):
    n = x.size
    out = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        out[i] = (8 * (fd_grad(fun, x + e, h) - fd_grad(fun, x - e, h)) - (fd_grad(fun, x + 2 * e, h) - fd_grad(fun, x - 2 * e, h))) / (12 * h)
    return 0.5 * (out + out.T)


def rel_err(got, want, floor=1e-6):
    got, want = np.asarray(got), np.asarray(want)
    return float(np.max(np.abs(got - want) / np.maximum(np.abs(want), floor)))


def test_01_derivative_oracles():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for k in range(20):
        p = 1 + k % 3
        theta = np.concatenate([[rng.normal()], random_stationary(rng, p, 0.8), [rng.uniform(0.5, 2.0)]])
        lags, y = rng.normal(size=p), rng.normal()
        sigma = math.sqrt(theta[-1])
        eps = (y - theta[0] - theta[1:-1] @ lags) / sigma
        fun = lambda t: log_f(t, y, lags)
        g = fd_grad(fun, theta)
        worst = max(worst, rel_err(ar_score_terms(eps, lags, sigma), g))
        worst = max(worst, rel_err(ar_hessian_terms(eps, lags, sigma), fd_hess(fun, theta) + np.outer(g, g), 1e-3))
        np_fun = lambda t: float(log_np_density(lags, ArParams.from_vector(t)))
        worst = max(worst, rel_err(gmar_nabla_np_over_np(ArParams.from_vector(theta), lags), fd_grad(np_fun, theta)))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-5 and elapsed < 5.0
    record_acceptance(1, ok, f"derivative oracles: worst relative error {worst:.2e} (tol 1e-5), {elapsed:.2f}s (< 5s)")
    assert ok


def test_02_toeplitz_identity():
    rng = np.random.default_rng(102)
    start = time.perf_counter()
    worst = 0.0
    for k in range(100):
        p = 1 + k % 3
        params = ArParams(rng.normal(), random_stationary(rng, p), rng.uniform(0.2, 3.0))
        prod = gamma_inverse_toeplitz(params) @ yule_walker_gamma(params)
        worst = max(worst, float(np.max(np.abs(prod - np.eye(p)))))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-8 and elapsed < 5.0
    record_acceptance(2, ok, f"Toeplitz inverse: max |G^-1 G - I| {worst:.2e} (tol 1e-8), {elapsed:.2f}s (< 5s)")
    assert ok


# Nesting holds for any search effort, since the null point is always in the
# population and the polish only accepts improvements; a light GA keeps the
# 50-dataset sweep short.
LIGHT_GA = GAConfig(population=20, generations=15, polish_max_evals=300)


@pytest.mark.slow
def test_03_nesting():
    worst = math.inf
    null_only_max = 0.0
    for rep in range(50):
        y = simulate_ar(ArParams(0.0, [0.5], 1.0), 250, seed=3000 + rep)
        nf = fit_ar(y, 1)
        for fam in ("lmar", "gmar"):
            spec = MixtureSpec(fam, 1)
            grid = AlphaGrid.default(spec)
            fits = profile_alpha(spec, y, grid, LIGHT_GA, seed=rep, null_fit=nf)
            worst = min(worst, min(2.0 * (f.loglik - nf.loglik) for f in fits))
            stat, per = lr_statistic(spec, y, grid, LrTestConfig(ga=GAConfig.null_only()))
            null_only_max = max(null_only_max, abs(stat), *(abs(v) for _, v in per))
    ok = worst >= -1e-6 and null_only_max == 0.0
    record_acceptance(
        3, ok, f"nesting: min LR_T(alpha) {worst:.2e} over 50 datasets x 2 families (>= -1e-6); null-only max |LR| {null_only_max}"
    )
    assert ok


def test_04_lmar_limit_law():
    start = time.perf_counter()
    y = simulate_ar(ArParams(0.0, [0.5], 1.0), 5000, seed=104)
    panel = build_score_panel(MixtureSpec("lmar", 1), y, fit_ar(y, 1), [0.0, 1.0])
    sim = simulate_null_distribution(panel, 10_000, seed=104)
    ks = stats.kstest(sim.sample, stats.chi2(3).cdf)
    elapsed = time.perf_counter() - start
    ok = ks.pvalue > 0.01 and elapsed < 60.0
    record_acceptance(4, ok, f"LMAR limit law: KS p-value {ks.pvalue:.3f} vs chi2(3) (> 0.01), {elapsed:.1f}s (< 60s)")
    assert ok


def grid_oracle(z, w, lim=3.0, coarse=0.01, fine=0.0005, keep=20):
    """Coarse grid over [0, lim] x [-lim, lim], refined around the best coarse points.

    Restricting omega_1 >= 0 loses nothing because v(omega) = v(-omega).
    """
    g1 = np.arange(0.0, lim + coarse / 2, coarse)
    g2 = np.arange(-lim, lim + coarse / 2, coarse)
    om = np.stack(np.meshgrid(g1, g2, indexing="ij"), -1).reshape(-1, 2)
    r = v_map(om) - z
    h = np.einsum("nk,kl,nl->n", r, w, r)
    best = h.min()
    offs = np.arange(-2 * coarse, 2 * coarse + fine / 2, fine)
    for c in om[np.argsort(h)[:keep]]:
        local = np.stack(np.meshgrid(c[0] + offs, c[1] + offs, indexing="ij"), -1).reshape(-1, 2)
        r = v_map(local) - z
        best = min(best, np.einsum("nk,kl,nl->n", r, w, r).min())
    return float(best)


def test_05_cone_solver():
    rng = np.random.default_rng(105)
    start = time.perf_counter()
    grid_err = closed_err = scale_err = 0.0
    for _ in range(200):
        z = rng.normal(size=3)
        a = rng.normal(size=(3, 3))
        w = a @ a.T + 0.2 * np.eye(3)
        val, _ = cone_infimum(z, w, 2)
        grid_err = max(grid_err, abs(val - grid_oracle(z, w)))
        c = rng.uniform(0.1, 10.0)
        scaled, _ = cone_infimum(c * z, w, 2)
        scale_err = max(scale_err, abs(scaled - c * c * val) / max(c * c * val, 1e-12))
        z1, w1 = rng.normal(), rng.uniform(0.1, 5.0)
        v1, _ = cone_infimum([z1], [[w1]], 1)
        closed_err = max(closed_err, abs(v1 - w1 * min(z1, 0.0) ** 2))
    elapsed = time.perf_counter() - start
    ok = grid_err < 1e-4 and closed_err < 1e-10 and scale_err < 1e-6 and elapsed < 30.0
    record_acceptance(
        5,
        ok,
        f"cone solver: grid gap {grid_err:.1e} (1e-4), closed form {closed_err:.1e} (1e-10), "
        f"scaling {scale_err:.1e} (1e-6), {elapsed:.1f}s (< 30s)",
    )
    assert ok


@pytest.mark.slow
def test_06_size_band():
    cfg = preset("size-ar1", sample_sizes=[250], replications=200, J=500, seed=2026)
    start = time.perf_counter()
    result = run_size_study(cfg)
    elapsed = time.perf_counter() - start
    lm = result.rejection_frequency("lmar", 250, 0.05)
    gm = result.rejection_frequency("gmar", 250, 0.05)
    ok = 0.01 <= lm <= 0.12 and 0.01 <= gm <= 0.12
    record_acceptance(
        6,
        ok,
        f"size at 5%, T=250, 200 reps: LMAR {lm:.3f}, GMAR {gm:.3f} (band [0.01, 0.12]), "
        f"failures {result.failure_rate:.3f}, {elapsed / 60:.1f} min",
    )
    assert ok


POWER_REPS = 50


@pytest.mark.slow
def test_07_power_direction():
    cfg = preset(
        "power-gmar", sample_sizes=[250, 500, 1000], replications=POWER_REPS, J=500, families=["gmar"], seed=2027
    )
    start = time.perf_counter()
    result = run_power_study(cfg)
    elapsed = time.perf_counter() - start
    cells = [result.cell("gmar", t) for t in cfg.sample_sizes]
    power = [c.rejection_frequency(0.05) for c in cells]
    ses = [c.standard_error(0.05) for c in cells]
    monotone = all(
        power[k + 1] >= power[k] - 3.0 * math.hypot(ses[k], ses[k + 1]) for k in range(len(power) - 1)
    )
    ok = power[1] > 0.5 and monotone
    record_acceptance(
        7,
        ok,
        "GMAR power at 5% for T=250/500/1000: "
        + "/".join(f"{v:.3f}" for v in power)
        + f" ({POWER_REPS} reps; T=500 > 0.5, nondecreasing within 3 SE), {elapsed / 60:.1f} min",
    )
    assert ok


def test_08_martingale_difference():
    y = simulate_ar(ArParams(0.3, [0.5], 1.0), 10_000, seed=108)
    panel = build_score_panel(MixtureSpec("gmar", 1), y, fit_ar(y, 1))
    se = panel.rows.std(axis=0) / math.sqrt(panel.nobs)
    t = np.abs(panel.rows.mean(axis=0)) / se
    ok = bool(np.all(t < 5.0))
    record_acceptance(8, ok, f"GMAR score rows: max |mean|/SE {t.max():.2f} over {panel.rows.shape[1]} coordinates (< 5)")
    assert ok


def _cli_run(runner, outdir):
    config = str(GOLDEN / "run.toml")
    data = outdir / "y.csv"
    commands = [
        ["simulate", "--config", config, "--preset", "size-ar1", "--out", data],
        ["estimate", data, "--config", config, "--out", outdir / "est.json"],
        ["test", data, "--config", config, "--out", outdir / "test.json"],
        ["mc", "--config", config, "--preset", "size-ar1", "--out", outdir / "mc"],
    ]
    for cmd in commands:
        res = runner.invoke(main, [str(a) for a in cmd], catch_exceptions=False)
        assert res.exit_code == 0, res.output
    return {p.name: p.read_bytes() for p in sorted(outdir.iterdir())}


def test_09_cli_determinism(tmp_path):
    runner = CliRunner()
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    first, second = _cli_run(runner, a), _cli_run(runner, b)
    differing = sorted(k for k in first if first[k] != second.get(k))
    ok = first.keys() == second.keys() and not differing
    record_acceptance(9, ok, f"CLI determinism: {len(first)} output files compared, differing: {differing or 'none'}")
    assert ok


def test_10_gmar_alpha_invariance():
    y = simulate_ar(ArParams(0.0, [0.5], 1.0), 250, seed=110)
    spec = MixtureSpec("gmar", 1)
    nf = fit_ar(y, 1)
    panels = [build_score_panel(spec, y, nf, alpha) for alpha in AlphaGrid.default(spec)]
    short = simulate_null_distribution(panels, 1000, seed=110)
    full = simulate_null_distribution(panels, 1000, seed=110, shortcut=False)
    ok = len(panels) == 19 and short.diagnostics["alpha_free_shortcut"] and np.array_equal(short.sample, full.sample)
    record_acceptance(10, ok, f"GMAR alpha invariance: per-alpha (19 points) and shortcut samples identical: {ok}")
    assert ok

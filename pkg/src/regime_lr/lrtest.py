"""Likelihood-ratio statistic, multiplier null simulation and p-values.

The null distribution of ``sup_alpha LR_T(alpha)`` is approximated by
redrawing the score sum with i.i.d. standard-normal multipliers.  For each
draw ``j`` and grid point the simulated statistic is

    Z_v' W Z_v - inf_{w} (v(w) - Z_v)' W (v(w) - Z_v),

with ``Z = I^{-1} S_j / sqrt(T)`` and ``W`` the Schur complement of the
theta block of the information matrix.  The infimum vanishes for LMAR, whose
restricted block is unconstrained; for GMAR it is a projection onto the cone
of rank-one PSD matrices (see :mod:`regime_lr.cone`).  GMAR scores do not
depend on alpha, so one draw per ``j`` serves the whole grid.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from regime_lr import __version__
from regime_lr._rng import RNG_ALGORITHM, make_rng
from regime_lr.armle import ArFit, fit_ar
from regime_lr.config import ConeConfig, LrTestConfig
from regime_lr.cone import ConeSolverOptions, cone_infimum_batch, q2_from_dim
from regime_lr.errors import InputError, NestingError, NumericalError
from regime_lr.estimation import AlphaGrid, FitResult, best_fit, profile_alpha
from regime_lr.mixture import Family, MixtureSpec
from regime_lr.scores import ScorePanel, build_score_panel, info_matrix, regularize

SCHEMA_VERSION = 1
NESTING_TOL = 1e-6
MULTIPLIER_STREAM = 1
CONE_STREAM = 2


def lr_from_fits(null_fit: ArFit, fits: Sequence[FitResult]) -> tuple[float, list[tuple[tuple[float, ...], float]]]:
    per_alpha = []
    for fit in fits:
        val = 2.0 * (fit.loglik - null_fit.loglik)
        if not math.isfinite(val):
            raise NumericalError(f"non-finite LR_T(alpha) at alpha={fit.alpha}")
        if val < -NESTING_TOL:
            raise NestingError(fit.alpha, val)
        per_alpha.append((fit.alpha, max(val, 0.0)))
    if not per_alpha:
        raise InputError("no grid points")
    return max(v for _, v in per_alpha), per_alpha


def lr_statistic(
    spec: MixtureSpec,
    series: ArrayLike,
    grid: AlphaGrid | None = None,
    config: LrTestConfig | None = None,
) -> tuple[float, list[tuple[tuple[float, ...], float]]]:
    """``LR_T = max_alpha 2 (max loglik(alpha) - AR loglik)`` over the grid."""
    config = config or LrTestConfig()
    y = np.asarray(series, dtype=np.float64)
    null_fit = fit_ar(y, spec.p)
    grid = grid or AlphaGrid.default(spec)
    fits = profile_alpha(spec, y, grid, config.ga, config.bounds, config.seed, null_fit)
    return lr_from_fits(null_fit, fits)


def p_value(lr_stat: float, null_sample: ArrayLike) -> float:
    sample = np.asarray(null_sample, dtype=np.float64).reshape(-1)
    if sample.size == 0:
        raise InputError("null sample is empty")
    return float(np.count_nonzero(sample > lr_stat)) / sample.size


def multipliers(seed: int, j: int, nobs: int) -> NDArray[np.float64]:
    """Standard-normal multipliers for replication ``j`` (its own stream, so schedule-free)."""
    return make_rng(seed, MULTIPLIER_STREAM, j).standard_normal(nobs)


@dataclass(frozen=True, eq=False)
class _PanelKernel:
    rows: NDArray[np.float64]
    info: NDArray[np.float64]
    weight: NDArray[np.float64]
    theta_dim: int
    cone_q2: int | None
    lifts: int
    singular: bool

    @classmethod
    def build(cls, panel: ScorePanel, floor: float, cone: bool) -> _PanelKernel:
        im = info_matrix(panel)
        mat, lifts = regularize(np.array(im.matrix), floor)
        k = panel.theta_dim
        a, b, d = mat[:k, :k], mat[:k, k:], mat[k:, k:]
        weight = d - b.T @ np.linalg.solve(a, b)
        weight = 0.5 * (weight + weight.T)
        q2 = q2_from_dim(panel.vartheta_dim) if cone else None
        return cls(panel.rows, mat, weight, k, q2, lifts, im.singular)

    def statistics(self, mult: NDArray[np.float64], cone: ConeSolverOptions) -> tuple[NDArray[np.float64], dict]:
        t = self.rows.shape[0]
        s = mult @ self.rows / math.sqrt(t)
        z = np.linalg.solve(self.info, s.T).T
        zv = z[:, self.theta_dim :]
        quad = np.einsum("jk,kl,jl->j", zv, self.weight, zv)
        if self.cone_q2 is None:
            return np.maximum(quad, 0.0), {}
        inf, _, diag = cone_infimum_batch(zv, self.weight, self.cone_q2, cone)
        return np.maximum(quad - inf, 0.0), diag


@dataclass(frozen=True, eq=False)
class NullSimulation:
    sample: NDArray[np.float64]
    per_alpha: NDArray[np.float64] | None = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)


def _chunk_stats(kernels, seed, start, stop, cone, mult, keep_per_alpha):
    nobs = kernels[0].rows.shape[0]
    if mult is None:
        mult = np.stack([multipliers(seed, j, nobs) for j in range(start, stop)])
    cols = []
    iters = 0
    for kern in kernels:
        vals, diag = kern.statistics(mult, cone)
        iters = max(iters, diag.get("newton_iterations", 0))
        cols.append(vals)
    table = np.column_stack(cols)
    return table.max(axis=1), (table if keep_per_alpha else None), iters


def _chunk_worker(args):
    return _chunk_stats(*args)


def simulate_null_distribution(
    panels: ScorePanel | Sequence[ScorePanel],
    J: int,
    seed: int = 0,
    config: LrTestConfig | None = None,
    multipliers_override: ArrayLike | None = None,
    shortcut: bool = True,
    keep_per_alpha: bool = False,
    threads: int = 1,
) -> NullSimulation:
    """Simulate ``J`` draws of ``max over panels`` of the limiting LR statistic.

    ``panels`` holds one score panel per grid point (LMAR) or the alpha-free
    GMAR panel, optionally repeated per grid point.  With ``shortcut`` the
    alpha-free panels are collapsed to one.  ``multipliers_override`` is a
    ``(J, T)`` array replacing the random multipliers.
    """
    config = config or LrTestConfig()
    if isinstance(panels, ScorePanel):
        panels = [panels]
    panels = list(panels)
    if J < 1 or not panels:
        raise InputError("need J >= 1 and at least one score panel")
    nobs = panels[0].nobs
    if any(p.nobs != nobs for p in panels):
        raise InputError("score panels have different lengths")
    alpha_free = all(not p.alpha_dependent for p in panels)
    collapsed = shortcut and alpha_free and len(panels) > 1
    if collapsed:
        panels = panels[:1]
    kernels = [_PanelKernel.build(p, config.eig_floor, cone=not p.alpha_dependent) for p in panels]
    cone = _cone_options(config.cone, seed)

    mult = None
    if multipliers_override is not None:
        mult = np.asarray(multipliers_override, dtype=np.float64)
        if mult.shape != (J, nobs):
            raise InputError(f"multipliers must have shape ({J}, {nobs})")

    bounds = [(s, min(s + config.chunk_size, J)) for s in range(0, J, config.chunk_size)]
    jobs = [
        (kernels, seed, a, b, cone, None if mult is None else mult[a:b], keep_per_alpha) for a, b in bounds
    ]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_chunk_worker, jobs))
    else:
        results = [_chunk_stats(*job) for job in jobs]
    sample = np.concatenate([r[0] for r in results])
    per_alpha = np.vstack([r[1] for r in results]) if keep_per_alpha else None
    if not np.all(np.isfinite(sample)):
        raise NumericalError("non-finite simulated null statistic")
    diagnostics = {
        "eigen_lifts": [k.lifts for k in kernels],
        "info_singular": [k.singular for k in kernels],
        "alpha_free_shortcut": collapsed,
        "cone_restarts": cone.restarts if any(k.cone_q2 for k in kernels) else 0,
        "cone_max_newton_iterations": max(r[2] for r in results),
    }
    return NullSimulation(sample, per_alpha, diagnostics)


def _cone_options(cfg: ConeConfig, seed: int) -> ConeSolverOptions:
    key = int(make_rng(seed, CONE_STREAM).integers(0, 2**63 - 1))
    return ConeSolverOptions(restarts=cfg.restarts, tol=cfg.tol, max_iter=cfg.max_iter, seed=key)


@dataclass(frozen=True, eq=False)
class LrTestReport:
    spec: MixtureSpec
    grid: AlphaGrid
    null_fit: ArFit
    fits: list[FitResult] = field(repr=False)
    lr_stat: float
    per_alpha: list[tuple[tuple[float, ...], float]]
    null_sample: NDArray[np.float64] = field(repr=False)
    p_value: float
    diagnostics: dict
    config: LrTestConfig

    @property
    def argmax_alpha(self) -> tuple[float, ...]:
        return self.fits[best_fit(self.fits)].alpha

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "lr_test",
            "package_version": __version__,
            "rng": RNG_ALGORITHM,
            "seed": self.config.seed,
            "config": self.config.model_dump(mode="json"),
            "model": self.spec.to_dict(),
            "grid": self.grid.to_list(),
            "null_fit": self.null_fit.to_dict(),
            "lr_stat": self.lr_stat,
            "argmax_alpha": list(self.argmax_alpha),
            "p_value": self.p_value,
            "J": int(self.null_sample.size),
            "per_alpha": [{"alpha": list(a), "lr": v} for a, v in self.per_alpha],
            "fits": [f.to_dict(self.spec) for f in self.fits],
            "diagnostics": self.diagnostics,
            "null_sample": self.null_sample.tolist(),
        }


def _fit_job(args):
    spec, y, pts, config, null_fit = args
    return profile_alpha(spec, y, AlphaGrid(spec.family, pts), config.ga, config.bounds, config.seed, null_fit)


def run_test(
    spec: MixtureSpec,
    series: ArrayLike,
    config: LrTestConfig | None = None,
    grid: AlphaGrid | None = None,
    threads: int = 1,
) -> LrTestReport:
    """Fit the null, profile the mixture over the grid, simulate the null law and report."""
    config = config or LrTestConfig()
    y = np.asarray(series, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(y)):
        raise InputError("series contains non-finite values")
    null_fit = fit_ar(y, spec.p)
    if not null_fit.params.sigma2 > 0:
        raise InputError("series is an exact AR recursion (zero residual variance)")
    if grid is None:
        grid = AlphaGrid(spec.family, tuple(config.model.grid)) if config.model.grid else AlphaGrid.default(spec)
    grid.check(spec)

    if threads > 1 and len(grid) > 1:
        parts = [grid.points[i::threads] for i in range(threads) if grid.points[i::threads]]
        with ProcessPoolExecutor(max_workers=len(parts)) as pool:
            chunks = list(pool.map(_fit_job, [(spec, y, pts, config, null_fit) for pts in parts]))
        by_alpha = {f.alpha: f for chunk in chunks for f in chunk}
        fits = [by_alpha[tuple(pt)] for pt in grid.points]
    else:
        fits = profile_alpha(spec, y, grid, config.ga, config.bounds, config.seed, null_fit)
    lr_stat, per_alpha = lr_from_fits(null_fit, fits)

    if spec.family is Family.LMAR:
        panels = [build_score_panel(spec, y, null_fit, pt) for pt in grid.points]
    else:
        panels = [build_score_panel(spec, y, null_fit)]
    sim = simulate_null_distribution(panels, config.J, config.seed, config, threads=threads)
    pval = p_value(lr_stat, sim.sample)
    diagnostics = dict(sim.diagnostics)
    diagnostics["ga_converged"] = [f.converged for f in fits]
    diagnostics["ga_evaluations"] = int(sum(f.evaluations for f in fits))
    diagnostics["null_stationary"] = null_fit.stationary
    return LrTestReport(spec, grid, null_fit, fits, lr_stat, per_alpha, sim.sample, pval, diagnostics, config)


def default_threads(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("REGIME_LR_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError as exc:
        raise InputError(f"REGIME_LR_THREADS must be an integer, got {env!r}") from exc

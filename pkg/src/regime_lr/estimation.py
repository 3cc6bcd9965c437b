"""Profile maximum likelihood over the nuisance grid.

For each fixed ``alpha`` the mixture log-likelihood is maximized over the
remaining parameters by a real-coded genetic algorithm (tournament
selection, blend crossover, decaying Gaussian mutation, elitism) followed by
a Nelder-Mead polish.  The information matrix is singular at the null, so no
gradients are used.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import optimize
from scipy.special import comb

from regime_lr._rng import float_key, make_rng
from regime_lr.armle import ArFit, fit_ar
from regime_lr.config import BoundsConfig, GAConfig
from regime_lr.errors import EmptyFeasibleSetError, InputError
from regime_lr.mixture import (
    Family,
    MixtureParams,
    MixtureSpec,
    batch_loglik,
    batch_stationary,
    lmar_weights,
)
from regime_lr.timeseries import lag_matrix

GMAR_GRID_MIN = 0.05
GMAR_GRID_MAX = 0.95
LMAR_SLOPES_M1 = (-2.0, -1.5, -1.0, -0.25, 0.25, 1.0, 1.5, 2.0)
LMAR_SLOPES_M = (-1.0, -0.25, 0.25, 1.0)
LMAR_INTERCEPTS = (-2.0, -1.0, 0.0, 1.0, 2.0)


@dataclass(frozen=True, eq=False)
class AlphaGrid:
    family: Family
    points: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family.parse(self.family))
        pts = tuple(tuple(float(v) for v in np.atleast_1d(pt)) for pt in self.points)
        object.__setattr__(self, "points", pts)
        if not pts:
            raise InputError("alpha grid is empty")
        if len({len(pt) for pt in pts}) != 1:
            raise InputError("alpha grid points have inconsistent dimensions")
        for pt in pts:
            if not all(math.isfinite(v) for v in pt):
                raise InputError(f"non-finite alpha grid point {pt}")
            if self.family is Family.GMAR and not (len(pt) == 1 and 0.0 < pt[0] < 1.0):
                raise InputError(f"GMAR grid points must be scalars in (0, 1), got {pt}")
            if self.family is Family.LMAR and all(v == 0.0 for v in pt[1:]):
                raise InputError(f"LMAR grid point {pt} has all slopes zero")

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def check(self, spec: MixtureSpec) -> AlphaGrid:
        if self.family is not spec.family:
            raise InputError(f"grid is for {self.family.value}, model is {spec.family.value}")
        for pt in self.points:
            spec.validate_alpha(pt)
        return self

    @classmethod
    def default(cls, spec: MixtureSpec) -> AlphaGrid:
        if spec.family is Family.GMAR:
            n = int(round((GMAR_GRID_MAX - GMAR_GRID_MIN) / 0.05)) + 1
            pts = [(round(GMAR_GRID_MIN + 0.05 * i, 10),) for i in range(n)]
            return cls(spec.family, tuple(pts))
        slopes = LMAR_SLOPES_M1 if spec.m == 1 else LMAR_SLOPES_M
        grids = np.meshgrid(LMAR_INTERCEPTS, *([slopes] * spec.m), indexing="ij")
        pts = np.stack([g.reshape(-1) for g in grids], axis=1)
        return cls(spec.family, tuple(map(tuple, pts)))

    @classmethod
    def from_file(cls, path: str | Path, spec: MixtureSpec) -> AlphaGrid:
        """Read a JSON list of points or a CSV with one comma-separated point per line."""
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise InputError(f"cannot read grid file {path}: {exc}") from exc
        try:
            if path.suffix.lower() == ".json":
                raw = json.loads(text)
            else:
                raw = [[float(v) for v in line.split(",")] for line in text.splitlines() if line.strip()]
        except ValueError as exc:
            raise InputError(f"malformed grid file {path}: {exc}") from exc
        if not isinstance(raw, list):
            raise InputError(f"grid file {path} must hold a list of points")
        return cls(spec.family, tuple(raw)).check(spec)

    def to_list(self) -> list[list[float]]:
        return [list(pt) for pt in self.points]


@dataclass(frozen=True, eq=False)
class FitResult:
    alpha: tuple[float, ...]
    params: MixtureParams
    loglik: float
    converged: bool
    evaluations: int
    history: NDArray[np.float64] = field(repr=False, default_factory=lambda: np.zeros(0))

    def to_dict(self, spec: MixtureSpec) -> dict[str, Any]:
        return {
            "alpha": list(self.alpha),
            "loglik": self.loglik,
            "converged": self.converged,
            "evaluations": self.evaluations,
            "params": self.params.to_dict(spec),
        }


@dataclass(frozen=True, eq=False)
class FeasibleBox:
    """Per-coordinate bounds for the stacked vector ``(beta, phi, varphi)``."""

    lower: NDArray[np.float64]
    upper: NDArray[np.float64]
    kind: NDArray[np.int64]  # 0 intercept, i coefficient i, p+1 variance

    @property
    def width(self) -> NDArray[np.float64]:
        return self.upper - self.lower

    def contains(self, x: NDArray[np.float64]) -> NDArray[np.bool_]:
        x = np.atleast_2d(x)
        return np.all((x >= self.lower) & (x <= self.upper), axis=1)


def feasible_box(spec: MixtureSpec, series: ArrayLike, null_fit: ArFit, bounds: BoundsConfig) -> FeasibleBox:
    y = np.asarray(series, dtype=np.float64)
    p = spec.p
    mean, var = float(np.mean(y)), float(np.var(y))
    if not var > 0:
        raise InputError("series has zero variance")
    sd = math.sqrt(var)
    lo = np.empty(p + 2)
    hi = np.empty(p + 2)
    lo[0], hi[0] = mean - bounds.intercept_sd * sd, mean + bounds.intercept_sd * sd
    for i in range(1, p + 1):
        c = float(comb(p, i, exact=True))
        lo[i], hi[i] = -c, c
    lo[p + 1], hi[p + 1] = bounds.sigma2_lower * var, bounds.sigma2_upper * var
    # the null point must be feasible
    null = null_fit.params.as_vector()
    lo = np.minimum(lo, null)
    hi = np.maximum(hi, null)
    perm = spec.permutation
    q1 = spec.q1
    kind = np.concatenate([perm, perm[q1:]])
    return FeasibleBox(lo[kind], hi[kind], kind)


def null_point(spec: MixtureSpec, null_fit: ArFit) -> NDArray[np.float64]:
    beta, phi = spec.split(null_fit.params.as_vector())
    return np.concatenate([beta, phi, phi])


def _pacf_to_coeffs(pacf: NDArray[np.float64]) -> NDArray[np.float64]:
    """Durbin-Levinson map from partial autocorrelations in (-1, 1) to stationary AR coefficients."""
    n, p = pacf.shape
    phi = np.zeros((n, p))
    for k in range(p):
        prev = phi[:, :k].copy()
        phi[:, k] = pacf[:, k]
        phi[:, :k] = prev - pacf[:, k : k + 1] * prev[:, ::-1]
    return phi


class _Fitter:
    """State for one fixed-alpha maximization."""

    def __init__(self, spec, alpha, y, lags, box, config, rng):
        self.spec = spec
        self.alpha = alpha
        self.y = y
        self.lags = lags
        self.box = box
        self.config = config
        self.rng = rng
        self.evaluations = 0
        self.weights = lmar_weights(alpha, lags) if spec.family is Family.LMAR else None
        q1, q2 = spec.q1, spec.q2
        is_coef = (box.kind >= 1) & (box.kind <= spec.p)
        self.coef_cols = []
        for r in range(2):
            block = np.arange(q1 + r * q2, q1 + (r + 1) * q2)
            self.coef_cols.append(block[is_coef[block]])

    def evaluate(self, x):
        self.evaluations += x.shape[0]
        return batch_loglik(self.spec, self.alpha, x, self.y, self.lags, self.weights)

    def feasible(self, x):
        ok = self.box.contains(x)
        for cols in self.coef_cols:
            ok &= batch_stationary(x[:, cols])
        return ok

    def random_members(self, n):
        box, rng = self.box, self.rng
        x = box.lower + rng.random((n, box.lower.size)) * box.width
        var_cols = box.kind == self.spec.p + 1
        lv, hv = np.log(box.lower[var_cols]), np.log(box.upper[var_cols])
        x[:, var_cols] = np.exp(lv + rng.random((n, var_cols.sum())) * (hv - lv))
        for cols in self.coef_cols:
            coeffs = _pacf_to_coeffs(rng.uniform(-0.98, 0.98, (n, cols.size)))
            x[:, cols] = np.clip(coeffs, box.lower[cols], box.upper[cols])
        return x

    def local_members(self, center, n):
        x = center + self.rng.standard_normal((n, center.size)) * self.config.local_scale * self.box.width
        return np.clip(x, self.box.lower, self.box.upper)

    def repair(self, x, fallback):
        """Redraw infeasible rows; rows still infeasible after the retries take ``fallback``."""
        bad = ~self.feasible(x)
        for _ in range(self.config.max_redraws):
            if not bad.any():
                return x
            idx = np.flatnonzero(bad)
            x[idx] = self.mutate(fallback[idx], 1.0, force=True)
            bad[idx] = ~self.feasible(x[idx])
        x[bad] = fallback[bad]
        return x

    def mutate(self, x, scale, force=False):
        cfg = self.config
        mask = np.ones(x.shape, dtype=bool) if force else self.rng.random(x.shape) < cfg.mutation_rate
        noise = self.rng.standard_normal(x.shape) * (cfg.mutation_scale * scale) * self.box.width
        return np.clip(x + mask * noise, self.box.lower, self.box.upper)

    def initial_population(self, null_x):
        cfg = self.config
        n = cfg.population
        pop = np.empty((n, null_x.size))
        pop[0] = null_x
        n_local = min(n - 1, int(round(cfg.local_fraction * n)))
        if n_local:
            pop[1 : 1 + n_local] = self.repair(self.local_members(null_x, n_local), np.repeat(null_x[None], n_local, 0))
        n_rand = n - 1 - n_local
        if n_rand:
            cand = self.random_members(n_rand)
            bad = ~self.feasible(cand)
            for _ in range(self.config.max_redraws):
                if not bad.any():
                    break
                cand[bad] = self.random_members(int(bad.sum()))
                bad = ~self.feasible(cand)
            cand[bad] = null_x
            pop[1 + n_local :] = cand
        return pop

    def tournament(self, fitness, n):
        k = self.config.tournament_size
        draws = self.rng.integers(0, fitness.size, (n, k))
        return draws[np.arange(n), np.argmax(fitness[draws], axis=1)]

    def run_ga(self, null_x):
        cfg = self.config
        pop = self.initial_population(null_x)
        fit = self.evaluate(pop)
        if not np.any(np.isfinite(fit)):
            raise EmptyFeasibleSetError()
        history = [float(np.max(fit))]
        n = pop.shape[0]
        n_elite = min(cfg.elite, n)
        n_child = n - n_elite
        stall = 0
        for gen in range(cfg.generations):
            if n_child == 0:
                break
            order = np.argsort(-fit, kind="stable")
            elite = pop[order[:n_elite]]
            elite_fit = fit[order[:n_elite]]
            p1 = pop[self.tournament(fit, n_child)]
            p2 = pop[self.tournament(fit, n_child)]
            u = self.rng.uniform(-cfg.blend, 1.0 + cfg.blend, p1.shape)
            cross = self.rng.random(n_child) < cfg.crossover_rate
            child = np.where(cross[:, None], p1 + u * (p2 - p1), p1)
            child = self.mutate(child, cfg.mutation_decay**gen)
            child = self.repair(child, p1)
            child_fit = self.evaluate(child)
            pop = np.vstack([elite, child])
            fit = np.concatenate([elite_fit, child_fit])
            best = float(np.max(fit))
            stall = stall + 1 if best <= history[-1] + cfg.stall_tol else 0
            history.append(best)
            if cfg.patience is not None and stall >= cfg.patience:
                break
        i = int(np.argmax(fit))
        return pop[i], float(fit[i]), np.array(history)

    def polish(self, x0, f0):
        cfg = self.config

        def objective(x):
            if not self.feasible(x[None])[0]:
                return math.inf
            val = self.evaluate(x[None])[0]
            return -val if np.isfinite(val) else math.inf

        step = 0.02 * self.box.width
        simplex = np.repeat(x0[None], x0.size + 1, 0)
        for k in range(x0.size):
            trial = x0[k] + step[k]
            simplex[k + 1, k] = trial if trial <= self.box.upper[k] else x0[k] - step[k]
        res = optimize.minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "initial_simplex": simplex,
                "maxfev": cfg.polish_max_evals,
                "xatol": cfg.tol_x,
                "fatol": cfg.tol_f,
            },
        )
        if np.isfinite(res.fun) and -res.fun > f0:
            return res.x, float(-res.fun), bool(res.success)
        return x0, f0, bool(res.success)


def _canonical(spec: MixtureSpec, alpha: NDArray[np.float64], x: NDArray[np.float64]) -> NDArray[np.float64]:
    if spec.family is Family.GMAR and alpha[0] == 0.5:
        q1, q2 = spec.q1, spec.q2
        phi, varphi = x[q1 : q1 + q2], x[q1 + q2 :]
        if phi[0] < varphi[0]:
            return np.concatenate([x[:q1], varphi, phi])
    return x


def fit_mixture_fixed_alpha(
    spec: MixtureSpec,
    series: ArrayLike,
    alpha: ArrayLike,
    config: GAConfig | None = None,
    bounds: BoundsConfig | None = None,
    seed: int = 0,
    null_fit: ArFit | None = None,
) -> FitResult:
    """Maximize the mixture log-likelihood over ``(beta, phi, varphi)`` with ``alpha`` held fixed.

    The null point ``phi = varphi = null estimate`` is always in the initial
    population and elitism keeps the best member, so the result never falls
    below the AR log-likelihood.  The random stream is keyed by ``(seed,
    alpha)``, making the fit independent of the grid it belongs to.
    """
    config = config or GAConfig()
    bounds = bounds or BoundsConfig()
    a = spec.validate_alpha(alpha)
    y_all = np.asarray(series, dtype=np.float64).reshape(-1)
    y, lags = lag_matrix(y_all, spec.p)
    if y.size <= 5 * spec.n_params:
        raise InputError(f"need more than {5 * spec.n_params} observations for this model, got {y.size}")
    null_fit = null_fit if null_fit is not None else fit_ar(y_all, spec.p)
    if not null_fit.params.sigma2 > 0:
        raise InputError("null fit has zero variance")
    box = feasible_box(spec, y_all, null_fit, bounds)
    fitter = _Fitter(spec, a, y, lags, box, config, make_rng(seed, float_key(a)))
    null_x = null_point(spec, null_fit)
    if not fitter.feasible(null_x[None])[0]:
        raise EmptyFeasibleSetError()
    x, best, history = fitter.run_ga(null_x)
    converged = False
    if config.polish:
        x, best, converged = fitter.polish(x, best)
    x = _canonical(spec, a, x)
    params = MixtureParams.from_vector(spec, a, x)
    return FitResult(tuple(a.tolist()), params, best, converged, fitter.evaluations, history)


def profile_alpha(
    spec: MixtureSpec,
    series: ArrayLike,
    grid: AlphaGrid | Sequence,
    config: GAConfig | None = None,
    bounds: BoundsConfig | None = None,
    seed: int = 0,
    null_fit: ArFit | None = None,
) -> list[FitResult]:
    if not isinstance(grid, AlphaGrid):
        grid = AlphaGrid(spec.family, tuple(grid))
    grid.check(spec)
    y_all = np.asarray(series, dtype=np.float64).reshape(-1)
    null_fit = null_fit if null_fit is not None else fit_ar(y_all, spec.p)
    return [fit_mixture_fixed_alpha(spec, y_all, pt, config, bounds, seed, null_fit) for pt in grid]


def best_fit(fits: Sequence[FitResult]) -> int:
    """Index of the highest log-likelihood; ties go to the smallest grid index."""
    vals = np.array([f.loglik for f in fits])
    return int(np.argmax(vals))

"""Per-observation score vectors at the null AR fit and the empirical information matrix.

All derivatives are taken with respect to the AR layout
``(intercept, coeffs..., sigma2)`` -- note: the variance, not the standard
deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from regime_lr.armle import ArFit
from regime_lr.errors import InputError
from regime_lr.mixture import Family, MixtureSpec, lmar_mixing_weight
from regime_lr.timeseries import ArParams, ar_moments, lag_matrix

EIG_FLOOR = 1e-10


def _design(lags: NDArray[np.float64]) -> NDArray[np.float64]:
    lags = np.atleast_2d(lags)
    return np.column_stack([np.ones(lags.shape[0]), lags])


def ar_score_terms(eps_std: ArrayLike, lags: ArrayLike, sigma: float) -> NDArray[np.float64]:
    """``grad f_t / f_t = (z_{t-1} eps / sigma, (eps^2 - 1) / (2 sigma^2))`` with ``z = (1, lags)``.

    Scalar ``eps_std`` with ``(p,)`` lags gives one ``(p+2,)`` vector;
    arrays ``(T,)`` and ``(T, p)`` give a ``(T, p+2)`` matrix.
    """
    if sigma <= 0:
        raise InputError("sigma must be positive")
    eps = np.asarray(eps_std, dtype=np.float64)
    scalar = eps.ndim == 0
    eps = eps.reshape(-1)
    z = _design(np.asarray(lags, dtype=np.float64).reshape(eps.size, -1))
    out = np.column_stack([z * (eps / sigma)[:, None], (eps * eps - 1.0) / (2.0 * sigma * sigma)])
    return out[0] if scalar else out


def ar_hessian_terms(eps_std: ArrayLike, lags: ArrayLike, sigma: float) -> NDArray[np.float64]:
    """``hess f_t / f_t``; shape ``(p+2, p+2)`` or ``(T, p+2, p+2)``."""
    if sigma <= 0:
        raise InputError("sigma must be positive")
    eps = np.asarray(eps_std, dtype=np.float64)
    scalar = eps.ndim == 0
    eps = eps.reshape(-1)
    z = _design(np.asarray(lags, dtype=np.float64).reshape(eps.size, -1))
    k = z.shape[1]
    e2 = eps * eps
    h2 = (e2 - 1.0) / sigma**2
    h3 = (e2 * eps - 3.0 * eps) / (2.0 * sigma**3)
    h4 = (e2 * e2 - 6.0 * e2 + 3.0) / (4.0 * sigma**4)
    out = np.empty((eps.size, k + 1, k + 1))
    out[:, :k, :k] = z[:, :, None] * z[:, None, :] * h2[:, None, None]
    out[:, :k, k] = z * h3[:, None]
    out[:, k, :k] = out[:, :k, k]
    out[:, k, k] = h4
    return out[0] if scalar else out


def gamma_inv_jacobian(params: ArParams) -> NDArray[np.float64]:
    """``d Gamma^{-1} / d coeff_i`` for i = 1..p, stacked as ``(p, p, p)``.

    ``U = I - sum_k c_k L^k`` and ``V = sum_i c_i L^{p-i}`` with ``L`` the
    down-shift matrix, so each partial of U and V is a 0/+-1 shift pattern.
    """
    p = params.p
    c = params.coeffs
    u_col = np.concatenate([[1.0], -c[: p - 1]])
    v_col = c[::-1]
    u = np.zeros((p, p))
    v = np.zeros((p, p))
    shifts = [np.eye(p, k=-k) for k in range(p)]
    for k in range(p):
        u += u_col[k] * shifts[k]
        v += v_col[k] * shifts[k]
    out = np.empty((p, p, p))
    for i in range(1, p + 1):
        du = -shifts[i] if i < p else np.zeros((p, p))
        dv = shifts[p - i]
        out[i - 1] = (du.T @ u + u.T @ du - dv.T @ v - v.T @ dv) / params.sigma2
    return out


def gmar_nabla_np_over_np(params: ArParams, lags: ArrayLike) -> NDArray[np.float64]:
    """Gradient of ``log n_p(lags; params)`` w.r.t. ``(intercept, coeffs..., sigma2)``.

    Returns ``(p+2,)`` for a single lag vector or ``(T, p+2)`` for a stack.
    """
    mom = ar_moments(params)
    p = params.p
    x = np.asarray(lags, dtype=np.float64)
    scalar = x.ndim == 1
    x = np.atleast_2d(x).reshape(-1, p)
    phi1 = 1.0 - float(np.sum(params.coeffs))
    d = x - mom.mean
    gi_d = d @ mom.gamma_inv
    ones_gi_d = gi_d.sum(axis=1)
    djac = gamma_inv_jacobian(params)
    trace_part = 0.5 * np.einsum("kij,ji->k", djac, mom.gamma)
    quad_part = 0.5 * np.einsum("ti,kij,tj->tk", d, djac, d)
    d1 = ones_gi_d / phi1
    d2 = trace_part[None, :] + (params.intercept / phi1**2) * ones_gi_d[:, None] - quad_part
    d3 = -p / (2.0 * params.sigma2) + np.einsum("ti,ti->t", gi_d, d) / (2.0 * params.sigma2)
    out = np.column_stack([d1, d2, d3])
    return out[0] if scalar else out


def lmar_score_row(ar_score: ArrayLike, alpha: ArrayLike, lags_m: ArrayLike) -> NDArray[np.float64]:
    """``(s, -(1 - w) s)`` with ``w`` the logistic mixing weight at ``lags_m``; vectorized over rows."""
    s = np.asarray(ar_score, dtype=np.float64)
    w = np.asarray(lmar_mixing_weight(alpha, lags_m))
    if s.ndim == 1:
        return np.concatenate([s, -(1.0 - float(w)) * s])
    return np.hstack([s, -(1.0 - w)[:, None] * s])


def vech_pairs(q2: int) -> list[tuple[int, int]]:
    """Index pairs in ``v(.)`` order: squares first, then upper off-diagonals row-major."""
    return [(i, i) for i in range(q2)] + [(i, j) for i in range(q2) for j in range(i + 1, q2)]


def gmar_score_row(ar_fit_terms: ArrayLike, np_terms: ArrayLike, hessian_terms: ArrayLike, p: int):
    """AR score followed by ``c_ij X_{t,i,j}`` over the varying parameters (coeffs and sigma2).

    ``X_{t,i,j} = n_i f_j + f_i n_j + H_ij`` with ``f``/``n`` the log-gradients
    of the conditional and stationary densities and ``H = hess f_t / f_t``;
    ``c_ij`` is 1/2 on the diagonal and 1 elsewhere.
    """
    f = np.asarray(ar_fit_terms, dtype=np.float64)
    n = np.asarray(np_terms, dtype=np.float64)
    h = np.asarray(hessian_terms, dtype=np.float64)
    scalar = f.ndim == 1
    f, n = np.atleast_2d(f), np.atleast_2d(n)
    h = h.reshape(f.shape[0], p + 2, p + 2)
    q2 = p + 1
    cols = []
    for i, j in vech_pairs(q2):
        a, b = i + 1, j + 1  # skip the shared intercept
        x = n[:, a] * f[:, b] + f[:, a] * n[:, b] + h[:, a, b]
        cols.append(0.5 * x if i == j else x)
    out = np.hstack([f, np.column_stack(cols)])
    return out[0] if scalar else out


@dataclass(frozen=True, eq=False)
class ScorePanel:
    rows: NDArray[np.float64] = field(repr=False)
    theta_dim: int
    vartheta_dim: int
    alpha_dependent: bool
    alpha: tuple[float, ...] | None = None

    @property
    def nobs(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.theta_dim + self.vartheta_dim


@dataclass(frozen=True, eq=False)
class InfoMatrix:
    matrix: NDArray[np.float64]
    eigenvalues: NDArray[np.float64]
    condition: float
    singular: bool

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])


def null_score_inputs(series: ArrayLike, null_fit: ArFit):
    _, lags = lag_matrix(series, null_fit.params.p)
    if lags.shape[0] != null_fit.nobs:
        raise InputError("series does not match the null fit")
    if null_fit.params.sigma2 <= 0:
        raise InputError("null fit has zero variance; scores are undefined")
    return lags, null_fit.residuals_std, null_fit.params.sigma


def ar_score_panel(series: ArrayLike, null_fit: ArFit) -> NDArray[np.float64]:
    lags, eps, sigma = null_score_inputs(series, null_fit)
    return ar_score_terms(eps, lags, sigma)


def build_score_panel(spec: MixtureSpec, series: ArrayLike, null_fit: ArFit, alpha=None) -> ScorePanel:
    """Score rows at the null fit: alpha-indexed for LMAR, alpha-free for GMAR."""
    lags, eps, sigma = null_score_inputs(series, null_fit)
    f = ar_score_terms(eps, lags, sigma)
    p = spec.p
    if spec.family is Family.LMAR:
        if alpha is None:
            raise InputError("LMAR score panel needs an alpha")
        a = spec.validate_alpha(alpha)
        rows = lmar_score_row(f, a, lags[:, : spec.m])
        rows.setflags(write=False)
        return ScorePanel(rows, p + 2, p + 2, True, tuple(a.tolist()))
    n = gmar_nabla_np_over_np(null_fit.params, lags)
    h = ar_hessian_terms(eps, lags, sigma)
    rows = gmar_score_row(f, n, h, p)
    rows.setflags(write=False)
    q2 = p + 1
    return ScorePanel(rows, p + 2, q2 * (q2 + 1) // 2, False, None)


def info_matrix(panel: ScorePanel) -> InfoMatrix:
    t = panel.nobs
    if t < panel.dim:
        raise InputError(f"need at least {panel.dim} observations, got {t}")
    mat = panel.rows.T @ panel.rows / t
    mat = 0.5 * (mat + mat.T)
    eig = np.linalg.eigvalsh(mat)
    top = float(eig[-1])
    cond = math.inf if eig[0] <= 0 else top / float(eig[0])
    singular = bool(eig[0] <= EIG_FLOOR * top)
    mat.setflags(write=False)
    return InfoMatrix(mat, eig, cond, singular)


def regularize(mat: NDArray[np.float64], floor: float = EIG_FLOOR) -> tuple[NDArray[np.float64], int]:
    """Lift eigenvalues below ``floor * lambda_max`` to that floor; returns the matrix and lift count."""
    eig, vec = np.linalg.eigh(mat)
    cut = floor * max(float(eig[-1]), 0.0)
    lifted = eig < cut
    if not np.any(lifted):
        return mat, 0
    eig = np.where(lifted, cut, eig)
    return (vec * eig) @ vec.T, int(lifted.sum())

"""Conditional Gaussian AR(p) likelihood and its closed-form maximizer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from regime_lr.errors import CollinearLagsError, InputError
from regime_lr.timeseries import ArParams, check_stationarity, lag_matrix

LOG_2PI = math.log(2.0 * math.pi)


def gaussian_logdensity(resid: NDArray[np.float64], sigma2) -> NDArray[np.float64]:
    """Elementwise ``log N(resid; 0, sigma2)``; broadcasts over stacked variances."""
    return -0.5 * LOG_2PI - 0.5 * np.log(sigma2) - 0.5 * resid * resid / sigma2


def ar_residuals(series: ArrayLike, params: ArParams) -> NDArray[np.float64]:
    y, lags = lag_matrix(series, params.p)
    return y - params.intercept - lags @ params.coeffs


def ar_logdensities(series: ArrayLike, params: ArParams) -> NDArray[np.float64]:
    if params.sigma2 <= 0:
        raise InputError("sigma2 must be positive")
    return gaussian_logdensity(ar_residuals(series, params), params.sigma2)


def ar_conditional_loglik(series: ArrayLike, params: ArParams) -> float:
    """Gaussian AR(p) log-likelihood conditional on the first ``p`` values."""
    return float(np.sum(ar_logdensities(series, params)))


@dataclass(frozen=True, eq=False)
class ArFit:
    params: ArParams
    loglik: float
    residuals_std: NDArray[np.float64] = field(repr=False)
    stationary: bool = True

    @property
    def nobs(self) -> int:
        return self.residuals_std.size

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "loglik": self.loglik,
            "stationary": self.stationary,
            "nobs": self.nobs,
        }


def fit_ar(series: ArrayLike, p: int) -> ArFit:
    """OLS coefficients with ML variance ``SSR / T``.

    A nonstationary estimate is returned with ``stationary=False`` rather
    than raising, since OLS can leave the stationarity region in finite
    samples.
    """
    y, lags = lag_matrix(series, p)
    t = y.size
    if t <= p + 2:
        raise InputError(f"need more than {p + 2} usable observations, got {t}")
    design = np.column_stack([np.ones(t), lags])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise CollinearLagsError(int(rank), design.shape[1])
    params = ArParams(coef[0], coef[1:], 0.0)
    # same residual path as ar_conditional_loglik so the stored loglik recomputes exactly
    resid = ar_residuals(series, params)
    sigma2 = float(resid @ resid) / t
    params = ArParams(coef[0], coef[1:], sigma2)
    if sigma2 > 0:
        loglik = ar_conditional_loglik(series, params)
        resid_std = resid / math.sqrt(sigma2)
    else:
        loglik = math.inf
        resid_std = np.zeros(t)
    resid_std.setflags(write=False)
    return ArFit(params, loglik, resid_std, check_stationarity(params.coeffs))

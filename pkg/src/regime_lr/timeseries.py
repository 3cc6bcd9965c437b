"""Linear Gaussian AR(p) building blocks.

Parameterization, stationarity checks, exact stationary moments, the
Toeplitz form of the inverse autocovariance matrix and trajectory
simulation.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import linalg, signal
from numpy.typing import ArrayLike, NDArray

from regime_lr._rng import make_rng
from regime_lr.errors import InputError, NonstationaryError

ROOT_TOL = 1e-10
DEFAULT_PRESAMPLE = 200

_DEBUG = os.environ.get("REGIME_LR_DEBUG", "") not in ("", "0")


def _frozen(a: ArrayLike) -> NDArray[np.float64]:
    arr = np.array(a, dtype=np.float64, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ArParams:
    """AR(p) parameters ``(intercept, coeffs, sigma2)``.

    ``sigma2`` must be non-negative; a zero variance is allowed only to
    represent a degenerate (noiseless) fit and is rejected by every
    density or moment computation.
    """

    intercept: float
    coeffs: NDArray[np.float64]
    sigma2: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "coeffs", _frozen(self.coeffs))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        if not (math.isfinite(self.intercept) and np.all(np.isfinite(self.coeffs))):
            raise InputError("AR parameters must be finite")
        if not math.isfinite(self.sigma2) or self.sigma2 < 0:
            raise InputError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def p(self) -> int:
        return self.coeffs.size

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    def as_vector(self) -> NDArray[np.float64]:
        """Stack as ``(intercept, coeffs..., sigma2)``, the ordering used by all derivatives."""
        return np.concatenate([[self.intercept], self.coeffs, [self.sigma2]])

    @classmethod
    def from_vector(cls, vec: ArrayLike) -> ArParams:
        v = np.asarray(vec, dtype=np.float64).reshape(-1)
        if v.size < 2:
            raise InputError("parameter vector needs at least intercept and sigma2")
        return cls(v[0], v[1:-1], v[-1])

    def is_stationary(self) -> bool:
        return check_stationarity(self.coeffs)

    def to_dict(self) -> dict[str, Any]:
        return {"intercept": self.intercept, "coeffs": self.coeffs.tolist(), "sigma2": self.sigma2}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ArParams):
            return NotImplemented
        return (
            self.intercept == other.intercept
            and self.sigma2 == other.sigma2
            and np.array_equal(self.coeffs, other.coeffs)
        )

    def __hash__(self) -> int:
        return hash((self.intercept, self.coeffs.tobytes(), self.sigma2))


@dataclass(frozen=True, eq=False)
class StationaryMoments:
    mean: float
    gamma: NDArray[np.float64]
    gamma_inv: NDArray[np.float64]
    log_det_gamma: float

    @property
    def p(self) -> int:
        return self.gamma.shape[0]


def companion(coeffs: ArrayLike) -> NDArray[np.float64]:
    c = np.asarray(coeffs, dtype=np.float64).reshape(-1)
    p = c.size
    mat = np.zeros((p, p))
    if p:
        mat[0, :] = c
        mat[1:, :-1] = np.eye(p - 1)
    return mat


def check_stationarity(coeffs: ArrayLike, tol: float = ROOT_TOL) -> bool:
    """True iff every root of ``1 - sum_i coeffs[i-1] z**i`` has modulus > 1 + tol.

    Roots are the reciprocals of the companion-matrix eigenvalues, so the
    test is ``max |eig| < 1 / (1 + tol)``.
    """
    c = np.asarray(coeffs, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(c)):
        return False
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return True
    c = c[: nz[-1] + 1]
    if c.size == 1:
        return bool(abs(c[0]) * (1.0 + tol) < 1.0)
    eig = np.linalg.eigvals(companion(c))
    return bool(np.max(np.abs(eig)) * (1.0 + tol) < 1.0)


def _require_stationary(params: ArParams) -> None:
    if not check_stationarity(params.coeffs):
        raise NonstationaryError(params.coeffs)
    if params.sigma2 <= 0:
        raise InputError("sigma2 must be positive")


def stationary_mean(params: ArParams) -> float:
    return params.intercept / (1.0 - float(np.sum(params.coeffs)))


def yule_walker_gamma(params: ArParams) -> NDArray[np.float64]:
    """p x p autocovariance matrix from the discrete Lyapunov equation of the companion form."""
    p = params.p
    if p == 0:
        return np.zeros((0, 0))
    q = np.zeros((p, p))
    q[0, 0] = params.sigma2
    gamma = linalg.solve_discrete_lyapunov(companion(params.coeffs), q)
    # Lyapunov output is Toeplitz up to rounding; rebuild from its first row
    first = 0.5 * (gamma[0, :] + gamma[:, 0])
    return linalg.toeplitz(first)


def toeplitz_factors(coeffs: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Lower-triangular Toeplitz ``U`` (first column ``1, -c1..-c_{p-1}``) and ``V`` (``c_p..c_1``)."""
    c = np.asarray(coeffs, dtype=np.float64).reshape(-1)
    p = c.size
    zeros = np.zeros(p)
    u_col = np.concatenate([[1.0], -c[: p - 1]])
    v_col = c[::-1].copy()
    return linalg.toeplitz(u_col, zeros), linalg.toeplitz(v_col, zeros)


def gamma_inverse_toeplitz(params: ArParams) -> NDArray[np.float64]:
    """Inverse autocovariance matrix ``(U'U - V'V) / sigma2``."""
    _require_stationary(params)
    u, v = toeplitz_factors(params.coeffs)
    return (u.T @ u - v.T @ v) / params.sigma2


def ar_moments(params: ArParams, check: bool = False) -> StationaryMoments:
    """Mean, autocovariance matrix, its inverse and log-determinant for a stationary AR(p).

    With ``check=True`` (or ``REGIME_LR_DEBUG`` set) the Toeplitz inverse is
    compared against a dense numerical inverse.
    """
    _require_stationary(params)
    gamma = yule_walker_gamma(params)
    gamma_inv = gamma_inverse_toeplitz(params)
    if params.p:
        chol = np.linalg.cholesky(gamma)
        log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    else:
        log_det = 0.0
    if check or _DEBUG:
        dense = np.linalg.inv(gamma)
        scale = max(1.0, float(np.max(np.abs(dense))))
        if not np.allclose(gamma_inv, dense, atol=1e-8 * scale, rtol=0):
            raise ArithmeticError("Toeplitz inverse disagrees with dense inverse")
    gamma.setflags(write=False)
    gamma_inv.setflags(write=False)
    return StationaryMoments(stationary_mean(params), gamma, gamma_inv, log_det)


def lag_matrix(series: ArrayLike, p: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Split ``y_{-p+1..T}`` into targets ``y_1..y_T`` and lags ``(T, p)`` with column i = lag i+1."""
    y = np.asarray(series, dtype=np.float64).reshape(-1)
    if p < 0:
        raise InputError("lag order must be non-negative")
    if y.size < p + 1:
        raise InputError(f"series of length {y.size} is too short for p={p}")
    n = y.size - p
    lags = np.empty((n, p))
    for i in range(p):
        lags[:, i] = y[p - 1 - i : p - 1 - i + n]
    return y[p:], lags


def simulate_ar(
    params: ArParams,
    length: int,
    presample: int = DEFAULT_PRESAMPLE,
    seed: int = 0,
) -> NDArray[np.float64]:
    """Simulate ``p`` initial values followed by ``length`` observations.

    The recursion starts at the stationary mean, runs ``presample`` burn-in
    steps that are discarded, and uses standard-normal innovations from a
    PCG64 stream seeded by ``seed``.
    """
    _require_stationary(params)
    if length < 1 or presample < 0:
        raise InputError("length must be positive and presample non-negative")
    p = params.p
    rng = make_rng(seed)
    n = presample + p + length
    shocks = params.intercept + params.sigma * rng.standard_normal(n)
    mu = stationary_mean(params)
    a = np.concatenate([[1.0], -params.coeffs])
    if p:
        zi = signal.lfiltic([1.0], a, y=np.full(p, mu))
        y, _ = signal.lfilter([1.0], a, shocks, zi=zi)
    else:
        y = shocks
    return np.ascontiguousarray(y[presample:])

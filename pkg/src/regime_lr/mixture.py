"""Two-regime mixture autoregressions with observation-dependent mixing weights.

Two families are supported:

* ``LMAR`` -- logistic mixing weight ``logistic(a0 + a1 y_{t-1} + ... + am y_{t-m})``,
  no parameters shared between regimes;
* ``GMAR`` -- mixing weight proportional to the stationary p-dimensional
  Gaussian densities of the two regimes, intercept shared between regimes.

Parameter vectors follow the AR layout ``(intercept, coeffs..., sigma2)``.
The regime-specific part is split into a common block ``beta`` and varying
blocks ``phi`` / ``varphi``; for both families the split keeps the AR
ordering, so the permutation between the two layouts is the identity.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import expit

from regime_lr._rng import make_rng
from regime_lr.armle import LOG_2PI, gaussian_logdensity
from regime_lr.errors import InputError, NonstationaryError
from regime_lr.timeseries import (
    DEFAULT_PRESAMPLE,
    ROOT_TOL,
    ArParams,
    ar_moments,
    check_stationarity,
    lag_matrix,
)

LOGIT_CLAMP = 700.0


class Family(str, enum.Enum):
    LMAR = "lmar"
    GMAR = "gmar"

    @classmethod
    def parse(cls, value: Any) -> Family:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InputError(f"unknown model family {value!r}; expected 'lmar' or 'gmar'") from None


@dataclass(frozen=True)
class MixtureSpec:
    family: Family
    p: int
    m: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family.parse(self.family))
        if self.p < 1:
            raise InputError("lag order p must be at least 1")
        if self.family is Family.LMAR and not 1 <= self.m <= self.p:
            raise InputError(f"LMAR logistic order m must satisfy 1 <= m <= p, got m={self.m}")

    @property
    def common_index(self) -> tuple[int, ...]:
        return (0,) if self.family is Family.GMAR else ()

    @property
    def varying_index(self) -> tuple[int, ...]:
        common = set(self.common_index)
        return tuple(i for i in range(self.p + 2) if i not in common)

    @property
    def q1(self) -> int:
        return len(self.common_index)

    @property
    def q2(self) -> int:
        return self.p + 2 - self.q1

    @property
    def alpha_dim(self) -> int:
        return self.m + 1 if self.family is Family.LMAR else 1

    @property
    def n_params(self) -> int:
        return self.q1 + 2 * self.q2

    @property
    def permutation(self) -> NDArray[np.int64]:
        """Index vector ``P`` with ``(beta, phi) = tilde[P]``."""
        return np.array(self.common_index + self.varying_index)

    def split(self, tilde: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        t = np.asarray(tilde, dtype=np.float64)
        return t[..., list(self.common_index)], t[..., list(self.varying_index)]

    def merge(self, beta: ArrayLike, phi: ArrayLike) -> NDArray[np.float64]:
        beta = np.asarray(beta, dtype=np.float64)
        phi = np.asarray(phi, dtype=np.float64)
        out = np.empty(phi.shape[:-1] + (self.p + 2,))
        out[..., list(self.common_index)] = beta
        out[..., list(self.varying_index)] = phi
        return out

    def validate_alpha(self, alpha: ArrayLike) -> NDArray[np.float64]:
        a = np.atleast_1d(np.asarray(alpha, dtype=np.float64)).reshape(-1)
        if a.size != self.alpha_dim or not np.all(np.isfinite(a)):
            raise InputError(f"{self.family.value} alpha must have {self.alpha_dim} finite entries")
        if self.family is Family.GMAR and not 0.0 < a[0] < 1.0:
            raise InputError(f"GMAR alpha must lie in (0, 1), got {a[0]}")
        if self.family is Family.LMAR and np.all(a[1:] == 0.0):
            raise InputError("LMAR slopes (alpha_1..alpha_m) must not all be zero")
        return a

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family.value, "p": self.p, "m": self.m, "q1": self.q1, "q2": self.q2}


@dataclass(frozen=True, eq=False)
class MixtureParams:
    alpha: NDArray[np.float64]
    beta: NDArray[np.float64]
    phi: NDArray[np.float64]
    varphi: NDArray[np.float64]

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "phi", "varphi"):
            arr = np.atleast_1d(np.array(getattr(self, name), dtype=np.float64)).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_regimes(cls, spec: MixtureSpec, alpha, regime1: ArParams, regime2: ArParams) -> MixtureParams:
        b1, phi = spec.split(regime1.as_vector())
        b2, varphi = spec.split(regime2.as_vector())
        if not np.array_equal(b1, b2):
            raise InputError("regimes differ in parameters the family requires to be common")
        return cls(np.atleast_1d(alpha), b1, phi, varphi)

    @classmethod
    def from_vector(cls, spec: MixtureSpec, alpha, x: ArrayLike) -> MixtureParams:
        x = np.asarray(x, dtype=np.float64)
        q1, q2 = spec.q1, spec.q2
        return cls(np.atleast_1d(alpha), x[:q1], x[q1 : q1 + q2], x[q1 + q2 :])

    def as_vector(self) -> NDArray[np.float64]:
        return np.concatenate([self.beta, self.phi, self.varphi])

    def regimes(self, spec: MixtureSpec) -> tuple[ArParams, ArParams]:
        return (
            ArParams.from_vector(spec.merge(self.beta, self.phi)),
            ArParams.from_vector(spec.merge(self.beta, self.varphi)),
        )

    def validate(self, spec: MixtureSpec) -> None:
        spec.validate_alpha(self.alpha)
        if self.beta.size != spec.q1 or self.phi.size != spec.q2 or self.varphi.size != spec.q2:
            raise InputError("parameter blocks do not match the mixture layout")
        for reg in self.regimes(spec):
            if reg.sigma2 <= 0:
                raise InputError("regime variances must be positive")
            if not reg.is_stationary():
                raise NonstationaryError(reg.coeffs)

    def to_dict(self, spec: MixtureSpec) -> dict[str, Any]:
        r1, r2 = self.regimes(spec)
        return {
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "phi": self.phi.tolist(),
            "varphi": self.varphi.tolist(),
            "regime1": r1.to_dict(),
            "regime2": r2.to_dict(),
        }


def lmar_mixing_weight(alpha: ArrayLike, lags: ArrayLike) -> NDArray[np.float64] | float:
    """Logistic mixing weight; ``lags`` is ``(m,)`` or ``(T, m)`` holding ``y_{t-1}..y_{t-m}``."""
    a = np.asarray(alpha, dtype=np.float64).reshape(-1)
    x = np.asarray(lags, dtype=np.float64)
    idx = a[0] + x @ a[1:]
    w = expit(np.clip(idx, -LOGIT_CLAMP, LOGIT_CLAMP))
    return float(w) if np.ndim(w) == 0 else w


def _lmar_weights(alpha: NDArray[np.float64], lags: NDArray[np.float64]):
    idx = np.clip(alpha[0] + lags[:, : alpha.size - 1] @ alpha[1:], -LOGIT_CLAMP, LOGIT_CLAMP)
    return expit(idx), expit(-idx)


def log_np_density(lags: ArrayLike, params: ArParams, moments=None) -> NDArray[np.float64] | float:
    """Log of the stationary p-dimensional Gaussian density of an AR(p) at lag vector(s)."""
    mom = moments if moments is not None else ar_moments(params)
    x = np.asarray(lags, dtype=np.float64)
    d = x - mom.mean
    quad = np.einsum("...i,ij,...j->...", d, mom.gamma_inv, d)
    out = -0.5 * mom.p * LOG_2PI - 0.5 * mom.log_det_gamma - 0.5 * quad
    return float(out) if np.ndim(out) == 0 else out


def _gmar_log_ratio(alpha: float, regime1: ArParams, regime2: ArParams, lags) -> NDArray[np.float64]:
    for reg in (regime1, regime2):
        if not reg.is_stationary():
            raise NonstationaryError(reg.coeffs)
    if not 0.0 < alpha < 1.0:
        raise InputError(f"GMAR alpha must lie in (0, 1), got {alpha}")
    ln1 = log_np_density(lags, regime1)
    ln2 = log_np_density(lags, regime2)
    return math.log(alpha) - math.log1p(-alpha) + np.asarray(ln1) - np.asarray(ln2)


def gmar_mixing_weight(alpha: float, regime1: ArParams, regime2: ArParams, lags: ArrayLike):
    """``alpha n1 / (alpha n1 + (1 - alpha) n2)`` evaluated as a logistic of the log ratio."""
    w = expit(_gmar_log_ratio(float(alpha), regime1, regime2, lags))
    return float(w) if np.ndim(w) == 0 else w


def log_mix(w1, w2, l1, l2):
    """``log(w1 exp(l1) + w2 exp(l2))`` with ``w1 + w2 = 1``.

    Written as ``lmax + log1p(w_min * expm1(lmin - lmax))`` so identical
    components return their common log-density bit-for-bit.
    """
    hi1 = l1 >= l2
    lmax = np.where(hi1, l1, l2)
    lmin = np.where(hi1, l2, l1)
    wmin = np.where(hi1, w2, w1)
    # wmin == 1 with lmin = -inf is a genuine zero density
    with np.errstate(divide="ignore"):
        return lmax + np.log1p(wmin * np.expm1(lmin - lmax))


def _component_logdens(spec, params, y, lags):
    r1, r2 = params.regimes(spec)
    l1 = gaussian_logdensity(y - r1.intercept - lags @ r1.coeffs, r1.sigma2)
    l2 = gaussian_logdensity(y - r2.intercept - lags @ r2.coeffs, r2.sigma2)
    return r1, r2, l1, l2


def mixture_logdensities(spec: MixtureSpec, params: MixtureParams, series: ArrayLike) -> NDArray[np.float64]:
    """Per-observation conditional log-densities ``l_t`` for t = 1..T."""
    params.validate(spec)
    y, lags = lag_matrix(series, spec.p)
    r1, r2, l1, l2 = _component_logdens(spec, params, y, lags)
    if spec.family is Family.LMAR:
        w1, w2 = _lmar_weights(params.alpha, lags)
    else:
        ratio = _gmar_log_ratio(float(params.alpha[0]), r1, r2, lags)
        w1, w2 = expit(ratio), expit(-ratio)
    return log_mix(w1, w2, l1, l2)


def mixture_cond_logdensity(spec: MixtureSpec, params: MixtureParams, y: float, lags: ArrayLike) -> float:
    lags = np.asarray(lags, dtype=np.float64).reshape(-1)
    if lags.size != spec.p:
        raise InputError(f"expected {spec.p} lags, got {lags.size}")
    return float(mixture_logdensities(spec, params, np.concatenate([lags[::-1], [y]]))[0])


def mixture_loglik(spec: MixtureSpec, params: MixtureParams, series: ArrayLike) -> float:
    return float(np.sum(mixture_logdensities(spec, params, series)))


def reparameterize(spec: MixtureSpec, alpha, phi: ArrayLike, varphi: ArrayLike):
    """Map ``(phi, varphi)`` to ``(pi, varpi)``; ``varpi = phi - varphi`` in both families."""
    phi = np.asarray(phi, dtype=np.float64)
    varphi = np.asarray(varphi, dtype=np.float64)
    if spec.family is Family.LMAR:
        return phi.copy(), phi - varphi
    a = float(np.asarray(alpha).reshape(-1)[0])
    return a * phi + (1.0 - a) * varphi, phi - varphi


def reparameterize_inverse(spec: MixtureSpec, alpha, pi: ArrayLike, varpi: ArrayLike):
    pi = np.asarray(pi, dtype=np.float64)
    varpi = np.asarray(varpi, dtype=np.float64)
    if spec.family is Family.LMAR:
        return pi.copy(), pi - varpi
    a = float(np.asarray(alpha).reshape(-1)[0])
    return pi + (1.0 - a) * varpi, pi - a * varpi


# -- batched evaluation over a population of parameter vectors ----------------


def batch_stationary(coeffs: NDArray[np.float64], tol: float = ROOT_TOL) -> NDArray[np.bool_]:
    """Row-wise :func:`check_stationarity` for ``coeffs`` of shape ``(N, p)``."""
    c = np.asarray(coeffs, dtype=np.float64)
    n, p = c.shape
    ok = np.all(np.isfinite(c), axis=1)
    if p == 1:
        return ok & (np.abs(c[:, 0]) * (1.0 + tol) < 1.0)
    comp = np.zeros((n, p, p))
    comp[:, 0, :] = np.where(ok[:, None], c, 0.0)
    comp[:, 1:, :-1] = np.eye(p - 1)
    radius = np.max(np.abs(np.linalg.eigvals(comp)), axis=1)
    return ok & (radius * (1.0 + tol) < 1.0)


def batch_gamma_inv(coeffs: NDArray[np.float64], sigma2: NDArray[np.float64]) -> NDArray[np.float64]:
    n, p = coeffs.shape
    u = np.zeros((n, p, p))
    v = np.zeros((n, p, p))
    for k in range(p):
        rows = np.arange(k, p)
        cols = rows - k
        u[:, rows, cols] = 1.0 if k == 0 else -coeffs[:, k - 1 : k]
        v[:, rows, cols] = coeffs[:, p - 1 - k : p - k]
    gi = np.einsum("nki,nkj->nij", u, u) - np.einsum("nki,nkj->nij", v, v)
    return gi / sigma2[:, None, None]


def batch_log_np(tilde: NDArray[np.float64], lags: NDArray[np.float64]) -> NDArray[np.float64]:
    """``log n_p`` for ``N`` stationary parameter vectors at ``T`` lag vectors -> ``(N, T)``."""
    p = lags.shape[1]
    coeffs = tilde[:, 1 : p + 1]
    sigma2 = tilde[:, p + 1]
    mu = tilde[:, 0] / (1.0 - coeffs.sum(axis=1))
    if p == 1:
        prec = (1.0 - coeffs[:, 0] ** 2) / sigma2
        d = lags[None, :, 0] - mu[:, None]
        return -0.5 * LOG_2PI + 0.5 * np.log(prec)[:, None] - 0.5 * prec[:, None] * d * d
    gi = batch_gamma_inv(coeffs, sigma2)
    _, logdet_inv = np.linalg.slogdet(gi)
    d = lags[None, :, :] - mu[:, None, None]
    quad = np.einsum("ntp,npq,ntq->nt", d, gi, d)
    return -0.5 * p * LOG_2PI + 0.5 * logdet_inv[:, None] - 0.5 * quad


def batch_loglik(
    spec: MixtureSpec,
    alpha: NDArray[np.float64],
    x: NDArray[np.float64],
    y: NDArray[np.float64],
    lags: NDArray[np.float64],
    lmar_weights=None,
) -> NDArray[np.float64]:
    """Mixture log-likelihood for parameter vectors ``x`` of shape ``(N, n_params)``.

    Infeasible rows (nonpositive variance or a nonstationary regime)
    evaluate to ``-inf``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    q1, q2 = spec.q1, spec.q2
    t1 = spec.merge(x[:, :q1], x[:, q1 : q1 + q2])
    t2 = spec.merge(x[:, :q1], x[:, q1 + q2 :])
    p = spec.p
    s1, s2 = t1[:, p + 1], t2[:, p + 1]
    ok = (s1 > 0) & (s2 > 0) & np.all(np.isfinite(x), axis=1)
    ok &= batch_stationary(t1[:, 1 : p + 1]) & batch_stationary(t2[:, 1 : p + 1])
    out = np.full(x.shape[0], -np.inf)
    if not np.any(ok):
        return out
    t1, t2, s1, s2 = t1[ok], t2[ok], s1[ok], s2[ok]
    r1 = y[None, :] - t1[:, :1] - t1[:, 1 : p + 1] @ lags.T
    r2 = y[None, :] - t2[:, :1] - t2[:, 1 : p + 1] @ lags.T
    l1 = gaussian_logdensity(r1, s1[:, None])
    l2 = gaussian_logdensity(r2, s2[:, None])
    if spec.family is Family.LMAR:
        w1, w2 = lmar_weights if lmar_weights is not None else _lmar_weights(alpha, lags)
        w1, w2 = w1[None, :], w2[None, :]
    else:
        a = float(alpha[0])
        ratio = math.log(a) - math.log1p(-a) + batch_log_np(t1, lags) - batch_log_np(t2, lags)
        w1, w2 = expit(ratio), expit(-ratio)
    vals = np.sum(log_mix(w1, w2, l1, l2), axis=1)
    out[ok] = np.where(np.isnan(vals), -np.inf, vals)
    return out


def lmar_weights(alpha: ArrayLike, lags: NDArray[np.float64]):
    """``(w, 1 - w)`` over all observations, for reuse across many likelihood evaluations."""
    return _lmar_weights(np.asarray(alpha, dtype=np.float64).reshape(-1), lags)


# -- simulation ---------------------------------------------------------------


def simulate_mixture(
    spec: MixtureSpec,
    params: MixtureParams,
    length: int,
    presample: int = DEFAULT_PRESAMPLE,
    seed: int = 0,
) -> NDArray[np.float64]:
    """Simulate ``p`` initial values plus ``length`` observations from the mixture.

    Starts at the stationary mean of regime 1 and discards ``presample``
    burn-in draws.
    """
    params.validate(spec)
    if length < 1 or presample < 0:
        raise InputError("length must be positive and presample non-negative")
    p = spec.p
    r1, r2 = params.regimes(spec)
    rng = make_rng(seed)
    n = presample + p + length
    eps = rng.standard_normal(n)
    unif = rng.random(n)
    start = r1.intercept / (1.0 - float(np.sum(r1.coeffs)))
    y = np.empty(n)
    y[:p] = start
    if spec.family is Family.GMAR:
        m1, m2 = ar_moments(r1), ar_moments(r2)
        log_odds = math.log(params.alpha[0]) - math.log1p(-params.alpha[0])
    for t in range(p, n):
        lag = y[t - p : t][::-1]
        if spec.family is Family.LMAR:
            w = lmar_mixing_weight(params.alpha, lag[: spec.m])
        else:
            w = float(expit(log_odds + log_np_density(lag, r1, m1) - log_np_density(lag, r2, m2)))
        reg = r1 if unif[t] < w else r2
        y[t] = reg.intercept + float(reg.coeffs @ lag) + reg.sigma * eps[t]
    return y[presample:]


__all__ = [
    "Family",
    "MixtureSpec",
    "MixtureParams",
    "lmar_mixing_weight",
    "gmar_mixing_weight",
    "log_np_density",
    "mixture_cond_logdensity",
    "mixture_logdensities",
    "mixture_loglik",
    "reparameterize",
    "reparameterize_inverse",
    "batch_loglik",
    "batch_stationary",
    "simulate_mixture",
    "check_stationarity",
]

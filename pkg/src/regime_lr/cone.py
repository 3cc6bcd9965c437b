"""Weighted projection onto the cone of rank-one PSD matrices.

The cone is ``{v(w) : w in R^q2}`` where ``v(w)`` lists the unique entries of
``w w'`` (squares first, then upper off-diagonals row-major).  It is not
convex, so the minimization of ``(v(w) - z)' W (v(w) - z)`` over ``w`` is
solved by damped Newton iterations from several starts: the scaled top
eigenvector of the symmetric matrix assembled from ``z`` plus random
restarts.  All problems in a batch are iterated together.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike, NDArray

from regime_lr._rng import make_rng
from regime_lr.errors import InputError, NumericalError


@lru_cache(maxsize=None)
def _pairs(q2: int) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    ii = list(range(q2)) + [i for i in range(q2) for j in range(i + 1, q2)]
    jj = list(range(q2)) + [j for i in range(q2) for j in range(i + 1, q2)]
    return np.array(ii), np.array(jj)


def cone_dim(q2: int) -> int:
    return q2 * (q2 + 1) // 2


def q2_from_dim(q_vartheta: int) -> int:
    q2 = int(round((np.sqrt(8 * q_vartheta + 1) - 1) / 2))
    if cone_dim(q2) != q_vartheta:
        raise InputError(f"{q_vartheta} is not a triangular number")
    return q2


def v_map(omega: ArrayLike) -> NDArray[np.float64]:
    w = np.asarray(omega, dtype=np.float64)
    ii, jj = _pairs(w.shape[-1])
    return w[..., ii] * w[..., jj]


def sym_from_image(image: ArrayLike, q2: int) -> NDArray[np.float64]:
    """Reassemble the symmetric ``q2 x q2`` matrix whose unique entries are ``image``."""
    z = np.asarray(image, dtype=np.float64)
    ii, jj = _pairs(q2)
    out = np.zeros(z.shape[:-1] + (q2, q2))
    out[..., ii, jj] = z
    out[..., jj, ii] = z
    return out


@dataclass(frozen=True, eq=False)
class ConePoint:
    omega: NDArray[np.float64]
    image: NDArray[np.float64]

    @classmethod
    def from_omega(cls, omega: ArrayLike) -> ConePoint:
        w = np.array(omega, dtype=np.float64).reshape(-1)
        if w.size and w[0] < 0:
            w = -w
        return cls(w, v_map(w))

    def matrix(self) -> NDArray[np.float64]:
        return sym_from_image(self.image, self.omega.size)


@dataclass(frozen=True)
class ConeSolverOptions:
    restarts: int = 8
    tol: float = 1e-10
    max_iter: int = 200
    seed: int = 0


def _objective(w, z, weight):
    r = v_map(w) - z
    u = r @ weight
    return np.einsum("mk,mk->m", r, u), u


def _newton(w, z, weight, q2, tol, max_iter):
    """Levenberg-damped Newton on every row of ``w`` simultaneously."""
    ii, jj = _pairs(q2)
    m = w.shape[0]
    qv = ii.size
    rows = np.arange(qv)
    h, u = _objective(w, z, weight)
    mu = np.full(m, 1e-3)
    active = np.ones(m, dtype=bool)
    eye = np.eye(q2)
    iters = 0
    for iters in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        wa, ua = w[idx], u[idx]
        jac = np.zeros((idx.size, qv, q2))
        jac[:, rows, ii] += wa[:, jj]
        jac[:, rows, jj] += wa[:, ii]
        grad = 2.0 * np.einsum("mkq,mk->mq", jac, ua)
        curv = sym_from_image(ua, q2)
        curv[:, np.arange(q2), np.arange(q2)] *= 2.0
        hess = 2.0 * (np.einsum("mkq,kl,mlr->mqr", jac, weight, jac) + curv)
        scale = np.maximum(np.abs(np.einsum("mqq->m", hess)) / q2, 1e-12)
        step = np.linalg.solve(hess + (mu[idx] * scale)[:, None, None] * eye, -grad[..., None])[..., 0]
        trial = wa + step
        h_new, u_new = _objective(trial, z[idx], weight)
        better = h_new <= h[idx]
        acc = idx[better]
        rej = idx[~better]
        gain = h[acc] - h_new[better]
        w[acc] = trial[better]
        u[acc] = u_new[better]
        h[acc] = h_new[better]
        mu[acc] = np.maximum(mu[acc] / 3.0, 1e-12)
        mu[rej] *= 4.0
        step_small = np.linalg.norm(step, axis=1) <= 1e-12 * (1.0 + np.linalg.norm(wa, axis=1))
        done_acc = (gain <= tol * (1.0 + h[acc])) & step_small[better] | (gain <= 1e-15 * (1.0 + h[acc]))
        done_acc |= np.linalg.norm(grad[better], axis=1) <= 1e-14 * (1.0 + h[acc])
        active[acc[done_acc]] = False
        active[rej[mu[rej] > 1e12]] = False
    return w, h, iters


def cone_infimum_batch(
    z: ArrayLike,
    weight: ArrayLike,
    q2: int,
    options: ConeSolverOptions = ConeSolverOptions(),
) -> tuple[NDArray[np.float64], NDArray[np.float64], dict]:
    """Solve ``min_w (v(w) - z_n)' W (v(w) - z_n)`` for every row ``z_n``.

    Returns ``(values, omegas, diagnostics)``; ``values[n] <= z_n' W z_n``
    always since ``w = 0`` is a candidate.
    """
    zz = np.atleast_2d(np.asarray(z, dtype=np.float64))
    wmat = np.asarray(weight, dtype=np.float64)
    n, qv = zz.shape
    if qv != cone_dim(q2) or wmat.shape != (qv, qv):
        raise InputError("dimension mismatch between z, weight and q2")
    wmat = 0.5 * (wmat + wmat.T)
    if not np.all(np.isfinite(zz)) or not np.all(np.isfinite(wmat)):
        raise NumericalError("non-finite input to cone solver")

    lam, vec = np.linalg.eigh(sym_from_image(zz, q2))
    top = np.sqrt(np.maximum(lam[:, -1], 0.0))[:, None] * vec[:, :, -1]
    dirs = make_rng(options.seed).standard_normal((options.restarts, q2))
    radius = np.sqrt(np.linalg.norm(zz, axis=1) / q2)
    starts = [top] + [radius[:, None] * d[None, :] for d in dirs]
    w0 = np.concatenate(starts, axis=0)
    z_rep = np.tile(zz, (len(starts), 1))
    w, h, iters = _newton(w0.copy(), z_rep, wmat, q2, options.tol, options.max_iter)
    if not np.all(np.isfinite(h)):
        raise NumericalError("cone solver produced a non-finite objective")

    h = h.reshape(len(starts), n)
    w = w.reshape(len(starts), n, q2)
    best = np.argmin(h, axis=0)
    values = h[best, np.arange(n)]
    omegas = w[best, np.arange(n)]
    at_zero = np.einsum("nk,kl,nl->n", zz, wmat, zz)
    use_zero = at_zero < values
    values = np.where(use_zero, at_zero, values)
    omegas[use_zero] = 0.0
    values = np.maximum(values, 0.0)
    flip = omegas[:, 0] < 0
    omegas[flip] *= -1.0
    diag = {"starts": len(starts), "newton_iterations": int(iters), "zero_optimal": int(use_zero.sum())}
    return values, omegas, diag


def cone_infimum(
    z_vartheta: ArrayLike,
    weight: ArrayLike,
    q2: int,
    options: ConeSolverOptions = ConeSolverOptions(),
) -> tuple[float, ConePoint]:
    values, omegas, _ = cone_infimum_batch(np.asarray(z_vartheta)[None, :], weight, q2, options)
    return float(values[0]), ConePoint.from_omega(omegas[0])

"""Orthogonal matching pursuit."""

from __future__ import annotations

import numpy as np

NORM_TOL = 1e-8
CORR_FLOOR = 1e-12
PINV_RCOND = 1e-10
DEFAULT_REL_TOL = 1e-6


def _check_dictionary(D: np.ndarray) -> np.ndarray:
    D = np.asarray(D, dtype=np.float64)
    norms = np.linalg.norm(D, axis=0)
    bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOL)
    if bad.size:
        raise ValueError(f"dictionary columns {bad[:5].tolist()} are not unit-norm")
    return D


def omp(D, y, s, residual_tol=None):
    """Sparse-code a single signal.

    Atoms are chosen by maximal absolute correlation with the residual
    (ties go to the lowest index) and the coefficients on the support are
    refit by minimum-norm least squares after every selection.

    Parameters
    ----------
    D : ndarray, shape (m, p)
        Dictionary with unit-norm columns.
    y : ndarray, shape (m,)
    s : int
        Maximum number of atoms.
    residual_tol : float, optional
        Stop once ``||y - D x||_2 <= residual_tol``.  Defaults to
        ``1e-6 * ||y||_2``.

    Returns
    -------
    ndarray, shape (p,)
    """
    D = _check_dictionary(D)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (D.shape[0],):
        raise ValueError(f"signal of shape {y.shape} does not match dictionary {D.shape}")
    if residual_tol is None:
        residual_tol = DEFAULT_REL_TOL * np.linalg.norm(y)

    x = np.zeros(D.shape[1])
    support: list[int] = []
    r = y.copy()
    for _ in range(min(int(s), D.shape[1])):
        if np.linalg.norm(r) <= residual_tol:
            break
        corr = np.abs(D.T @ r)
        corr[support] = -np.inf
        k = int(np.argmax(corr))
        if corr[k] < CORR_FLOOR:
            break
        support.append(k)
        coef = np.linalg.pinv(D[:, support], rcond=PINV_RCOND) @ y
        r = y - D[:, support] @ coef
    if support:
        x[support] = coef
    return x


def batch_sparse_code(D, Y, s, residual_tol=None):
    """Column-wise :func:`omp` on ``Y``, vectorized over columns.

    ``residual_tol`` may be a scalar or one value per column; by default it
    is ``1e-6`` times each column's norm.
    """
    D = _check_dictionary(D)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    m, p = D.shape
    if Y.shape[0] != m:
        raise ValueError(f"signals of shape {Y.shape} do not match dictionary {D.shape}")
    L = Y.shape[1]
    if residual_tol is None:
        tol = DEFAULT_REL_TOL * np.linalg.norm(Y, axis=0)
    else:
        tol = np.broadcast_to(np.asarray(residual_tol, dtype=np.float64), (L,))

    steps = min(int(s), p)
    X = np.zeros((p, L))
    if steps == 0 or L == 0:
        return X

    support = np.zeros((L, steps), dtype=np.intp)
    n_sel = np.zeros(L, dtype=np.intp)
    selected = np.zeros((L, p), dtype=bool)
    coef = np.zeros((L, steps))
    R = Y.copy()
    active = np.ones(L, dtype=bool)

    for k in range(steps):
        active &= np.linalg.norm(R, axis=0) > tol
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        corr = np.abs(D.T @ R[:, idx])
        corr[selected[idx].T] = -np.inf
        best = np.argmax(corr, axis=0)
        ok = corr[best, np.arange(idx.size)] >= CORR_FLOOR
        active[idx[~ok]] = False
        idx, best = idx[ok], best[ok]
        if idx.size == 0:
            break
        support[idx, k] = best
        selected[idx, best] = True
        n_sel[idx] = k + 1

        sub = D[:, support[idx, : k + 1]].transpose(1, 0, 2)  # (n, m, k+1)
        c = np.linalg.pinv(sub, rcond=PINV_RCOND) @ Y[:, idx].T[:, :, None]
        coef[idx, : k + 1] = c[:, :, 0]
        R[:, idx] = Y[:, idx] - (sub @ c)[:, :, 0].T

    for j in range(L):
        kk = n_sel[j]
        X[support[j, :kk], j] = coef[j, :kk]
    return X

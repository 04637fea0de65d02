"""Unstructured K-SVD baseline."""

from __future__ import annotations

import time

import numpy as np

from .omp import batch_sparse_code
from .trainer import (
    TrainConfig,
    TrainHistory,
    TrainResult,
    _check_finite,
    _stalled,
    init_dictionary,
    objective,
    sparse_code_stage,
)


DUPLICATE_COHERENCE = 0.99


def ksvd_sweep(Y, D, X):
    """One pass of rank-1 atom updates in ascending atom order.

    Updates ``D`` and ``X`` in place and returns the indices of atoms that
    no signal used; those are replaced by the worst-represented signals,
    a different signal for each.
    With the support held fixed, no atom update increases ``||Y - D X||_F``.
    """
    E = Y - D @ X
    unused = []
    for k in range(D.shape[1]):
        users = np.flatnonzero(X[k])
        if users.size == 0:
            unused.append(k)
            continue
        # residual with atom k removed, restricted to the signals that use it
        Ek = E[:, users] + np.outer(D[:, k], X[k, users])
        u, s, vt = np.linalg.svd(Ek, full_matrices=False)
        atom = u[:, 0]
        coef = s[0] * vt[0]
        if atom @ D[:, k] < 0:
            atom, coef = -atom, -coef
        D[:, k] = atom
        X[k, users] = coef
        E[:, users] = Ek - np.outer(atom, coef)

    if unused:
        order = np.argsort(-np.linalg.norm(E, axis=0), kind="stable")
        for k, worst in zip(unused, order):
            col = Y[:, worst]
            nrm = np.linalg.norm(col)
            if nrm > 0:
                D[:, k] = col / nrm
    return unused


def clear_duplicates(Y, D, X, tol: float = DUPLICATE_COHERENCE) -> list[int]:
    """Replace atoms nearly parallel to a lower-indexed atom.

    An atom whose absolute inner product with an earlier atom exceeds
    ``tol`` takes the worst-represented signal that is not itself within
    ``tol`` of the current atoms; its codes are zeroed.  ``D`` and ``X``
    are modified in place and the replaced indices returned.
    """
    E = np.linalg.norm(Y - D @ X, axis=0)
    candidates = [int(j) for j in np.argsort(-E, kind="stable") if E[j] > 0]
    replaced = []
    for k in range(1, D.shape[1]):
        if np.abs(D[:, :k].T @ D[:, k]).max() <= tol:
            continue
        while candidates:
            col = Y[:, candidates.pop(0)]
            col = col / np.linalg.norm(col)
            if np.abs(D.T @ col).max() <= tol:
                D[:, k] = col
                X[k] = 0.0
                replaced.append(k)
                break
    return replaced


def ksvd_train(Y, p: int, config: TrainConfig) -> TrainResult:
    """K-SVD with OMP sparse coding.

    ``config.lam``, ``config.gamma`` and ``config.admm`` are ignored.  The
    initialization and stopping rules are the same as for the structured
    trainer, so both methods see equal iteration budgets.  After each
    sweep, atoms that duplicate another atom are replaced
    (:func:`clear_duplicates`); ``replaced_atoms`` in the history counts
    these together with unused atoms.
    """
    Y = np.asarray(Y, dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    y_norm = float(np.linalg.norm(Y))
    history = TrainHistory()

    D = init_dictionary(Y, p, rng)
    X = None
    best = None
    for _ in range(config.max_outer_iters):
        t0 = time.perf_counter()
        X = sparse_code_stage(D, Y, config.s, config.omp_tol, X)
        unused = ksvd_sweep(Y, D, X)
        _check_finite(history, D, X)
        err = float(np.linalg.norm(Y - D @ X))
        obj = objective(Y, D, X, 0.0, None)
        elapsed = time.perf_counter() - t0 if config.timing else 0.0
        if best is None or obj < best[0]:
            best = (obj, D.copy(), X.copy())
        # near-duplicate atoms are only replaced between iterations so that
        # the recorded (D, X) pair is the one the sweep produced
        cleared = clear_duplicates(Y, D, X)
        history.append(err, obj, 1, elapsed, len(unused) + len(cleared))
        if err <= config.outer_tol * y_norm or _stalled(history.objective):
            break

    if best is None:
        return TrainResult(D, batch_sparse_code(D, Y, config.s, config.omp_tol), history)
    return TrainResult(best[1], best[2], history)

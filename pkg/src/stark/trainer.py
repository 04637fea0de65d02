"""Alternating sparse coding / structured dictionary update."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .admm import SolveParams, admm_dictionary_update
from .omp import batch_sparse_code
from .rearrange import KroneckerSpec, rearrange_dict
from .tensor import nuclear_norm, unfold

log = logging.getLogger(__name__)

UNIT_TOL = 1e-10
STALL_WINDOW = 5
STALL_REL = 1e-4


class TrainingDiverged(RuntimeError):
    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


@dataclass
class TrainConfig:
    """Settings shared by the STARK and K-SVD trainers.

    ``lam=None`` selects ``lam_scale * c`` and ``gamma=None`` selects
    ``gamma_scale * c``, where ``c = ||X||_F^2 / p`` is the mean diagonal of
    ``X X^T`` for the codes of the first sparse-coding pass.  Both then
    follow the curvature of the data term, which grows with the number of
    signals, and are held fixed for the rest of the run.  ``outer_tol`` is
    relative: training stops once ``||Y - D X||_F <= outer_tol * ||Y||_F``.
    ``timing=False`` records zero wall time so that histories are
    reproducible byte for byte.
    """

    s: int
    lam: float | None = None
    gamma: float | None = None
    lam_scale: float = 0.8
    gamma_scale: float = 3.0
    outer_tol: float = 1e-6
    max_outer_iters: int = 100
    admm: SolveParams = field(default_factory=SolveParams)
    seed: int | tuple[int, ...] = 0
    omp_tol: float | None = None
    timing: bool = True

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("sparsity s must be >= 1")
        if self.outer_tol <= 0 or (self.gamma is not None and self.gamma <= 0):
            raise ValueError("outer_tol and gamma must be positive")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.max_outer_iters < 0:
            raise ValueError("max_outer_iters must be >= 0")

    def resolve(self, X) -> tuple[float, float]:
        """Concrete ``(lam, gamma)`` given the first sparse codes ``X``."""
        curvature = float(np.linalg.norm(X)) ** 2 / X.shape[0]
        lam = self.lam if self.lam is not None else self.lam_scale * curvature
        gamma = self.gamma if self.gamma is not None else self.gamma_scale * curvature
        if not gamma > 0:
            gamma = 1.0
        return float(lam), float(gamma)


@dataclass
class TrainHistory:
    rep_error: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    inner_iters: list[int] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    replaced_atoms: list[int] = field(default_factory=list)

    HEADER = ("iter", "rep_error", "objective", "inner_iters", "seconds", "replaced_atoms")

    def append(self, rep_error, objective, inner_iters, seconds, replaced):
        self.rep_error.append(float(rep_error))
        self.objective.append(float(objective))
        self.inner_iters.append(int(inner_iters))
        self.seconds.append(float(seconds))
        self.replaced_atoms.append(int(replaced))

    def __len__(self):
        return len(self.rep_error)

    def write_csv(self, fh: TextIO) -> None:
        """One row per outer iteration; header ``HEADER``."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.HEADER)
        for i in range(len(self)):
            w.writerow([
                i + 1,
                f"{self.rep_error[i]:.12g}",
                f"{self.objective[i]:.12g}",
                self.inner_iters[i],
                f"{self.seconds[i]:.6f}",
                self.replaced_atoms[i],
            ])


@dataclass
class TrainResult:
    dictionary: np.ndarray
    codes: np.ndarray
    history: TrainHistory


def init_dictionary(Y, p: int, rng) -> np.ndarray:
    """``p`` distinct random columns of ``Y`` scaled to unit norm.

    Falls back to Gaussian atoms when ``Y`` has fewer than ``p`` columns,
    and for any chosen column that is zero.
    """
    Y = np.asarray(Y, dtype=np.float64)
    m, L = Y.shape
    if L >= p:
        D = Y[:, rng.choice(L, size=p, replace=False)].copy()
    else:
        log.warning("only %d signals for %d atoms; using Gaussian initialization", L, p)
        D = rng.standard_normal((m, p))
    norms = np.linalg.norm(D, axis=0)
    for j in np.flatnonzero(norms == 0):
        D[:, j] = rng.standard_normal(m)
    return D / np.linalg.norm(D, axis=0)


def normalize_columns(D, Y=None, rng=None):
    """Scale columns to unit norm.

    Returns ``(D_normalized, scales, replaced)``.  Zero columns are
    replaced by a random column of ``Y`` (or a Gaussian vector if ``Y`` is
    not given) and listed in ``replaced``; their scale is reported as 0.
    """
    D = np.array(D, dtype=np.float64)
    scales = np.linalg.norm(D, axis=0)
    replaced = np.flatnonzero(scales <= np.finfo(float).tiny)
    if replaced.size:
        rng = rng if rng is not None else np.random.default_rng(0)
        for j in replaced:
            col = None
            if Y is not None and Y.shape[1]:
                col = Y[:, rng.integers(Y.shape[1])]
            if col is None or not np.linalg.norm(col) > 0:
                col = rng.standard_normal(D.shape[0])
            D[:, j] = col / np.linalg.norm(col)
        scales[replaced] = 0.0
    ok = scales > 0
    D[:, ok] /= scales[ok]
    return D, scales, replaced.tolist()


def sum_trace_norm(D, spec: KroneckerSpec) -> float:
    """Average nuclear norm of the unfoldings of ``rearrange_dict(D)``."""
    t = rearrange_dict(D, spec)
    return sum(nuclear_norm(unfold(t, n)) for n in range(t.ndim)) / t.ndim


def objective(Y, D, X, lam: float, spec: KroneckerSpec | None) -> float:
    """``1/2 ||Y - D X||_F^2 + lam * sum_trace_norm(D)``; no penalty without a spec."""
    val = 0.5 * float(np.linalg.norm(Y - D @ X)) ** 2
    if spec is not None and lam:
        val += lam * sum_trace_norm(D, spec)
    return val


def sparse_code_stage(D, Y, s, omp_tol, prev_codes=None):
    """OMP codes, keeping ``prev_codes`` columns that fit strictly better.

    OMP is greedy, so it can lose to an earlier feasible code on some
    signals; retaining the better one makes the stage non-increasing.
    """
    X = batch_sparse_code(D, Y, s, omp_tol)
    if prev_codes is not None:
        new = np.linalg.norm(Y - D @ X, axis=0)
        old = np.linalg.norm(Y - D @ prev_codes, axis=0)
        keep = old < new
        X[:, keep] = prev_codes[:, keep]
    return X


def _stalled(values) -> bool:
    """True once ``values`` (the objective) fell by less than ``STALL_REL``
    relative over the last ``STALL_WINDOW`` iterations."""
    if len(values) <= STALL_WINDOW:
        return False
    ref = values[-1 - STALL_WINDOW]
    return ref > 0 and (ref - values[-1]) / ref < STALL_REL


def _check_finite(history, *arrays):
    if not all(np.all(np.isfinite(a)) for a in arrays):
        raise TrainingDiverged("non-finite values during training", history)


def stark_train(Y, spec: KroneckerSpec, config: TrainConfig) -> TrainResult:
    """Learn a Kronecker-structured dictionary for the columns of ``Y``.

    Each outer iteration sparse-codes ``Y`` with OMP, runs the ADMM
    dictionary update and renormalizes the atoms.  The pair with the lowest
    objective seen is returned.

    Parameters
    ----------
    Y : ndarray, shape (m, L)
        Vectorized training tensors, ``m = spec.m``.
    spec : KroneckerSpec
    config : TrainConfig

    Returns
    -------
    TrainResult
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] != spec.m:
        raise ValueError(f"Y must have {spec.m} rows, got shape {Y.shape}")
    rng = np.random.default_rng(config.seed)
    y_norm = float(np.linalg.norm(Y))
    history = TrainHistory()

    D = init_dictionary(Y, spec.p, rng)
    X = None
    best = None
    for _ in range(config.max_outer_iters):
        t0 = time.perf_counter()
        X = sparse_code_stage(D, Y, config.s, config.omp_tol, X)
        if best is None:
            lam, gamma = config.resolve(X)
        D_raw, state = admm_dictionary_update(Y, X, D, spec, config.admm, lam, gamma)
        _check_finite(history, D_raw)
        D, scales, replaced = normalize_columns(D_raw, Y, rng)
        # D_raw X == D (scales * X): keeps the (dictionary, codes) pair exact
        X = X * scales[:, None]
        err = float(np.linalg.norm(Y - D @ X))
        obj = objective(Y, D, X, lam, spec)
        _check_finite(history, X, np.array([err, obj]))
        elapsed = time.perf_counter() - t0 if config.timing else 0.0
        history.append(err, obj, state.iter, elapsed, len(replaced))
        if best is None or obj < best[0]:
            best = (obj, D.copy(), X.copy())
        if err <= config.outer_tol * y_norm or _stalled(history.objective):
            break

    if best is None:
        return TrainResult(D, batch_sparse_code(D, Y, config.s, config.omp_tol), history)
    return TrainResult(best[1], best[2], history)

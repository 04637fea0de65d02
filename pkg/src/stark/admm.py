"""ADMM solver for the structured dictionary update.

Minimizes, over the rearranged dictionary ``D_pi``,

    1/2 ||Y - D X||_F^2 + lam * sum_n ||unfold(D_pi, n)||_*

by splitting ``D_pi`` into one copy ``W_n`` per mode with consensus
constraints ``W_n = D_pi`` and duals ``A_n``.  The least-squares step is
solved in dictionary coordinates: because ``Pi vec(D_pi) = vec(D)`` and
``(X kron I_m)(X kron I_m)^T = (X X^T) kron I_m``, the ``mp x mp`` normal
equations collapse to the ``p x p`` system

    D (X X^T + gamma N I_p) = Y X^T + inverse_rearrange(sum_n A_n + gamma W_n).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .rearrange import KroneckerSpec, inverse_rearrange, rearrange_dict
from .tensor import nuclear_norm, refold, unfold, vec

log = logging.getLogger(__name__)


@dataclass
class SolveParams:
    max_admm_iters: int = 300
    dual_change_tol: float = 1e-4

    def __post_init__(self):
        if self.max_admm_iters < 1 or self.dual_change_tol <= 0:
            raise ValueError("max_admm_iters must be >= 1 and dual_change_tol > 0")


@dataclass
class AdmmState:
    dpi: np.ndarray
    w: list[np.ndarray]
    a: list[np.ndarray]
    gamma: float
    lam: float
    iter: int = 0
    primal_residuals: list[float] = field(default_factory=list)
    dual_changes: list[float] = field(default_factory=list)
    lagrangians: list[float] = field(default_factory=list)
    converged: bool = False

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        dims = self.dpi.shape
        if any(t.shape != dims for t in self.w + self.a):
            raise ValueError("W_n and A_n must share the rearranged dims")

    @classmethod
    def initial(cls, d_init, spec: KroneckerSpec, lam: float, gamma: float) -> "AdmmState":
        """``W_n = rearrange_dict(d_init)`` and ``A_n = 0`` for every mode."""
        dpi = rearrange_dict(d_init, spec)
        n = spec.order
        return cls(
            dpi=dpi.copy(),
            w=[dpi.copy() for _ in range(n)],
            a=[np.zeros_like(dpi) for _ in range(n)],
            gamma=float(gamma),
            lam=float(lam),
        )


def apply_T(dpi, X, spec: KroneckerSpec) -> np.ndarray:
    """``vec(D X)`` for ``D = inverse_rearrange(dpi)``."""
    return vec(inverse_rearrange(dpi, spec) @ np.asarray(X, dtype=np.float64))


def apply_T_adjoint(y, X, spec: KroneckerSpec) -> np.ndarray:
    """Adjoint of :func:`apply_T`: ``rearrange_dict(unvec(y) X^T)``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.size != spec.m * X.shape[1]:
        raise ValueError(f"vector of length {y.size} does not match {spec.m}x{X.shape[1]}")
    Ym = y.reshape(spec.m, X.shape[1], order="F")
    return rearrange_dict(Ym @ X.T, spec)


def shrink(m, tau: float) -> np.ndarray:
    """Singular value soft-thresholding, the prox of ``tau * ||.||_*``."""
    if tau < 0:
        raise ValueError("threshold must be non-negative")
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ValueError("shrink called on non-finite input")
    if tau == 0:
        return m.copy()
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    return (u[:, keep] * s[keep]) @ vt[keep]


class _DictionarySolver:
    """Cached factorization of ``X X^T + gamma N I`` for one update stage."""

    def __init__(self, Y, X, spec: KroneckerSpec, gamma: float):
        self.spec = spec
        n = spec.order
        G = X @ X.T
        G[np.diag_indices_from(G)] += gamma * n
        self.chol = scipy.linalg.cho_factor(G, lower=True, check_finite=True)
        self.YXt = Y @ X.T

    def solve(self, rhs_tensor: np.ndarray) -> np.ndarray:
        rhs = self.YXt + inverse_rearrange(rhs_tensor, self.spec)
        D = scipy.linalg.cho_solve(self.chol, rhs.T, check_finite=False).T
        if not np.all(np.isfinite(D)):
            raise FloatingPointError("dictionary solve produced non-finite values")
        return rearrange_dict(D, self.spec)


def update_dpi(state: AdmmState, Y, X, spec: KroneckerSpec, solver=None) -> np.ndarray:
    """Exact minimizer of the augmented Lagrangian in ``D_pi``."""
    if solver is None:
        solver = _DictionarySolver(np.asarray(Y, float), np.asarray(X, float), spec, state.gamma)
    rhs = sum(a + state.gamma * w for a, w in zip(state.a, state.w))
    return solver.solve(rhs)


def update_w(state: AdmmState, spec: KroneckerSpec) -> list[np.ndarray]:
    dims = state.dpi.shape
    tau = state.lam / state.gamma
    out = []
    for n, a in enumerate(state.a):
        shifted = unfold(state.dpi, n) - unfold(a, n) / state.gamma
        out.append(refold(shrink(shifted, tau), n, dims))
    return out


def update_duals(state: AdmmState) -> list[np.ndarray]:
    return [a - state.gamma * (state.dpi - w) for a, w in zip(state.a, state.w)]


def lagrangian(state: AdmmState, Y, X, spec: KroneckerSpec) -> float:
    """Augmented Lagrangian at the current state."""
    D = inverse_rearrange(state.dpi, spec)
    val = 0.5 * np.linalg.norm(Y - D @ X) ** 2
    for n, (w, a) in enumerate(zip(state.w, state.a)):
        diff = state.dpi - w
        val += state.lam * nuclear_norm(unfold(w, n))
        val += -np.vdot(a, diff) + 0.5 * state.gamma * np.vdot(diff, diff)
    return float(val)


def primal_residual(state: AdmmState) -> float:
    """``max_n ||D_pi - W_n||_F / ||D_pi||_F``."""
    scale = max(np.linalg.norm(state.dpi), np.finfo(float).tiny)
    return max(float(np.linalg.norm(state.dpi - w)) for w in state.w) / scale


def admm_dictionary_update(
    Y,
    X,
    d_init,
    spec: KroneckerSpec,
    params: SolveParams | None = None,
    lam: float = 0.0,
    gamma: float = 1.0,
    verbose=None,
):
    """Run the structured dictionary update from ``d_init``.

    Iterates the ``D_pi`` step, per-mode shrinkage and dual ascent until
    ``||A(t) - A(t-1)||_F <= tol * max(1, ||A(t)||_F)`` or the iteration
    cap.  Column normalization is left to the caller.

    Parameters
    ----------
    Y : ndarray, shape (m, L)
    X : ndarray, shape (p, L)
    d_init : ndarray, shape (m, p)
    spec : KroneckerSpec
    params : SolveParams, optional
    lam, gamma : float
        Regularization weight and ADMM penalty.
    verbose : file-like, optional
        If given, one CSV row ``iter,lagrangian,primal_residual,dual_change``
        is written per iteration.

    Returns
    -------
    D : ndarray, shape (m, p)
    state : AdmmState
    """
    params = params or SolveParams()
    Y = np.asarray(Y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    state = AdmmState.initial(d_init, spec, lam, gamma)
    solver = _DictionarySolver(Y, X, spec, state.gamma)
    if verbose is not None:
        verbose.write("iter,lagrangian,primal_residual,dual_change\n")

    for _ in range(params.max_admm_iters):
        state.dpi = update_dpi(state, Y, X, spec, solver)
        state.w = update_w(state, spec)
        a_new = update_duals(state)
        change = np.sqrt(sum(np.linalg.norm(an - ao) ** 2 for an, ao in zip(a_new, state.a)))
        a_norm = np.sqrt(sum(np.linalg.norm(an) ** 2 for an in a_new))
        state.a = a_new
        state.iter += 1
        state.primal_residuals.append(primal_residual(state))
        state.dual_changes.append(float(change))
        if verbose is not None:
            lag = lagrangian(state, Y, X, spec)
            state.lagrangians.append(lag)
            verbose.write(
                f"{state.iter},{lag:.12g},{state.primal_residuals[-1]:.6e},{change:.6e}\n"
            )
        if change <= params.dual_change_tol * max(1.0, a_norm):
            state.converged = True
            break

    if not state.converged:
        log.info(
            "ADMM stopped at the iteration cap (%d); last primal residual %.3e",
            state.iter,
            state.primal_residuals[-1],
        )
    return inverse_rearrange(state.dpi, spec), state

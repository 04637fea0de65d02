"""Rearrangement of Kronecker-structured matrices into low-rank tensors.

For ``D = D_1 kron D_2 kron ... kron D_N`` with ``D_k`` of shape
``(m_k, p_k)``, the rearranged tensor is

    D_pi = vec(D_N) o vec(D_{N-1}) o ... o vec(D_1),

so mode ``n`` (zero-based) of ``D_pi`` has size ``m_{N-n} * p_{N-n}``.  For
``N = 2`` this is the matrix ``vec(D_2) vec(D_1)^T``.  A sum of ``K`` such
Kronecker terms rearranges to a tensor whose unfoldings all have rank at
most ``K``.

The permutation ``Pi`` satisfies ``Pi @ vec(D_pi) == vec(D)``; it is only
materialized by :func:`permutation_matrix`, which is meant for small tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import kron, outer, unfold, vec


@dataclass(frozen=True)
class KroneckerSpec:
    """Factor shapes ``(m_k, p_k)`` for ``k = 1..N`` and a separation-rank hint."""

    factor_dims: tuple[tuple[int, int], ...]
    separation_rank: int = 1

    def __post_init__(self):
        dims = tuple((int(m), int(p)) for m, p in self.factor_dims)
        if len(dims) < 2:
            raise ValueError("a KroneckerSpec needs at least two factors")
        if any(m < 1 or p < 1 for m, p in dims):
            raise ValueError(f"factor dimensions must be positive: {dims}")
        if self.separation_rank < 1:
            raise ValueError("separation rank must be >= 1")
        object.__setattr__(self, "factor_dims", dims)

    @classmethod
    def parse(cls, text: str, separation_rank: int = 1) -> "KroneckerSpec":
        """Parse ``"m1xp1,m2xp2,..."``."""
        pairs = []
        for item in text.split(","):
            m, p = item.strip().lower().split("x")
            pairs.append((int(m), int(p)))
        return cls(tuple(pairs), separation_rank)

    def __str__(self) -> str:
        return ",".join(f"{m}x{p}" for m, p in self.factor_dims)

    @property
    def order(self) -> int:
        return len(self.factor_dims)

    @property
    def row_dims(self) -> tuple[int, ...]:
        return tuple(m for m, _ in self.factor_dims)

    @property
    def col_dims(self) -> tuple[int, ...]:
        return tuple(p for _, p in self.factor_dims)

    @property
    def m(self) -> int:
        return int(np.prod(self.row_dims))

    @property
    def p(self) -> int:
        return int(np.prod(self.col_dims))

    @property
    def rearranged_dims(self) -> tuple[int, ...]:
        return tuple(m * p for m, p in reversed(self.factor_dims))


def _digits(value: int, radices: Sequence[int]) -> list[int]:
    # most significant digit first, matching np.kron
    out = []
    for r in reversed(radices):
        value, d = divmod(value, r)
        out.append(d)
    return out[::-1]


def map_index(spec: KroneckerSpec, l: int) -> int:
    """Position in ``vec(D_pi)`` of entry ``l`` of ``vec(D)`` (zero-based)."""
    m, p = spec.m, spec.p
    if not 0 <= l < m * p:
        raise IndexError(f"index {l} out of range for {m}x{p} dictionary")
    j, i = divmod(l, m)
    idig = _digits(i, spec.row_dims)
    jdig = _digits(j, spec.col_dims)
    # position of D_k[i_k, j_k] inside vec(D_k)
    flat = [jk * mk + ik for ik, jk, mk in zip(idig, jdig, spec.row_dims)]
    # D_pi modes run over factors N..1; vec is column-major
    out, stride = 0, 1
    for lk, (mk, pk) in zip(reversed(flat), reversed(spec.factor_dims)):
        out += lk * stride
        stride *= mk * pk
    return out


def permutation_matrix(spec: KroneckerSpec) -> np.ndarray:
    """Dense ``Pi`` with ``Pi @ vec(D_pi) == vec(D)``. Small shapes only."""
    size = spec.m * spec.p
    pi = np.zeros((size, size))
    for l in range(size):
        pi[l, map_index(spec, l)] = 1.0
    return pi


def _check_matrix(d: np.ndarray, spec: KroneckerSpec) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (spec.m, spec.p):
        raise ValueError(f"dictionary shape {d.shape} does not match spec ({spec.m}, {spec.p})")
    return d


def rearrange_dict(d: np.ndarray, spec: KroneckerSpec) -> np.ndarray:
    """Rearrange an ``m x p`` matrix into the order-N tensor ``D_pi``."""
    d = _check_matrix(d, spec)
    n = spec.order
    t = d.reshape(spec.row_dims + spec.col_dims)
    # axes (j_N, i_N, ..., j_1, i_1); a C-order reshape then gives
    # l_k = i_k + m_k * j_k along each output mode
    axes = []
    for k in reversed(range(n)):
        axes += [n + k, k]
    return t.transpose(axes).reshape(spec.rearranged_dims)


def inverse_rearrange(t: np.ndarray, spec: KroneckerSpec) -> np.ndarray:
    """Inverse of :func:`rearrange_dict`."""
    t = np.asarray(t, dtype=np.float64)
    if t.shape != spec.rearranged_dims:
        raise ValueError(f"tensor shape {t.shape} does not match {spec.rearranged_dims}")
    n = spec.order
    split = []
    for mk, pk in reversed(spec.factor_dims):
        split += [pk, mk]
    u = t.reshape(split)
    # u axes: position 2*(n-1-k) holds j_k, the next one i_k
    axes = [2 * (n - 1 - k) + 1 for k in range(n)] + [2 * (n - 1 - k) for k in range(n)]
    return u.transpose(axes).reshape(spec.m, spec.p)


def _rank_one(t: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Sequential rank-1 fit: leading singular pair of mode-0, then recurse."""
    if t.ndim == 1:
        nrm = float(np.linalg.norm(t))
        return nrm, [t / nrm if nrm > 0 else t.copy()]
    u, s, vt = np.linalg.svd(unfold(t, 0), full_matrices=False)
    rest = vt[0].reshape(t.shape[1:], order="F")
    scale, vecs = _rank_one(rest)
    return float(s[0]) * scale, [u[:, 0]] + vecs


def extract_factors(t: np.ndarray, spec: KroneckerSpec, K: int = 1):
    """Recover Kronecker factors from a rearranged tensor.

    The mode-0 unfolding of ``t`` is truncated to rank ``K``; each right
    singular vector is then reduced to a rank-1 tensor by the same
    procedure applied recursively.

    Parameters
    ----------
    t : ndarray
        Rearranged tensor with ``spec.rearranged_dims``.
    spec : KroneckerSpec
    K : int
        Number of Kronecker terms.

    Returns
    -------
    terms : list of list of ndarray
        ``K`` tuples ``[D_1, ..., D_N]``.  Every factor except ``D_1`` has
        unit Frobenius norm; ``D_1`` carries the magnitude and its
        largest-magnitude entry is positive.
    residual : float
        ``||t - sum_k outer(vec(D_N^k), ..., vec(D_1^k))||_F``.
    """
    t = np.asarray(t, dtype=np.float64)
    if t.shape != spec.rearranged_dims:
        raise ValueError(f"tensor shape {t.shape} does not match {spec.rearranged_dims}")
    max_rank = min(min(unfold(t, n).shape) for n in range(t.ndim))
    if not 1 <= K <= max_rank:
        raise ValueError(f"K={K} exceeds the maximal unfolding rank {max_rank}")

    u, s, vt = np.linalg.svd(unfold(t, 0), full_matrices=False)
    terms, approx = [], np.zeros_like(t)
    for k in range(K):
        rest = vt[k].reshape(t.shape[1:], order="F")
        scale, vecs = _rank_one(rest)
        vecs = [u[:, k]] + vecs
        weight = float(s[k]) * scale
        # vecs[0] belongs to factor N, vecs[-1] to factor 1
        factors = [
            v.reshape(mk, pk, order="F")
            for v, (mk, pk) in zip(reversed(vecs), spec.factor_dims)
        ]
        first = factors[0] * weight
        if first.flat[np.argmax(np.abs(first))] < 0:
            first = -first
            factors[1] = -factors[1]
        factors[0] = first
        terms.append(factors)
        approx += outer([vec(f) for f in reversed(factors)])
    return terms, float(np.linalg.norm(t - approx))


def kron_sum(terms: Sequence[Sequence[np.ndarray]]) -> np.ndarray:
    """``sum_k kron([D_1^k, ..., D_N^k])``."""
    return sum(kron(list(factors)) for factors in terms)

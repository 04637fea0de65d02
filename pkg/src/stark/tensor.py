"""Dense tensor primitives.

Tensors are plain ``numpy.ndarray`` objects of dtype float64.  Two
linearizations are in play and must not be confused:

* storage order (``DTEN1`` files) is row-major, first index slowest;
* ``vec`` is column-major, first index fastest.  This is the order under
  which ``vec(X x_1 D_1 x_2 D_2 ... x_N D_N) == kron([D_N, ..., D_1]) vec(X)``.

Mode-n unfoldings use the cyclic-free convention of Kolda & Bader: the
remaining indices are ordered with the lowest mode varying fastest.
"""

from __future__ import annotations

from functools import reduce
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"DTEN1"


def _check_mode(ndim: int, n: int) -> None:
    if not 0 <= n < ndim:
        raise ValueError(f"mode {n} out of range for order-{ndim} tensor")


def vec(t: np.ndarray) -> np.ndarray:
    """Column-major vectorization."""
    return np.asarray(t, dtype=np.float64).reshape(-1, order="F")


def unvec(v: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v, dtype=np.float64)
    dims = tuple(int(d) for d in dims)
    if v.ndim != 1 or v.size != int(np.prod(dims)):
        raise ValueError(f"cannot unvec length-{v.size} vector into {dims}")
    return v.reshape(dims, order="F")


def unfold(t: np.ndarray, n: int) -> np.ndarray:
    """Mode-``n`` unfolding (``n`` is zero-based).

    Returns a ``dims[n] x prod(other dims)`` matrix whose columns run over
    the remaining indices with the lowest remaining mode varying fastest.
    """
    t = np.asarray(t, dtype=np.float64)
    _check_mode(t.ndim, n)
    return np.reshape(np.moveaxis(t, n, 0), (t.shape[n], -1), order="F")


def refold(m: np.ndarray, n: int, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    m = np.asarray(m, dtype=np.float64)
    dims = tuple(int(d) for d in dims)
    _check_mode(len(dims), n)
    rest = int(np.prod(dims)) // dims[n] if dims[n] else 0
    if m.shape != (dims[n], rest):
        raise ValueError(f"matrix of shape {m.shape} cannot refold to {dims} along mode {n}")
    moved = (dims[n],) + dims[:n] + dims[n + 1:]
    return np.moveaxis(np.reshape(m, moved, order="F"), 0, n)


def mode_n_product(t: np.ndarray, m: np.ndarray, n: int) -> np.ndarray:
    """Mode-``n`` product ``t x_n m``."""
    t = np.asarray(t, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    _check_mode(t.ndim, n)
    if m.ndim != 2 or m.shape[1] != t.shape[n]:
        raise ValueError(f"matrix {m.shape} does not conform to mode {n} of {t.shape}")
    if t.ndim == 1:
        return m @ t
    dims = list(t.shape)
    dims[n] = m.shape[0]
    return refold(m @ unfold(t, n), n, dims)


def kron(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product of ``factors`` in the given order."""
    if len(factors) == 0:
        raise ValueError("kron needs at least one factor")
    return reduce(np.kron, [np.atleast_2d(np.asarray(f, dtype=np.float64)) for f in factors])


def outer(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Outer product ``v_1 o v_2 o ... o v_N`` as an order-N tensor."""
    if len(vectors) == 0:
        raise ValueError("outer needs at least one vector")
    vs = [np.ravel(np.asarray(v, dtype=np.float64)) for v in vectors]
    return reduce(np.multiply.outer, vs)


def nuclear_norm(m: np.ndarray) -> float:
    return float(np.linalg.svd(m, compute_uv=False).sum())


def save_tensor(path: str | Path, t: np.ndarray) -> None:
    """Write ``t`` in the DTEN1 format.

    Layout: ``DTEN1`` magic, newline, an ASCII header ``"N d_1 ... d_N"``,
    newline, then little-endian float64 samples in row-major order.
    """
    t = np.asarray(t, dtype=np.float64)
    header = " ".join(str(d) for d in (t.ndim,) + t.shape)
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\n" + header.encode("ascii") + b"\n")
        fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes(order="C"))


def load_tensor(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip(b"\n")
        if magic != MAGIC:
            raise ValueError(f"{path}: not a DTEN1 file")
        fields = [int(x) for x in fh.readline().decode("ascii").split()]
        if not fields or fields[0] != len(fields) - 1:
            raise ValueError(f"{path}: malformed DTEN1 header")
        dims = tuple(fields[1:])
        payload = fh.read()
    data = np.frombuffer(payload, dtype="<f8")
    if data.size != int(np.prod(dims)):
        raise ValueError(f"{path}: expected {int(np.prod(dims))} samples, found {data.size}")
    return data.astype(np.float64).reshape(dims)

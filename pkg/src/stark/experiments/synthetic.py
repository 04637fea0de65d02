"""Synthetic Kronecker-structured data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rearrange import KroneckerSpec
from ..tensor import kron


@dataclass(frozen=True)
class SyntheticSpec:
    kspec: KroneckerSpec
    L_train: int
    L_test: int
    s: int
    noise_sigma: float = 0.0
    seed: int | tuple[int, ...] = 0

    def __post_init__(self):
        if self.L_train < 1 or self.L_test < 1:
            raise ValueError("L_train and L_test must be positive")
        if not 1 <= self.s <= self.kspec.p:
            raise ValueError(f"s={self.s} must lie in [1, p={self.kspec.p}]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


def random_ks_dictionary(kspec: KroneckerSpec, rng) -> tuple[np.ndarray, list[np.ndarray]]:
    """Kronecker product of Gaussian factors with unit-norm columns."""
    factors = []
    for m, p in kspec.factor_dims:
        f = rng.standard_normal((m, p))
        factors.append(f / np.linalg.norm(f, axis=0))
    return kron(factors), factors


def sparse_codes(p: int, L: int, s: int, rng) -> np.ndarray:
    """``s`` uniformly placed Gaussian nonzeros per column."""
    X = np.zeros((p, L))
    for j in range(L):
        X[rng.choice(p, size=s, replace=False), j] = rng.standard_normal(s)
    return X


def gen_synthetic(spec: SyntheticSpec):
    """Draw ``(Y_train, Y_test, D_true, X_true)``.

    ``X_true`` holds the training codes.  Test signals use fresh codes
    from the same dictionary.
    """
    rng = np.random.default_rng(spec.seed)
    D, _ = random_ks_dictionary(spec.kspec, rng)
    X_train = sparse_codes(D.shape[1], spec.L_train, spec.s, rng)
    X_test = sparse_codes(D.shape[1], spec.L_test, spec.s, rng)
    Y_train = D @ X_train
    Y_test = D @ X_test
    if spec.noise_sigma > 0:
        Y_train = Y_train + spec.noise_sigma * rng.standard_normal(Y_train.shape)
        Y_test = Y_test + spec.noise_sigma * rng.standard_normal(Y_test.shape)
    return Y_train, Y_test, D, X_train


def representation_error(Y, D, X) -> float:
    """Normalized representation error ``||Y - D X||_F / ||Y||_F``."""
    Y = np.asarray(Y, dtype=np.float64)
    ny = np.linalg.norm(Y)
    if ny == 0:
        raise ValueError("representation error is undefined for Y = 0")
    return float(np.linalg.norm(Y - D @ X) / ny)

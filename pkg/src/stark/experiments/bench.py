"""Monte Carlo benchmark: test representation error vs. training-set size."""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from ..ksvd import ksvd_train
from ..omp import batch_sparse_code
from ..rearrange import KroneckerSpec
from ..trainer import TrainConfig, stark_train
from .synthetic import SyntheticSpec, gen_synthetic, representation_error

log = logging.getLogger(__name__)

METHODS = ("stark", "ksvd")
HEADER = ("method", "L", "trial", "train_err", "test_err", "seconds")


@dataclass(frozen=True)
class BenchRow:
    method: str
    L: int
    trial: int
    train_err: float
    test_err: float
    seconds: float

    def key(self):
        return (self.method, self.L, self.trial)


@dataclass
class BenchConfig:
    """Everything a benchmark run depends on.

    One training pool of ``max(L_list)`` signals and one test set of
    ``L_test`` signals are drawn per trial; each ``L`` trains on the first
    ``L`` pool columns, so larger sets extend smaller ones.  Trial ``t``
    seeds its data with ``(seed, t)`` and its trainers with ``(seed, t, L)``.
    """

    kspec: KroneckerSpec
    L_list: Sequence[int] = (250, 500, 1000, 2000)
    trials: int = 5
    methods: Sequence[str] = METHODS
    s: int = 10
    L_test: int = 2000
    noise_sigma: float = 0.0
    seed: int = 0
    train: TrainConfig | None = None
    oracle: bool = True
    timing: bool = True

    def __post_init__(self):
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}; choose from {METHODS}")
        if self.trials < 1 or not self.L_list or min(self.L_list) < 1:
            raise ValueError("need trials >= 1 and positive training sizes")
        if self.train is None:
            self.train = TrainConfig(s=self.s)


def _train(method, Y, cfg: BenchConfig, tcfg: TrainConfig):
    if method == "stark":
        return stark_train(Y, cfg.kspec, tcfg)
    return ksvd_train(Y, cfg.kspec.p, tcfg)


def bench_synthetic(cfg: BenchConfig) -> list[BenchRow]:
    """Train every method for every ``(L, trial)`` and score it on held-out data.

    Both errors come from fresh OMP codes against the learned dictionary.

    A training failure is logged and recorded as a row with NaN errors
    rather than aborting the run.  With ``cfg.oracle`` an extra
    ``method="oracle"``, ``L=0`` row per trial reports the error of the
    generating dictionary under the same OMP coding; it is not zero when
    the dictionary is too coherent for OMP to find the true supports.  Rows come back sorted by ``(method, L, trial)``.
    """
    rows = []
    L_max = max(cfg.L_list)
    for trial in range(cfg.trials):
        Y_pool, Y_test, D_true, _ = gen_synthetic(
            SyntheticSpec(cfg.kspec, L_max, cfg.L_test, cfg.s, cfg.noise_sigma, (cfg.seed, trial))
        )
        if cfg.oracle:
            rows.append(BenchRow(
                "oracle", 0, trial,
                representation_error(Y_pool, D_true, batch_sparse_code(D_true, Y_pool, cfg.s)),
                representation_error(Y_test, D_true, batch_sparse_code(D_true, Y_test, cfg.s)),
                0.0,
            ))
        for L in cfg.L_list:
            Y = Y_pool[:, :L]
            tcfg = dataclasses.replace(cfg.train, s=cfg.s, seed=(cfg.seed, trial, L))
            for method in cfg.methods:
                t0 = time.perf_counter()
                try:
                    res = _train(method, Y, cfg, tcfg)
                    X_train = batch_sparse_code(res.dictionary, Y, cfg.s)
                    train_err = representation_error(Y, res.dictionary, X_train)
                    X_test = batch_sparse_code(res.dictionary, Y_test, cfg.s)
                    test_err = representation_error(Y_test, res.dictionary, X_test)
                except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
                    log.warning("%s failed at L=%d trial=%d: %s", method, L, trial, exc)
                    train_err = test_err = float("nan")
                seconds = time.perf_counter() - t0 if cfg.timing else 0.0
                log.info("%s L=%d trial=%d test_err=%.4g", method, L, trial, test_err)
                rows.append(BenchRow(method, L, trial, train_err, test_err, seconds))
    return sorted(rows, key=BenchRow.key)


def write_bench_csv(rows, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(HEADER)
    for r in rows:
        w.writerow([r.method, r.L, r.trial, f"{r.train_err:.12g}", f"{r.test_err:.12g}", f"{r.seconds:.6f}"])


def mean_test_error(rows, method: str) -> dict[int, float]:
    """Mean test error per training size for ``method`` (NaNs propagate)."""
    out: dict[int, list[float]] = {}
    for r in rows:
        if r.method == method:
            out.setdefault(r.L, []).append(r.test_err)
    return {L: float(np.mean(v)) for L, v in sorted(out.items())}

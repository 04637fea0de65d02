import io
import math
from pathlib import Path

import numpy as np
import pytest

from stark.experiments.bench import BenchConfig, bench_synthetic, mean_test_error, write_bench_csv
from stark.experiments.images import (
    DenoiseConfig,
    PatchConfig,
    denoise,
    extract_patches,
    format_psnr,
    patch_spec,
    psnr,
    read_pnm,
    reconstruct_patches,
    write_pnm,
)
from stark.experiments.synthetic import SyntheticSpec, gen_synthetic, representation_error
from stark.omp import batch_sparse_code
from stark.rearrange import KroneckerSpec
from stark.trainer import TrainConfig

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(11)


# synthetic data ------------------------------------------------------------


@pytest.mark.parametrize(
    "dims, s, m", [("2x4,5x10,5x5", 10, 50), ("4x12,6x8", 5, 24)]
)
def test_gen_synthetic_shapes(dims, s, m):
    ks = KroneckerSpec.parse(dims)
    Y, Yt, D, X = gen_synthetic(SyntheticSpec(ks, 40, 7, s, seed=3))
    assert Y.shape == (m, 40) and Yt.shape == (m, 7)
    assert D.shape == (m, ks.p) and X.shape == (ks.p, 40)
    np.testing.assert_allclose(np.linalg.norm(D, axis=0), 1.0, rtol=1e-12)
    assert np.all(np.count_nonzero(X, axis=0) == s)
    # noiseless columns are exact s-sparse combinations of the atoms
    assert np.linalg.norm(Y - D @ X) <= 1e-12 * np.linalg.norm(Y)


def test_gen_synthetic_seeded_and_noisy():
    ks = KroneckerSpec.parse("2x3,3x4")
    a = gen_synthetic(SyntheticSpec(ks, 20, 5, 2, seed=(1, 2)))
    b = gen_synthetic(SyntheticSpec(ks, 20, 5, 2, seed=(1, 2)))
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)
    Y, _, D, X = gen_synthetic(SyntheticSpec(ks, 20, 5, 2, noise_sigma=0.1, seed=(1, 2)))
    np.testing.assert_array_equal(D, a[2])
    assert 0 < np.linalg.norm(Y - D @ X) < np.linalg.norm(Y)


def test_omp_recovers_noiseless_codes_at_low_coherence():
    # an order-2 instance whose factors are nearly orthogonal: OMP with the
    # generating dictionary reproduces every column
    ks = KroneckerSpec.parse("16x16,16x16")
    Y, _, D, X = gen_synthetic(SyntheticSpec(ks, 50, 1, 2, seed=0))
    Xh = batch_sparse_code(D, Y, 2)
    res = np.linalg.norm(Y - D @ Xh, axis=0) / np.linalg.norm(Y, axis=0)
    assert np.all(res <= 1e-10)


def test_synthetic_spec_validation():
    ks = KroneckerSpec.parse("2x2,2x2")
    for kwargs in ({"L_train": 0}, {"L_test": 0}, {"s": 0}, {"s": 17}, {"noise_sigma": -1.0}):
        base = dict(kspec=ks, L_train=4, L_test=4, s=2)
        base.update(kwargs)
        with pytest.raises(ValueError):
            SyntheticSpec(**base)


def test_representation_error_cases(rng):
    D = rng.standard_normal((6, 9))
    X = rng.standard_normal((9, 4))
    Y = D @ X
    assert representation_error(Y, D, X) == 0.0
    assert representation_error(Y, D, np.zeros_like(X)) == 1.0
    E = Y + rng.standard_normal(Y.shape)
    assert representation_error(3.5 * E, D, 3.5 * X) == pytest.approx(representation_error(E, D, X))
    with pytest.raises(ValueError):
        representation_error(np.zeros((6, 4)), D, X)


# benchmark -----------------------------------------------------------------


def small_bench(**kw):
    ks = KroneckerSpec.parse("2x4,5x10,5x5")
    args = dict(
        L_list=[200], trials=1, L_test=200,
        train=TrainConfig(s=10, max_outer_iters=2), timing=False,
    )
    args.update(kw)
    return BenchConfig(ks, **args)


def test_bench_smoke_and_row_count():
    rows = bench_synthetic(small_bench())
    assert len(rows) == 2 * 1 * 1 + 1
    assert [r.method for r in rows] == ["ksvd", "oracle", "stark"]
    for r in rows:
        assert 0 < r.test_err <= 1 and 0 < r.train_err <= 1
    assert rows[1].L == 0


def test_bench_oracle_row_is_zero_at_low_coherence():
    cfg = BenchConfig(
        KroneckerSpec.parse("16x16,16x16"), L_list=[10], trials=2, methods=[], s=2,
        L_test=50, train=TrainConfig(s=2, max_outer_iters=1), timing=False,
    )
    rows = bench_synthetic(cfg)
    assert [(r.method, r.L, r.trial) for r in rows] == [("oracle", 0, 0), ("oracle", 0, 1)]
    assert all(r.train_err <= 1e-10 and r.test_err <= 1e-10 for r in rows)


def test_bench_csv_is_deterministic():
    out = []
    for _ in range(2):
        fh = io.StringIO()
        write_bench_csv(bench_synthetic(small_bench(L_list=[60, 120], methods=["stark"])), fh)
        out.append(fh.getvalue())
    assert out[0] == out[1]
    lines = out[0].splitlines()
    assert lines[0] == "method,L,trial,train_err,test_err,seconds"
    assert len(lines) == 1 + 2 + 1


def test_bench_records_failures(monkeypatch):
    import stark.experiments.bench as bench

    def boom(*a, **k):
        raise RuntimeError("diverged")

    monkeypatch.setattr(bench, "stark_train", boom)
    rows = bench_synthetic(small_bench(methods=["stark"], oracle=False))
    assert len(rows) == 1 and math.isnan(rows[0].test_err)
    assert math.isnan(mean_test_error(rows, "stark")[200])


def test_bench_rejects_unknown_method():
    with pytest.raises(ValueError):
        small_bench(methods=["khosvd"])


# patches -------------------------------------------------------------------


def test_single_patch():
    img = np.arange(36.0).reshape(6, 6)
    Y, pos = extract_patches(img, PatchConfig(6))
    assert Y.shape == (36, 1)
    np.testing.assert_array_equal(Y[:, 0], img.reshape(-1, order="F"))
    np.testing.assert_array_equal(reconstruct_patches(Y, pos, img.shape, PatchConfig(6)), img)


def test_patch_count_and_round_trip(rng):
    img = rng.uniform(0, 255, (8, 8))
    Y, pos = extract_patches(img, PatchConfig(6))
    assert Y.shape == (36, 9)
    np.testing.assert_allclose(reconstruct_patches(Y, pos, img.shape), img, rtol=1e-14)
    zero = reconstruct_patches(np.zeros_like(Y), pos, img.shape)
    assert not zero.any()


@pytest.mark.parametrize("stride", [1, 2, 3])
def test_round_trip_with_stride_covers_image(rng, stride):
    img = rng.uniform(0, 255, (11, 13))
    cfg = PatchConfig(4, stride)
    Y, pos = extract_patches(img, cfg)
    np.testing.assert_allclose(reconstruct_patches(Y, pos, img.shape, cfg), img, rtol=1e-13)


def test_rgb_patches_as_tensors_and_per_channel(rng):
    img = rng.uniform(0, 255, (7, 7, 3))
    Y, pos = extract_patches(img, PatchConfig(6))
    assert Y.shape == (108, 4)
    np.testing.assert_array_equal(Y[:, 0], img[:6, :6, :].reshape(-1, order="F"))
    np.testing.assert_allclose(reconstruct_patches(Y, pos, img.shape), img, rtol=1e-14)
    cfg = PatchConfig(6, channels_as_mode=False)
    Y2, pos2 = extract_patches(img, cfg)
    assert Y2.shape == (36, 12) and pos2.shape == (12, 3)
    np.testing.assert_allclose(reconstruct_patches(Y2, pos2, img.shape, cfg), img, rtol=1e-14)


def test_patch_errors(rng):
    with pytest.raises(ValueError):
        extract_patches(np.zeros((5, 5)), PatchConfig(6))
    Y, pos = extract_patches(np.zeros((8, 8)), PatchConfig(6))
    with pytest.raises(ValueError):
        reconstruct_patches(Y, pos + 3, (8, 8))


def test_patch_spec_orders_factors():
    assert str(patch_spec(PatchConfig(6), 1, (10, 12))) == "6x12,6x10"
    assert patch_spec(PatchConfig(6), 3, (10, 10, 3)).factor_dims == ((3, 3), (6, 10), (6, 10))
    with pytest.raises(ValueError):
        patch_spec(PatchConfig(6), 3, (10, 10))


# metrics and I/O -----------------------------------------------------------


def test_psnr_values(rng):
    ref = rng.integers(0, 255, (16, 16)).astype(float)
    assert psnr(ref, ref + 1) == pytest.approx(10 * np.log10(255**2), abs=1e-12)
    assert psnr(ref, ref + 1) == pytest.approx(48.1308036, abs=1e-6)
    assert math.isinf(psnr(ref, ref)) and format_psnr(psnr(ref, ref)) == "perfect"
    a = rng.uniform(0, 255, (9, 7, 3))
    b = rng.uniform(0, 255, (9, 7, 3))
    oracle = 20 * np.log10(255) - 10 * np.log10(np.mean((a - b) ** 2))
    assert psnr(a, b) == pytest.approx(oracle, abs=1e-10)
    with pytest.raises(ValueError):
        psnr(a, b[:, :6])


@pytest.mark.parametrize("shape", [(5, 7), (5, 7, 3), (5, 7, 2)])
def test_pnm_round_trip(tmp_path, rng, shape):
    img = rng.integers(0, 256, shape).astype(np.uint8)
    path = tmp_path / "img.pnm"
    write_pnm(path, img)
    np.testing.assert_array_equal(read_pnm(path), img)


def test_pnm_rejects_garbage(tmp_path):
    path = tmp_path / "bad.pnm"
    path.write_bytes(b"P3\n1 1\n255\n0 0 0\n")
    with pytest.raises(ValueError):
        read_pnm(path)


# denoising -----------------------------------------------------------------


@pytest.fixture(scope="module")
def crop():
    return read_pnm(DATA / "cameraman128.pgm")[:40, :40].astype(float)


FAST = dict(n_train=600, max_outer_iters=3)


@pytest.mark.parametrize("method", ["stark", "ksvd"])
def test_denoise_noiseless_is_near_lossless(crop, method):
    # sigma = 0 codes to the sparsity cap; 20 of 36 coefficients is enough
    out, noisy, rep = denoise(crop, 0.0, method, DenoiseConfig(**FAST, s=20))
    np.testing.assert_array_equal(noisy, crop)
    assert math.isinf(rep.psnr_noisy)
    assert rep.psnr_denoised >= 40


def test_denoise_is_deterministic_and_improves(crop):
    cfg = DenoiseConfig(**FAST, seed=4)
    a, noisy, rep = denoise(crop, 25.0, "stark", cfg)
    b, _, _ = denoise(crop, 25.0, "stark", cfg)
    np.testing.assert_array_equal(a, b)
    assert rep.psnr_denoised > rep.psnr_noisy
    assert a.min() >= 0 and a.max() <= 255
    assert rep.lines()[0] == "method=stark"


def test_denoise_rejects_bad_input(crop):
    with pytest.raises(ValueError):
        denoise(crop, -1.0)
    with pytest.raises(ValueError):
        denoise(crop, 1.0, "khosvd")
    with pytest.raises(ValueError):
        denoise(crop, 1.0, "stark", DenoiseConfig(atoms=(10, 10, 3)))

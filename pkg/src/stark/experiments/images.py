"""Patch-based image denoising with learned dictionaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..admm import SolveParams
from ..ksvd import ksvd_train
from ..omp import batch_sparse_code
from ..rearrange import KroneckerSpec
from ..trainer import TrainConfig, stark_train

PEAK = 255.0


# PNM I/O ------------------------------------------------------------------


def _read_token(fh) -> bytes:
    tok = b""
    while True:
        c = fh.read(1)
        if not c:
            return tok
        if c == b"#":
            fh.readline()
            continue
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def read_pnm(path: str | Path) -> np.ndarray:
    """Read a binary PGM (P5), PPM (P6) or PAM (P7) with 8-bit samples.

    Returns ``uint8`` of shape ``(H, W)`` for one channel, else ``(H, W, C)``.
    """
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic in (b"P5", b"P6"):
            w, h, maxval = (int(_read_token(fh)) for _ in range(3))
            channels = 1 if magic == b"P5" else 3
        elif magic == b"P7":
            fields = {}
            fh.readline()
            while True:
                line = fh.readline()
                if not line:
                    raise ValueError(f"{path}: truncated PAM header")
                line = line.strip()
                if line == b"ENDHDR":
                    break
                if line and not line.startswith(b"#"):
                    key, _, val = line.partition(b" ")
                    fields[key] = val.strip()
            w, h = int(fields[b"WIDTH"]), int(fields[b"HEIGHT"])
            channels, maxval = int(fields[b"DEPTH"]), int(fields[b"MAXVAL"])
        else:
            raise ValueError(f"{path}: unsupported image format {magic!r}")
        if maxval != 255:
            raise ValueError(f"{path}: only 8-bit images are supported (maxval {maxval})")
        data = np.frombuffer(fh.read(w * h * channels), dtype=np.uint8)
    if data.size != w * h * channels:
        raise ValueError(f"{path}: truncated pixel data")
    img = data.reshape(h, w, channels)
    return img[:, :, 0] if channels == 1 else img


def write_pnm(path: str | Path, img) -> None:
    """Write ``img`` as PGM, PPM or (two channels) PAM after rounding and clipping."""
    arr = quantize(img)
    h, w = arr.shape[:2]
    channels = 1 if arr.ndim == 2 else arr.shape[2]
    if channels == 1:
        header = f"P5\n{w} {h}\n255\n"
    elif channels == 3:
        header = f"P6\n{w} {h}\n255\n"
    else:
        header = (
            f"P7\nWIDTH {w}\nHEIGHT {h}\nDEPTH {channels}\nMAXVAL 255\n"
            "TUPLTYPE GRAYSCALE_ALPHA\nENDHDR\n"
        )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(arr).tobytes())


def quantize(img) -> np.ndarray:
    """Round and clip to 8-bit samples."""
    return np.clip(np.rint(np.asarray(img, dtype=np.float64)), 0, 255).astype(np.uint8)


# patches -----------------------------------------------------------------


@dataclass(frozen=True)
class PatchConfig:
    patch_size: int = 6
    stride: int = 1
    channels_as_mode: bool = True

    def __post_init__(self):
        if self.patch_size < 1 or self.stride < 1:
            raise ValueError("patch_size and stride must be positive")


def _as_hwc(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        return arr[:, :, None]
    if arr.ndim != 3 or not 1 <= arr.shape[2] <= 3:
        raise ValueError(f"expected an (H, W) or (H, W, C<=3) image, got {arr.shape}")
    return arr


def _starts(size: int, patch: int, stride: int) -> np.ndarray:
    starts = np.arange(0, size - patch + 1, stride)
    if starts[-1] != size - patch:
        starts = np.append(starts, size - patch)
    return starts


def extract_patches(img, cfg: PatchConfig = PatchConfig()):
    """Vectorized overlapping patches.

    Returns ``(Y, positions)``.  With ``channels_as_mode`` (or a single
    channel) each column of ``Y`` is ``vec`` of a ``ps x ps x C`` patch and
    ``positions`` has rows ``(row, col)``; otherwise each channel is
    patched separately and rows are ``(row, col, channel)``.
    """
    arr = _as_hwc(img)
    h, w, c = arr.shape
    ps = cfg.patch_size
    if ps > min(h, w):
        raise ValueError(f"patch size {ps} exceeds image size {h}x{w}")
    rows, cols = _starts(h, ps, cfg.stride), _starts(w, ps, cfg.stride)
    win = sliding_window_view(arr, (ps, ps), axis=(0, 1))[rows][:, cols]  # (R, Cc, c, ps, ps)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    if cfg.channels_as_mode or c == 1:
        # column-major vec of (ps, ps, c): row index fastest, channel slowest
        Y = win.transpose(0, 1, 2, 4, 3).reshape(len(rows) * len(cols), -1).T
        positions = np.column_stack([rr.ravel(), cc.ravel()])
    else:
        Y = win.transpose(2, 0, 1, 4, 3).reshape(c * len(rows) * len(cols), -1).T
        ch = np.repeat(np.arange(c), rr.size)
        positions = np.column_stack([np.tile(rr.ravel(), c), np.tile(cc.ravel(), c), ch])
    return np.ascontiguousarray(Y), positions


def reconstruct_patches(Y, positions, shape, cfg: PatchConfig = PatchConfig()) -> np.ndarray:
    """Average overlapping patches back into an image of ``shape``."""
    shape = tuple(shape)
    h, w = shape[:2]
    c = 1 if len(shape) == 2 else shape[2]
    ps = cfg.patch_size
    positions = np.asarray(positions)
    if positions.size and (
        positions[:, 0].min() < 0 or positions[:, 1].min() < 0
        or positions[:, 0].max() > h - ps or positions[:, 1].max() > w - ps
    ):
        raise ValueError("patch position out of bounds")
    acc = np.zeros((h, w, c))
    cnt = np.zeros((h, w, c))
    if positions.shape[1] == 2:
        patches = np.asarray(Y).T.reshape(-1, c, ps, ps).transpose(0, 3, 2, 1)  # (L, ps, ps, c)
        for (r, q), patch in zip(positions, patches):
            acc[r:r + ps, q:q + ps] += patch
            cnt[r:r + ps, q:q + ps] += 1
    else:
        patches = np.asarray(Y).T.reshape(-1, ps, ps).transpose(0, 2, 1)
        for (r, q, ch), patch in zip(positions, patches):
            acc[r:r + ps, q:q + ps, ch] += patch
            cnt[r:r + ps, q:q + ps, ch] += 1
    out = np.divide(acc, cnt, out=np.zeros_like(acc), where=cnt > 0)
    return out[:, :, 0] if len(shape) == 2 else out


def patch_spec(cfg: PatchConfig, channels: int, atoms: tuple[int, ...]) -> KroneckerSpec:
    """Kronecker spec for vectorized patches.

    ``atoms`` gives the number of atoms per patch mode in data order
    (rows, cols[, channels]).  Since ``vec`` runs the first mode fastest,
    the first Kronecker factor acts on the last patch mode.
    """
    dims = [cfg.patch_size, cfg.patch_size]
    if cfg.channels_as_mode and channels > 1:
        dims.append(channels)
    if len(atoms) != len(dims):
        raise ValueError(f"need {len(dims)} atom counts, got {len(atoms)}")
    return KroneckerSpec(tuple(zip(dims, atoms))[::-1])


# metrics -----------------------------------------------------------------


def psnr(reference, test, peak: float = PEAK) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    ref = np.asarray(reference, dtype=np.float64)
    tst = np.asarray(test, dtype=np.float64)
    if ref.shape != tst.shape:
        raise ValueError(f"image shapes differ: {ref.shape} vs {tst.shape}")
    mse = np.mean((ref - tst) ** 2)
    if mse == 0:
        return math.inf
    return float(10 * np.log10(peak**2 / mse))


def format_psnr(value: float) -> str:
    return "perfect" if math.isinf(value) else f"{value:.4f}"


# denoising ---------------------------------------------------------------


@dataclass
class DenoiseConfig:
    """Denoising settings.

    ``atoms`` is the number of atoms per patch mode; K-SVD uses their
    product.  Patches are coded to the residual target
    ``noise_gain * sigma * sqrt(m)`` with at most ``s`` atoms.
    """

    patch: PatchConfig = field(default_factory=PatchConfig)
    s: int = 10
    atoms: tuple[int, ...] = (10, 10)
    n_train: int = 4000
    max_outer_iters: int = 15
    lam_scale: float = 0.8
    gamma_scale: float = 1.0
    admm: SolveParams = field(default_factory=SolveParams)
    noise_gain: float = 1.15
    remove_mean: bool = True
    seed: int = 0


@dataclass
class DenoiseReport:
    method: str
    sigma: float
    psnr_noisy: float
    psnr_denoised: float
    outer_iters: int

    def lines(self) -> list[str]:
        return [
            f"method={self.method}",
            f"sigma={self.sigma:g}",
            f"psnr_noisy={format_psnr(self.psnr_noisy)}",
            f"psnr_denoised={format_psnr(self.psnr_denoised)}",
            f"outer_iters={self.outer_iters}",
        ]


def add_noise(img, sigma: float, rng) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    return arr + sigma * rng.standard_normal(arr.shape) if sigma > 0 else arr.copy()


def denoise(img, sigma: float, method: str = "stark", cfg: DenoiseConfig | None = None):
    """Corrupt ``img`` with Gaussian noise and denoise it.

    A dictionary is trained on a random subset of the noisy patches, every
    patch is sparse-coded against it and the estimates are averaged back
    into the image.

    Returns
    -------
    denoised : ndarray
        Float image clipped to ``[0, 255]``.
    noisy : ndarray
    report : DenoiseReport
    """
    cfg = cfg or DenoiseConfig()
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if method not in ("stark", "ksvd"):
        raise ValueError(f"unknown method {method!r}")
    clean = np.asarray(img, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    noisy = add_noise(clean, sigma, rng)

    Y, positions = extract_patches(noisy, cfg.patch)
    means = Y.mean(axis=0) if cfg.remove_mean else np.zeros(Y.shape[1])
    Yc = Y - means
    m = Y.shape[0]
    channels = 1 if clean.ndim == 2 else clean.shape[2]
    spec = patch_spec(cfg.patch, channels, cfg.atoms)
    if spec.m != m:
        raise ValueError(f"atoms {cfg.atoms} do not match patches with {m} samples")

    tol = cfg.noise_gain * sigma * np.sqrt(m) if sigma > 0 else None
    n_train = min(cfg.n_train, Y.shape[1])
    train = Yc[:, np.sort(rng.choice(Y.shape[1], n_train, replace=False))]
    tcfg = TrainConfig(
        s=cfg.s,
        lam_scale=cfg.lam_scale,
        gamma_scale=cfg.gamma_scale,
        max_outer_iters=cfg.max_outer_iters,
        admm=cfg.admm,
        seed=int(rng.integers(2**31)),
        omp_tol=tol,
        timing=False,
    )
    if method == "stark":
        result = stark_train(train, spec, tcfg)
    else:
        result = ksvd_train(train, spec.p, tcfg)

    X = batch_sparse_code(result.dictionary, Yc, cfg.s, tol)
    estimate = result.dictionary @ X + means
    out = np.clip(reconstruct_patches(estimate, positions, clean.shape, cfg.patch), 0, PEAK)
    report = DenoiseReport(method, sigma, psnr(clean, noisy), psnr(clean, out), len(result.history))
    return out, noisy, report

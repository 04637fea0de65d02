"""Command-line interface: ``stark {gen,train,bench,denoise}``.

Every subcommand accepts ``--config FILE``, a flat ``key = value`` text
file whose keys are the long option names (``max-iters`` or ``max_iters``).
Options given on the command line override the file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .admm import SolveParams
from .experiments.bench import BenchConfig, bench_synthetic, write_bench_csv
from .experiments.images import DenoiseConfig, PatchConfig, denoise, read_pnm, write_pnm
from .experiments.synthetic import SyntheticSpec, gen_synthetic
from .ksvd import ksvd_train
from .rearrange import KroneckerSpec
from .tensor import load_tensor, save_tensor
from .trainer import TrainConfig, stark_train

log = logging.getLogger("stark")

PAPER_SPEC = "2x4,5x10,5x5"


def parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def int_list(text: str) -> list[int]:
    return [int(v) for v in str(text).replace(" ", "").split(",") if v]


def str_list(text: str) -> list[str]:
    return [v for v in str(text).replace(" ", "").split(",") if v]


def read_config(path) -> dict[str, str]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"{path}:{n}: expected key = value")
        out[key.strip().replace("_", "-")] = value.strip()
    return out


# argument definitions -----------------------------------------------------


def _train_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, help="nuclear-norm weight (default: scaled)")
    p.add_argument("--gamma", type=float, help="ADMM penalty (default: scaled)")
    p.add_argument("--lam-scale", type=float, default=TrainConfig.lam_scale)
    p.add_argument("--gamma-scale", type=float, default=TrainConfig.gamma_scale)
    p.add_argument("--max-iters", type=int, default=TrainConfig.max_outer_iters)
    p.add_argument("--admm-iters", type=int, default=SolveParams.max_admm_iters)
    p.add_argument("--admm-tol", type=float, default=SolveParams.dual_change_tol)
    p.add_argument("--outer-tol", type=float, default=TrainConfig.outer_tol)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stark", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic Kronecker-structured dataset")
    g.add_argument("--config")
    g.add_argument("--spec", default=PAPER_SPEC)
    g.add_argument("--L", type=int, default=1000, help="training signals")
    g.add_argument("--L-test", type=int, default=0, help="held-out signals (0: none)")
    g.add_argument("--s", type=int, default=10)
    g.add_argument("--noise-sigma", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", default=".")

    t = sub.add_parser("train", help="learn a dictionary from a DTEN1 data file")
    t.add_argument("--config")
    t.add_argument("--data", help="DTEN1 file: m x L, or m_1 x ... x m_N x L")
    t.add_argument("--spec", default=PAPER_SPEC)
    t.add_argument("--method", choices=("stark", "ksvd"), default="stark")
    t.add_argument("--s", type=int, default=10)
    t.add_argument("--seed", type=int, default=0)
    _train_options(t)
    t.add_argument("--timing", type=parse_bool, default=True)
    t.add_argument("--out", default="dictionary.dten")
    t.add_argument("--history", default="history.csv")

    b = sub.add_parser("bench", help="test error vs. training size (CSV)")
    b.add_argument("--config")
    b.add_argument("--spec", default=PAPER_SPEC)
    b.add_argument("--L-list", type=int_list, default=[250, 500, 1000, 2000])
    b.add_argument("--L-test", type=int, default=2000)
    b.add_argument("--trials", type=int, default=5)
    b.add_argument("--methods", type=str_list, default=["stark", "ksvd"])
    b.add_argument("--s", type=int, default=10)
    b.add_argument("--noise-sigma", type=float, default=0.0)
    b.add_argument("--seed", type=int, default=0)
    _train_options(b)
    b.add_argument("--oracle", type=parse_bool, default=True)
    b.add_argument("--timing", type=parse_bool, default=True)
    b.add_argument("--out", help="CSV path (default: stdout)")

    d = sub.add_parser("denoise", help="denoise a PGM/PPM image")
    d.add_argument("--config")
    d.add_argument("--image")
    d.add_argument("--sigma", type=float, default=50.0)
    d.add_argument("--method", choices=("stark", "ksvd"), default="stark")
    d.add_argument("--patch", type=int, default=6)
    d.add_argument("--stride", type=int, default=1)
    d.add_argument("--channels-as-mode", type=parse_bool, default=True)
    d.add_argument("--s", type=int, default=10)
    d.add_argument("--atoms", type=int_list, default=None, help="atoms per patch mode, e.g. 10,10")
    d.add_argument("--n-train", type=int, default=4000)
    d.add_argument("--seed", type=int, default=0)
    _train_options(d)
    d.set_defaults(
        max_iters=DenoiseConfig.max_outer_iters,
        lam_scale=DenoiseConfig.lam_scale,
        gamma_scale=DenoiseConfig.gamma_scale,
    )
    d.add_argument("--out", default="denoised.pnm")
    d.add_argument("--noisy-out")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    """Parse ``argv``, using the ``--config`` file (if any) as defaults."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.option_strings[0][2:]: a for a in subparser._actions if a.option_strings[0].startswith("--")}
    defaults = {}
    for key, text in read_config(args.config).items():
        action = actions.get(key)
        if action is None or key == "config":
            parser.error(f"{args.config}: unknown key {key!r} for '{args.command}'")
        try:
            value = action.type(text) if action.type else text
        except (ValueError, argparse.ArgumentTypeError) as exc:
            parser.error(f"{args.config}: bad value for {key!r}: {exc}")
        if action.choices and value not in action.choices:
            parser.error(f"{args.config}: {key!r} must be one of {sorted(action.choices)}")
        defaults[action.dest] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        s=args.s,
        lam=args.lam,
        gamma=args.gamma,
        lam_scale=args.lam_scale,
        gamma_scale=args.gamma_scale,
        outer_tol=args.outer_tol,
        max_outer_iters=args.max_iters,
        admm=SolveParams(args.admm_iters, args.admm_tol),
        seed=args.seed,
        timing=getattr(args, "timing", True),
    )


# commands -----------------------------------------------------------------


def cmd_gen(args) -> int:
    kspec = KroneckerSpec.parse(args.spec)
    Y, Y_test, D, X = gen_synthetic(
        SyntheticSpec(kspec, args.L, max(args.L_test, 1), args.s, args.noise_sigma, args.seed)
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_tensor(out / "train.dten", Y)
    save_tensor(out / "dictionary.dten", D)
    save_tensor(out / "codes.dten", X)
    if args.L_test > 0:
        save_tensor(out / "test.dten", Y_test)
    log.info("wrote %s", out)
    return 0


def load_signals(path, m: int) -> np.ndarray:
    """Signals as columns: accepts ``m x L`` or ``m_1 x ... x m_N x L`` tensors."""
    data = load_tensor(path)
    if data.ndim < 2:
        raise ValueError(f"{path}: need at least 2 dimensions, got {data.ndim}")
    Y = data.reshape(-1, data.shape[-1], order="F")
    if Y.shape[0] != m:
        raise ValueError(f"{path}: signals have {Y.shape[0]} samples, spec expects {m}")
    return Y


def cmd_train(args) -> int:
    if not args.data:
        raise SystemExit("train: --data is required")
    kspec = KroneckerSpec.parse(args.spec)
    Y = load_signals(args.data, kspec.m)
    cfg = _train_config(args)
    res = stark_train(Y, kspec, cfg) if args.method == "stark" else ksvd_train(Y, kspec.p, cfg)
    save_tensor(args.out, res.dictionary)
    with open(args.history, "w", newline="") as fh:
        res.history.write_csv(fh)
    rel = float(np.linalg.norm(Y - res.dictionary @ res.codes) / np.linalg.norm(Y))
    print(f"rep_error={rel:.6g} outer_iters={len(res.history)}", file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    cfg = BenchConfig(
        KroneckerSpec.parse(args.spec),
        L_list=args.L_list,
        trials=args.trials,
        methods=args.methods,
        s=args.s,
        L_test=args.L_test,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
        train=_train_config(args),
        oracle=args.oracle,
        timing=args.timing,
    )
    rows = bench_synthetic(cfg)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_bench_csv(rows, fh)
    else:
        write_bench_csv(rows, sys.stdout)
    return 0


def cmd_denoise(args) -> int:
    if not args.image:
        raise SystemExit("denoise: --image is required")
    img = read_pnm(args.image)
    channels = 1 if img.ndim == 2 else img.shape[2]
    patch = PatchConfig(args.patch, args.stride, args.channels_as_mode)
    modes = 3 if args.channels_as_mode and channels > 1 else 2
    atoms = tuple(args.atoms) if args.atoms else (10, 10, channels)[:modes]
    cfg = DenoiseConfig(
        patch=patch,
        s=args.s,
        atoms=atoms,
        n_train=args.n_train,
        max_outer_iters=args.max_iters,
        lam_scale=args.lam_scale,
        gamma_scale=args.gamma_scale,
        admm=SolveParams(args.admm_iters, args.admm_tol),
        seed=args.seed,
    )
    out, noisy, report = denoise(img, args.sigma, args.method, cfg)
    write_pnm(args.out, out)
    if args.noisy_out:
        write_pnm(args.noisy_out, noisy)
    for line in report.lines():
        print(line, file=sys.stderr)
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "bench": cmd_bench, "denoise": cmd_denoise}


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config(parser, argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"stark {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

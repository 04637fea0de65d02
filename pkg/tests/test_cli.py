from pathlib import Path

import numpy as np
import pytest

from stark.cli import main, read_config
from stark.experiments.images import read_pnm, write_pnm
from stark.tensor import load_tensor, save_tensor

DATA = Path(__file__).parent / "data"


def test_read_config(tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text("# comment\nmax_iters = 4\n\nL-list=1,2  # trailing\n")
    assert read_config(cfg) == {"max-iters": "4", "L-list": "1,2"}
    cfg.write_text("oops\n")
    with pytest.raises(ValueError):
        read_config(cfg)


def test_gen_then_train(tmp_path, capsys):
    out = tmp_path / "data"
    assert main(["gen", "--spec", "2x3,3x4", "--L", "40", "--L-test", "5", "--s", "2",
                 "--seed", "1", "--out-dir", str(out)]) == 0
    Y = load_tensor(out / "train.dten")
    D = load_tensor(out / "dictionary.dten")
    X = load_tensor(out / "codes.dten")
    assert Y.shape == (6, 40) and D.shape == (6, 12) and load_tensor(out / "test.dten").shape == (6, 5)
    np.testing.assert_allclose(D @ X, Y, atol=1e-12)

    dic, hist = tmp_path / "D.dten", tmp_path / "h.csv"
    assert main(["train", "--data", str(out / "train.dten"), "--spec", "2x3,3x4", "--s", "2",
                 "--max-iters", "3", "--out", str(dic), "--history", str(hist)]) == 0
    learned = load_tensor(dic)
    assert learned.shape == (6, 12)
    np.testing.assert_allclose(np.linalg.norm(learned, axis=0), 1.0, rtol=1e-10)
    rows = hist.read_text().splitlines()
    assert rows[0] == "iter,rep_error,objective,inner_iters,seconds,replaced_atoms"
    assert 2 <= len(rows) <= 4
    assert "rep_error=" in capsys.readouterr().err


def test_train_accepts_tensor_layout(tmp_path):
    rng = np.random.default_rng(0)
    T = rng.standard_normal((3, 2, 30))  # m_1 x m_2 x L
    save_tensor(tmp_path / "t.dten", T)
    assert main(["train", "--data", str(tmp_path / "t.dten"), "--spec", "3x3,2x2", "--s", "1",
                 "--max-iters", "1", "--method", "ksvd",
                 "--out", str(tmp_path / "D.dten"), "--history", str(tmp_path / "h.csv")]) == 0
    assert load_tensor(tmp_path / "D.dten").shape == (6, 6)


def test_train_rejects_mismatched_data(tmp_path, capsys):
    save_tensor(tmp_path / "t.dten", np.ones((5, 4)))
    assert main(["train", "--data", str(tmp_path / "t.dten"), "--spec", "2x2,2x2"]) == 1
    assert "spec expects 4" in capsys.readouterr().err


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "bench.cfg"
    cfg.write_text(
        "spec = 2x3,3x4\nL_list = 20,40\ntrials = 2\nmethods = stark\ns = 2\n"
        "L_test = 30\nmax_iters = 2\ntiming = off\n"
    )
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["bench", "--config", str(cfg), "--out", str(a)]) == 0
    lines = a.read_text().splitlines()
    assert lines[0] == "method,L,trial,train_err,test_err,seconds"
    assert len(lines) == 1 + 2 * 2 + 2
    # command-line flags win over the file
    assert main(["bench", "--config", str(cfg), "--trials", "1", "--out", str(b)]) == 0
    assert len(b.read_text().splitlines()) == 1 + 2 + 1


def test_bench_to_stdout_is_deterministic(tmp_path, capsys):
    args = ["bench", "--spec", "2x3,3x4", "--L-list", "20", "--trials", "1", "--s", "2",
            "--L-test", "10", "--max-iters", "2", "--timing", "false"]
    main(args)
    first = capsys.readouterr().out
    main(args)
    assert capsys.readouterr().out == first
    assert first.count("\n") == 1 + 3


def test_config_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "x.cfg"
    cfg.write_text("frobnicate = 1\n")
    with pytest.raises(SystemExit):
        main(["bench", "--config", str(cfg)])
    cfg.write_text("method = nope\n")
    with pytest.raises(SystemExit):
        main(["denoise", "--config", str(cfg)])


def test_denoise_command(tmp_path, capsys):
    img = read_pnm(DATA / "cameraman128.pgm")[:24, :24]
    src = tmp_path / "in.pgm"
    write_pnm(src, img)
    outs = []
    for k in range(2):
        out = tmp_path / f"out{k}.pgm"
        assert main(["denoise", "--image", str(src), "--sigma", "20", "--method", "stark",
                     "--patch", "6", "--s", "5", "--n-train", "200", "--max-iters", "2",
                     "--out", str(out), "--noisy-out", str(tmp_path / "noisy.pgm")]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert read_pnm(tmp_path / "out0.pgm").shape == (24, 24)
    err = capsys.readouterr().err
    assert "psnr_noisy=" in err and "psnr_denoised=" in err

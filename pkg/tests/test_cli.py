import filecmp
import json
import re

import numpy as np
import pytest
import scipy.linalg

from descrambler import deer, netlab
from descrambler.cli import main
from descrambler.core import FeedForwardNet, load_dataset, load_matrix, load_network, save_matrix, save_network
from descrambler.spectral import build_second_derivative


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture
def data(tmp_path):
    out = tmp_path / "data"
    assert run("gen-deer", "--n", 60, "--time-points", 16, "--dist-points", 12, "--seed", 1, "--out", out) == 0
    return out


def test_gen_deer_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("gen-deer", "--n", 10, "--seed", 1, "--out", tmp_path / name) == 0
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", ["inputs.dmat", "meta"], shallow=False)
    assert not mismatch and not errors


def test_gen_deer_missing_out(capsys):
    assert run("gen-deer", "--n", 3) == 2
    assert "usage" in capsys.readouterr().err


def test_gen_deer_shape(tmp_path):
    assert run("gen-deer", "--n", 2000, "--time-points", 64, "--out", tmp_path / "d") == 0
    assert load_matrix(tmp_path / "d" / "inputs.dmat").shape == (64, 2000)


def test_gen_deer_config_error(tmp_path, capsys):
    assert run("gen-deer", "--n", 3, "--r-min", -1, "--out", tmp_path / "d") == 2
    err = capsys.readouterr().err
    assert re.search(r"^error: code=2 type=ConfigError message=", err, re.M)


def test_train_zero_epochs_is_seeded_init(tmp_path, data):
    assert run("train", "--data", data, "--out", tmp_path / "n.net", "--topology", "8:tanh,12:logsig", "--epochs", 0, "--seed", 4) == 0
    init = netlab.glorot_init([(8, "tanh"), (12, "logsig")], 16, np.random.default_rng(4))
    assert load_network(tmp_path / "n.net") == init
    report = json.loads((tmp_path / "n.net.report.json").read_text())
    assert report["seed"] == 4


def test_train_bit_identical(tmp_path, data):
    for name in ("a", "b"):
        run("train", "--data", data, "--out", tmp_path / name / "n.net", "--topology", "8:tanh,12:logsig", "--epochs", 3)
    for f in ("n.net", "n.layer1.dmat", "n.layer2.dmat"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_train_topology_mismatch(tmp_path, data):
    assert run("train", "--data", data, "--out", tmp_path / "n.net", "--topology", "8:tanh,5:logsig") == 2


def test_train_divergence_exit_3(tmp_path, data, capsys):
    with np.errstate(over="ignore", invalid="ignore"):
        code = run("train", "--data", data, "--out", tmp_path / "n.net", "--topology", "12:identity", "--lr", 1e300, "--epochs", 2)
    assert code == 3
    assert "type=DivergenceError" in capsys.readouterr().err


def test_descramble_constant_signal(tmp_path, data):
    net = FeedForwardNet.from_weights([np.full((8, 16), 0.3), np.ones((12, 8))], ["tanh", "logsig"])
    save_network(net, tmp_path / "c.net")
    assert run("descramble", "--net", tmp_path / "c.net", "--data", data, "--out", tmp_path / "o") == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["iterations"] == 1 and report["converged"]
    # zero up to roundoff on the scale of ||D||^2 ||S||^2
    S = net.weights[0] @ load_dataset(data).inputs
    scale = np.linalg.norm(build_second_derivative(8).d) ** 2 * np.linalg.norm(S) ** 2
    assert abs(report["final_value"]) <= 1e-14 * scale


def test_descramble_then_analyze(tmp_path, data, capsys):
    run("train", "--data", data, "--out", tmp_path / "n.net", "--topology", "8:tanh,12:logsig", "--epochs", 2)
    assert run("descramble", "--net", tmp_path / "n.net", "--data", data, "--max-iters", 50, "--out", tmp_path / "o") == 0
    assert (tmp_path / "o" / "descrambled.dmat").exists()
    capsys.readouterr()
    assert run("analyze", "det-sign", "--in", tmp_path / "o" / "P.dmat") == 0
    captured = capsys.readouterr()
    assert captured.out.strip() == "+1"
    resid = float(re.search(r"orthogonality_residual=(\S+)", captured.err).group(1))
    assert resid <= 1e-10 * 8


def test_descramble_post_and_mdns(tmp_path, data):
    run("train", "--data", data, "--out", tmp_path / "n.net", "--topology", "8:tanh,12:logsig", "--epochs", 1)
    assert run("descramble", "--net", tmp_path / "n.net", "--data", data, "--position", "post", "--alpha", 1,
               "--d-kind", "finite-difference", "--max-iters", 20, "--out", tmp_path / "p") == 0
    assert (tmp_path / "p" / "descrambled_next.dmat").exists()
    assert run("descramble", "--net", tmp_path / "n.net", "--functional", "mdns", "--layer", 2,
               "--max-iters", 20, "--out", tmp_path / "m") == 0
    assert json.loads((tmp_path / "m" / "report.json").read_text())["functional"] == "mdns"


def test_descramble_bad_layer(tmp_path, data):
    run("train", "--data", data, "--out", tmp_path / "n.net", "--topology", "8:tanh,12:logsig", "--epochs", 0)
    assert run("descramble", "--net", tmp_path / "n.net", "--data", data, "--layer", 99, "--out", tmp_path / "o") == 2
    assert run("descramble", "--net", tmp_path / "n.net", "--out", tmp_path / "o") == 2


def test_analyze_identity_det(tmp_path, capsys):
    save_matrix(np.eye(4), tmp_path / "i.dmat")
    assert run("analyze", "det-sign", "--in", tmp_path / "i.dmat") == 0
    assert capsys.readouterr().out.strip() == "+1"


def test_analyze_svd(tmp_path, rng):
    save_matrix(rng.standard_normal((6, 4)), tmp_path / "w.dmat")
    assert run("analyze", "svd", "--in", tmp_path / "w.dmat", "--out", tmp_path / "s") == 0
    for f in ("U.dmat", "S.csv", "V.dmat"):
        assert (tmp_path / "s" / f).exists()
    s = np.loadtxt(tmp_path / "s" / "S.csv", delimiter=",", skiprows=1)[:, 1]
    assert np.all(np.diff(s) <= 0)


def test_analyze_circulant(tmp_path, rng, capsys):
    save_matrix(scipy.linalg.circulant(rng.standard_normal(12)), tmp_path / "c.dmat")
    assert run("analyze", "fourier-conjugate", "--in", tmp_path / "c.dmat", "--out", tmp_path / "f") == 0
    report = json.loads((tmp_path / "f" / "report.json").read_text())
    assert report["offdiagonal_max"] < 1e-8
    assert (tmp_path / "f" / "row_profile.csv").exists()


def test_analyze_other_commands(tmp_path, rng):
    save_matrix(rng.standard_normal((6, 20)), tmp_path / "w.dmat")
    assert run("analyze", "spectrum2d", "--in", tmp_path / "w.dmat", "--out", tmp_path / "a") == 0
    assert load_matrix(tmp_path / "a" / "spectrum2d.dmat").shape == (6, 20)
    assert run("analyze", "autocorr", "--in", tmp_path / "w.dmat", "--out", tmp_path / "a") == 0
    assert run("analyze", "block-average", "--in", tmp_path / "w.dmat", "--block-cols", 5, "--sv-keep", 2, "--out", tmp_path / "a") == 0
    assert load_matrix(tmp_path / "a" / "block_average.dmat").shape == (6, 5)


def test_heatmap(tmp_path):
    save_matrix(np.array([[1.0, 2.0], [3.0, 4.0]]), tmp_path / "m.dmat")
    assert run("heatmap", "--in", tmp_path / "m.dmat", "--out", tmp_path / "m.svg") == 0
    assert (tmp_path / "m.svg").read_text().count("<rect") == 4
    save_matrix(np.full((3, 3), 7.0), tmp_path / "c.dmat")
    run("heatmap", "--in", tmp_path / "c.dmat", "--out", tmp_path / "c.svg")
    fills = set(re.findall(r'fill="(#[0-9a-f]{6})"', (tmp_path / "c.svg").read_text()))
    assert len(fills) == 1


def test_heatmap_nan(tmp_path):
    (tmp_path / "n.dmat").write_text("2 2\n1 nan\n0 1\n")
    assert run("heatmap", "--in", tmp_path / "n.dmat", "--out", tmp_path / "n.svg") == 2


def test_replica_commands(tmp_path, capsys):
    assert run("replica", "design", "--kind", "lowpass", "--order", 32, "--pass", 0.01, "--stop", 0.3, "--out", tmp_path / "lp.dmat") == 0
    echo = json.loads(capsys.readouterr().out)
    assert echo["order"] == 32 and echo["cutoff"] == pytest.approx(0.155)
    assert load_matrix(tmp_path / "lp.dmat").shape == (33, 1)
    assert run("replica", "design", "--kind", "notch", "--order", 64, "--pass", 0.03, "--stop", 0.01, "--out", tmp_path / "nt.dmat") == 0
    assert run("replica", "design", "--kind", "notch", "--order", 8, "--pass", 0.008, "--stop", 0.001, "--out", tmp_path / "x.dmat") == 2

    run("gen-deer", "--n", 200, "--time-points", 128, "--dist-points", 20, "--seed", 3, "--out", tmp_path / "d")
    common = ["--data", tmp_path / "d", "--lowpass", tmp_path / "lp.dmat", "--notch", tmp_path / "nt.dmat"]
    assert run("replica", "fit", *common, "--out", tmp_path / "T") == 0
    report = json.loads((tmp_path / "T" / "report.json").read_text())
    assert len(report["lambda_grid"]) == 40 and report["lambda_grid_source"].startswith("default")
    assert report["lambda"] in report["lambda_grid"]
    assert run("replica", "fit", *common, "--lambda-grid", "0.1,1,10", "--out", tmp_path / "T2") == 0
    assert json.loads((tmp_path / "T2" / "report.json").read_text())["lambda_grid"] == [0.1, 1.0, 10.0]

    assert run("replica", "run", *common, "--transform", tmp_path / "T" / "T.dmat", "--index", 0, "--out", tmp_path / "r.csv") == 0
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert len(rows) == 1 + 20


def test_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("DESCRAMBLE_THREADS", "1")
    save_matrix(np.eye(3), tmp_path / "i.dmat")
    assert run("analyze", "det-sign", "--in", tmp_path / "i.dmat") == 0


def test_pipeline_manifest(tmp_path):
    out = tmp_path / "p"
    assert run("pipeline", "--out", out, "--n", 80, "--time-points", 16, "--width", 8, "--epochs", 2, "--max-iters", 10) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    for f in ("P.dmat", "net.net", "descrambled_W1.svg", "bands.json", "data/inputs.dmat"):
        assert f in manifest["files"]
    assert load_dataset(out / "data").n_traces == 80

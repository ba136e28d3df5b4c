import json

import numpy as np
import pytest

from ngrec.cli import EXIT_CONFIG, EXIT_CONSTRUCTION, main
from ngrec.harness import REPORT_COLUMNS, read_report


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_postselect(tmp_path, capsys):
    out = tmp_path / "acc.csv"
    code, text = run(capsys, "--seed", "3", "postselect", "--k", "1", "--T", "0.8", "--va", "20",
                     "--n", "20000", "--mode", "per-quadrature", "--out", str(out))
    assert code == 0
    report = json.loads((tmp_path / "acc.json").read_text())
    assert set(report) >= {"n_in", "n_accepted", "efficiency", "c_used"}
    assert report["n_in"] == 40_000
    assert 0.72 < report["efficiency"] < 0.79
    samples = np.loadtxt(out, skiprows=1)
    assert samples.size == report["n_accepted"]


def test_postselect_joint_npy(tmp_path, capsys):
    out = tmp_path / "acc.npy"
    code, _ = run(capsys, "postselect", "--k", "2", "--n", "5000", "--mode", "joint", "--out", str(out))
    assert code == 0
    # joint mode counts accepted pairs; both quadratures of a pair are written
    assert np.load(out).size == 2 * json.loads((tmp_path / "acc.json").read_text())["n_accepted"]


def test_channel_requires_exactly_one(capsys):
    with pytest.raises(SystemExit):
        main(["channel"])
    with pytest.raises(SystemExit):
        main(["channel", "--snr", "0.1", "--sigma2", "2"])
    capsys.readouterr()


def test_channel(tmp_path, capsys):
    code, text = run(capsys, "channel", "--snr", "0.1554", "--n", "50000", "--out", str(tmp_path / "xy.csv"))
    assert code == 0
    assert json.loads(text)["snr_measured"] == pytest.approx(0.1554, rel=0.05)
    code, text = run(capsys, "channel", "--sigma2", "2.0", "--n", "1000")
    assert code == 0 and json.loads(text)["noise_variance"] == 2.0


def test_mdr(tmp_path, capsys):
    code, text = run(capsys, "mdr", "--dim", "8", "--blocks", "2000", "--side-out", str(tmp_path / "side.bin"))
    assert code == 0
    info = json.loads(text)
    assert info["max_mapping_error"] < 1e-10
    assert (tmp_path / "side.bin").stat().st_size > 0


def test_decode_ensemble(capsys):
    code, text = run(capsys, "decode", "--matrix", "regular_3_6", "--n", "2000", "--schedule", "bp",
                     "--max-iter", "150", "--sigma", "0.6")
    assert code == 0
    info = json.loads(text)
    assert info["converged"] and info["bit_errors"] == 0


def test_decode_given_llrs(tmp_path, capsys, toy_matrix):
    from ngrec.metldpc import syndrome

    path = tmp_path / "toy.npz"
    toy_matrix.save(path)
    u = np.random.default_rng(0).integers(0, 2, toy_matrix.n).astype(np.uint8)
    np.save(tmp_path / "l.npy", 8.0 * (1 - 2.0 * u))
    np.save(tmp_path / "s.npy", syndrome(toy_matrix, u))
    code, text = run(capsys, "decode", "--matrix", str(path), "--llrs", str(tmp_path / "l.npy"),
                     "--syndrome", str(tmp_path / "s.npy"), "--out", str(tmp_path / "bits.npy"))
    assert code == 0
    assert np.array_equal(np.load(tmp_path / "bits.npy"), u)


def test_skr(tmp_path, capsys):
    out = tmp_path / "curve.csv"
    code, text = run(capsys, "skr", "--va", "20", "--beta", "0.95", "--eps", "0.01", "--att", "0.2",
                     "--k", "0,1", "--dmax", "200", "--step", "1", "--out", str(out))
    assert code == 0
    header = out.read_text().splitlines()[0].split(",")
    assert header[0] == "distance_km"
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert data.shape == (201, len(header))
    dist = json.loads(text)
    assert dist["k1_max_distance_km"] > dist["k0_max_distance_km"] > 0


def test_bench(tmp_path, capsys):
    code, text = run(capsys, "--seed", "5", "bench", "--kind", "gaussian", "--rate", "0.1",
                     "--beta-list", "0.8", "--frames", "2", "--n", "10000", "--schedule", "lbp",
                     "--out", str(tmp_path))
    assert code == 0
    rows = read_report(tmp_path / "gaussian_rate0.1_lbp.csv")
    assert len(rows) == 1 and list(rows[0]) == list(REPORT_COLUMNS)
    assert rows[0]["beta"] == pytest.approx(0.8)
    assert rows[0]["frames"] == 2
    assert json.loads((tmp_path / "gaussian_rate0.1_lbp.json").read_text())[0]["frames"] == 2


def test_bench_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "vps-1", "rate": 0.1, "snr_list": [0.3], "frames": 1, "n": 10000}))
    code, _ = run(capsys, "bench", "--config", str(cfg), "--out", str(tmp_path / "res"))
    assert code == 0
    assert (tmp_path / "res" / "vps-1_rate0.1_lbp.csv").exists()


def test_bench_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "gaussian", "bogus": 1}))
    assert main(["bench", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["bench", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG
    assert main(["bench", "--kind", "gaussian", "--rate", "0.1", "--n", "10000", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["bench", "--kind", "gaussian", "--rate", "0.1", "--beta-list", "1.2", "--n", "10000",
                 "--out", str(tmp_path)]) == EXIT_CONFIG
    capsys.readouterr()


def test_bench_construction_error(tmp_path, capsys):
    code = main(["bench", "--kind", "gaussian", "--rate", "0.1", "--snr-list", "0.2", "--n", "40",
                 "--frames", "1", "--out", str(tmp_path)])
    assert code == EXIT_CONSTRUCTION
    capsys.readouterr()


def test_bad_seed():
    with pytest.raises(SystemExit):
        main(["--seed", "-1", "channel", "--snr", "0.1"])

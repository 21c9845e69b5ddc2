import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from jointclust.cli import RUN_HEADER, main, read_config, UsageError
from jointclust.io import load_instance
from jointclust.model import ModelConfig, generate_instance


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def parse_csv(text):
    return list(csv.reader(io.StringIO(text)))


def test_gen_round_trip_and_summary(tmp_path, capsys):
    path = tmp_path / "a.npz"
    code, out, _ = run_cli(capsys, "gen", "--n", "32", "--r", "4", "--epsilon", "0.25",
                           "--p", "0.1", "--seed", "5", "--out", str(path))
    assert code == 0
    assert "m=768.0" in out and "K=8" in out
    inst = load_instance(path)
    ref = generate_instance(ModelConfig(32, 4, 0.1, 0.25, 5))
    assert np.array_equal(inst.observed, ref.observed)
    run_cli(capsys, "gen", "--n", "32", "--r", "4", "--epsilon", "0.25", "--p", "0.1",
            "--seed", "5", "--out", str(tmp_path / "b.npz"))
    assert path.read_bytes() == (tmp_path / "b.npz").read_bytes()


@pytest.mark.parametrize("algo,extra", [
    ("combinatorial", []), ("convex", []), ("spectral", ["--kmeans"]), ("nn", []),
])
def test_run_noiseless_exact(capsys, algo, extra):
    code, out, _ = run_cli(capsys, "run", "--n", "64", "--r", "4", "--seed", "2",
                           "--algo", algo, *extra)
    assert code == 0
    rows = parse_csv(out)
    assert tuple(rows[0]) == RUN_HEADER
    rec = dict(zip(rows[0], rows[1]))
    assert rec["exact"] == "1" and rec["algorithm"] == algo
    assert rec["runtime_ms"] == "NA"


def test_run_from_instance_file_with_dump(tmp_path, capsys):
    path = tmp_path / "a.npz"
    run_cli(capsys, "gen", "--n", "12", "--r", "3", "--out", str(path))
    dump = tmp_path / "y.npy"
    code, out, _ = run_cli(capsys, "run", "--instance", str(path), "--algo",
                           "combinatorial:exhaustive", "--dump-matrix", str(dump),
                           "--timing")
    assert code == 0
    rec = dict(zip(*parse_csv(out)))
    assert rec["exact"] == "1" and rec["runtime_ms"] != "NA"
    assert np.array_equal(np.load(dump), load_instance(path).rating)


def test_run_convex_empty_observation(capsys):
    code, out, _ = run_cli(capsys, "run", "--n", "64", "--r", "4", "--epsilon", "1",
                           "--algo", "convex")
    assert code == 0
    acc = float(dict(zip(*parse_csv(out)))["sign_accuracy"])
    inst = generate_instance(ModelConfig(64, 4, 0.0, 1.0, 0))
    assert acc == pytest.approx(np.mean(inst.rating == 1))


def test_run_explicit_lambda_and_output_file(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code, _, _ = run_cli(capsys, "run", "--n", "32", "--r", "2", "--algo", "convex",
                         "--lambda", "10", "--tau", "0.1", "--out", str(out))
    assert code == 0
    assert out.read_text().splitlines()[0] == ",".join(RUN_HEADER)
    code, _, err = run_cli(capsys, "run", "--n", "32", "--r", "2", "--algo", "convex",
                           "--lambda", "big")
    assert code == 1 and "lambda" in err


def test_exit_codes(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--n", "64", "--r", "4", "--algo", "bogus"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    code, _, err = run_cli(capsys, "run", "--algo", "nn")
    assert code == 1 and "--instance" in err
    code, _, err = run_cli(capsys, "run", "--n", "64", "--r", "4",
                           "--algo", "combinatorial:exhaustive")
    assert code == 2 and "budget" in err
    code, _, err = run_cli(capsys, "run", "--n", "10", "--r", "3", "--algo", "nn")
    assert code == 2 and "divisible" in err
    code, _, err = run_cli(capsys, "gen", "--n", "8", "--r", "2",
                           "--out", "/nonexistent/dir/a.npz")
    assert code == 2 and "/nonexistent/dir" in err


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# test config\nn = 64\nr = 4\nepsilon = 0.2\nkmeans = true\n"
                   "algo = spectral\nseed = 3\n")
    assert read_config(cfg)["epsilon"] == "0.2"
    code, out, _ = run_cli(capsys, "run", "--config", str(cfg))
    assert code == 0
    via_cfg = parse_csv(out)[1]
    code, out, _ = run_cli(capsys, "run", "--n", "64", "--r", "4", "--epsilon", "0.2",
                           "--kmeans", "--algo", "spectral", "--seed", "3")
    assert parse_csv(out)[1] == via_cfg
    code, out, _ = run_cli(capsys, "run", "--config", str(cfg), "--algo", "nn")
    assert code == 0 and parse_csv(out)[1][0] == "nn"
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    code, _, err = run_cli(capsys, "run", "--config", str(bad), "--algo", "nn")
    assert code == 1 and "colour" in err
    with pytest.raises(UsageError):
        read_config(tmp_path / "missing.cfg")


def test_incoherence_command(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "incoherence", "--r", "4", "--trials", "1", "--seed", "9")
    assert code == 0
    rows = parse_csv(out)
    assert len(rows) == 2 and rows[0][:4] == ["r", "trials", "max_raw", "scaled_max"]
    _, again, _ = run_cli(capsys, "incoherence", "--r", "4", "--trials", "1", "--seed", "9")
    assert again == out
    path = tmp_path / "inc.csv"
    run_cli(capsys, "incoherence", "--r", "4,8", "--trials", "5", "--out", str(path))
    assert len(path.read_text().splitlines()) == 3


def test_analyze_commands(capsys):
    code, out, _ = run_cli(capsys, "analyze", "regime", "--n", "512", "--K", "64",
                           "--epsilon", "0.5")
    assert code == 0
    rows = parse_csv(out)
    assert [r[0] for r in rows[1:]] == ["lower_bound", "combinatorial", "convex", "spectral",
                                         "nearest_neighbor"]
    code, out, _ = run_cli(capsys, "analyze", "witness", "--n", "64", "--K", "4",
                           "--lb-value", "0.1", "--trials", "20")
    assert code == 0
    rec = dict(zip(*parse_csv(out)))
    assert rec["witnesses"] == rec["valid"]
    assert float(rec["rate"]) >= 0.5


def test_phase_command_deterministic(tmp_path, capsys, monkeypatch):
    args = ["phase", "--n", "64", "--alpha", "0.2:0.6:0.4", "--beta", "0.5",
            "--trials", "2", "--algos", "nn,spectral", "--seed", "4"]
    assert run_cli(capsys, *args, "--out", str(tmp_path / "a"))[0] == 0
    monkeypatch.setenv("JOINTCLUST_WORKERS", "2")
    assert run_cli(capsys, *args, "--out", str(tmp_path / "b"))[0] == 0
    for name in ("cells.csv", "nn.pgm", "spectral_kmeans_shared.pgm", "frontier.csv",
                 "meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "jointclust", "analyze", "regime", "--n", "64",
                          "--K", "8", "--epsilon", "0.1"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("method,")

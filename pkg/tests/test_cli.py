import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from odec import bench, cli, serialize
from odec.baselines import SvdTruncatedBlock
from odec.data import encode_idx
from odec.snapshots import encode_snapshots, load_snapshots

CONFIG = Path(__file__).resolve().parents[1] / "demos" / "sweep_config.json"
DATA = ["--train-samples", "80", "--test-samples", "40", "--classes", "3", "--shape", "1x4x4"]


def run(*argv, env=None):
    return cli.run([str(a) for a in argv], environ=env or {})


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("init-model", "--out", d / "m.json", "--n", 8, "--classes", 3, "--shape", "1x4x4") == 0
    assert run("train-readout", "--model", d / "m.json", "--out", d / "t.json", "--epochs", 3,
               "--metrics", d / "metrics.csv", *DATA) == 0
    assert run("snapshot", "--model", d / "t.json", "--out", d / "s.snp", "--samples", 20, *DATA) == 0
    return d


def test_reduce_pod_deim(files):
    out = files / "r.json"
    assert run("reduce", "--method", "pod-deim", "--k", 8, "--m", 8, "--o", 0, "--model",
               files / "t.json", "--snapshots", files / "s.snp", "--out", out, *DATA) == 0
    model = serialize.load_model(out)
    assert model.sections["mor"]["k"] == 8 and model.sections["mor"]["o"] == 0


def test_reduce_svd(files):
    out = files / "svd.json"
    assert run("reduce", "--method", "svd", "--k", 4, "--model", files / "t.json", "--out", out) == 0
    assert isinstance(serialize.load_model(out).block, SvdTruncatedBlock)


def test_reduce_apoz(files):
    out = files / "apoz.json"
    assert run("reduce", "--method", "apoz", "--k", 4, "--samples", 30, "--model",
               files / "t.json", "--out", out, *DATA) == 0
    assert serialize.load_model(out).block.dim == 4


def test_metrics_csv(files):
    lines = (files / "metrics.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss,train_acc,val_acc" and len(lines) == 4


def test_round_trip_and_provenance(files):
    for name in ("m.json", "t.json"):
        text = (files / name).read_text()
        model = serialize.loads_model(text)
        assert serialize.dumps_model(model) == text
        prov = model.sections["provenance"]
        assert len(prov["run_config_sha256"]) == 64
        assert prov["run_config_sha256"] == cli.config_digest(prov["run_config"])
    prov = serialize.load_model(files / "t.json").sections["provenance"]
    assert prov["inputs"]["model"] == serialize.file_digest(files / "m.json")
    snaps = load_snapshots(files / "s.snp")
    assert encode_snapshots(snaps) == (files / "s.snp").read_bytes()
    assert snaps.provenance["inputs"]["model"] == serialize.file_digest(files / "t.json")


def test_sweep_example_config(tmp_path):
    c = ["--config", CONFIG]
    assert cli.run([*map(str, c), "init-model", "--out", str(tmp_path / "m.json")], environ={}) == 0
    assert cli.run([*map(str, c), "train-readout", "--model", str(tmp_path / "m.json"),
                    "--out", str(tmp_path / "t.json")], environ={}) == 0
    assert cli.run([*map(str, c), "snapshot", "--model", str(tmp_path / "t.json"),
                    "--out", str(tmp_path / "s.snp")], environ={}) == 0
    rep = tmp_path / "report.csv"
    assert cli.run([*map(str, c), "sweep", "--model", str(tmp_path / "t.json"), "--snapshots",
                    str(tmp_path / "s.snp"), "--out", str(rep), "--curve", str(tmp_path / "c.csv"),
                    "--table", str(tmp_path / "tab.csv"), "--svg", str(tmp_path / "c.svg")],
                   environ={}) == 0
    cfg = json.loads(CONFIG.read_text())["run"]
    rows = bench.read_report(rep)
    assert len(rows) == len(cfg["methods"]) * len(cfg["dims"]) * len(cfg["stages"])
    meta = bench.report_metadata(rep)
    assert len(meta["run_config_sha256"]) == 64 and "input.model" in meta
    assert "input.config" in meta
    assert (tmp_path / "c.svg").read_text().startswith("<svg")


def test_eval_and_inspect(files, capsys):
    assert run("eval", "--model", files / "t.json", "--timing-reps", 1, *DATA) == 0
    doc = json.loads(capsys.readouterr().out)
    assert 0 <= doc["result"]["top1"] <= 1 and "run_config_sha256" in doc["provenance"]
    assert run("inspect", "--model", files / "t.json", "--snapshots", files / "s.snp") == 0
    info = json.loads(capsys.readouterr().out)
    assert info["model"]["ode_dim"] == 8 and info["snapshots"]["n"] == 8


def test_eval_reports_compression_method(files, capsys):
    assert run("reduce", "--method", "svd", "--k", 4, "--model", files / "t.json",
               "--out", files / "e.json") == 0
    capsys.readouterr()
    assert run("eval", "--model", files / "e.json", "--timing-reps", 1, *DATA) == 0
    assert json.loads(capsys.readouterr().out)["result"]["method"] == "svd"


def test_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"run": {"k": 3, "m": 2, "o": 1, "fold": True}}))
    env = {"ODEC_K": "5", "ODEC_M": "4"}
    r = cli.resolve("reduce", {"k": "7", "model": "x", "out": "y"}, cfg, env)
    assert (r["k"], r["m"], r["o"], r["fold"]) == (7, 4, 1, True)
    r = cli.resolve("reduce", {"model": "x", "out": "y"}, cfg, env)
    assert r["k"] == 5
    r = cli.resolve("reduce", {"model": "x", "out": "y", "k": "2"}, None, {})
    assert (r["method"], r["m"], r["o"], r["fold"]) == ("pod-deim", None, 0, False)


def test_defaults():
    r = cli.resolve("snapshot", {"model": "a", "out": "b"}, None, {})
    assert r["stride"] == 2 and r["samples"] == 500
    r = cli.resolve("train-readout", {"model": "a", "out": "b"}, None, {})
    assert r["lr"] == 0.04
    assert cli.resolve("eval", {"model": "a"}, None, {})["timing_reps"] == 10


def test_idx_input(tmp_path, files):
    rng = np.random.default_rng(0)
    for split, count in (("train", 30), ("test", 20)):
        (tmp_path / f"{split}-i.idx").write_bytes(encode_idx(rng.integers(0, 256, (count, 4, 4))))
        (tmp_path / f"{split}-l.idx").write_bytes(encode_idx(rng.integers(0, 3, count)))
    idx = ["--train-images", tmp_path / "train-i.idx", "--train-labels", tmp_path / "train-l.idx",
           "--test-images", tmp_path / "test-i.idx", "--test-labels", tmp_path / "test-l.idx"]
    assert run("eval", "--model", files / "t.json", "--timing-reps", 1, *idx) == 0


def test_errors_nonzero(files, tmp_path):
    assert run("eval", "--model", tmp_path / "missing.json") == 1
    doc = json.loads((files / "t.json").read_text())
    doc["schema_version"] = 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert run("eval", "--model", bad, "--timing-reps", 1, *DATA) == 1
    assert run("reduce", "--model", files / "t.json", "--out", tmp_path / "o.json") == 1
    with pytest.raises(SystemExit) as exc:
        run("eval", "--no-such-flag")
    assert exc.value.code == 2


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "odec.cli", "init-model", "--out",
                          str(tmp_path / "m.json"), "--arch", "rnn", "--n", "6"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout == ""
    assert "wrote rnn model" in out.stderr
    bad = subprocess.run([sys.executable, "-m", "odec.cli", "eval", "--model",
                          str(tmp_path / "nope.json")], capture_output=True, text=True)
    assert bad.returncode == 1 and "ERROR" in bad.stderr

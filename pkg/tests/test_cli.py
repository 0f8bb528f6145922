import csv
import json
import subprocess
import sys

import pytest

from gibbszz import cli
from gibbszz.experiments import ConfigError
from gibbszz.samplers import EnvelopeViolation

QUICK = ["--n", "5", "--p", "2", "--K", "2", "--horizon", "30", "--n-steps", "200", "--batch-size", "3"]


def parse(argv):
    return cli.build_parser().parse_args(argv)


def test_read_config(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# experiment\nn = 7\nbatch-size = 2   # trailing\n\nsampler=zz\n")
    assert cli.read_config(path) == {"n": "7", "batch_size": "2", "sampler": "zz"}
    path.write_text("n 7\n")
    with pytest.raises(ConfigError):
        cli.read_config(path)


def test_precedence_file_env_flag(tmp_path, monkeypatch):
    path = tmp_path / "c.cfg"
    path.write_text("seed = 1\neta = 0.5\n")
    monkeypatch.delenv("GZZ_SEED", raising=False)
    assert cli.resolve_spec(parse(["run", "--config", str(path)])).seed == 1
    monkeypatch.setenv("GZZ_SEED", "2")
    spec = cli.resolve_spec(parse(["run", "--config", str(path)]))
    assert spec.seed == 2 and spec.eta == 0.5
    spec = cli.resolve_spec(parse(["run", "--config", str(path), "--seed", "3", "--eta", "2"]))
    assert spec.seed == 3 and spec.eta == 2.0


def test_invalid_configuration_exit_code(tmp_path, capsys):
    assert cli.main(["run", "--model", "probit", "--output-dir", str(tmp_path)]) == 2
    assert "configuration error" in capsys.readouterr().err
    assert cli.main(["run", "--eta", "-1", "--output-dir", str(tmp_path)]) == 2


def test_envelope_violation_exit_code(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise EnvelopeViolation("rate above bound")

    monkeypatch.setattr(cli, "run_replicas", broken)
    assert cli.main(["run", "--output-dir", str(tmp_path)]) == 3


def test_run_writes_outputs_and_diagnose_reads_skeleton(tmp_path, capsys):
    out = tmp_path / "res"
    assert cli.main(["run", *QUICK, "--replicas", "2", "--output-dir", str(out), "--dump-skeleton"]) == 0
    with open(out / "results.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["replica"] for r in rows] == ["0", "1"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["spec"]["batch_size"] == 3 and "iact_time" in summary["median"]
    capsys.readouterr()
    report_path = tmp_path / "diag.json"
    assert cli.main(["diagnose", str(out / "skeleton.csv"), "--eta", "1", "--out", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert len(report["iact"]) == 5 and len(report["second_moment"]) == 5
    assert report["events"]["hyper_events"] > 0
    assert json.loads(capsys.readouterr().out)["slowest_coordinate"] == report["slowest_coordinate"]


def test_hmc_cannot_dump_skeleton(tmp_path):
    argv = ["run", *QUICK, "--sampler", "hmc-gibbs", "--hmc-iterations", "100", "--output-dir", str(tmp_path),
            "--dump-skeleton"]
    assert cli.main(argv) == 2


def test_generate_data(tmp_path, capsys):
    path = tmp_path / "d.csv"
    assert cli.main(["generate-data", "--model", "spike_slab", "--n", "40", "--p", "3", "--out", str(path)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["n"] == 40 and info["p"] == 3
    assert path.read_text().splitlines()[0] == "y,x1,x2,x3"


def test_sweeps_and_compare(tmp_path, capsys):
    out = tmp_path / "eta"
    assert cli.main(["sweep-eta", *QUICK, "--etas", "0.05,0.1,1", "--output-dir", str(out)]) == 0
    fit = json.loads((out / "summary.json").read_text())["fit"]
    assert fit["eta"] == [0.05, 0.1, 1.0]
    out = tmp_path / "batch"
    assert cli.main(["sweep-batch", *QUICK, "--batch-sizes", "1,10", "--etas", "0.1,5",
                     "--output-dir", str(out)]) == 0
    assert set(json.loads((out / "summary.json").read_text())["batch"]) == {"0.1", "5.0"}
    out = tmp_path / "cmp"
    assert cli.main(["compare", *QUICK, "--axis", "K", "--values", "2,3", "--hmc-grid", "0.1:3",
                     "--pilot-iterations", "200", "--hmc-iterations", "200", "--output-dir", str(out)]) == 0
    cmp = json.loads((out / "summary.json").read_text())["comparison"]
    assert cmp["values"] == [2, 3] and len(cmp["median_ratio"]) == 2
    assert cli.main(["sweep-batch", *QUICK, "--batch-sizes", "1,99", "--output-dir", str(out)]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "gibbszz", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for name in ("generate-data", "run", "sweep-eta", "sweep-batch", "compare", "diagnose"):
        assert name in res.stdout

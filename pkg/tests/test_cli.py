import csv
import json
import math
import subprocess
import sys

import pytest

from gqmi import ensembles as ens
from gqmi.cli import main, parse_range, parse_real


def test_pi_expressions():
    assert parse_real("pi/4") == pytest.approx(math.pi / 4)
    assert parse_real("3*pi/4") == pytest.approx(3 * math.pi / 4)
    assert parse_real("-pi") == pytest.approx(-math.pi)
    assert parse_real("0.25") == 0.25


def test_ranges_are_inclusive():
    assert parse_range("0:1:5") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_range("0.05:1.5:15")[-1] == pytest.approx(1.5)
    assert parse_range("2") == [2.0]


def test_sample_then_estimate(tmp_path, capsys):
    out = tmp_path / "s.jsonl"
    assert main(["sample", "--gen", "spiral", "--delta", "pi/2", "--n", "200000", "--seed", "3",
                 "--out", str(out)]) == 0
    e = ens.read_jsonl(out)
    assert e.n == 200000 and e.meta["params"]["delta"] == pytest.approx(math.pi / 2)
    assert main(["estimate", "--in", str(out)]) == 0
    rep = json.loads(capsys.readouterr().out)
    nats = rep["mutual_information"]["I"]
    assert nats == pytest.approx(math.log(2), abs=0.1)
    assert main(["estimate", "--in", str(out), "--units", "bits"]) == 0
    bits = json.loads(capsys.readouterr().out)
    assert bits["mutual_information"]["I"] == pytest.approx(nats / math.log(2))
    assert bits["scaling_joint"]["dimension"] == rep["scaling_joint"]["dimension"]


def test_sample_is_reproducible(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for path in (a, b):
        main(["sample", "--gen", "haar", "--D", "3", "--n", "100", "--seed", "8", "--out", str(path)])
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("argv,flag", [
    (["sample", "--gen", "spiral", "--delta", "4", "--n", "10", "--seed", "1"], "--delta"),
    (["sample", "--gen", "haar", "--D", "2", "--n", "10"], "--seed"),
    (["sample", "--gen", "canonical", "--beta", "1", "--n", "10", "--seed", "1"], "--g"),
    (["scan", "--gen", "spiral", "--delta", "0:1:x", "--seed", "1"], "0:1:x"),
])
def test_usage_errors_exit_two(tmp_path, capsys, argv, flag):
    assert main(argv + ["--out", str(tmp_path / "x")]) == 2
    assert flag in capsys.readouterr().err


def test_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as info:
        main(["estimate"])
    assert info.value.code == 2


def test_corrupt_input_exits_three(tmp_path, capsys):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"dim": 2, "n": 2, "blocks": [2]}\n{"w": 0.5, "p": [1, 0], "phi": [0, 0]}\nnope\n')
    assert main(["estimate", "--in", str(path)]) == 3
    assert "line 3" in capsys.readouterr().err


def test_scan_writes_csv_and_sidecar(tmp_path, monkeypatch):
    monkeypatch.setenv("GQMI_THREADS", "1")
    out = tmp_path / "scan.csv"
    assert main(["scan", "--gen", "spiral", "--delta", "pi/4:pi:3", "--n", "20000", "--seed", "2",
                 "--out", str(out)]) == 0
    raw = out.read_bytes()
    assert b"\r\n" not in raw
    rows = list(csv.DictReader(out.open()))
    assert [float(r["delta"]) for r in rows] == pytest.approx([math.pi / 4, 5 * math.pi / 8, math.pi])
    Is = [float(r["I"]) for r in rows]
    assert Is[0] > Is[1] > Is[2]
    side = json.loads((tmp_path / "scan.csv.json").read_text())
    assert side["seed"] == 2 and side["rows"] == 3


def test_chain_csv(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["chain", "--L", "6", "--site", "3", "--site-origin", "1", "--h", "-1.0",
                 "--tmax", "0.5", "--dt", "0.25", "--init", "plus", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 3 and float(rows[0]["I"]) == 0.0
    side = json.loads((tmp_path / "c.csv.json").read_text())
    assert side["site_zero_based"] == 2 and side["site_one_based"] == 3


def test_verify_chain_group_passes(capsys):
    assert main(["verify", "--only", "chain", "--n", "1000"]) == 0
    assert "PASS chain" in capsys.readouterr().out


def test_console_entry_point_runs():
    r = subprocess.run([sys.executable, "-m", "gqmi.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "estimate" in r.stdout

import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from floorline.cli import main
from floorline.code_model import load_alist, tanner_155
from floorline.fixtures import TANNER_82_MU
from floorline.manifest import (ManifestError, bundled_manifests, parse_snr, read_manifest,
                                validate_manifest)

TANNER_SHIFTS = "[[1,2,4,8,16],[5,10,20,9,18],[25,19,7,14,28]]"


def read_csv(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def set82(tanner_82_sets):
    return ",".join(str(v) for v in tanner_82_sets[0].variables)


def test_code_build_and_info(tmp_path, capsys):
    path = tmp_path / "t.alist"
    code, _, _ = run(capsys, "code", "build", "--shifts", TANNER_SHIFTS, "--p", 31,
                     "--out", path)
    assert code == 0
    assert load_alist(path).same_support(tanner_155())
    code, out, _ = run(capsys, "code", "info", path)
    info = json.loads(out)
    assert code == 0
    assert (info["n"], info["m"], info["rank"], info["girth"]) == (155, 93, 91, 8)


def test_code_build_to_stdout(capsys):
    code, out, _ = run(capsys, "code", "build", "--shifts", "[[0]]", "--p", 1)
    assert code == 0 and out.splitlines()[0] == "1 1"


def test_missing_code_is_validation_error(capsys):
    code, _, err = run(capsys, "code", "info", "/nonexistent.alist")
    assert code == 2 and "not found" in err


def test_decode_with_trace(tmp_path, capsys, set82):
    llr = np.full(155, 4.0)
    idx = [int(v) for v in set82.split(",")]
    llr[idx] = -4.0
    f = tmp_path / "llr.txt"
    f.write_text(" ".join(map(str, llr)))
    trace = tmp_path / "trace.csv"
    code, out, _ = run(capsys, "decode", "--code", "tanner155", "--algo", "sp", "--clip", 10,
                       "--iters", 20, "--llr-file", f, "--track", set82, "--trace-csv", trace)
    res = json.loads(out)
    assert code == 0
    assert res["converged"] is False and res["iterations"] == 20
    rows = read_csv(trace)
    assert len(rows) == 20 * 8
    last = [float(r["accumulated_llr"]) for r in rows if r["iteration"] == "20"]
    assert max(last) < -9


def test_decode_length_mismatch(tmp_path, capsys):
    f = tmp_path / "llr.txt"
    f.write_text("1 2 3\n")
    code, _, _ = run(capsys, "decode", "--code", "tanner155", "--llr-file", f)
    assert code == 2


def test_sets_check(capsys, set82):
    code, out, _ = run(capsys, "sets", "check", "--code", "tanner155", "--vars", set82)
    d = json.loads(out)
    assert code == 0 and d["absorbing"] and (d["a"], d["b"]) == (8, 2)
    code, out, _ = run(capsys, "sets", "check", "--code", "tanner155", "--vars", "0")
    assert code == 0 and json.loads(out)["absorbing"] is False
    code, _, _ = run(capsys, "sets", "check", "--code", "tanner155", "--vars", "999")
    assert code == 2


def test_sets_enumerate(tmp_path, capsys):
    out_file = tmp_path / "sets.jsonl"
    code, out, _ = run(capsys, "sets", "enumerate", "--code", "tanner155", "--amax", 5,
                       "--bmax", 3, "--out", out_file)
    assert code == 0
    assert len(out_file.read_text().splitlines()) == 155
    assert "# 5 3 yes 155" in out


def test_analyze_eigen(capsys):
    code, out, _ = run(capsys, "analyze", "eigen", "--set", "fixture:tanner82")
    assert code == 0
    mu = float(next(l for l in out.splitlines() if l.startswith("mu_max")).split(",")[1])
    assert mu == pytest.approx(TANNER_82_MU, abs=1e-3)


def test_analyze_formula(capsys):
    code, out, _ = run(capsys, "analyze", "--code", "tanner155", "--set", "fixture:tanner82",
                       "--snr", "3:5:1", "--iters", 10, "--multiplicity", 465,
                       "--formula", "matrix")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 3
    bers = [float(r["BER_estimate"]) for r in rows]
    assert bers[0] > bers[1] > bers[2] > 0


def test_analyze_needs_block_length(capsys):
    code, _, _ = run(capsys, "analyze", "--set", "fixture:tanner82")
    assert code == 2


def test_de(capsys):
    code, out, _ = run(capsys, "de", "--snr", 4, "--iters", 10, "--bins", 1024)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 10
    assert float(rows[-1]["g"]) >= 0.999
    code, _, _ = run(capsys, "de", "--snr", 4, "--bins", 7)
    assert code == 2


def test_is_writes_campaign(tmp_path, capsys, set82):
    out_csv = tmp_path / "is.csv"
    code, out, _ = run(capsys, "is", "--code", "tanner155", "--sets", f"[[{set82}]]",
                       "--shift", 1.0, "--snr", "5", "--samples", 300, "--iters", 20,
                       "--out", out_csv)
    assert code == 0
    assert read_csv(out_csv)[0]["EbN0_dB"] == "5.0"
    campaign = json.loads(out_csv.with_suffix(".campaign.json").read_text())
    assert campaign["bias"]["shift"] == 1.0 and campaign["seed"] == 0


def test_bad_sets_argument(capsys):
    code, _, _ = run(capsys, "is", "--code", "tanner155", "--sets", "{oops", "--snr", "5")
    assert code == 2


def test_argparse_errors_exit_two(capsys):
    assert run(capsys, "de")[0] == 2
    assert run(capsys, "bogus")[0] == 2


def test_run_bundled_manifest(tmp_path, capsys):
    code, out, _ = run(capsys, "run", "ieee88-eigen", "--out-dir", tmp_path)
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["stages"]["eigen"]["mu_max"] == pytest.approx(4.0, abs=1e-9)
    assert (tmp_path / "formula.csv").exists()


@pytest.mark.parametrize("body", ["{}", "[]", "not json", '{"name": "x"}',
                                  '{"name": "x", "stages": {"unknown": {}}}',
                                  '{"name": "x", "stages": {"census": {}}}'])
def test_invalid_manifests_exit_two(tmp_path, capsys, body):
    f = tmp_path / "m.json"
    f.write_text(body)
    assert run(capsys, "run", f, "--out-dir", tmp_path)[0] == 2


def test_stage_failure_exits_three(tmp_path, capsys):
    manifest = {"name": "coarse", "stages": {"formula": {
        "set": "fixture:tanner82", "n": 155, "rate": 0.41, "snr": "8", "taus": [1000],
        "bins": 8}}}
    f = tmp_path / "m.json"
    f.write_text(json.dumps(manifest))
    code, _, err = run(capsys, "run", f, "--out-dir", tmp_path)
    assert code == 3 and "formula" in err


def test_manifest_helpers():
    assert parse_snr("2:3:0.5") == [2.0, 2.5, 3.0]
    assert parse_snr("4,5") == [4.0, 5.0]
    with pytest.raises(ManifestError):
        parse_snr("a:b")
    for name in bundled_manifests():
        manifest, _ = read_manifest(name)
        validate_manifest(manifest)


def test_console_script():
    res = subprocess.run([sys.executable, "-m", "floorline.cli", "de", "--snr", "4",
                          "--iters", "2", "--bins", "512"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("iteration,m_ext,g")

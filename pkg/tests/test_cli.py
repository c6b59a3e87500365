import json
import subprocess
import sys

import pytest

from cubecomb.cli import EXIT_ERROR, EXIT_FAIL, EXIT_PASS, main

SMALL = ["construct", "--width", "6", "--eps", "1/2", "--delta", "1/4", "--m", "1", "--seed", "3"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def cert_file(tmp_path, capsys):
    path = tmp_path / "cert.json"
    assert run(capsys, *SMALL, "--out", str(path))[0] == EXIT_PASS
    return path


def test_construct_then_verify(cert_file, capsys):
    code, out, _ = run(capsys, "verify", str(cert_file))
    assert code == EXIT_PASS
    assert out.strip().endswith("VERIFIED")
    assert "FAIL" not in out


def test_construct_is_deterministic_across_jobs(tmp_path, capsys):
    texts = []
    for jobs in ("1", "3"):
        path = tmp_path / f"c{jobs}.json"
        assert run(capsys, *SMALL, "--jobs", jobs, "--out", str(path))[0] == EXIT_PASS
        texts.append(path.read_bytes())
    assert texts[0] == texts[1]


def test_edited_bitset_is_rejected(cert_file, capsys):
    data = json.loads(cert_file.read_text())
    digits = list(data["bitset_hex"])
    digits[-1] = format(int(digits[-1], 16) ^ 1, "x")
    data["bitset_hex"] = "".join(digits)
    cert_file.write_text(json.dumps(data, indent=2) + "\n")
    code, out, _ = run(capsys, "verify", str(cert_file))
    assert code == EXIT_FAIL
    assert "FAIL bitset" in out and "REJECTED" in out


def test_malformed_rational_names_field(cert_file, capsys):
    data = json.loads(cert_file.read_text())
    data["eps"] = "3/0"
    cert_file.write_text(json.dumps(data))
    code, _, err = run(capsys, "verify", str(cert_file))
    assert code == EXIT_ERROR
    assert "error[verify.schema]" in err and "eps" in err


def test_unknown_kind_and_missing_file(tmp_path, capsys):
    path = tmp_path / "x.json"
    path.write_text('{"version": 1, "kind": "mystery"}')
    assert run(capsys, "verify", str(path))[0] == EXIT_ERROR
    assert run(capsys, "verify", str(tmp_path / "nope.json"))[0] == EXIT_ERROR


def test_construct_budget_refusal(capsys):
    code, _, err = run(capsys, *SMALL, "--budget", "10")
    assert code == EXIT_ERROR
    assert "error[construct.budget]" in err


def test_construct_exhausted(capsys):
    # a tiny width cannot meet a tight delta
    argv = ["construct", "--width", "4", "--eps", "1/2", "--delta", "1/1000", "--m", "2", "--seed", "0", "--max-attempts", "2"]
    assert run(capsys, *argv)[0] == EXIT_FAIL


def test_bad_arguments(capsys):
    assert run(capsys, "construct", "--width", "3")[0] == EXIT_ERROR
    assert run(capsys, *SMALL[:4], "x", *SMALL[5:])[0] == EXIT_ERROR


def test_params_bundled(capsys):
    code, out, _ = run(capsys, "params", "--derive", "2", "--k", "1", "100")
    assert code == EXIT_PASS
    assert "P1" in out and "k\tsbar\tstilde\ts" in out


def test_params_bad_file(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text('{"version": 1}')
    assert run(capsys, "params", "--file", str(path))[0] == EXIT_ERROR


def test_chernoff(capsys):
    code, out, _ = run(capsys, "chernoff", "--n", "200", "--p", "1/2", "--delta", "1/5")
    assert code == EXIT_PASS and "HOLDS" in out
    code, out, _ = run(capsys, "chernoff", "--n", "50", "--p", "1/3", "--delta", "1/2", "--empirical", "--trials", "2000")
    assert code == EXIT_PASS
    assert run(capsys, "chernoff", "--n", "0", "--p", "1/2", "--delta", "1/5")[0] == EXIT_ERROR


def test_refine_roundtrip(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(capsys, "refine", "--out", str(a))[0] == EXIT_PASS
    assert run(capsys, "refine", "--out", str(b))[0] == EXIT_PASS
    assert a.read_bytes() == b.read_bytes()
    code, out, _ = run(capsys, "verify", str(a))
    assert code == EXIT_PASS and "PASS replay" in out
    data = json.loads(a.read_text())
    data["result"]["patterns"][0].append([0, 0]) if not data["result"]["patterns"][0] else None
    data["result"]["mask"] = data["result"]["mask"][1:]
    a.write_text(json.dumps(data, indent=2) + "\n")
    assert run(capsys, "verify", str(a))[0] == EXIT_FAIL


def test_refine_budget(capsys):
    code, _, err = run(capsys, "refine", "--budget", "1")
    assert code == EXIT_ERROR and "error[refine." in err


def test_norm_bundled(capsys):
    code, out, _ = run(capsys, "norm")
    assert code == EXIT_PASS
    assert "upper bounds" in out
    rows = [line.split("\t") for line in out.splitlines() if line[:1].isdigit()]
    values = [float(r[2]) for r in rows]
    assert values == sorted(values, reverse=True)


def test_norm_budget(capsys):
    code, _, err = run(capsys, "norm", "--budget", "5")
    assert code == EXIT_ERROR and "error[norm.budget]" in err


def test_entry_point_module():
    res = subprocess.run([sys.executable, "-m", "cubecomb.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "cubecomb" in res.stdout

import json
import shutil
import subprocess
import sys

import pytest

from nczeta.cli import main
from nczeta.modular import CONCLUSION
from nczeta.pipeline import (CACHE_ENV, FAULT_STAGES, FaultSpec, cache_dir, cached_parametrix,
                             engine_hash, golden_dir, run_pipeline)
from nczeta.serialize import parse_symbol


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_verify_all(capsys):
    code, out, _ = run(capsys, "verify", "--all")
    assert code == 0
    assert out.strip().splitlines()[-1] == CONCLUSION
    assert "FAIL" not in out


def test_verify_modular_certificate(capsys):
    code, out, _ = run(capsys, "verify", "--stage", "modular")
    assert code == 0
    doc = json.loads(out)
    assert set(doc) == {"f_match", "slot_ratios", "h_match", "K_odd", "conclusion"}
    assert doc["f_match"] and doc["h_match"] and doc["K_odd"]
    assert all(doc["slot_ratios"].values()) and len(doc["slot_ratios"]) == 4
    assert doc["conclusion"] == CONCLUSION


def test_verify_json_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(capsys, "verify", "--format", "json", "--out", str(a))[0] == 0
    assert run(capsys, "verify", "--format", "json", "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    code, out, _ = run(capsys, "report", "--in", str(a))
    assert code == 0 and CONCLUSION in out


def test_parametrix_order_zero(capsys, tmp_path):
    out_file = tmp_path / "b0.terms"
    code, _, err = run(capsys, "parametrix", "--order", "0", "--out", str(out_file))
    assert code == 0 and "verified" in err
    sym = parse_symbol(out_file.read_text())
    assert list(sym.components) == [-2]


def test_parametrix_then_reduce(capsys, tmp_path, clean_run):
    sym, mod = tmp_path / "b.terms", tmp_path / "modular.json"
    assert run(capsys, "parametrix", "--order", "2", "--out", str(sym))[0] == 0
    code, _, err = run(capsys, "reduce", "--in", str(sym), "--out", str(mod))
    assert code == 0 and CONCLUSION in err
    assert mod.read_text() == clean_run.artifacts["modular"]


def test_reduce_rejects_bad_input(capsys, tmp_path):
    bad = tmp_path / "bad.terms"
    bad.write_text("not a term list\n")
    code, _, err = run(capsys, "reduce", "--in", str(bad))
    assert code == 2 and "parse error" in err
    code, _, err = run(capsys, "reduce", "--in", str(tmp_path / "missing.terms"))
    assert code == 2 and "cannot read" in err


def test_missing_golden_directory(capsys, tmp_path):
    code, out, err = run(capsys, "verify", "--golden", str(tmp_path / "nope"))
    assert code == 2 and "golden directory not found" in err and out == ""


def test_missing_golden_file(capsys, tmp_path):
    partial = tmp_path / "golden"
    shutil.copytree(golden_dir(), partial)
    (partial / "post_ibp.terms").unlink()
    code, _, err = run(capsys, "verify", "--golden", str(partial))
    assert code == 2 and "post_ibp.terms" in err


def test_edited_golden_fails(capsys, tmp_path):
    edited = tmp_path / "golden"
    shutil.copytree(golden_dir(), edited)
    path = edited / "r_list.terms"
    lines = path.read_text().splitlines()
    coeff, word = lines[1].split(" :: ")
    lines[1] = f"2*{coeff} :: {word}" if not coeff.startswith("-") else f"-2*{coeff[1:]} :: {word}"
    path.write_text("\n".join(lines) + "\n")
    code, out, _ = run(capsys, "verify", "--golden", str(edited))
    assert code == 1
    assert "FAIL  r_list" in out


@pytest.mark.parametrize("stage", FAULT_STAGES)
def test_fault_injection_exit_code(capsys, stage):
    code, out, _ = run(capsys, "verify", "--inject-fault", f"{stage}:0")
    assert code == 1
    assert "conclusion not established" in out or "FAIL" in out


def test_bad_fault_spec(capsys):
    code, _, err = run(capsys, "verify", "--inject-fault", "nowhere:1")
    assert code == 2 and "unknown fault stage" in err
    with pytest.raises(ValueError):
        FaultSpec("nowhere")


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        main(["verify", "--format", "xml"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2


def test_eval_spectral(capsys):
    code, out, _ = run(capsys, "eval-spectral", "--fn", "L1", "2", "1")
    assert code == 0
    rows = [line.split("\t") for line in out.strip().splitlines()]
    assert float(rows[0][1]) == pytest.approx(0.306852819440055, abs=1e-14)
    assert float(rows[1][1]) == pytest.approx(0.5, abs=1e-15)
    code, _, err = run(capsys, "eval-spectral", "--fn", "f", "--", "-1")
    assert code == 2


def test_oracle_command(capsys, tmp_path):
    path = tmp_path / "report.json"
    code, out, _ = run(capsys, "oracle", "--trials", "3", "--dim", "4", "--seed", "7",
                       "--tol", "1e-9", "--out", str(path))
    assert code == 0 and "oracle battery PASS" in out
    doc = json.loads(path.read_text())
    assert doc["dims"] == [4] and [r["seed"] for r in doc["rows"]] == [7, 8, 9]


def test_verify_with_oracle(capsys):
    code, out, _ = run(capsys, "verify", "--oracle-trials", "2")
    assert code == 0 and "PASS  oracle battery (2 trials" in out


def test_build_symbol(capsys):
    code, out, err = run(capsys, "build-symbol", "--pretty")
    assert code == 0 and "agrees" in err
    assert "a2 = xi1^2*k^2 + (tau1^2+tau2^2)*xi2^2*k^2 + 2*tau1*xi1*xi2*k^2" in err
    assert sorted(parse_symbol(out).components) == [0, 1, 2]


def test_cache_is_keyed_and_self_healing(tmp_path, monkeypatch):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path))
    first = cached_parametrix(2)
    path = cache_dir() / f"parametrix-2-{engine_hash()}.terms"
    assert path.is_file()
    assert cached_parametrix(2) == first
    path.write_text("corrupted")
    assert cached_parametrix(2) == first
    assert parse_symbol(path.read_text()) == first


def test_stop_after_stages():
    res = run_pipeline(stop_after="parametrix")
    assert res.passed and res.reduction is None
    assert [s["stage"] for s in res.stages][:2] == ["parametrix_composition", "grading"]


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nczeta.cli", "eval-spectral", "--fn", "L2", "1"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert float(proc.stdout.split("\t")[1]) == pytest.approx(1 / 3)

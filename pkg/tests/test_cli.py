import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from spectral_pollution import cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run_cli(*args):
    return cli.main([str(a) for a in args])


def read_report(d, name="report.json"):
    return json.loads((Path(d) / name).read_text())


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return p


def test_toy_golden_run(tmp_path):
    assert run_cli("run", CONFIGS / "toy_golden.json", "--out-dir", tmp_path) == 0
    doc = read_report(tmp_path)
    pts = doc["report"]["spurious_points"]
    assert len(pts) == 1 and pts[0]["location"] == pytest.approx(0.4987, abs=1e-3)
    assert doc["comparison"]["verdict"] == "PASS"
    assert "Theorem 2.1" in doc["comparison"]["provenance"]
    rows = (tmp_path / "spectra.csv").read_text().splitlines()
    assert rows[0] == "size,index,value"
    last = [float(r.split(",")[2]) for r in rows[1:] if r.startswith("64,")]
    assert max(v for v in last if v < 1 - 1e-9) == pytest.approx(64 * np.sin(1 / np.sqrt(128)) ** 2, abs=1e-12)


def test_coulomb_free_split_run(tmp_path):
    code = run_cli("run", CONFIGS / "dirac_coulomb_free.json", "--out-dir", tmp_path,
                   "--sizes", "50,80,110,140")
    assert code == 0
    doc = read_report(tmp_path)
    assert doc["report"]["spurious_points"] == []
    assert doc["report"]["true_hits"][0] == pytest.approx(np.sqrt(0.75), abs=1e-4)


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = CONFIGS / "dirac_well_upper_lower.json"
    assert run_cli("run", cfg, "--out-dir", a, "--sizes", "30,40,50,60") == run_cli(
        "run", cfg, "--out-dir", b, "--sizes", "30,40,50,60", "--threads", "2")
    for name in ("spectra.csv", "report.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_malformed_config(tmp_path):
    assert run_cli("run", write_cfg(tmp_path, "{not json"), "--out-dir", tmp_path) == 2


def test_unknown_key(tmp_path):
    doc = json.loads((CONFIGS / "toy_golden.json").read_text())
    doc["model"]["colour"] = "blue"
    assert run_cli("run", write_cfg(tmp_path, doc), "--out-dir", tmp_path) == 2
    doc = json.loads((CONFIGS / "toy_golden.json").read_text())
    doc["extra"] = 1
    assert run_cli("run", write_cfg(tmp_path, doc), "--out-dir", tmp_path) == 2
    assert not (tmp_path / "report.json").exists()


def test_bad_values(tmp_path):
    doc = json.loads((CONFIGS / "dirac_coulomb_free.json").read_text())
    doc["model"]["potential"]["kappa_c"] = 2.0
    assert run_cli("run", write_cfg(tmp_path, doc), "--out-dir", tmp_path) == 2
    doc = json.loads((CONFIGS / "dirac_coulomb_free.json").read_text())
    del doc["scheme"]
    assert run_cli("run", write_cfg(tmp_path, doc), "--out-dir", tmp_path) == 2
    doc["scheme"] = {"kind": "free_split"}
    assert run_cli("run", write_cfg(tmp_path, doc), "--out-dir", tmp_path, "--sizes", "10,20,30") == 2


def test_no_theory_pair(tmp_path):
    doc = {"model": {"type": "toy", "variant": "unbounded_both",
                     "theta": {"kind": "power", "alpha": 0.5}},
           "sizes": [4, 8, 16, 32]}
    assert run_cli("run", write_cfg(tmp_path, doc), "--out-dir", tmp_path) == 0
    assert read_report(tmp_path)["comparison"]["verdict"] == "NO_THEORY"


def test_probe_mu2(tmp_path):
    doc = json.loads((CONFIGS / "probe_atomic_mu2.json").read_text())
    doc["probe"]["samples"] = 20
    doc["probe"]["size"] = 80
    assert run_cli("probe", write_cfg(tmp_path, doc), "--out-dir", tmp_path) == 0
    rep = read_report(tmp_path, "probe_report.json")
    assert rep["verdict"] == "PASS"
    assert (tmp_path / "probe.csv").read_text().count("\n") == 21


def test_probe_unknown_kind(tmp_path):
    doc = {"probe": {"kind": "nonsense"}}
    assert run_cli("probe", write_cfg(tmp_path, doc), "--out-dir", tmp_path) == 2


def test_atomic_write_leaves_no_partial(tmp_path, monkeypatch):
    target = tmp_path / "out"
    target.mkdir()
    (target / "report.json").write_text("old")

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(cli.os, "replace", boom)
    with pytest.raises(OSError):
        cli.write_atomic({target / "report.json": "new", target / "spectra.csv": "x"})
    assert (target / "report.json").read_text() == "old"
    assert sorted(p.name for p in target.iterdir()) == ["report.json"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "spectral_pollution", "run",
                           str(CONFIGS / "toy_golden.json"), "--out-dir", str(tmp_path),
                           "--sizes", "2,3,4,5"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "report.json").exists()

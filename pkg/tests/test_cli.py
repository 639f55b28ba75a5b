import json

import numpy as np
import pytest
import scipy.io

from mixlap.cli import main
from mixlap.domain import Domain, build_grid
from mixlap.operators import assemble


def write(tmp_path, name, cfg):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


CFG = {
    "domain": {"kind": "interval", "a": 0.0, "b": 1.0},
    "s": 0.25,
    "h": 0.03125,
    "lam": {"policy": "fixed", "value": 2.0},
    "rhs": {"name": "linear", "params": {"a": 1.0, "b": -1.0}},
    "audits": ["moser", "comparison", "contraction", "interpolation"],
    "seed": 11,
    "output": {"report": "out/r.json"},
}


def test_run_passes_and_writes_report(tmp_path, capsys):
    code = main(["run", str(write(tmp_path, "c.json", CFG))])
    out = capsys.readouterr().out
    assert code == 0
    assert "moser          PASS" in out
    rep = json.loads((tmp_path / "out" / "r.json").read_text())
    assert rep["pass"] is True and rep["grid"]["N_int"] == 31
    assert set(rep["audits"]) == {"moser", "comparison", "contraction", "interpolation"}
    assert rep["audits"]["moser"]["details"]["certificate"]["pass"] is True


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["run", str(write(tmp_path, "c.json", {**CFG, "s": 1.5}))]) == 2
    assert "s:" in capsys.readouterr().err


def test_advisory_flag(tmp_path):
    cfg = {**CFG, "s": 0.75, "audits": ["comparison"]}
    path = write(tmp_path, "c.json", cfg)
    assert main(["run", str(path)]) == 2
    assert main(["run", str(path), "--advisory"]) == 0


def test_threads_env(tmp_path, monkeypatch):
    path = write(tmp_path, "c.json", {**CFG, "audits": ["comparison"]})
    monkeypatch.setenv("MIXLAP_THREADS", "1")
    assert main(["run", str(path)]) == 0
    monkeypatch.setenv("MIXLAP_THREADS", "zero")
    assert main(["run", str(path)]) == 2


def test_report_determinism(tmp_path):
    path = write(tmp_path, "c.json", CFG)
    texts = []
    for _ in range(2):
        assert main(["run", str(path)]) == 0
        rep = json.loads((tmp_path / "out" / "r.json").read_text())
        rep.pop("timestamp")
        texts.append(json.dumps(rep))
    assert texts[0] == texts[1]


@pytest.mark.parametrize("which", ["loc", "frac"])
def test_export_matrix_roundtrip(tmp_path, which):
    cfg = {**CFG, "h": 0.25}
    path = write(tmp_path, "c.json", cfg)
    out = tmp_path / f"{which}.mtx"
    assert main(["export-matrix", str(path), "--which", which, "--out", str(out)]) == 0
    header = out.read_text().splitlines()[0]
    assert header == "%%MatrixMarket matrix coordinate real symmetric"
    M = scipy.io.mmread(str(out)).toarray()
    asm = assemble(build_grid(Domain.interval(0, 1), 0.25), 0.25)
    ref = asm.A_loc.toarray() if which == "loc" else asm.A_frac
    np.testing.assert_array_equal(M, ref)


def test_export_rejects_bad_which(tmp_path):
    with pytest.raises(SystemExit):
        main(["export-matrix", "x.json", "--which", "both", "--out", "y"])

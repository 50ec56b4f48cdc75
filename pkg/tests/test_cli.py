"""Command-line front end: exit codes, output files, round trips and determinism."""
import copy
import os

import numpy as np
import pytest
import yaml

from broadbeam import cli, socp
from broadbeam import config as cfgmod
from broadbeam.metrics import read_sections
from broadbeam.runner import read_coefficients, write_coefficients

SMALL = {
    "array": {"elements": 7, "spacing_m": 0.04, "sample_rate_hz": 8000.0},
    "filters": {"taps": 20},
    "bands": {"frequency_hz": [1500.0, 3500.0], "passband_deg": [80.0, 100.0],
              "stopband_deg": [[0.0, 60.0], [120.0, 180.0]], "steer_deg": 90.0},
    "thresholds": {"stopband_attenuation_db": 6.0},
    "design": {"kind": "v1"},
    "grid": {"M": 12, "K": 12, "virtual": [20, 20], "blocks": [4, 4], "edge": 0, "verify_factor": 2},
}


def write_cfg(tmp_path, name="cfg.yaml", **over):
    raw = copy.deepcopy(SMALL)
    for path, v in over.items():
        *head, last = path.split("__")
        d = raw
        for k in head:
            d = d.setdefault(k, {})
        d[last] = v
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return str(p)


def test_design_writes_outputs(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "o"
    assert cli.main(["design", cfg, "--out", str(out), "--seed", "4"]) == 0
    printed = capsys.readouterr().out
    assert "status = optimal" in printed and "A_p_db = " in printed
    for f in ("coefficients.csv", "report.txt", "beampattern.csv", "wng.csv", "group_delay.csv"):
        assert (out / f).exists(), f
    sec = read_sections(out / "report.txt")
    # the parsed configuration is echoed losslessly
    assert yaml.safe_load(sec["config"]) == cfgmod.load(cfg).data
    assert "seed = 4" in sec["provenance"]
    assert read_coefficients(out / "coefficients.csv", 7, 20).shape == (7, 20)


def test_evaluate_reproduces_design_metrics(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "o"
    cli.main(["design", cfg, "--out", str(out)])
    capsys.readouterr()
    assert cli.main(["evaluate", str(out / "coefficients.csv"), cfg, "--out", str(tmp_path / "e")]) == 0
    ev = capsys.readouterr().out
    a = read_sections(out / "report.txt")["metrics"]
    b = read_sections(tmp_path / "e" / "report.txt")["metrics"]
    assert a == b
    assert "sigma_tau = " in ev


def test_coefficients_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    c = rng.standard_normal((7, 20)) * 10.0 ** rng.integers(-12, 12, (7, 20))
    write_coefficients(tmp_path / "c.csv", c)
    assert np.array_equal(read_coefficients(tmp_path / "c.csv"), c)
    with pytest.raises(ValueError):
        read_coefficients(tmp_path / "c.csv", 6, 20)


def test_design_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, design__kind="v2", design__max_iters=3, design__b_path=False,
                    design__trust={"first": 0.2, "last": 0.01, "T": 3, "small": 0.01})
    for d in ("a", "b"):
        assert cli.main(["design", cfg, "--out", str(tmp_path / d)]) == 0
    ca, cb = ((tmp_path / d / "coefficients.csv").read_bytes() for d in ("a", "b"))
    assert ca == cb
    for f in ("beampattern.csv", "wng.csv", "group_delay.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    ra, rb = (read_sections(tmp_path / d / "report.txt") for d in ("a", "b"))
    assert ra["metrics"] == rb["metrics"] and ra["config"] == rb["config"]
    # one JSON line per iteration
    lines = (tmp_path / "a" / "trace.jsonl").read_text().splitlines()
    assert 1 <= len(lines) <= 3


def test_infeasible_exit_code(tmp_path, capsys):
    # WNG above the element count cannot hold with a unit response at the steering angle
    cfg = write_cfg(tmp_path, design__kind="c-a", thresholds__wng_db=10.0)
    out = tmp_path / "o"
    assert cli.main(["design", cfg, "--out", str(out)]) == 2
    sec = read_sections(out / "report.txt")
    assert "status = infeasible" in sec["status"]
    assert not (out / "coefficients.csv").exists()


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    monkeypatch.setattr(socp, "solve", lambda *a, **k: socp.SolveOutcome(socp.NUMERICAL_FAILURE))
    cfg = write_cfg(tmp_path)
    assert cli.main(["design", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "numerical-failure" in read_sections(tmp_path / "o" / "report.txt")["status"]


def test_config_and_usage_errors_exit_1(tmp_path, capsys):
    bad = write_cfg(tmp_path, bands__passband_deg=[100.0, 80.0])
    assert cli.main(["design", bad]) == 1
    assert "bands.passband_deg" in capsys.readouterr().err
    assert cli.main(["design", str(tmp_path / "missing.yaml")]) == 1
    (tmp_path / "junk.yaml").write_text("array: [unclosed")
    assert cli.main(["design", str(tmp_path / "junk.yaml")]) == 1
    with pytest.raises(SystemExit) as e:
        cli.main(["design"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        cli.main(["design", "x.yaml", "--b-path", "maybe"])
    assert e.value.code == 1
    cfg = write_cfg(tmp_path)
    assert cli.main(["evaluate", str(tmp_path / "nothing.csv"), cfg]) == 1


def test_dump_program_round_trips(tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "p.txt"
    assert cli.main(["dump-program", cfg, "--out", str(out)]) == 0
    text = out.read_text()
    prog = socp.load_program(text)
    assert socp.dump_program(prog) == text
    res = socp.solve(prog)
    assert res.status == socp.OPTIMAL
    v2 = write_cfg(tmp_path, "v2.yaml", design__kind="v2")
    assert cli.main(["dump-program", v2, "--out", str(tmp_path / "q.txt")]) == 0


def test_show_config_builds(capsys):
    assert cli.main(["show-config", "3", "c-b"]) == 0
    rc = cfgmod.build(yaml.safe_load(capsys.readouterr().out))
    assert rc.kind == "c-b" and rc.tau_d == 9.5


def test_bundled_name_resolves(capsys):
    assert os.path.exists(cfgmod.resolve("example1_v1a"))


def test_format_rows_marks_nf():
    rows = [("V1-A", "A_p_db", 0.5, 0.45), ("C-A", "status", "infeasible", "NF"),
            ("C-B", "status", "optimal", "NF")]
    text = cli.format_rows(rows).splitlines()
    assert len(text) == 4
    assert "0.05" in text[1]
    assert text[2].rstrip().endswith("match") and text[3].rstrip().endswith("MISMATCH")

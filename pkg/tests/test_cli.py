import json
import time

import numpy as np
import pytest

from hierakit import io as hio
from hierakit.cli import DEFAULT_CONFIG, main, parse_config_text, validate_config
from hierakit.errors import InvalidConfigurationError
from hierakit.validation import CHECKS


def run(tmp_path, command, config=None, *extra):
    argv = [command, "--out", str(tmp_path / "out")]
    if config is not None:
        p = tmp_path / "cfg.json"
        p.write_text(config if isinstance(config, str) else json.dumps(config))
        argv += ["--config", str(p)]
    return main(argv + list(extra))


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_nls_defaults_write_csv(tmp_path):
    assert run(tmp_path, "nls", None, "--self-test") == 0
    lines = (tmp_path / "out" / "nls_conserved.csv").read_text().splitlines()
    assert lines[0] == "t,mass,energy" and len(lines) == DEFAULT_CONFIG["solver"]["steps"] + 2
    assert list((tmp_path / "out" / "nls_fields").glob("*.hkt"))


def test_malformed_json_reports_position(tmp_path, capsys):
    assert run(tmp_path, "nls", '{\n  "grid": {"M": 16,,}\n}') == 2
    err = capsys.readouterr().err
    assert "cfg.json:2:" in err


@pytest.mark.parametrize("cfg", [{"grid": {"Mx": 16}}, {"solver": {"T": -1}}, {"version": 9},
                                 {"experiment": {"mode": "weird"}}, {"grid": {"M": 12}}])
def test_invalid_configs_exit_2(tmp_path, cfg):
    assert run(tmp_path, "nls", cfg) == 2


def test_free_nls_self_test(tmp_path, capsys):
    assert run(tmp_path, "nls", {"hierarchy": {"kappa0": 0.0}}, "--self-test") == 0
    assert "free evolution matches" in capsys.readouterr().out


def test_hierarchy_default_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    assert run(a, "hierarchy") == 0 and run(b, "hierarchy") == 0
    manifest = json.loads((a / "out" / "trajectory" / "manifest.json").read_text())
    assert manifest["K"] == 2 and len(manifest["samples"]) == DEFAULT_CONFIG["solver"]["steps"] + 1
    assert tree_bytes(a / "out") == tree_bytes(b / "out")
    traj = hio.load_trajectory(a / "out" / "trajectory")
    assert traj.K == 2


def test_hierarchy_duhamel_depth(tmp_path):
    assert run(tmp_path, "hierarchy", {"solver": {"method": "duhamel", "J": 5}}) == 2
    assert run(tmp_path, "hierarchy", {"solver": {"method": "duhamel", "J": 1}}) == 0


def test_hierarchy_non_contraction_exit_4(tmp_path):
    cfg = {"hierarchy": {"kind": "bbgky", "N": 16}, "solver": {"T": 1.0, "picard_max_iter": 2}}
    assert run(tmp_path, "hierarchy", cfg) == 4


def test_converge_smoke_and_plot(tmp_path):
    cfg = {"experiment": {"mode": "derivation", "N_list": [2, 3]}}
    t0 = time.perf_counter()
    assert run(tmp_path, "converge", cfg, "--plot") == 0
    assert time.perf_counter() - t0 < 60
    out = tmp_path / "out"
    rows = (out / "report.csv").read_text().splitlines()
    assert len(rows) == 3
    script = (out / "report.gp").read_text()
    produced = {p.name for p in out.glob("*.csv")}
    referenced = {tok.strip("'") for tok in script.split() if tok.strip("'").endswith(".csv")}
    assert referenced and referenced <= produced


def test_converge_self_mode_zero(tmp_path):
    assert run(tmp_path, "converge", {"experiment": {"mode": "self", "N_list": [16, 32]},
                                      "solver": {"steps": 5}}) == 0
    lines = (tmp_path / "out" / "report.csv").read_text().splitlines()
    header = lines[0].split(",")
    for line in lines[1:]:
        vals = dict(zip(header, line.split(",")))
        assert all(float(vals[c]) == 0.0 for c in header[4:])


def test_converge_partial_failure_exit_5(tmp_path):
    cfg = {"experiment": {"N_list": [16, 1000000]}, "solver": {"steps": 4, "T": 0.02}}
    assert run(tmp_path, "converge", cfg) == 5
    lines = (tmp_path / "out" / "report.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[1].startswith("16,")
    side = json.loads((tmp_path / "out" / "report.json").read_text())
    assert side["failures"][0]["N"] == 1000000


def test_validate_suite(tmp_path, capsys):
    assert run(tmp_path, "validate") == 0
    first = capsys.readouterr().out
    assert run(tmp_path, "validate", None, "--seed", "0") == 0
    assert capsys.readouterr().out == first
    assert first.count("PASS") == len(CHECKS)


@pytest.mark.parametrize("name", ["partial_trace_oracle", "nls_conservation", "bbgky_residual"])
def test_validate_injected_fault(tmp_path, capsys, name):
    assert run(tmp_path, "validate", None, "--inject-fault", name) == 1
    assert name in capsys.readouterr().err


def test_validate_unknown_fault(tmp_path):
    assert run(tmp_path, "validate", None, "--inject-fault", "bogus") == 2


def test_seed_drives_random_initial_data(tmp_path):
    cfg = {"experiment": {"initial": {"type": "random", "modes": 3}}}
    outs = []
    for seed in ("1", "1", "2"):
        assert run(tmp_path, "nls", cfg, "--seed", seed) == 0
        outs.append((tmp_path / "out" / "nls_conserved.csv").read_bytes())
    assert outs[0] == outs[1] and outs[0] != outs[2]


def test_config_helpers():
    cfg = parse_config_text('{"grid": {"M": 8}}')
    assert cfg["grid"]["M"] == 8 and cfg["grid"]["d"] == 1
    with pytest.raises(InvalidConfigurationError):
        parse_config_text('{"solver": {"J": 4, "method": "duhamel"}}')
    validate_config(cfg)

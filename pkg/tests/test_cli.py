import hashlib
import json

import numpy as np
import pytest

from cfrg.cli import SCHEMA, ValidationError, main, parse_config
from cfrg.fieldio import load_field

CONST_SIGMA = {"const": [1 / 3, 1 / 3, -2 / 3, 0, 0, 0]}
WAVE_SIGMA = {"const": [0.3, 0.3, -0.6, 0, 0, 0],
              "modes": [{"m": [1, 0, 0], "eps": [[0, 0, 0], [0, 0.1, 0], [0, 0, -0.1]]}]}


def config(sub, **extra):
    cfg = {"schema": SCHEMA, "subcommand": sub, "lattice": {"n": 8}}
    cfg.update(extra)
    return cfg


def run_cli(tmp_path, cfg, name="run", args=()):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / name
    code = main(["--config", str(path), "--out", str(out), *args])
    return code, out


def report(out):
    return json.loads((out / "report.json").read_text())


def test_solve_constant_data(tmp_path, capsys):
    code, out = run_cli(tmp_path, config("solve", background={"mode": "flat", "R": 0.0},
                                         sigma=CONST_SIGMA, tau=1.0))
    assert code == 0
    rep = report(out)["solve"]
    assert max(abs(rep["phi_max"] - 1), abs(rep["phi_min"] - 1)) <= rep["tol"]
    phi, _ = load_field(out / "phi.cfrg")
    assert np.abs(phi - 1).max() <= rep["tol"]
    assert capsys.readouterr().out.count("\n") == 1


def test_manifest_hashes(tmp_path):
    _, out = run_cli(tmp_path, config("solve", background={"mode": "flat", "R": 0.0},
                                      sigma=CONST_SIGMA, tau=1.0))
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["files"]) == {"report.json", "phi.cfrg", "phi_slice.csv"}
    for name, digest in manifest["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest


def test_obstructed_solve_is_refused(tmp_path, capsys):
    code, out = run_cli(tmp_path, config("solve", background={"mode": "flat", "R": 1.0}, tau=1.0))
    assert code == 2
    assert "obstructed" in capsys.readouterr().err
    assert not (out / "phi.cfrg").exists()


def test_table_defaults(tmp_path):
    code, out = run_cli(tmp_path, config("table", lattice={"n": 16}))
    assert code == 0
    assert report(out)["table"]["matches"] == 12


@pytest.mark.parametrize("sub, extra", [
    ("sweep", {"background": {"mode": "flat", "R": -1.0}, "sigma": WAVE_SIGMA, "tau": 1.0,
               "experiment": {"samples": 3}}),
    ("degenerate", {"background": {"mode": "flat", "R": 0.0}, "sigma": CONST_SIGMA, "tau": 1.0}),
    ("liouville", {"experiment": {"k": 1.0}}),
    ("reconstruct", {"background": {"mode": "conformally_flat", "psi": [{"amplitude": 0.1, "m": [1, 0, 0]}]},
                     "sigma": CONST_SIGMA, "tau": 1.0}),
    ("yamabe", {"background": {"mode": "flat", "R": 1.0}}),
    ("converge", {"background": {"mode": "flat", "R": 0.0}, "sigma": WAVE_SIGMA, "tau": 1.0,
                  "experiment": {"n_values": [8, 16, 32], "psi": [{"amplitude": 0.1, "m": [1, 0, 0]}]}}),
])
def test_subcommands_succeed_and_repeat_bit_exactly(tmp_path, sub, extra):
    cfg = config(sub, **extra)
    code_a, a = run_cli(tmp_path, cfg, "a")
    code_b, b = run_cli(tmp_path, cfg, "b", args=("--threads", "2"))
    assert code_a == code_b == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    for dump in a.glob("*.cfrg"):
        assert dump.read_bytes() == (b / dump.name).read_bytes()


def test_reconstruct_dumps_reload(tmp_path):
    _, out = run_cli(tmp_path, config("reconstruct", background={"mode": "flat", "R": 0.0},
                                      sigma=WAVE_SIGMA, tau=1.0))
    gamma, lat = load_field(out / "gamma.cfrg")
    assert gamma.shape == (6, 8, 8, 8) and lat.n == 8
    meta = json.loads((out / "initial_data.json").read_text())
    assert meta["files"] == {"gamma": "gamma.cfrg", "K": "K.cfrg"}


def test_threads_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("CFRG_THREADS", "2")
    code, _ = run_cli(tmp_path, config("yamabe"))
    assert code == 0
    monkeypatch.setenv("CFRG_THREADS", "many")
    code, _ = run_cli(tmp_path, config("yamabe"), "bad")
    assert code == 2


@pytest.mark.parametrize("raw, message", [
    ({"schema": "other"}, "schema"),
    ({"schema": SCHEMA, "subcommand": "plot"}, "subcommand"),
    ({"schema": SCHEMA, "subcommand": "solve", "lattice": {"n": 4}}, "lattice.n"),
    ({"schema": SCHEMA, "subcommand": "solve", "tau": "one"}, "tau"),
    ({"schema": SCHEMA, "subcommand": "solve", "solver": {"tol": -1}}, "solver.tol"),
])
def test_validation_messages(raw, message):
    with pytest.raises(ValidationError, match=message):
        parse_config(raw)


def test_validation_exit_code(tmp_path):
    code, _ = run_cli(tmp_path, config("liouville", experiment={"k": -1.0}))
    assert code == 2


def test_missing_config_is_io_error(tmp_path):
    assert main(["--config", str(tmp_path / "absent.json"), "--out", str(tmp_path / "o")]) == 5


def test_precondition_from_module_is_validation(tmp_path):
    # trace-ful constant part violates the TT precondition
    code, _ = run_cli(tmp_path, config("solve", sigma={"const": [1, 1, 1, 0, 0, 0]}, tau=1.0))
    assert code == 2

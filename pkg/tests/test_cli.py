import json
import subprocess
import sys

import pytest

from roreg import cli


def run(capsys, tmp_path, command, cfg=None, *extra):
    argv = [command]
    if cfg is not None:
        path = tmp_path / "cfg.json"
        path.write_text(cfg if isinstance(cfg, str) else json.dumps(cfg))
        argv += ["--config", str(path)]
    code = cli.main(argv + list(extra))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out else None)


@pytest.mark.parametrize("command", ["check-im", "solve", "scan", "robust"])
def test_heat_preset_passes(capsys, tmp_path, command):
    code, rep = run(capsys, tmp_path, command, {"preset": "heat-constant", "perturbations": {"count": 20}})
    assert code == 0


def test_check_im_report(capsys, tmp_path):
    _, rep = run(capsys, tmp_path, "check-im", {"preset": "heat-constant"})
    assert rep["verdicts"] == {"p_copy": True, "g_conditions": True, "restricted_map": True}
    assert rep["frequencies"][0]["kernel_dim"] == 2


def test_zero_gain_preset_names_restricted_failure(capsys, tmp_path):
    code, rep = run(capsys, tmp_path, "check-im", {"preset": "heat-constant-k0"})
    assert code == 1 and rep["failures"] == ["restricted_map@k=0"]


def test_resonance_exit_code(capsys, tmp_path):
    code, rep = run(capsys, tmp_path, "solve", {"preset": "heat-constant-k0"})
    assert code == 3 and rep["error"] == "ResonanceError" and rep["k"] == 0


def test_deficient_preset(capsys, tmp_path):
    code, rep = run(capsys, tmp_path, "check-im", {"preset": "heat-constant-deficient"})
    assert code == 1 and set(rep["failures"]) == {"p_copy@k=0", "g_condition_ii@k=0", "restricted_map@k=0"}
    assert run(capsys, tmp_path, "robust", {"preset": "heat-constant-deficient"})[0] == 1


@pytest.mark.parametrize("cfg", ["{not json", {"preset": "heat-constant", "bogus": 1}, {"preset": "nope"},
                                 {"scan": {"delta": -1}}])
def test_config_errors(capsys, tmp_path, cfg):
    assert run(capsys, tmp_path, "scan", cfg)[0] == 2


def test_missing_pieces_and_file(capsys, tmp_path):
    assert run(capsys, tmp_path, "solve", {"N": 5})[0] == 2
    assert cli.main(["solve", "--config", str(tmp_path / "absent.json")]) == 2
    assert cli.main(["scan", "--threads", "0"]) == 2


def test_solve_writes_files(capsys, tmp_path):
    out = tmp_path / "o"
    code, rep = run(capsys, tmp_path, "solve", {"preset": "heat-constant"}, "--out", str(out))
    assert code == 0 and rep["regulator_equations_solved"]
    assert rep["sylvester"]["max_regulation_residual"] <= 1e-8
    lines = (out / "sigma.csv").read_text().splitlines()
    assert lines[0] == "flat_index,state_index,re,im" and len(lines) == 34


def test_solve_zero_input(capsys, tmp_path):
    cfg = {
        "plant": {"inline": {"eigenvalues": [-1.0, -2.0], "input_modes": [[1.0], [0.5]], "output_modes": [[1.0, 1.0]]}},
        "exosystem": {"blocks": [{"k": 0, "omega": 1.0}]},
        "controller": {"G1": [[-1.0]], "G2": [[1.0]], "K": [[0.5]]},
    }
    code, rep = run(capsys, tmp_path, "solve", cfg)
    assert code == 0 and rep["sylvester"]["series_norm_sq"] == 0.0


def test_p_copy_builder_config(capsys, tmp_path):
    cfg = {
        "plant": {"heat": {"N": 8}},
        "exosystem": {"blocks": [{"k": 0, "omega": 0.0}]},
        "controller": {"builder": "p-copy", "G2_scale": 0.2},
    }
    code, rep = run(capsys, tmp_path, "check-im", cfg)
    # K defaults to zero, so the restricted map fails while the structure passes
    assert code == 1 and rep["verdicts"]["p_copy"] and not rep["verdicts"]["restricted_map"]


def test_plant_file(capsys, tmp_path):
    from roreg.heat_bench import build_heat_plant

    pfile = tmp_path / "plant.json"
    pfile.write_text(json.dumps(build_heat_plant(6).to_json()))
    cfg = {"plant": {"file": str(pfile)}, "exosystem": {"blocks": [{"k": 0, "omega": 0.0}]},
           "controller": {"G1": [[0.0, 0.0], [0.0, 0.0]], "G2": [[0.2, 0.0], [0.0, 0.2]], "K": [[-1.0, 0.0], [0.0, -1.0]]}}
    code, rep = run(capsys, tmp_path, "check-im", cfg)
    assert code == 0


def test_simulate_zero_span(capsys, tmp_path):
    out = tmp_path / "sim"
    code, rep = run(capsys, tmp_path, "simulate", {"preset": "heat-constant", "t_span": [0, 0]}, "--out", str(out))
    assert code == 0 and rep["n_times"] == 1
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert len(lines) == 2
    from roreg.heat_bench import initial_coefficients

    x0 = float(lines[1].split(",")[1])
    assert x0 == initial_coefficients(31)[0]


def test_simulate_heat(capsys, tmp_path):
    code, rep = run(capsys, tmp_path, "simulate", {"preset": "heat-constant", "t_span": [0, 30]})
    assert code == 0 and rep["two_path_deviation"] <= 1e-6
    assert rep["y_final"] == pytest.approx([0.2, 0.6], abs=1e-2)


def test_scan_default_verdict(capsys, tmp_path):
    code, rep = run(capsys, tmp_path, "scan", {"preset": "heat-constant"})
    assert code == 0 and rep["verdict"] and rep["q_estimate"] < 1


def test_robust_seeded_determinism(capsys, tmp_path):
    cfg = {"preset": "heat-constant", "perturbations": {"count": 5}}
    argv = ["robust", "--config", str(tmp_path / "cfg.json"), "--seed", "3"]
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    cli.main(argv)
    a = capsys.readouterr().out
    cli.main(argv)
    b = capsys.readouterr().out
    assert a == b and json.loads(a)["all_solvable"]


def test_heat_bench_deterministic_files(capsys, tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"scan": {"grid_density": 64}, "periodic": {"K_exo": 2}}))
    outs = []
    for name in ("a", "b"):
        code = cli.main(["heat-bench", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / name), "--threads", "2"])
        capsys.readouterr()
        assert code == 0
        outs.append((tmp_path / name / "heat" / "constant" / "report.json").read_bytes())
    assert outs[0] == outs[1]


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"preset": "heat-constant"}))
    proc = subprocess.run([sys.executable, "-m", "roreg", "check-im", "--config", str(cfg)], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["agree"]

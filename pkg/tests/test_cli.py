import json

import pytest

from hartree_lab.cli import DEFAULTS, ConfigError, main, merge_config, validate_config

SMALL = ["--n", "300", "--r-max", "30"]


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_solve_nr_writes_all_formats(tmp_path):
    code, out = run(tmp_path, "solve-nr", *SMALL)
    assert code == 0
    man = manifest(out)
    assert man["status"] == 0 and man["subcommand"] == "solve-nr"
    assert set(man["outputs"]) == {"ground_state.json", "ground_state_profile.csv", "ground_state_profile.png"}
    for name in man["outputs"]:
        assert (out / name).stat().st_size > 0
    assert set(man["versions"]) >= {"hartree_lab", "python", "numpy", "scipy", "matplotlib"}
    assert man["config"]["grid"] == {"n": 300, "r_max": 30.0}
    state = json.loads((out / "ground_state.json").read_text())
    assert state["multiplier"] == 1.0


def test_outputs_are_deterministic(tmp_path):
    _, a = run(tmp_path, "solve-rel", *SMALL, "--c", "5", "--N", "1", name="a")
    _, b = run(tmp_path, "solve-rel", *SMALL, "--c", "5", "--N", "1", name="b")
    names = manifest(a)["outputs"]
    assert names == manifest(b)["outputs"]
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_format_selection(tmp_path):
    code, out = run(tmp_path, "solve-nr", *SMALL, "--formats", "csv")
    assert code == 0
    assert manifest(out)["outputs"] == ["ground_state_profile.csv"]


@pytest.mark.parametrize("args", [
    ["solve-rel", "--n", "300", "--c", "5"],
    ["solve-nr", "--n", "8"],
    ["solve-nr", "--tol", "1e-20"],
    ["solve-nr", "--formats", "pdf"],
    ["solve-nr", "--N", "1", "--multiplier", "2"],
    ["solve-nr", "--c", "3"],
    ["sweep-c", *SMALL, "--c-list", "1,10"],
])
def test_invalid_input_exits_2(tmp_path, args):
    assert run(tmp_path, *args)[0] == 2


def test_collapse_exits_3(tmp_path):
    code, out = run(tmp_path, "solve-rel", "--n", "400", "--r-max", "30", "--c", "1", "--N", "4")
    assert code == 3
    assert manifest(out)["status"] == 3


def test_inconclusive_bracket_exits_4(tmp_path):
    assert run(tmp_path, "critical-mass", "--n", "100", "--r-max", "20")[0] == 4


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('[grid]\nn = 250\nr_max = 25.0\n[output]\nformats = ["json"]\n')
    code, out = run(tmp_path, "solve-nr", "--config", str(cfg), "--n", "260")
    assert code == 0
    man = manifest(out)
    assert man["config"]["grid"] == {"n": 260, "r_max": 25.0}
    assert man["outputs"] == ["ground_state.json"]


def test_unknown_config_key_exits_2(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[grid]\nnodes = 10\n")
    assert run(tmp_path, "solve-nr", "--config", str(cfg))[0] == 2
    cfg.write_text("[plots]\ndpi = 10\n")
    assert run(tmp_path, "solve-nr", "--config", str(cfg))[0] == 2
    cfg.write_text("not toml = = 1")
    assert run(tmp_path, "solve-nr", "--config", str(cfg))[0] == 2


def test_env_sets_output_dir_unless_flag_given(tmp_path, monkeypatch):
    env_dir = tmp_path / "from_env"
    monkeypatch.setenv("HARTREE_LAB_OUT", str(env_dir))
    cfg = merge_config({"output": {"dir": "from_file"}}, {})
    assert cfg["output"]["dir"] == str(env_dir)
    assert merge_config({}, {"out": "flag"})["output"]["dir"] == "flag"
    assert main(["solve-nr", *SMALL, "--formats", "json"]) == 0
    assert (env_dir / "ground_state.json").exists()


def test_merge_leaves_defaults_untouched():
    merge_config({"grid": {"n": 17}}, {"r_max": 3.0})
    assert DEFAULTS["grid"] == {"n": 2000, "r_max": 30.0}


def test_validate_config_rejects_bad_values():
    cfg = merge_config({}, {})
    cfg["sweep"]["c_list"] = []
    with pytest.raises(ConfigError):
        validate_config(cfg, "sweep-c")


def test_shoot_and_spectrum(tmp_path):
    code, out = run(tmp_path, "shoot", *SMALL, "--formats", "json,csv", name="shoot")
    assert code == 0
    shot = json.loads((out / "shoot.json").read_text())
    assert shot["q0"] == pytest.approx(0.28815786537661925, rel=1e-9)
    code, out = run(tmp_path, "spectrum", *SMALL, "--l-max", "3", "--k", "3", name="spec")
    assert code == 0
    assert json.loads((out / "kernel_count.json").read_text())["kernel_count"] == 3
    names = set(manifest(out)["outputs"])
    assert {"spectrum_l0.json", "spectrum_l3.json", "spectrum_lminus.json", "eigenvalues.csv", "spectrum.png"} <= names


def test_sweep_heat_and_critical_mass(tmp_path):
    code, out = run(tmp_path, "sweep-c", "--n", "600", "--r-max", "40", "--c-list", "5,10", name="sweep")
    assert code == 0
    doc = json.loads((out / "sweep.json").read_text())
    assert [r["c"] for r in doc["records"]] == [5.0, 10.0]
    assert "richardson_gap" in doc
    code, out = run(tmp_path, "heat-kernel", "--n", "96", "--r-max", "9", "--l-max", "2", name="heat")
    assert code == 0
    sectors = json.loads((out / "heat_kernel.json").read_text())["sectors"]
    assert all(s["min_entry"] > 0 and s["semigroup_defect"] <= 1e-5 for s in sectors)
    code, out = run(tmp_path, "critical-mass", "--n", "1000", "--r-max", "20", name="crit")
    assert code == 0
    est = json.loads((out / "critical_mass.json").read_text())
    assert est["N_lo"] > 4 / 3.141592653589793


@pytest.mark.slow
def test_validate_subcommand(tmp_path, capsys):
    code, out = run(tmp_path, "validate", "--n", "1000", "--formats", "json,csv", name="validate")
    assert code == 0
    rows = json.loads((out / "validate.json").read_text())
    assert rows and all(r["result"] == "pass" for r in rows)
    assert "kernel count" in capsys.readouterr().out


def test_module_entry_point():
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "hartree_lab", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "hartree-lab" in proc.stdout

import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from _oracles import cmb_life_bisect, neuber_bisect
from lcfpof import __version__
from lcfpof import cli
from lcfpof.bootstrap import load_ensemble, read_pof_csv, weibull_cdf
from lcfpof.calibration import FittedModel, save_fitted
from lcfpof.field_mesh import FieldSet, read_vtk_field, write_model
from lcfpof.synthetic import blade_material, box_tet10

T_UNIFORM = 1000.0
SXX_RANGE = 1600.0  # von Mises range; amplitude = 0.5 * range


def uniform_life_oracle(m):
    t = blade_material()
    k = t.temperature_knots
    at = {name: np.interp(T_UNIFORM, k, getattr(t, name)) for name in
          ("sigma_f", "b_exp", "eps_f", "c_exp", "young", "ro_K", "ro_n")}
    eps = neuber_bisect(0.5 * SXX_RANGE, at["young"], at["ro_K"], at["ro_n"])
    ndet = cmb_life_bisect(eps, at["sigma_f"] / at["young"], at["b_exp"], at["eps_f"], at["c_exp"])
    return ndet * 6.0 ** (-1.0 / m)  # unit cube: area 6


def write_config(path, doc):
    path.write_text(yaml.safe_dump(doc))
    return str(path)


@pytest.fixture
def uniform_case(tmp_path):
    mesh, _, _ = box_tet10(2, 2, 2)
    stress = np.zeros((mesh.n_nodes, 6))
    stress[:, 0] = SXX_RANGE
    write_model(tmp_path / "cube.model", mesh, FieldSet(np.full(mesh.n_nodes, T_UNIFORM), stress))
    save_fitted(FittedModel(7.5, blade_material(), 0.0), tmp_path / "fitted.json")
    cfg = write_config(tmp_path / "config.yaml", {
        "paths": {"model": "cube.model", "fitted": "fitted.json", "output_dir": "out"},
        "bootstrap": {"samples": 1},
        "material": {"clamp_life": False},
    })
    return tmp_path, cfg


@pytest.fixture(scope="module")
def demo_case(tmp_path_factory):
    d = tmp_path_factory.mktemp("demo")
    assert cli.main(["demo", str(d), "--nx", "6", "--ny", "2", "--nz", "5", "--per-knot", "8",
                     "--samples", "6", "--seed", "3"]) == 0
    assert cli.main(["calibrate", str(d / "config.yaml")]) == 0
    return d


def digest_line(path):
    return [ln for ln in path.read_text().splitlines() if ln.startswith("# config-digest")][0]


# ---------------------------------------------------------------- results


def test_uniform_field_single_sample(uniform_case):
    d, cfg = uniform_case
    assert cli.main(["assess", cfg, "--set", "curve.grid.count=21"]) == 0
    summary = yaml.safe_load((d / "out" / "assess_summary.yaml").read_text())
    eta = uniform_life_oracle(7.5)
    assert summary["eta_mle"] == pytest.approx(eta, rel=1e-9)
    assert summary["surface_area"] == pytest.approx(6.0, rel=1e-12)
    assert summary["ensemble"]["samples"] == 1
    curve = read_pof_csv(d / "out" / "pof_curve.csv")
    assert curve["n"].size == 21
    np.testing.assert_array_equal(curve["n_star"], np.linspace(0.0, 1.5, 21))
    np.testing.assert_array_equal(curve["total"], weibull_cdf(curve["n"], 7.5, summary["eta_mle"]))
    np.testing.assert_array_equal(curve["q5"], curve["total"])
    for k, v in summary["total_pof"].items():
        assert v == pytest.approx(summary["mle_pof"][k], rel=1e-15)


def test_export_hazard_matches_summary(uniform_case):
    d, cfg = uniform_case
    assert cli.main(["export-hazard", cfg, "--set", "hazard.n_star=0.5"]) == 0
    field = read_vtk_field(d / "out" / "hazard_field.vtk")
    rho = field["cell_data"]["hazard_density"]
    eta = uniform_life_oracle(7.5)
    ndet = eta * 6.0 ** (1 / 7.5)
    n = 0.5 * eta
    # uniform field: every face carries the same density (m/N)(n/N)^(m-1)
    np.testing.assert_allclose(rho, 7.5 / ndet * (n / ndet) ** 6.5, rtol=1e-8)
    assert field["cells"].shape[0] == 48


def test_explicit_cycle_grid(uniform_case):
    d, cfg = uniform_case
    assert cli.main(["assess", cfg, "--set", "curve.grid.kind=cycles", "--set", "curve.grid.values=[10, 100, 1000]",
                     "--set", "hazard.cycles=50", "--set", "hazard.n_star=null"]) == 0
    curve = read_pof_csv(d / "out" / "pof_curve.csv")
    assert curve["n"].tolist() == [10.0, 100.0, 1000.0]
    summary = yaml.safe_load((d / "out" / "assess_summary.yaml").read_text())
    assert summary["hazard_cycles"] == 50.0


# ---------------------------------------------------------------- determinism and provenance


def test_bootstrap_command_is_reproducible(demo_case, tmp_path):
    cfg = str(demo_case / "config.yaml")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["bootstrap", cfg, "--samples", "10", "--seed", "7", "--output-dir", str(a)]) == 0
    assert cli.main(["bootstrap", cfg, "--samples", "10", "--seed", "7", "--output-dir", str(b),
                     "--workers", "2"]) == 0
    ens = load_ensemble(a / "ensemble.json")
    assert ens.n_requested == 10 and len(ens) + ens.failed_count == 10
    assert (a / "ensemble.json").read_bytes() == (b / "ensemble.json").read_bytes()


def test_assess_outputs_are_byte_identical_across_workers(demo_case, tmp_path):
    cfg = str(demo_case / "config.yaml")
    outs = []
    for workers, name in ((1, "w1"), (2, "w2"), (1, "again")):
        out = tmp_path / name
        assert cli.main(["assess", cfg, "--workers", str(workers), "--output-dir", str(out)]) == 0
        outs.append(out)
    files = ("pof_curve.csv", "hazard_field.vtk", "assess_summary.yaml", "ensemble.json")
    for f in files:
        ref = hashlib.sha256((outs[0] / f).read_bytes()).hexdigest()
        for o in outs[1:]:
            assert hashlib.sha256((o / f).read_bytes()).hexdigest() == ref, f


def test_header_carries_version_and_config_digest(demo_case, tmp_path):
    cfg = str(demo_case / "config.yaml")
    assert cli.main(["assess", cfg, "--output-dir", str(tmp_path / "a")]) == 0
    assert cli.main(["assess", cfg, "--output-dir", str(tmp_path / "b"), "--seed", "4"]) == 0
    text = (tmp_path / "a" / "pof_curve.csv").read_text().splitlines()
    assert text[0] == f"# lcfpof {__version__} assess"
    assert text[1].startswith("# config-digest sha256:") and len(text[1].split(":")[1]) == 64
    assert digest_line(tmp_path / "a" / "pof_curve.csv") == digest_line(tmp_path / "a" / "assess_summary.yaml")
    assert digest_line(tmp_path / "a" / "pof_curve.csv") != digest_line(tmp_path / "b" / "pof_curve.csv")
    fitted = json.loads((demo_case / "out" / "fitted_model.json").read_text())
    assert fitted["header"][0] == f"lcfpof {__version__} calibrate"


def test_assess_reuses_matching_ensemble(demo_case, tmp_path):
    cfg = str(demo_case / "config.yaml")
    out = tmp_path / "o"
    assert cli.main(["bootstrap", cfg, "--output-dir", str(out)]) == 0
    before = (out / "ensemble.json").read_bytes()
    assert cli.main(["assess", cfg, "--output-dir", str(out)]) == 0
    assert (out / "ensemble.json").read_bytes() == before
    assert cli.main(["assess", cfg, "--output-dir", str(out), "--samples", "7"]) == cli.EXIT_VALIDATION


# ---------------------------------------------------------------- errors


def test_missing_input_file_is_io_error(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml", {"paths": {"model": "nope.model", "fitted": "nope.json"}})
    assert cli.main(["assess", cfg]) == cli.EXIT_IO
    assert "no such file" in capsys.readouterr().err


def test_unknown_config_key_is_validation_error(uniform_case, capsys):
    _, cfg = uniform_case
    assert cli.main(["assess", cfg, "--set", "curve.colour=red"]) == cli.EXIT_VALIDATION
    assert "curve.colour" in capsys.readouterr().err


def test_bad_config_value(uniform_case):
    _, cfg = uniform_case
    assert cli.main(["assess", cfg, "--set", "bootstrap.samples=0"]) == cli.EXIT_VALIDATION
    assert cli.main(["assess", cfg, "--workers", "0"]) == cli.EXIT_VALIDATION


def test_usage_error_exits_with_validation_code():
    with pytest.raises(SystemExit) as info:
        cli.main(["assess", "--no-such-flag"])
    assert info.value.code == cli.EXIT_VALIDATION


def test_empty_specimen_file(tmp_path, capsys):
    (tmp_path / "s.csv").write_text("")
    from lcfpof.material import save_material

    save_material(blade_material(), tmp_path / "m.yaml")
    cfg = write_config(tmp_path / "c.yaml", {"paths": {"specimens": "s.csv", "material": "m.yaml"}})
    assert cli.main(["calibrate", cfg]) == cli.EXIT_VALIDATION
    err = capsys.readouterr().err
    assert "s.csv" in err and "empty" in err
    assert not (tmp_path / "out").exists() or not any((tmp_path / "out").iterdir())


def test_unsolvable_life_is_computation_error(uniform_case, capsys):
    d, cfg = uniform_case
    # a tiny stress puts the life above the upper bound; clamping is off in this config
    mesh, _, _ = box_tet10(1, 1, 1)
    write_model(d / "cube.model", mesh, FieldSet(np.full(mesh.n_nodes, T_UNIFORM), np.full((mesh.n_nodes, 6), 1e-6)))
    assert cli.main(["assess", cfg]) == cli.EXIT_COMPUTATION
    err = capsys.readouterr().err
    assert "N_max" in err and "[deterministic life field]" in err
    assert cli.main(["assess", cfg, "--set", "material.clamp_life=true"]) == cli.EXIT_OK


def test_failure_leaves_no_partial_outputs(uniform_case, monkeypatch):
    d, cfg = uniform_case

    def broken(*args, **kwargs):
        raise OSError("disk full")

    monkeypatch.setattr(cli, "export_hazard_field", broken)
    # the PoF table is staged before the hazard field fails
    assert cli.main(["assess", cfg]) == cli.EXIT_IO
    out = d / "out"
    assert not out.exists() or list(out.iterdir()) == []


def test_failure_keeps_previous_outputs(uniform_case, monkeypatch):
    d, cfg = uniform_case
    assert cli.main(["assess", cfg]) == 0
    before = {p.name: p.read_bytes() for p in (d / "out").iterdir()}
    monkeypatch.setattr(cli, "export_hazard_field", lambda *a, **k: (_ for _ in ()).throw(OSError("x")))
    assert cli.main(["assess", cfg, "--set", "curve.grid.count=5"]) == cli.EXIT_IO
    assert {p.name: p.read_bytes() for p in (d / "out").iterdir()} == before


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "lcfpof.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout

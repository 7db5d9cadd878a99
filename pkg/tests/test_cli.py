"""Config parsing, run artifacts, exports, reproducibility."""

import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

from fibermem.cli import (RunConfig, build_problem, emit_config, export_fields,
                          main, parse_config, run)
from fibermem.errors import ConfigError
from fibermem.fem import assemble_and_solve
from fibermem.geometry import make_strip_mesh
from fibermem.material import MembraneMaterial
from fibermem.optimizer import initial_design

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def tiny_strip_config(tmp_path, **overrides):
    base = RunConfig(kind="strip", nx=6, ny=3, E=1.0, nu=0.0, t_b=0.005, alpha=2.0,
                     q=0.001, volume_budget=0.0015, upper1=0.008, upper2=0.008,
                     directory=str(tmp_path / "out"))
    return dataclasses.replace(base, **overrides)


class TestParseConfig:
    def test_spheroid_benchmark_file(self):
        config = parse_config((CONFIG_DIR / "spheroid.ini").read_text())
        assert config.kind == "spheroid"
        assert (config.E, config.nu, config.t_b) == (1.0, 0.3, 0.005)
        assert config.pressure == 10.0
        assert config.volume_budget == 0.01
        assert config.upper1 == config.upper2 == 0.004
        assert config.alpha == 1.0
        assert config.n_lat == 64 and config.n_lon == 128 and config.half

    def test_strip_benchmark_file(self):
        config = parse_config((CONFIG_DIR / "strip.ini").read_text())
        assert config.kind == "strip"
        assert config.nu == 0.0
        assert config.q == 0.001
        assert config.upper1 == config.upper2 == 0.008
        assert config.alpha == 2.0

    def test_invalid_poisson_rejected(self):
        text = "[geometry]\nkind = strip\n[material]\nnu = 1.5\n"
        with pytest.raises(ConfigError, match="nu"):
            parse_config(text)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("[geometry]\nkind = strip\nbananas = 7\n")

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config("[geometry]\nkind = strip\n[solver]\nx = 1\n")

    def test_missing_kind_rejected(self):
        with pytest.raises(ConfigError, match="kind"):
            parse_config("[material]\nE = 1.0\n")

    def test_zero_traction_direction_rejected(self):
        text = ("[geometry]\nkind = strip\n"
                "[load]\nq = 0.001\nq_direction = 0 0 0\n")
        with pytest.raises(ConfigError, match="nonzero"):
            parse_config(text)

    def test_parse_error_reported(self):
        with pytest.raises(ConfigError, match="parse error"):
            parse_config("kind = strip\n")   # key outside any section

    def test_round_trip(self):
        config = parse_config((CONFIG_DIR / "spheroid.ini").read_text())
        assert parse_config(emit_config(config)) == config
        strip = parse_config((CONFIG_DIR / "strip.ini").read_text())
        assert parse_config(emit_config(strip)) == strip


class TestExportFields:
    def test_two_cells_five_arrays(self, tmp_path):
        mesh = make_strip_mesh(2, 1)
        mat = MembraneMaterial(E=1.0, nu=0.0, t_b=0.005, alpha=1.0)
        from fibermem.fem import LoadCase
        loads = LoadCase(edge_tractions={"loaded": (0.001, 0, 0)}, dirichlet={"clamped": "xyz"})
        design = initial_design(mesh, mat, loads, 0.001, upper1=0.004, upper2=0.004)
        state = assemble_and_solve(mesh, design, mat, loads)
        path = tmp_path / "out.vtk"
        export_fields(mesh, design, state, path)
        text = path.read_text()
        assert "CELLS 2 10" in text
        assert text.count("SCALARS") == 4
        assert text.count("VECTORS") == 1
        for name in ("t1", "t2", "fiber_direction", "M_I", "M_II"):
            assert name in text

    def test_reexport_is_byte_identical(self, tmp_path):
        mesh = make_strip_mesh(3, 2)
        mat = MembraneMaterial(E=1.0, nu=0.0, t_b=0.005, alpha=1.0)
        from fibermem.fem import LoadCase
        loads = LoadCase(edge_tractions={"loaded": (0.001, 0, 0)}, dirichlet={"clamped": "xyz"})
        design = initial_design(mesh, mat, loads, 0.001, upper1=0.004, upper2=0.004)
        state = assemble_and_solve(mesh, design, mat, loads)
        a, b = tmp_path / "a.vtk", tmp_path / "b.vtk"
        export_fields(mesh, design, state, a)
        export_fields(mesh, design, state, b)
        assert a.read_bytes() == b.read_bytes()


class TestRun:
    def test_artifacts_written_and_exit_zero(self, tmp_path):
        config = tiny_strip_config(tmp_path)
        code = run(config, quiet=True)
        assert code == 0
        out = tmp_path / "out"
        for name in ("history.csv", "design.csv", "fields.vtk",
                     "effective_config.ini", "summary.json"):
            assert (out / name).exists(), name
        summary = json.loads((out / "summary.json").read_text())
        assert summary["converged"] is True
        assert summary["compliance"] > 0
        # the effective config echoes every key and parses back
        echoed = parse_config((out / "effective_config.ini").read_text())
        assert echoed == config

    def test_zero_load_converges_immediately(self, tmp_path):
        config = tiny_strip_config(tmp_path, q=0.0)
        code = run(config, quiet=True)
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert code == 0
        assert summary["compliance"] == 0.0
        assert summary["converged"] is True

    def test_non_converged_exit_code_and_artifacts(self, tmp_path):
        config = tiny_strip_config(tmp_path, max_oc_iters=1, max_rotation_updates=1)
        code = run(config, quiet=True)
        assert code == 2
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["converged"] is False
        assert (tmp_path / "out" / "fields.vtk").exists()

    def test_reproducible_summary(self, tmp_path):
        config = tiny_strip_config(tmp_path)
        run(config, out_dir=str(tmp_path / "r1"), quiet=True)
        run(config, out_dir=str(tmp_path / "r2"), quiet=True)
        s1 = (tmp_path / "r1" / "summary.json").read_bytes()
        s2 = (tmp_path / "r2" / "summary.json").read_bytes()
        assert s1 == s2

    def test_build_problem_spheroid_full(self):
        config = RunConfig(kind="spheroid", n_lat=16, n_lon=32, half=False, pressure=1.0)
        mesh, material, loads = build_problem(config)
        assert set(loads.dirichlet) == {"pin_a", "pin_b", "pin_c"}
        state = assemble_and_solve(mesh, None, material, loads)
        assert state.compliance > 0


class TestMain:
    def test_cli_run_with_overrides(self, tmp_path, capsys):
        config = tiny_strip_config(tmp_path)
        cfg_path = tmp_path / "run.ini"
        cfg_path.write_text(emit_config(config))
        code = main(["run", str(cfg_path), "--out", str(tmp_path / "cli_out"),
                     "--max-oc", "40", "--eta", "0.6"])
        assert code == 0
        echoed = parse_config((tmp_path / "cli_out" / "effective_config.ini").read_text())
        assert echoed.max_oc_iters == 40
        assert echoed.eta == 0.6
        assert "converged" in capsys.readouterr().out

    def test_cli_missing_config(self, capsys):
        assert main(["run", "/nonexistent/path.ini"]) == 1
        assert "cannot read config" in capsys.readouterr().err

    def test_cli_invalid_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[material]\nnu = 2.0\n")
        assert main(["run", str(bad)]) == 1
        assert "error" in capsys.readouterr().err

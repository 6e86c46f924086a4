import io
import json
import math

import numpy as np
import pytest

from nlslab.cli import (
    ConfigError,
    DiagnosticsRecord,
    RunConfig,
    build_datum,
    emit_config,
    emit_records,
    exponent_report,
    main,
    parse_config,
    read_records,
    run_preset,
    verify_records,
)


def cfg_text(**over):
    body = {"preset": "decay"}
    body.update(over)
    return json.dumps(body)


class TestParseConfig:
    def test_minimal_decay_defaults(self):
        cfg = parse_config(cfg_text())
        assert (cfg.dt, cfg.L, cfg.Nx, cfg.Ny) == (1e-3, 200.0, 4096, 32)
        assert cfg.lam == 1
        assert cfg.datum["kind"] == "gaussian"

    def test_nested_sections_flatten(self):
        cfg = parse_config(cfg_text(grid={"Nx": 512, "Ny": 8},
                                    control={"dt": 0.01, "t_end": 1.0},
                                    physics={"alpha": "3"}))
        assert (cfg.Nx, cfg.Ny, cfg.dt, cfg.t_end) == (512, 8, 0.01, 1.0)
        assert cfg.alpha_fraction() == 3

    def test_malformed_json(self):
        with pytest.raises(ConfigError, match="malformed"):
            parse_config("{not json")
        with pytest.raises(ConfigError, match="JSON object"):
            parse_config("[1, 2]")

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="preset"):
            parse_config(cfg_text(preset="warp"))

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError, match="unknown config fields"):
            parse_config(cfg_text(dx=0.1))

    def test_scattering_range_accepted(self):
        cfg = parse_config(cfg_text(preset="scattering", alpha="5"))
        assert cfg.alpha_fraction() == 5

    def test_scattering_range_rejected(self):
        with pytest.raises(ConfigError, match="alpha <= 4/d"):
            parse_config(cfg_text(preset="scattering", alpha="1/2"))
        with pytest.raises(ConfigError, match="alpha <= 4/d"):
            parse_config(cfg_text(preset="scattering", alpha="3"))

    def test_defocusing_presets_reject_focusing(self):
        for preset in ("decay", "morawetz", "scattering"):
            with pytest.raises(ConfigError, match="lam"):
                parse_config(cfg_text(preset=preset, lam=-1))

    def test_soliton_preset_locked(self):
        with pytest.raises(ConfigError, match="soliton-control"):
            parse_config(cfg_text(preset="soliton-control", alpha="3"))
        with pytest.raises(ConfigError, match="soliton-control"):
            parse_config(cfg_text(preset="soliton-control", lam=1))

    def test_energy_supercritical_rejected(self):
        with pytest.raises(ConfigError, match="4/\\(d-1\\)"):
            parse_config(cfg_text(d=2, alpha="5"))

    def test_bad_alpha_string(self):
        with pytest.raises(ConfigError, match="alpha"):
            parse_config(cfg_text(alpha="five"))
        with pytest.raises(ConfigError, match="alpha"):
            parse_config(cfg_text(alpha="-2"))

    def test_bad_datum_kind(self):
        with pytest.raises(ConfigError, match="datum.kind"):
            parse_config(cfg_text(datum={"kind": "vortex"}))

    def test_roundtrip(self):
        cfg = parse_config(cfg_text(Nx=512, q_list=[4.0, 6.0]))
        again = parse_config(emit_config(cfg))
        assert again == cfg


class TestBuildDatum:
    def test_gaussian_d1(self):
        cfg = parse_config(cfg_text(grid={"Nx": 256, "Ny": 4, "L": 40.0}))
        f = build_datum(cfg)
        x = f.grid.x_axis()
        expect = 1.0 * np.exp(-(x / 0.65) ** 2)
        assert np.abs(f.samples()[:, 0] - expect).max() < 1e-12

    def test_plane_wave(self):
        cfg = parse_config(cfg_text(
            grid={"Nx": 64, "Ny": 4, "L": 20.0},
            datum={"kind": "plane_wave", "k": 2, "n": 1, "A": 0.5}))
        f = build_datum(cfg)
        assert np.abs(np.abs(f.samples()) - 0.5).max() < 1e-12

    def test_soliton(self):
        cfg = parse_config(cfg_text(preset="soliton-control",
                                    datum={"kind": "soliton", "B": 1.5}))
        f = build_datum(cfg)
        assert np.abs(f.samples()).max() == pytest.approx(
            math.sqrt(2) * 1.5, rel=1e-6)


def make_record(t, **over):
    base = dict(
        t=t, mass=1.0, energy=2.0, h1_norm=3.0, lq_norms={4.0: 0.5},
        J=-0.1, morawetz_lhs=0.2, morawetz_rhs=0.1, positivity_S=0.1,
        cube_sup=0.4, cube_sup_integral=0.04, mixed_norm_theta=0.6,
        accumulators={"theta_norm": 1.0, "u_lp": 2.0, "dy_lp": 3.0,
                      "grad_lp": 4.0},
        boundary_guard_flag=False)
    base.update(over)
    return DiagnosticsRecord(**base)


class TestRecords:
    def test_empty_stream_header_only(self):
        buf = io.StringIO()
        emit_records([], buf, [4.0])
        lines = buf.getvalue().splitlines()
        assert len(lines) == 1
        assert lines[0].startswith("t,mass,energy,h1_norm,lq_4,")

    def test_roundtrip_exact(self):
        rec = make_record(0.1, mass=math.pi, energy=1 / 3,
                          boundary_guard_flag=True)
        buf = io.StringIO()
        emit_records([rec], buf, [4.0])
        buf.seek(0)
        rows = read_records(buf)
        assert len(rows) == 1
        assert rows[0]["mass"] == math.pi          # 17 digits round-trip
        assert rows[0]["energy"] == 1 / 3
        assert rows[0]["boundary_guard_flag"] is True

    def test_partial_file_marker(self):
        bad = make_record(0.0, lq_norms={})  # missing q column
        buf = io.StringIO()
        with pytest.raises(KeyError):
            emit_records([make_record(0.0), bad], buf, [4.0])
        assert buf.getvalue().rstrip().endswith("# PARTIAL FILE: emission aborted")

    def test_row_count_formula(self, tmp_path):
        cfg = parse_config(cfg_text(
            grid={"Nx": 128, "Ny": 4, "L": 40.0},
            control={"dt": 0.01, "t_end": 0.2, "sample_every": 5},
            output_dir=str(tmp_path)))
        run_preset(cfg)
        with open(tmp_path / "records.csv") as fh:
            rows = read_records(fh)
        assert len(rows) == 1 + int(0.2 / (0.01 * 5))


class TestExponentReport:
    def test_worked_example_values(self):
        rep = exponent_report(1, __import__("fractions").Fraction(5),
                              r=__import__("fractions").Fraction(8))
        tup = rep["critical_tuple"]
        assert tup["q"] == "80/11"
        assert tup["q_tilde"] == "40/7"
        assert tup["r_tilde"] == "4"
        assert tup["s"] == "1/10"
        aux = rep["auxiliary_pair"]
        assert (aux["l"], aux["p"]) == ("32/5", "16/3")
        assert rep["all_feasible"] is True

    def test_subcritical_branch(self):
        rep = exponent_report(3, __import__("fractions").Fraction(1))
        assert rep["regime"] == "subcritical"
        assert rep["all_feasible"] is True
        assert "subcritical_pair" in rep

    def test_json_serializable(self):
        rep = exponent_report(1, __import__("fractions").Fraction(5))
        json.dumps(rep)  # must not raise


class TestRunPreset:
    def test_exponents_preset(self, tmp_path):
        cfg = parse_config(cfg_text(preset="exponents", alpha="5",
                                    output_dir=str(tmp_path)))
        assert run_preset(cfg) == 0
        rep = json.load(open(tmp_path / "exponents.json"))
        assert rep["all_feasible"] is True
        manifest = json.load(open(tmp_path / "manifest.json"))
        assert manifest["exit_status"] == 0
        assert manifest["alpha_exact"] == "5"

    def test_small_decay_run_writes_artifacts(self, tmp_path):
        cfg = parse_config(cfg_text(
            grid={"Nx": 256, "Ny": 4, "L": 60.0},
            control={"dt": 0.01, "t_end": 0.5, "sample_every": 10},
            output_dir=str(tmp_path)))
        run_preset(cfg)  # short run; decay checks may fail, artifacts must exist
        manifest = json.load(open(tmp_path / "manifest.json"))
        assert (tmp_path / "records.csv").exists()
        assert set(manifest["checks"]) >= {"morawetz_inequality", "positivity",
                                           "guard_never_fired"}
        assert manifest["checks"]["morawetz_inequality"] is True
        assert manifest["checks"]["positivity"] is True

    def test_determinism(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            cfg = parse_config(cfg_text(
                grid={"Nx": 256, "Ny": 4, "L": 60.0},
                control={"dt": 0.01, "t_end": 0.2, "sample_every": 10},
                output_dir=str(out)))
            run_preset(cfg)
        assert (out1 / "records.csv").read_bytes() == \
            (out2 / "records.csv").read_bytes()

    def test_soliton_control_small(self, tmp_path):
        cfg = parse_config(cfg_text(
            preset="soliton-control",
            grid={"Nx": 1024, "Ny": 4},
            control={"dt": 2e-3, "t_end": 4.0, "sample_every": 50},
            output_dir=str(tmp_path)))
        status = run_preset(cfg)
        manifest = json.load(open(tmp_path / "manifest.json"))
        assert manifest["checks"]["no_decay"] is True
        assert manifest["checks"]["no_scattering"] is True
        assert status == 0
        assert (tmp_path / "scatter_report.json").exists()


class TestVerify:
    def test_clean_records_pass(self):
        buf = io.StringIO()
        emit_records([make_record(0.0), make_record(0.1)], buf, [4.0])
        buf.seek(0)
        assert verify_records(buf) == 0

    def test_violation_detected(self):
        bad = make_record(0.1, morawetz_lhs=-5.0, positivity_S=-5.0)
        buf = io.StringIO()
        emit_records([bad], buf, [4.0])
        buf.seek(0)
        assert verify_records(buf) == 1


class TestMain:
    def test_exponents_command(self, capsys):
        assert main(["exponents", "--d", "1", "--alpha", "5", "--r", "8"]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["critical_tuple"]["q"] == "80/11"

    def test_run_command(self, tmp_path):
        cpath = tmp_path / "cfg.json"
        cpath.write_text(cfg_text(preset="exponents",
                                  output_dir=str(tmp_path)))
        assert main(["run", "--config", str(cpath)]) == 0

    def test_verify_command(self, tmp_path):
        rpath = tmp_path / "records.csv"
        with open(rpath, "w") as fh:
            emit_records([make_record(0.0)], fh, [4.0])
        assert main(["verify", str(rpath)]) == 0

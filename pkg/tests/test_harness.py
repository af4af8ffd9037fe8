import json
import math
import os
import struct
import subprocess
import sys

import numpy as np
import pytest

from ks2d.analysis import NormSeries, l2_norm, wiener_norm
from ks2d.cli import main
from ks2d.harness import (
    ConfigError,
    ScenarioConfig,
    make_initial_data,
    random_gradient_field,
    run_many,
    run_scenario,
)
from ks2d.io import read_spectra, spectra_size, write_spectra
from ks2d.spectral import TorusSpec

PI = math.pi


def cfg(tmp_path, sub="out", **kw):
    d = {"domain": {"N1": 32, "N2": 32}, "stepper": {"dt": 0.01, "T": 0.1},
         "outputs": {"dir": str(tmp_path / sub)}}
    for k, v in kw.items():
        if isinstance(v, dict) and isinstance(d.get(k), dict):
            d[k].update(v)
        else:
            d[k] = v
    return d


class TestConfig:
    def test_defaults_roundtrip(self, tmp_path):
        c = ScenarioConfig.from_dict(cfg(tmp_path))
        p = tmp_path / "c.json"
        c.to_json(p)
        back = ScenarioConfig.from_json(p)
        assert back.data == c.data and back.sha256 == c.sha256
        assert c.spec == TorusSpec(PI, PI, 32, 32)

    @pytest.mark.parametrize("bad", [
        {"bogus": 1},
        {"experiment": "fly"},
        {"schema_version": 2},
        {"initial_data": {"kind": "magic"}},
        {"initial_data": {"kind": "file"}},
        {"initial_data": {"normalize": "h1"}},
        {"initial_data": {"gradient": False}},
        {"domain": {"N1": 31}},
        {"stepper": {"dt": 0.03, "T": 0.1}},
        {"alpha_vec": [1.0]},
    ])
    def test_rejects(self, tmp_path, bad):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict(cfg(tmp_path, **bad))

    def test_unreadable_file(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            ScenarioConfig.from_json(p)


class TestInitialData:
    def test_zero(self, tmp_path):
        f = make_initial_data(cfg(tmp_path, initial_data={"kind": "zero"}))
        assert l2_norm(f) == 0

    def test_deterministic(self, tmp_path):
        a = make_initial_data(cfg(tmp_path, initial_data={"seed": 5}))
        b = make_initial_data(cfg(tmp_path, initial_data={"seed": 5}))
        c = make_initial_data(cfg(tmp_path, initial_data={"seed": 6}))
        np.testing.assert_array_equal(a.uhat, b.uhat)
        assert np.max(np.abs(a.uhat - c.uhat)) > 0

    def test_invariants(self):
        f = random_gradient_field(TorusSpec(PI, 2 * PI, 32, 16), 1.0, 2.0, seed=1)
        assert f.reality_defect() < 1e-15
        assert f.curl_defect() < 1e-15
        assert f.mean == (0, 0)
        assert np.all(f.uhat[~f.spec.nyquist_mask] == 0)

    @pytest.mark.parametrize("p", [1.0, 2.0, 3.5])
    def test_envelope_slope(self, p):
        spec = TorusSpec(4 * PI, 4 * PI, 32, 32)
        f = random_gradient_field(spec, 1.0, p, seed=2)
        amp = np.sqrt(np.abs(f.uhat) ** 2 + np.abs(f.vhat) ** 2)
        k = spec.ktilde_abs
        sel = (amp > 0) & (k > 0)
        slope = np.polyfit(np.log(k[sel]), np.log(amp[sel]), 1)[0]
        assert slope == pytest.approx(-p, abs=1e-10)

    def test_normalize(self):
        spec = TorusSpec(PI, PI, 32, 32)
        assert wiener_norm(random_gradient_field(spec, 0.3, 2, normalize="wiener0")) == \
            pytest.approx(0.3)
        assert l2_norm(random_gradient_field(spec, 0.3, 2, normalize="l2")) == pytest.approx(0.3)

    def test_single_mode(self, tmp_path):
        f = make_initial_data(cfg(tmp_path, initial_data={"kind": "single_mode", "amplitude": 0.4,
                                                          "mode": [1, 1]}))
        u, v = f.physical()
        assert np.max(np.hypot(u, v)) == pytest.approx(0.4, rel=1e-12)
        with pytest.raises(ConfigError):
            make_initial_data(cfg(tmp_path, initial_data={"kind": "single_mode", "mode": [0, 0]}))

    def test_file_roundtrip(self, tmp_path):
        c = cfg(tmp_path, initial_data={"amplitude": 0.2, "seed": 3})
        f = make_initial_data(c)
        p = tmp_path / "u0.bin"
        size = write_spectra(p, f, 1.5)
        assert size == spectra_size(32, 32) == 32 + 32 * 32 * 32
        raw = p.read_bytes()
        N1, N2, L1, L2, t = struct.unpack("<iiddd", raw[:32])
        assert (N1, N2, L1, L2, t) == (32, 32, PI, PI, 1.5)
        re_u, im_u = struct.unpack("<dd", raw[32 + 32 * 33:32 + 32 * 33 + 16])
        assert complex(re_u, im_u) == f.uhat[1, 1]
        g, tt = read_spectra(p)
        np.testing.assert_array_equal(g.uhat, f.uhat)
        h = make_initial_data(cfg(tmp_path, initial_data={"kind": "file", "path": str(p)}))
        np.testing.assert_allclose(h.uhat, f.uhat, atol=1e-16)

    def test_file_errors(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"\x00" * 10)
        with pytest.raises(ValueError, match="truncated"):
            read_spectra(p)
        f = make_initial_data(cfg(tmp_path))
        write_spectra(p, f, 0.0)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(ValueError, match="expected"):
            read_spectra(p)
        write_spectra(p, f, 0.0)
        with pytest.raises(ConfigError, match="does not match"):
            make_initial_data(cfg(tmp_path, domain={"N1": 16}, initial_data={"kind": "file",
                                                                              "path": str(p)}))


class TestRunScenario:
    def test_modes(self, tmp_path):
        m = run_scenario(cfg(tmp_path, experiment="modes", domain={"L1": 4 * PI, "L2": 4 * PI}))
        assert m.exit_code == 0
        assert m.verdicts["n_growing"] == 8 and not m.verdicts["has_gap"]
        assert m.check_outputs()
        table = json.loads((tmp_path / "out" / "modes.json").read_text())
        assert table["sigma_min"] == pytest.approx(-0.25)

    def test_zero_simulate(self, tmp_path):
        m = run_scenario(cfg(tmp_path, initial_data={"kind": "zero"}))
        assert m.exit_code == 0 and m.verdicts["continuation"] == "CONTINUE"
        s = NormSeries.read_csv(tmp_path / "out" / "norms.csv")
        assert np.all(s.l2 == 0) and len(s.times) == 11
        assert np.all(np.isnan(s.rho_est))

    def test_simulate_outputs(self, tmp_path):
        m = run_scenario(cfg(tmp_path, outputs={"spectra_every": 5, "csv_path": str(tmp_path / "n.csv")}))
        assert m.exit_code == 0
        bins = sorted(p for p in m.outputs if p.endswith(".bin"))
        assert len(bins) == 3
        assert all(m.outputs[p] == spectra_size(32, 32) for p in bins)
        assert str(tmp_path / "n.csv") in m.outputs
        disk = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert disk["outputs"] == m.outputs and disk["config_sha256"] == m.config_sha256
        assert m.verdicts["mean_max"] == 0.0

    def test_reproducible(self, tmp_path):
        run_scenario(cfg(tmp_path, "a"))
        run_scenario(cfg(tmp_path, "b"))
        assert (tmp_path / "a" / "norms.csv").read_bytes() == (tmp_path / "b" / "norms.csv").read_bytes()

    def test_thresholds(self, tmp_path):
        m = run_scenario(cfg(tmp_path, experiment="thresholds", M=0.1))
        assert m.verdicts["r1"] == pytest.approx(11 / 23)
        assert m.verdicts["T_star"] > 0

    def test_picard(self, tmp_path):
        m = run_scenario(cfg(tmp_path, experiment="picard",
                             initial_data={"amplitude": 0.05, "normalize": "wiener0"}))
        assert m.exit_code == 0 and m.verdicts["converged"]

    def test_complex_shift_and_estimates(self, tmp_path):
        m = run_scenario(cfg(tmp_path, "cs", experiment="complex_shift", alpha_vec=[0.01, 0.0],
                             n_levels=3))
        assert m.exit_code == 0 and m.verdicts["max_level_sup"] > 0
        m = run_scenario(cfg(tmp_path, "est", experiment="estimates"))
        assert m.exit_code == 0 and m.verdicts["max_smoothing_ratio"] <= 1.0

    def test_config_error_exit(self, tmp_path):
        m = run_scenario(cfg(tmp_path, experiment="nope"))
        assert m.exit_code == 2 and "experiment" in m.message
        m = run_scenario(cfg(tmp_path, experiment="picard", alpha=50.0))
        assert m.exit_code == 2 and "no gap" in m.message

    def test_blowup_exit(self, tmp_path):
        m = run_scenario(cfg(tmp_path, initial_data={"amplitude": 200.0, "normalize": "l2"},
                             stepper={"T": 0.5}))
        assert m.exit_code == 3
        assert m.verdicts["continuation"] == "SUSPECT"
        assert m.check_outputs()

    def test_run_many(self, tmp_path):
        ms = run_many([cfg(tmp_path, "x"), cfg(tmp_path, "y", initial_data={"seed": 1})],
                      max_workers=2)
        assert [m.exit_code for m in ms] == [0, 0]
        with pytest.raises(ConfigError):
            run_many([cfg(tmp_path, "z"), cfg(tmp_path, "z")])


class TestCLI:
    def test_modes(self, tmp_path, capsys):
        code = main(["modes", "--L1", str(4 * PI), "--L2", str(4 * PI), "--N1", "32", "--N2", "32",
                     "--out", str(tmp_path)])
        assert code == 0
        assert "8 growing modes" in capsys.readouterr().out

    def test_config_overrides_flags(self, tmp_path, capsys):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"domain": {"L1": 4 * PI, "L2": 4 * PI, "N1": 16, "N2": 16},
                                 "outputs": {"dir": str(tmp_path / "o")}}))
        assert main(["modes", "--L1", "3.0", "--config", str(p)]) == 0
        assert "8 growing modes" in capsys.readouterr().out

    def test_experiment_mismatch(self, tmp_path, capsys):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"experiment": "simulate"}))
        assert main(["modes", "--config", str(p)]) == 2
        assert "does not match" in capsys.readouterr().err

    def test_bad_flags_exit_2(self, tmp_path):
        assert main(["simulate", "--dt", "0.03", "--T", "0.1", "--out", str(tmp_path)]) == 2

    def test_blowup_exit_3(self, tmp_path):
        code = main(["simulate", "--N1", "32", "--N2", "32", "--amplitude", "200", "--normalize",
                     "l2", "--dt", "0.01", "--T", "0.5", "--out", str(tmp_path)])
        assert code == 3

    def test_several_configs(self, tmp_path, capsys):
        paths = []
        for i in range(2):
            p = tmp_path / f"c{i}.json"
            p.write_text(json.dumps({"name": f"run{i}", "domain": {"N1": 16, "N2": 16},
                                     "outputs": {"dir": str(tmp_path / f"o{i}")}}))
            paths.append(str(p))
        assert main(["thresholds", "--config", *paths, "--jobs", "2"]) == 0
        out = capsys.readouterr().out
        assert "run0: thresholds exit=0" in out and "run1: thresholds exit=0" in out

    def test_module_entry_point(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "ks2d", "thresholds", "--N1", "16", "--N2", "16",
                            "--out", str(tmp_path)], capture_output=True, text=True, timeout=120)
        assert r.returncode == 0, r.stderr
        assert '"r1"' in r.stdout
        assert os.path.exists(tmp_path / "manifest.json")

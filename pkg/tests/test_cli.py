"""Command-line interface: subcommands, config handling, determinism."""

import os

import numpy as np
import pytest

from splitmut import stats as stm
from splitmut.cli import main


def run(argv):
    return main(argv)


class TestAnalyticCommand:
    def test_writes_tables_with_header(self, tmp_path):
        out = tmp_path / "a"
        rc = run(["analytic", "--b", "2", "--d", "1", "--model", "II",
                  "--theta", "1.5", "--i-max", "4", "--t", "5",
                  "--output-dir", str(out)])
        assert rc == 0
        text = (out / "expected_spectrum.csv").read_text()
        assert text.startswith("# splitmut=")
        assert "# theta=1.5" in text
        assert "i,a,t,expected_count" in text
        assert (out / "limit_spectrum.csv").exists()
        assert (out / "old_families.csv").exists()  # subcritical clonal

    def test_missing_theta_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit):
            run(["analytic", "--b", "2", "--d", "1", "--model", "II",
                 "--t", "5", "--output-dir", str(tmp_path)])

    def test_out_of_range_p_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit):
            run(["analytic", "--b", "2", "--d", "1", "--model", "I",
                 "--p", "1.5", "--t", "5", "--output-dir", str(tmp_path)])


class TestSimulateCommand:
    def test_deterministic_outputs(self, tmp_path):
        args = ["simulate", "--b", "2", "--d", "1", "--model", "II",
                "--theta", "1.5", "--t", "3", "--seed", "5"]
        run(args + ["--output-dir", str(tmp_path / "x")])
        run(args + ["--output-dir", str(tmp_path / "y")])
        for name in ("particles.csv", "mutations.csv", "families.csv",
                     "spectrum.csv"):
            assert (tmp_path / "x" / name).read_bytes() \
                == (tmp_path / "y" / name).read_bytes()

    def test_tiny_horizon_single_particle(self, tmp_path):
        run(["simulate", "--b", "2", "--d", "1", "--model", "I", "--p", "0.2",
             "--t", "0.01", "--seed", "1", "--output-dir", str(tmp_path)])
        families = [l for l in (tmp_path / "families.csv").read_text().splitlines()
                    if l and not l.startswith("#") and not l.startswith("type_id")]
        assert len(families) == 1
        assert families[0].endswith(",1")  # single particle, single family

    def test_cap_guard_surfaces(self, tmp_path):
        with pytest.raises(Exception, match="particles"):
            run(["simulate", "--b", "2", "--d", "1", "--model", "II",
                 "--theta", "1.5", "--t", "16", "--seed", "1",
                 "--max-particles", "1000", "--output-dir", str(tmp_path)])


class TestConfigPlumbing:
    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("b = 2\nd = 1\nmodel = II\ntheta = 9.0\n")
        out = tmp_path / "o"
        run(["analytic", "--config", str(cfg), "--theta", "1.5", "--t", "4",
             "--i-max", "2", "--output-dir", str(out)])
        text = (out / "expected_spectrum.csv").read_text()
        assert "# theta=1.5" in text  # flag wins over the file

    def test_env_var_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SPLITMUT_OUTPUT_DIR", str(tmp_path / "envout"))
        monkeypatch.chdir(tmp_path)
        run(["analytic", "--b", "2", "--d", "1", "--model", "I", "--p", "0.25",
             "--t", "3", "--i-max", "2"])
        assert (tmp_path / "envout" / "expected_spectrum.csv").exists()


class TestValidateCommand:
    def test_marginals_suite_passes_and_writes_reports(self, tmp_path):
        rc = run(["validate", "--b", "2", "--d", "1", "--model", "II",
                  "--theta", "1.5", "--suite", "marginals", "--replicas", "2500",
                  "--seed", "3", "--output-dir", str(tmp_path)])
        assert rc == 0
        text = (tmp_path / "reports.csv").read_text()
        assert "geometric_marginal" in text
        assert "exponential_limit" in text

    def test_exit_code_on_failure(self, tmp_path, monkeypatch):
        failing = stm.TestReport(name="stub", statistic=9.9, passed=False,
                                 criterion="|z| <= 3")
        monkeypatch.setattr(stm, "test_geometric_marginal",
                            lambda batch, **kw: failing)
        rc = run(["validate", "--b", "2", "--d", "1", "--model", "II",
                  "--theta", "1.5", "--suite", "marginals", "--replicas", "1200",
                  "--seed", "3", "--output-dir", str(tmp_path)])
        assert rc == 1

    def test_unknown_suite(self, tmp_path):
        with pytest.raises(SystemExit):
            run(["validate", "--b", "2", "--d", "1", "--model", "II",
                 "--theta", "1.5", "--suite", "nope",
                 "--output-dir", str(tmp_path)])

    def test_threads_reproduce_reports(self, tmp_path):
        common = ["validate", "--b", "2", "--d", "1", "--model", "II",
                  "--theta", "1.5", "--suite", "spectrum", "--replicas", "1200",
                  "--t", "3", "--seed", "4"]
        run(common + ["--threads", "1", "--output-dir", str(tmp_path / "one")])
        run(common + ["--threads", "2", "--output-dir", str(tmp_path / "two")])

        def rows(p):
            # identical statistics; only the echoed threads setting may differ
            return [l for l in p.read_text().splitlines()
                    if not l.startswith("# threads=")]

        assert rows(tmp_path / "one" / "reports.csv") \
            == rows(tmp_path / "two" / "reports.csv")


class TestScanCommand:
    def test_scan_table(self, tmp_path):
        rc = run(["scan", "--b", "2", "--d", "1", "--model", "II", "--theta", "1",
                  "--param", "theta", "--values", "0.5,1.0,1.5",
                  "--output-dir", str(tmp_path)])
        assert rc == 0
        lines = [l for l in (tmp_path / "scan.csv").read_text().splitlines()
                 if l and not l.startswith("#")]
        assert lines[0].startswith("value,")
        assert len(lines) == 4
        assert "supercritical" in lines[1] and "subcritical" in lines[3]

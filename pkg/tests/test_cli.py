"""Command-line interface: subcommands, exit codes, and output artifacts."""

import json
from importlib import resources

import numpy as np
import pytest

from quasarbell.chsh import CoincidenceCounts
from quasarbell.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from conftest import SESSION1_TABLE

DEMO_CATALOG = str(resources.files("quasarbell.data") / "demo_catalog.csv")


def _counts_csv(tmp_path, table=SESSION1_TABLE, name="counts.csv"):
    path = tmp_path / name
    CoincidenceCounts(np.asarray(table).reshape(2, 2, 2, 2)).to_csv(path)
    return path


class TestParsing:
    def test_no_command_is_usage_error(self):
        assert main([]) == EXIT_USAGE

    def test_unknown_command(self):
        assert main(["frobnicate"]) == EXIT_USAGE

    def test_missing_required_argument(self):
        assert main(["windows"]) == EXIT_USAGE

    def test_help_exits_clean(self, capsys):
        assert main(["--help"]) == EXIT_OK
        assert "quasarbell" in capsys.readouterr().out


class TestCosmoCommand:
    def test_reference_pair_report(self, tmp_path):
        code = main(["-o", str(tmp_path), "cosmo", "--pair", "pair1",
                     "--substitute-z-b", "2.29"])
        assert code == EXIT_OK
        report = json.loads((tmp_path / "cosmo_pair1.json").read_text())
        assert report["report"]["f_excl"] == pytest.approx(0.960, abs=0.002)
        assert report["report"]["substituted"]["f_excl"] == pytest.approx(
            0.958, abs=0.002)
        assert report["provenance"]["toolkit_version"]
        assert (tmp_path / "lightcone_pair1.csv").exists()
        assert (tmp_path / "lightcone_conformal_pair1.svg").exists()
        assert (tmp_path / "lightcone_cosmic_pair1.svg").exists()

    def test_zero_redshifts_warn_no_exclusion(self, tmp_path):
        with pytest.warns(UserWarning, match="no exclusion"):
            code = main(["-o", str(tmp_path), "cosmo", "--z-a", "0",
                         "--z-b", "0", "--alpha", "90", "--no-plots"])
        assert code == EXIT_OK

    def test_incomplete_manual_spec_is_data_error(self, tmp_path):
        assert main(["-o", str(tmp_path), "cosmo", "--z-a", "1.0"]) == EXIT_DATA

    def test_unknown_pair_is_data_error(self, tmp_path):
        assert main(["-o", str(tmp_path), "cosmo", "--pair", "nope"]) == EXIT_DATA


class TestWindowsCommand:
    def test_reference_pair_windows(self, tmp_path):
        assert main(["-o", str(tmp_path), "windows", "--pair", "pair1"]) == EXIT_OK
        report = json.loads((tmp_path / "windows_pair1.json").read_text())
        assert report["windows"]["A"]["tau_valid_us"] == pytest.approx(2.34, abs=0.15)
        assert report["windows"]["B"]["tau_valid_us"] == pytest.approx(0.90, abs=0.15)
        assert not report["windows"]["A"]["out_of_alignment"]
        csv_text = (tmp_path / "windows_pair1.csv").read_text()
        assert csv_text.startswith("utc,side,az_deg,alt_deg,tau_geom_us")


class TestAnalyzeCommand:
    def test_counts_with_override(self, tmp_path):
        counts = _counts_csv(tmp_path)
        code = main(["-o", str(tmp_path), "analyze", "--counts", str(counts),
                     "--eps-override", "pair1", "--tag", "s1"])
        assert code == EXIT_OK
        report = json.loads((tmp_path / "analyze_s1.json").read_text())
        assert report["significance"]["nu"] == pytest.approx(9.29, abs=0.05)
        assert report["significance"]["log10_p"] == pytest.approx(-20.13, abs=0.2)
        assert report["correlations"]["S"] == pytest.approx(2.6457, abs=1e-4)
        assert (tmp_path / "pleft_s1.svg").exists()

    def test_empty_cell_names_cell(self, tmp_path, capsys):
        table = SESSION1_TABLE.copy()
        table[2] = 0  # wipe the (2,1) setting pair
        counts = _counts_csv(tmp_path, table)
        code = main(["-o", str(tmp_path), "analyze", "--counts", str(counts),
                     "--eps-override", "pair1"])
        assert code == EXIT_DATA
        assert "(2,1)" in capsys.readouterr().err

    def test_missing_eps_source_is_data_error(self, tmp_path):
        counts = _counts_csv(tmp_path)
        assert main(["-o", str(tmp_path), "analyze",
                     "--counts", str(counts)]) == EXIT_DATA

    def test_rates_csv_path(self, tmp_path):
        counts = _counts_csv(tmp_path)
        rates = tmp_path / "rates.csv"
        rates.write_text(
            "side,port,signal_cps,noise_cps,noise_duration_s,f_wrongway\n"
            "a,red,2094,288,300,0\na,blue,2774,350,300,0\n"
            "b,red,9320,358,300,0\nb,blue,5064,408,300,0\n")
        code = main(["-o", str(tmp_path), "analyze", "--counts", str(counts),
                     "--rates", str(rates), "--tag", "avg", "--no-plots"])
        assert code == EXIT_OK
        report = json.loads((tmp_path / "analyze_avg.json").read_text())
        assert report["predictability"]["average_based"] is True


class TestSimulateCommand:
    def test_deterministic_bytes(self, tmp_path):
        args = ["simulate", "--duration-s", "10", "--target-coincidences",
                "500", "--seed", "99"]
        assert main(["-o", str(tmp_path)] + args + ["--out", str(tmp_path / "one")]) == EXIT_OK
        assert main(["-o", str(tmp_path)] + args + ["--out", str(tmp_path / "two")]) == EXIT_OK
        one = (tmp_path / "one" / "events.bin").read_bytes()
        two = (tmp_path / "two" / "events.bin").read_bytes()
        assert one == two
        manifest = json.loads((tmp_path / "one" / "manifest.json").read_text())
        assert manifest["config"]["seed"] == 99

    def test_csv_format(self, tmp_path):
        code = main(["simulate", "--duration-s", "5", "--target-coincidences",
                     "100", "--format", "csv", "--out", str(tmp_path / "s")])
        assert code == EXIT_OK
        assert (tmp_path / "s" / "events.csv").exists()


class TestScheduleCommand:
    def test_demo_catalog_ranking_deterministic(self, tmp_path):
        args = ["schedule", "--catalog", DEMO_CATALOG,
                "--start", "2018-01-11T00:20:00", "--minutes", "17"]
        assert main(["-o", str(tmp_path / "r1")] + args) == EXIT_OK
        assert main(["-o", str(tmp_path / "r2")] + args) == EXIT_OK
        c1 = (tmp_path / "r1" / "schedule_ranked.csv").read_bytes()
        c2 = (tmp_path / "r2" / "schedule_ranked.csv").read_bytes()
        assert c1 == c2
        report = json.loads((tmp_path / "r1" / "schedule_ranked.json").read_text())
        assert report["pairs"], "demo catalog should yield feasible pairs"

    def test_missing_catalog_is_data_error(self, tmp_path):
        assert main(["-o", str(tmp_path), "schedule", "--catalog",
                     str(tmp_path / "none.csv"), "--start",
                     "2018-01-11T00:20:00", "--minutes", "5"]) == EXIT_DATA


class TestRandomnessCommand:
    def test_alternating_stream(self, tmp_path):
        bits = tmp_path / "alt.txt"
        bits.write_text("01" * 300_000)
        code = main(["-o", str(tmp_path), "randomness", "--bits", str(bits),
                     "--m", "17"])
        assert code == EXIT_OK
        report = json.loads((tmp_path / "randomness_alt.json").read_text())
        assert report["estimate"]["mi_bits"] == pytest.approx(1.0, abs=1e-3)

    def test_short_stream_is_data_error(self, tmp_path):
        bits = tmp_path / "short.txt"
        bits.write_text("0101")
        assert main(["-o", str(tmp_path), "randomness",
                     "--bits", str(bits)]) == EXIT_DATA

"""Simulator: stream statistics, correlation conventions, and closure of
the full pipeline on generated sessions."""

import numpy as np
import pytest

from quasarbell.chsh import correlations, tabulate
from quasarbell.errors import InternalError
from quasarbell.events import io as evio
from quasarbell.sim import (
    SideConfig,
    SimConfig,
    analyze_event_files,
    end_to_end_check,
    expected_duty,
    pair_rate_for_target,
    simulate_crng_stream,
    simulate_session,
    write_session,
)

PS = 10**12


def _small_side(tau_valid_us=50.0, rate=1000.0, **kw):
    defaults = dict(
        crng_signal_red_cps=rate * 0.45, crng_noise_red_cps=rate * 0.05,
        crng_signal_blue_cps=rate * 0.45, crng_noise_blue_cps=rate * 0.05,
        tau_set_ns=300.0, tau_valid_us=tau_valid_us, heralding=1.0,
        background_pol_cps=0.0)
    defaults.update(kw)
    return SideConfig(**defaults)


def _small_config(visibility=0.935, n_target=4000, duration_s=40.0,
                  seed=777, **side_kw):
    cfg = SimConfig(
        visibility=visibility, duration_s=duration_s, seed=seed,
        side_a=_small_side(angles_deg=(22.5, 67.5), flips=(False, True),
                           link_delay_ns=1831.0, **side_kw),
        side_b=_small_side(angles_deg=(0.0, 45.0), flips=(False, False),
                           link_delay_ns=1718.0, **side_kw))
    cfg.pair_rate_cps = pair_rate_for_target(n_target, cfg)
    return cfg


class TestCrngStream:
    def test_poisson_counts(self):
        rng = np.random.default_rng(1)
        t, s = simulate_crng_stream(1000.0, 0.0, 100.0, rng)
        assert abs(t.size - 100_000) <= 3 * np.sqrt(100_000)
        assert np.all(s == 1)
        assert np.all(np.diff(t) >= 0)

    def test_zero_rate_empty(self):
        rng = np.random.default_rng(2)
        t, s = simulate_crng_stream(0.0, 0.0, 10.0, rng)
        assert t.size == 0

    def test_seed_determinism(self):
        c1 = _small_config(seed=5)
        c2 = _small_config(seed=5)
        c3 = _small_config(seed=6)
        t1, _ = simulate_crng_stream(500.0, 500.0, 10.0, c1.rng())
        t2, _ = simulate_crng_stream(500.0, 500.0, 10.0, c2.rng())
        t3, _ = simulate_crng_stream(500.0, 500.0, 10.0, c3.rng())
        assert np.array_equal(t1, t2)
        assert not np.array_equal(t1, t3)


class TestCorrelationModel:
    def test_sign_pattern(self):
        cfg = SimConfig()
        e = np.array([[cfg.correlation(i, j) for j in (1, 2)] for i in (1, 2)])
        assert np.all(np.sign(e) == np.array([[-1, -1], [-1, 1]]))
        assert np.abs(e) == pytest.approx(
            np.full((2, 2), cfg.visibility / np.sqrt(2)), rel=1e-12)

    def test_visibility_scaling(self):
        half = SimConfig(visibility=0.5)
        full = SimConfig(visibility=1.0)
        assert half.correlation(1, 1) == pytest.approx(
            0.5 * full.correlation(1, 1), rel=1e-12)


class TestSessionGeneration:
    def test_duty_cycles_match_expectation(self):
        cfg = _small_config()
        session = simulate_session(cfg)
        expect_a = expected_duty(cfg.side_a.crng_total_cps,
                                 cfg.side_a.tau_valid_us)
        assert session.truth["duty_a"] == pytest.approx(expect_a, rel=0.05)
        assert session.truth["duty_joint"] == pytest.approx(
            session.truth["duty_a"] * session.truth["duty_b"], rel=0.10)

    def test_crng_rates_within_poisson(self):
        cfg = _small_config()
        session = simulate_session(cfg)
        expected = cfg.side_a.crng_total_cps * cfg.duration_s
        got = session.stream.of("a_crng_red", "a_crng_blue").size
        assert abs(got - expected) <= 3 * np.sqrt(expected)

    def test_pair_count_near_target(self):
        cfg = _small_config(n_target=4000)
        session = simulate_session(cfg)
        assert abs(session.truth["n_generated_pairs"] - 4000) <= 5 * np.sqrt(4000)

    def test_write_read_round_trip(self, tmp_path):
        cfg = _small_config(n_target=500, duration_s=10.0)
        session = simulate_session(cfg)
        manifest = write_session(session, tmp_path)
        back = evio.read_events(tmp_path / manifest["events_file"])
        assert np.array_equal(back.timestamp_ps, session.stream.timestamp_ps)
        assert np.array_equal(back.channel, session.stream.channel)

    def test_byte_determinism(self, tmp_path):
        cfg = _small_config(n_target=500, duration_s=10.0)
        write_session(simulate_session(cfg), tmp_path / "one")
        write_session(simulate_session(_small_config(n_target=500,
                                                     duration_s=10.0)),
                      tmp_path / "two")
        b1 = (tmp_path / "one" / "events.bin").read_bytes()
        b2 = (tmp_path / "two" / "events.bin").read_bytes()
        assert b1 == b2


class TestRecoveredStatistics:
    def test_tsirelson_limit_at_unit_visibility(self):
        cfg = _small_config(visibility=1.0, n_target=100_000, duration_s=60.0,
                            rate=2000.0, seed=31)
        report = end_to_end_check(cfg)
        assert 2.80 <= report["correlations"]["S"] <= 2.86

    def test_zero_visibility(self):
        cfg = _small_config(visibility=0.0, n_target=20_000, seed=32)
        session = simulate_session(cfg)
        front = analyze_event_files(session.stream, cfg.side_a, cfg.side_b)
        s = correlations(front["counts"]).s
        assert s == pytest.approx(0.0, abs=0.05)

    def test_reference_visibility(self):
        cfg = _small_config(visibility=0.935, n_target=17_000,
                            duration_s=60.0, seed=33)
        session = simulate_session(cfg)
        front = analyze_event_files(session.stream, cfg.side_a, cfg.side_b)
        rep = correlations(front["counts"])
        assert rep.s == pytest.approx(2.645, abs=0.05)
        # recovered settings frequencies mirror the generated ones
        assert front["counts"].n == pytest.approx(
            session.truth["n_generated_pairs"], rel=0.02)

    @pytest.mark.parametrize("visibility", [0.3, 0.7, 1.0])
    def test_recovered_sign_pattern(self, visibility):
        cfg = _small_config(visibility=visibility, n_target=10_000,
                            seed=40 + int(10 * visibility))
        session = simulate_session(cfg)
        front = analyze_event_files(session.stream, cfg.side_a, cfg.side_b)
        e = correlations(front["counts"]).e_ij
        assert np.all(np.sign(e) == np.array([[-1, -1], [-1, 1]]))

    def test_subthreshold_visibility_no_violation(self):
        cfg = _small_config(visibility=0.5, n_target=20_000, seed=34)
        session = simulate_session(cfg)
        front = analyze_event_files(session.stream, cfg.side_a, cfg.side_b)
        assert correlations(front["counts"]).s < 2.0


class TestEndToEnd:
    def test_small_session_closes(self):
        cfg = _small_config(n_target=8000, seed=35,
                            crng_noise_red_cps=60.0, crng_noise_blue_cps=60.0)
        report = end_to_end_check(cfg)
        assert report["all_checks_pass"], report["checks"]
        assert report["significance"]["p"] < 1e-3

    def test_saturated_predictability_reports_p_near_one(self):
        # noise rates tuned so each port is ~25% corrupt: joint 50%
        cfg = _small_config(n_target=8000, seed=36)
        for side in (cfg.side_a, cfg.side_b):
            side.crng_noise_red_cps = side.crng_signal_red_cps / 3.0
            side.crng_noise_blue_cps = side.crng_signal_blue_cps / 3.0
        report = end_to_end_check(cfg)
        assert report["significance"]["p"] >= 0.9
        assert report["correlations"]["S"] > 2.0  # data still violates

    def test_stage_failure_names_stage(self):
        stream = evio.EventStream(np.array([0, 4], dtype=np.uint8),
                                  np.array([0, 10**9], dtype=np.int64))
        with pytest.raises(InternalError, match="stage"):
            analyze_event_files(stream, _small_side(), _small_side())

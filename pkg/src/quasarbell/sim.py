"""Synthetic experiment sessions in the exact formats the pipeline ingests.

The generator is anchored on the setting-validity machinery: color-port
detections form Poisson streams, their validity windows follow the same
supersession rule the hardware applies, and entangled-pair detections are
drawn inside the jointly-valid time (pairs outside it would be discarded
by the gate, so they are never materialized).  Outcome statistics follow
the singlet-like correlation p(A=B | ij) = (1 - V cos 2(theta_a -
theta_b))/2 with explicit per-setting outcome-label flips; the default
angle set yields the correlation sign pattern (-,-,-,+).

Streams are reproducible: all randomness comes from one counter-based
Philox generator keyed by the session seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import chsh as chsh_mod
from . import predict as predict_mod
from . import signif as signif_mod
from .errors import DataError, DomainError, InternalError
from .events import core as ev
from .events import io as evio

__all__ = [
    "SimConfig", "SideConfig", "SessionData",
    "simulate_crng_stream", "simulate_session", "write_session",
    "expected_duty", "pair_rate_for_target", "end_to_end_check",
    "analyze_event_files",
]

PS_PER_S = ev.PS_PER_S


@dataclass
class SideConfig:
    """Per-side CRNG rates, delays and geometry-derived validity window."""

    crng_signal_red_cps: float
    crng_noise_red_cps: float
    crng_signal_blue_cps: float
    crng_noise_blue_cps: float
    tau_set_ns: float
    tau_valid_us: float
    link_delay_ns: float = 0.0       # source -> detector flight + fiber
    heralding: float = 1.0
    angles_deg: tuple = (0.0, 45.0)
    flips: tuple = (False, False)
    background_pol_cps: float = 0.0  # unpaired analyzer clicks

    @property
    def crng_total_cps(self) -> float:
        return (self.crng_signal_red_cps + self.crng_noise_red_cps
                + self.crng_signal_blue_cps + self.crng_noise_blue_cps)


@dataclass
class SimConfig:
    visibility: float = 0.935
    pair_rate_cps: float = 1.0e6
    duration_s: float = 60.0
    seed: int = 20180111
    coincidence_jitter_ps: float = 120.0
    clock_offset_ns: float = 0.0     # B's clock minus A's at t=0
    clock_drift_ppm: float = 0.0
    side_a: SideConfig = field(default_factory=lambda: SideConfig(
        crng_signal_red_cps=520.0, crng_noise_red_cps=72.0,
        crng_signal_blue_cps=682.0, crng_noise_blue_cps=94.0,
        tau_set_ns=325.0, tau_valid_us=2.34, link_delay_ns=1831.0,
        heralding=0.31, angles_deg=(22.5, 67.5), flips=(False, True)))
    side_b: SideConfig = field(default_factory=lambda: SideConfig(
        crng_signal_red_cps=11070.0, crng_noise_red_cps=425.0,
        crng_signal_blue_cps=6015.0, crng_noise_blue_cps=485.0,
        tau_set_ns=430.0, tau_valid_us=0.90, link_delay_ns=1718.0,
        heralding=0.41, angles_deg=(0.0, 45.0), flips=(False, False)))

    def __post_init__(self):
        if not 0 <= self.visibility <= 1:
            raise DomainError("visibility must be in [0, 1]")
        if self.duration_s <= 0 or self.pair_rate_cps < 0:
            raise DomainError("invalid session duration or rate")

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed))

    def correlation(self, i: int, j: int) -> float:
        """E_ij for settings i, j in {1, 2} under the configured angles."""
        th_a = math.radians(self.side_a.angles_deg[i - 1])
        th_b = math.radians(self.side_b.angles_deg[j - 1])
        sign = (-1.0 if self.side_a.flips[i - 1] else 1.0) \
            * (-1.0 if self.side_b.flips[j - 1] else 1.0)
        return -self.visibility * math.cos(2.0 * (th_a - th_b)) * sign

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        """Build from a config section; keys outside the dataclass fields
        (e.g. sizing hints like ``target_coincidences``) are ignored."""
        known = {f.name for f in fields(cls)}
        d = {k: v for k, v in d.items() if k in known}
        for key in ("side_a", "side_b"):
            if key in d and isinstance(d[key], dict):
                side = dict(d[key])
                for tup in ("angles_deg", "flips"):
                    if tup in side:
                        side[tup] = tuple(side[tup])
                d[key] = SideConfig(**side)
        return cls(**d)

    def as_dict(self) -> dict:
        return asdict(self)


def simulate_crng_stream(rate_red_cps: float, rate_blue_cps: float,
                         duration_s: float, rng: np.random.Generator):
    """Merged Poisson arrivals of both color ports.

    Returns sorted int64 times (ps) and int8 settings (red 1, blue 2).
    """
    if duration_s <= 0:
        raise DomainError("duration must be positive")
    times, settings = [], []
    for rate, setting in ((rate_red_cps, 1), (rate_blue_cps, 2)):
        n = rng.poisson(rate * duration_s)
        t = rng.integers(0, int(duration_s * PS_PER_S), size=n, dtype=np.int64)
        times.append(t)
        settings.append(np.full(n, setting, dtype=np.int8))
    t = np.concatenate(times)
    s = np.concatenate(settings)
    order = np.argsort(t, kind="stable")
    return t[order], s[order]


def expected_duty(total_crng_cps: float, tau_valid_us: float) -> float:
    """Coverage fraction of the validity windows under supersession.

    A time is covered when some detection happened in the preceding window
    length, so for Poisson arrivals the duty is 1 - exp(-rate * tau_valid).
    """
    return 1.0 - math.exp(-total_crng_cps * tau_valid_us * 1e-6)


def pair_rate_for_target(n_target: float, config: SimConfig) -> float:
    """Source pair rate that lands about n_target gated coincidences."""
    duty = (expected_duty(config.side_a.crng_total_cps, config.side_a.tau_valid_us)
            * expected_duty(config.side_b.crng_total_cps, config.side_b.tau_valid_us))
    denom = (duty * config.duration_s
             * config.side_a.heralding * config.side_b.heralding)
    if denom <= 0:
        raise DomainError("configuration yields no valid time")
    return n_target / denom


def _intersect_labeled(ia: ev.SettingIntervals, ib: ev.SettingIntervals,
                       shift_b_ps: int):
    """Overlaps of A intervals with (B intervals shifted by -shift_b_ps).

    Returns (start, end, setting_a, setting_b) arrays in A-time coordinates.
    """
    starts, ends, sa, sb = [], [], [], []
    i = j = 0
    while i < len(ia) and j < len(ib):
        b_lo = ib.start_ps[j] - shift_b_ps
        b_hi = ib.end_ps[j] - shift_b_ps
        lo = max(ia.start_ps[i], b_lo)
        hi = min(ia.end_ps[i], b_hi)
        if hi > lo:
            starts.append(lo)
            ends.append(hi)
            sa.append(ia.setting[i])
            sb.append(ib.setting[j])
        if ia.end_ps[i] < b_hi:
            i += 1
        else:
            j += 1
    return (np.array(starts, dtype=np.int64), np.array(ends, dtype=np.int64),
            np.array(sa, dtype=np.int8), np.array(sb, dtype=np.int8))


@dataclass
class SessionData:
    """Generated event streams plus the generator-side ground truth."""

    stream: evio.EventStream
    config: SimConfig
    truth: dict

    def manifest(self) -> dict:
        return {"n_events": len(self.stream), "config": self.config.as_dict(),
                "truth": self.truth}


def simulate_session(config: SimConfig) -> SessionData:
    """Generate a full session: CRNG streams, gated pair detections,
    background analyzer clicks, and B-side clock distortion."""
    rng = config.rng()
    dur_ps = int(config.duration_s * PS_PER_S)

    t_crng_a, s_crng_a = simulate_crng_stream(
        config.side_a.crng_signal_red_cps + config.side_a.crng_noise_red_cps,
        config.side_a.crng_signal_blue_cps + config.side_a.crng_noise_blue_cps,
        config.duration_s, rng)
    t_crng_b, s_crng_b = simulate_crng_stream(
        config.side_b.crng_signal_red_cps + config.side_b.crng_noise_red_cps,
        config.side_b.crng_signal_blue_cps + config.side_b.crng_noise_blue_cps,
        config.duration_s, rng)

    iv_a = ev.build_setting_intervals(t_crng_a, s_crng_a,
                                      config.side_a.tau_set_ns,
                                      config.side_a.tau_valid_us)
    iv_b = ev.build_setting_intervals(t_crng_b, s_crng_b,
                                      config.side_b.tau_set_ns,
                                      config.side_b.tau_valid_us)

    delta_ba_ps = int(round((config.side_b.link_delay_ns
                             - config.side_a.link_delay_ns) * 1e3))
    j_start, j_end, j_sa, j_sb = _intersect_labeled(iv_a, iv_b, delta_ba_ps)
    lengths = (j_end - j_start).astype(np.float64)
    total_joint_ps = float(lengths.sum())

    rate_coinc = (config.pair_rate_cps * config.side_a.heralding
                  * config.side_b.heralding)
    n_pairs = int(rng.poisson(rate_coinc * total_joint_ps / PS_PER_S)) \
        if total_joint_ps > 0 else 0

    if n_pairs:
        seg = rng.choice(lengths.size, size=n_pairs, p=lengths / lengths.sum())
        u = rng.random(n_pairs)
        t_a = (j_start[seg] + (u * lengths[seg])).astype(np.int64)
        order = np.argsort(t_a, kind="stable")
        t_a = t_a[order]
        seg = seg[order]
        set_a = j_sa[seg]
        set_b = j_sb[seg]
        # joint outcomes: same/different by E_ij, then an unbiased sign
        e_table = np.array([[config.correlation(i, j) for j in (1, 2)]
                            for i in (1, 2)])
        p_same = (1.0 + e_table[set_a - 1, set_b - 1]) / 2.0
        same = rng.random(n_pairs) < p_same
        out_a = np.where(rng.random(n_pairs) < 0.5, 1, -1).astype(np.int8)
        out_b = np.where(same, out_a, -out_a).astype(np.int8)
        jit = rng.normal(0.0, config.coincidence_jitter_ps, size=n_pairs)
        t_b = t_a + delta_ba_ps + np.rint(jit).astype(np.int64)
    else:
        t_a = t_b = np.empty(0, dtype=np.int64)
        set_a = set_b = out_a = out_b = np.empty(0, dtype=np.int8)

    # unpaired analyzer background, uniform over the session
    bg = {}
    for side, cfg in (("a", config.side_a), ("b", config.side_b)):
        n_bg = rng.poisson(cfg.background_pol_cps * config.duration_s)
        bg[side] = (rng.integers(0, dur_ps, size=n_bg, dtype=np.int64),
                    np.where(rng.random(n_bg) < 0.5, 1, -1).astype(np.int8))

    def pol_channels(side: str, t: np.ndarray, out: np.ndarray):
        t_bg, out_bg = bg[side]
        t_all = np.concatenate([t, t_bg])
        o_all = np.concatenate([out, out_bg])
        plus = t_all[o_all == 1]
        minus = t_all[o_all == -1]
        return plus, minus

    a_plus, a_minus = pol_channels("a", t_a, out_a)
    b_plus, b_minus = pol_channels("b", t_b, out_b)

    # B-side clock distortion applies to everything B records
    def b_clock(t: np.ndarray) -> np.ndarray:
        off0 = config.clock_offset_ns * 1e3
        slope = config.clock_drift_ppm * 1e-6
        return (t + off0 + slope * t.astype(np.float64)).astype(np.int64)

    chunks = [
        ("a_crng_red", t_crng_a[s_crng_a == 1]),
        ("a_crng_blue", t_crng_a[s_crng_a == 2]),
        ("a_pol_plus", a_plus),
        ("a_pol_minus", a_minus),
        ("b_crng_red", b_clock(t_crng_b[s_crng_b == 1])),
        ("b_crng_blue", b_clock(t_crng_b[s_crng_b == 2])),
        ("b_pol_plus", b_clock(b_plus)),
        ("b_pol_minus", b_clock(b_minus)),
    ]
    channel = np.concatenate([
        np.full(len(t), evio.CHANNELS[name], dtype=np.uint8) for name, t in chunks])
    times = np.concatenate([t for _, t in chunks])
    stream = evio.EventStream(channel, np.maximum(times, 0)).sorted_by_time()

    truth = {
        "n_generated_pairs": int(n_pairs),
        "joint_valid_s": total_joint_ps / PS_PER_S,
        "duty_a": iv_a.duty_cycle(dur_ps),
        "duty_b": iv_b.duty_cycle(dur_ps),
        "duty_joint": total_joint_ps / dur_ps,
        "delta_ba_ps": delta_ba_ps,
        "e_table": [[config.correlation(i, j) for j in (1, 2)] for i in (1, 2)],
    }
    return SessionData(stream=stream, config=config, truth=truth)


def write_session(session: SessionData, outdir, fmt: str = "binary") -> dict:
    """Write the session's event file and manifest; returns the manifest."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if fmt == "binary":
        events_path = outdir / "events.bin"
        evio.write_events_binary(events_path, session.stream)
    elif fmt == "csv":
        events_path = outdir / "events.csv"
        evio.write_events_csv(events_path, session.stream)
    else:
        raise DataError(f"unknown format {fmt!r}")
    manifest = session.manifest()
    manifest["events_file"] = events_path.name
    manifest["format"] = fmt
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def _predictability_from_config(config: SimConfig) -> predict_mod.PredictabilityTable:
    def side(cfg: SideConfig) -> predict_mod.SideRates:
        return predict_mod.SideRates(
            red=predict_mod.PortRates(cfg.crng_signal_red_cps, cfg.crng_noise_red_cps),
            blue=predict_mod.PortRates(cfg.crng_signal_blue_cps, cfg.crng_noise_blue_cps))
    return predict_mod.excess_predictability(predict_mod.RateMeasurement(
        a=side(config.side_a), b=side(config.side_b)))


def analyze_event_files(stream: evio.EventStream, side_a: SideConfig,
                        side_b: SideConfig, window_ns: float = 2.66,
                        width_mode: str = "full",
                        drift_block_s: float = 10.0,
                        drift_scan_ns: float = 5000.0) -> dict:
    """events -> trials -> CHSH tables: the front half of the pipeline.

    Returns a dict with the drift model, trials, duty report and counts.
    B-side validity gating uses B's own raw clock; drift correction is only
    used to match coincidences on A's clock.
    """
    stage = "ingest"
    try:
        t_ap, lab_a = stream.of_labeled("a_pol_plus", "a_pol_minus")
        t_bp, lab_b = stream.of_labeled("b_pol_plus", "b_pol_minus")
        crng_a_t, crng_a_s = _crng_of(stream, "a")
        crng_b_t, crng_b_s = _crng_of(stream, "b")

        stage = "clock_drift"
        drift = ev.estimate_clock_drift(t_ap, t_bp, window_scan_ns=drift_scan_ns,
                                        block_s=drift_block_s)

        stage = "coincidences"
        idx_a, idx_b = ev.find_coincidences(t_ap, t_bp, drift=drift,
                                            window_ns=window_ns,
                                            width_mode=width_mode)

        stage = "setting_intervals"
        iv_a = ev.build_setting_intervals(crng_a_t, crng_a_s,
                                          side_a.tau_set_ns, side_a.tau_valid_us)
        iv_b = ev.build_setting_intervals(crng_b_t, crng_b_s,
                                          side_b.tau_set_ns, side_b.tau_valid_us)

        stage = "gate_and_label"
        trials, duty = ev.gate_and_label(t_ap[idx_a], lab_a[idx_a],
                                         t_bp[idx_b], lab_b[idx_b],
                                         iv_a, iv_b)

        stage = "tabulate"
        counts = chsh_mod.tabulate(trials)
    except Exception as exc:
        raise InternalError(f"pipeline stage {stage!r} failed: {exc}") from exc
    return {"drift": drift, "trials": trials, "duty": duty, "counts": counts,
            "intervals_a": iv_a, "intervals_b": iv_b}


def _crng_of(stream: evio.EventStream, side: str):
    t_red = stream.of(f"{side}_crng_red")
    t_blue = stream.of(f"{side}_crng_blue")
    t = np.concatenate([t_red, t_blue])
    s = np.concatenate([np.full(t_red.size, 1, np.int8),
                        np.full(t_blue.size, 2, np.int8)])
    order = np.argsort(t, kind="stable")
    return t[order], s[order]


def end_to_end_check(config: SimConfig, workdir=None) -> dict:
    """Simulate a session, run the full analysis chain, and check closure.

    The report carries the recovered CHSH quantities, duty cycles, the
    significance chain and a ``checks`` block comparing them with the
    generator's ground truth.  Any stage failure names the stage.
    """
    session = simulate_session(config)
    if workdir is not None:
        write_session(session, workdir)

    front = analyze_event_files(session.stream, config.side_a, config.side_b)
    counts = front["counts"]

    stage = "correlations"
    try:
        corr = chsh_mod.correlations(counts)
        stage = "settings_independence"
        indep = chsh_mod.settings_independence(counts)
        stage = "no_signaling"
        nosig = chsh_mod.no_signaling(counts)
        stage = "predictability"
        eps = _predictability_from_config(config)
        stage = "significance"
        sig = signif_mod.significance_report(counts, eps)
    except InternalError:
        raise
    except Exception as exc:
        raise InternalError(f"pipeline stage {stage!r} failed: {exc}") from exc

    duty = front["duty"]
    recovered_v = corr.visibility
    checks = {
        "visibility_within_0.02": abs(recovered_v - config.visibility) <= 0.02,
        "independence_p_above_0.01": indep.p_value > 0.01,
        "no_signaling_aggregate_above_0.01": nosig.aggregate > 0.01,
        "violation_found": corr.s > 2.0,
    }
    return {
        "n_trials": counts.n,
        "correlations": corr.as_dict(),
        "independence": indep.as_dict(),
        "no_signaling": nosig.as_dict(),
        "predictability": eps.as_dict(),
        "significance": sig.as_dict(),
        "duty": duty.as_dict(),
        "truth": session.truth,
        "recovered_visibility": recovered_v,
        "configured_visibility": config.visibility,
        "checks": checks,
        "all_checks_pass": all(checks.values()),
    }

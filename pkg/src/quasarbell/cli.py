"""Command-line interface.

Subcommands map one-to-one onto the library layers: ``cosmo`` (light-cone
accounting), ``windows`` (causal-alignment validity times), ``analyze``
(counts or event files through the CHSH + significance chain), ``simulate``
(synthetic sessions), ``schedule`` (pair ranking) and ``randomness``
(bitstream predictability).  Every report JSON embeds the toolkit version
and SHA-256 digests of its inputs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import warnings
from datetime import datetime
from pathlib import Path

import numpy as np

from . import __version__
from . import chsh as chsh_mod
from . import cosmo as cosmo_mod
from . import geom as geom_mod
from . import plots
from . import predict as predict_mod
from . import randbits as randbits_mod
from . import sched as sched_mod
from . import signif as signif_mod
from . import sim as sim_mod
from .config import RunConfig, default_config_path
from .errors import DataError, DomainError, InternalError, QuasarBellError
from .events import io as evio

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

ENV_CONFIG = "QUASARBELL_CONFIG"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _provenance(inputs: dict) -> dict:
    return {
        "toolkit_version": __version__,
        "inputs": {name: _sha256(p) for name, p in inputs.items() if p is not None},
    }


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
    print(f"wrote {path}")


def _jsonable(obj):
    """Strict-JSON payload: numpy types unwrapped, non-finite floats (the
    deviation count of a saturated chain) mapped to null."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def build_parser() -> _Parser:
    parser = _Parser(prog="quasarbell",
                     description="Quasar-settings Bell test toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-c", "--config", default=os.environ.get(ENV_CONFIG),
                        help="run configuration JSON (default: bundled; "
                             f"env {ENV_CONFIG})")
    parser.add_argument("-o", "--output", default=".",
                        help="output directory (default: current)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cosmo", help="light-cone volumes and excluded fraction")
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--pair", help="pair id from the configuration")
    grp.add_argument("--z-a", type=float, help="redshift of source A")
    p.add_argument("--z-b", type=float, help="redshift of source B")
    p.add_argument("--alpha", type=float, help="angular separation in degrees")
    p.add_argument("--substitute-z-b", type=float, default=None,
                   help="recompute with source B replaced at this redshift "
                        "(intervening absorber or lens scenarios)")
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("windows", help="causal-alignment validity windows")
    p.add_argument("--pair", required=True)
    p.add_argument("--cadence-s", type=float, default=60.0)
    p.add_argument("--track-a", metavar="CSV", default=None,
                   help="pointing track (utc,az,alt) overriding the ephemeris")
    p.add_argument("--track-b", metavar="CSV", default=None)

    p = sub.add_parser("analyze", help="CHSH + significance chain")
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--counts", help="4x4 coincidence-count CSV")
    grp.add_argument("--events", help="event file (binary or CSV)")
    p.add_argument("--eps-override", metavar="NAME",
                   help="predictability override set from the configuration")
    p.add_argument("--rates", help="rates CSV to derive predictability from")
    p.add_argument("--window-ns", type=float, default=2.66)
    p.add_argument("--width-mode", choices=("full", "half"), default="full",
                   help="interpret the window as full acceptance width "
                        "(|dt| <= w/2, default) or as the half width")
    p.add_argument("--tau-valid-a", type=float, default=None, metavar="US")
    p.add_argument("--tau-valid-b", type=float, default=None, metavar="US")
    p.add_argument("--n-max", type=int, default=20,
                   help="trial horizon for the memory bound")
    p.add_argument("--tag", default=None, help="output filename tag")
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("simulate", help="generate a synthetic session")
    p.add_argument("--out", required=True, help="session output directory")
    p.add_argument("--visibility", type=float, default=None)
    p.add_argument("--duration-s", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--target-coincidences", type=float, default=None)
    p.add_argument("--format", choices=("binary", "csv"), default="binary")

    p = sub.add_parser("schedule", help="rank catalog pairs for a window")
    p.add_argument("--catalog", required=True, help="catalog CSV (id,ra,dec,z,rmag)")
    p.add_argument("--start", required=True, help="UTC start, ISO format")
    p.add_argument("--minutes", type=int, required=True)
    p.add_argument("--min-alt", type=float, default=25.0)
    p.add_argument("--mag-limit", type=float, default=19.0)
    p.add_argument("--patch-deg", type=float, default=5.0)
    p.add_argument("--visibility", type=float, default=0.935)

    p = sub.add_parser("randomness", help="bitstream predictability estimate")
    p.add_argument("--bits", required=True, help="packed binary or ASCII 0/1 file")
    p.add_argument("--m", type=int, default=None, help="context length "
                   "(default: chosen from the stream length)")
    p.add_argument("--n-bits", type=int, default=None,
                   help="use only the first N bits")
    return parser


def _cmd_cosmo(args, config: RunConfig, outdir: Path) -> int:
    params = config.cosmology
    if args.pair:
        spec = config.pair(args.pair)
        z_a, z_b = spec.side_a.z, spec.side_b.z
        alpha = spec.alpha_deg or cosmo_mod.angular_separation(
            spec.side_a.ra_deg, spec.side_a.dec_deg,
            spec.side_b.ra_deg, spec.side_b.dec_deg)
        tag = spec.id
    else:
        if args.z_b is None or args.alpha is None:
            raise DataError("--z-a requires --z-b and --alpha")
        z_a, z_b, alpha = args.z_a, args.z_b, args.alpha
        tag = f"z{z_a:g}_z{z_b:g}_a{alpha:g}"

    report = cosmo_mod.excluded_fraction(z_a, z_b, alpha, params).as_dict()
    report.update({
        "z_a": z_a, "z_b": z_b,
        "t_lb_a_gyr": cosmo_mod.lookback_time_of_z(z_a, params),
        "t_lb_b_gyr": cosmo_mod.lookback_time_of_z(z_b, params),
        "eta_0": cosmo_mod.scale_factor_table(params).eta0,
        "t_lb_big_bang_gyr": cosmo_mod.lookback_time_of_z(float("inf"), params),
    })
    if report["f_excl"] == 0.0:
        warnings.warn("no exclusion: the emission cones cover the whole "
                      "experimental past light cone")
    if args.substitute_z_b is not None:
        sub = cosmo_mod.excluded_fraction(z_a, args.substitute_z_b, alpha, params)
        report["substituted"] = {"z_b": args.substitute_z_b,
                                 "f_excl": sub.f_excl}
    payload = {"report": report,
               "provenance": _provenance({"config": args.config})}
    _write_json(outdir / f"cosmo_{tag}.json", payload)

    table = cosmo_mod.scale_factor_table(params)
    etas = np.linspace(0.0, table.eta0, 201)
    samples = outdir / f"lightcone_{tag}.csv"
    with open(samples, "w") as fh:
        fh.write("eta,a,t_gyr\n")
        for eta in etas:
            fh.write(f"{eta:.6f},{table.a_of_eta(eta):.8e},"
                     f"{cosmo_mod.cosmic_time_of_eta(eta, params):.6f}\n")
    print(f"wrote {samples}")
    if not args.no_plots:
        plots.lightcone_conformal_svg(report, outdir / f"lightcone_conformal_{tag}.svg", params)
        plots.lightcone_cosmic_svg(report, outdir / f"lightcone_cosmic_{tag}.svg", params)
        print(f"wrote {outdir / f'lightcone_conformal_{tag}.svg'}")
        print(f"wrote {outdir / f'lightcone_cosmic_{tag}.svg'}")
    return EXIT_OK


def _cmd_windows(args, config: RunConfig, outdir: Path) -> int:
    spec = config.pair(args.pair)
    rows = []
    result = {}
    track_files = {"A": args.track_a, "B": args.track_b}
    for side, quasar, delays in (("A", spec.side_a, config.delays_a),
                                 ("B", spec.side_b, config.delays_b)):
        site = config.geometry.receiver(side)
        if track_files[side]:
            track = geom_mod.SkyTrack.from_csv(track_files[side])
        else:
            track = geom_mod.SkyTrack.from_radec(
                quasar.ra_deg, quasar.dec_deg, site, spec.utc_start,
                spec.duration_min, cadence_s=args.cadence_s)
        res = geom_mod.tau_valid(track, side, config.geometry, delays)
        result[side] = res.as_dict() | {"quasar": quasar.id}
        if res.out_of_alignment:
            warnings.warn(f"side {side} is out of causal alignment "
                          f"(tau_valid = {res.tau_valid_us:.3f} us)")
        for utc, az, alt, tg in zip(track.utc, track.az_deg, track.alt_deg,
                                    res.tau_geom_us):
            rows.append((utc.isoformat(), side, az, alt, tg))
    csv_path = outdir / f"windows_{spec.id}.csv"
    with open(csv_path, "w") as fh:
        fh.write("utc,side,az_deg,alt_deg,tau_geom_us\n")
        for utc, side, az, alt, tg in rows:
            fh.write(f"{utc},{side},{az:.3f},{alt:.3f},{tg:.5f}\n")
    print(f"wrote {csv_path}")
    _write_json(outdir / f"windows_{spec.id}.json",
                {"pair": spec.id, "windows": result,
                 "provenance": _provenance({"config": args.config})})
    return EXIT_OK


def _eps_table(args, config: RunConfig):
    if args.eps_override:
        if args.eps_override not in config.eps_overrides:
            raise DataError(f"no eps override {args.eps_override!r} in config; "
                            f"have {sorted(config.eps_overrides)}")
        return config.eps_overrides[args.eps_override]
    if args.rates:
        return predict_mod.excess_predictability(predict_mod.load_rates_csv(args.rates))
    raise DataError("analyze needs --eps-override or --rates for the "
                    "significance chain")


def _cmd_analyze(args, config: RunConfig, outdir: Path) -> int:
    inputs = {"config": args.config}
    duty = drift_summary = None
    if args.counts:
        counts = chsh_mod.CoincidenceCounts.from_csv(args.counts)
        inputs["counts"] = args.counts
        tag = args.tag or Path(args.counts).stem
    else:
        stream = evio.read_events(args.events)
        inputs["events"] = args.events
        tag = args.tag or Path(args.events).stem
        simcfg = sim_mod.SimConfig.from_dict(config.simulator) \
            if config.simulator else sim_mod.SimConfig()
        side_a, side_b = simcfg.side_a, simcfg.side_b
        if args.tau_valid_a is not None:
            side_a.tau_valid_us = args.tau_valid_a
        if args.tau_valid_b is not None:
            side_b.tau_valid_us = args.tau_valid_b
        front = sim_mod.analyze_event_files(stream, side_a, side_b,
                                            window_ns=args.window_ns,
                                            width_mode=args.width_mode)
        counts = front["counts"]
        duty = front["duty"].as_dict()
        drift_summary = {
            "blocks": int(front["drift"].block_centers_ps.size),
            "offset_ps_first": float(front["drift"].offsets_ps[0]),
            "offset_ps_last": float(front["drift"].offsets_ps[-1]),
        }

    corr = chsh_mod.correlations(counts)
    indep = chsh_mod.settings_independence(counts)
    nosig = chsh_mod.no_signaling(counts)
    eps = _eps_table(args, config)
    sig = signif_mod.significance_report(counts, eps, n_max=args.n_max)

    payload = {
        "counts": counts.table.reshape(4, 4).tolist(),
        "n": counts.n,
        "correlations": corr.as_dict(),
        "independence": indep.as_dict(),
        "no_signaling": nosig.as_dict(),
        "predictability": eps.as_dict(),
        "significance": sig.as_dict(),
        "provenance": _provenance(inputs),
    }
    if duty is not None:
        payload["duty"] = duty
        payload["drift"] = drift_summary
    _write_json(outdir / f"analyze_{tag}.json", payload)
    if not args.no_plots:
        plots.pleft_curve_svg(sig.p_left_curve, outdir / f"pleft_{tag}.svg", b=sig.b)
        print(f"wrote {outdir / f'pleft_{tag}.svg'}")
    return EXIT_OK


def _cmd_simulate(args, config: RunConfig, outdir: Path) -> int:
    raw = dict(config.simulator) if config.simulator else {}
    target = raw.pop("target_coincidences", None)
    simcfg = sim_mod.SimConfig.from_dict(raw) if raw else sim_mod.SimConfig()
    if args.visibility is not None:
        simcfg.visibility = args.visibility
    if args.duration_s is not None:
        simcfg.duration_s = args.duration_s
    if args.seed is not None:
        simcfg.seed = args.seed
    if args.target_coincidences is not None:
        target = args.target_coincidences
    if target:
        simcfg.pair_rate_cps = sim_mod.pair_rate_for_target(float(target), simcfg)
    session = sim_mod.simulate_session(simcfg)
    manifest = sim_mod.write_session(session, args.out, fmt=args.format)
    print(f"wrote session to {args.out} ({manifest['n_events']} events, "
          f"{session.truth['n_generated_pairs']} pair detections)")
    return EXIT_OK


def _cmd_schedule(args, config: RunConfig, outdir: Path) -> int:
    entries = sched_mod.load_catalog_csv(args.catalog)
    entries = sched_mod.filter_catalog(entries, mag_limit=args.mag_limit,
                                       patch_deg=args.patch_deg)
    if len(entries) < 2:
        raise DataError("fewer than two catalog entries survive filtering")
    start = datetime.fromisoformat(args.start)
    scored = sched_mod.score_pairs(entries, config.geometry,
                                   config.delays_a, config.delays_b,
                                   start, args.minutes,
                                   params=config.cosmology,
                                   visibility=args.visibility,
                                   min_alt_deg=args.min_alt)
    csv_path = outdir / "schedule_ranked.csv"
    sched_mod.write_ranked_csv(csv_path, scored)
    print(f"wrote {csv_path} ({len(scored)} feasible pairs)")
    _write_json(outdir / "schedule_ranked.json", {
        "window": {"start": args.start, "minutes": args.minutes},
        "n_catalog_after_filter": len(entries),
        "pairs": [vars(s) for s in scored[:50]],
        "provenance": _provenance({"config": args.config,
                                   "catalog": args.catalog}),
    })
    return EXIT_OK


def _cmd_randomness(args, config: RunConfig, outdir: Path) -> int:
    bits = randbits_mod.read_bits(args.bits, n_bits=args.n_bits)
    if len(bits) < 256:
        raise DataError(f"stream too short ({len(bits)} bits)")
    m = args.m if args.m is not None else randbits_mod.choose_m(len(bits))
    est = randbits_mod.mutual_information(bits, m)
    payload = {"stream_bits": len(bits), "estimate": est.as_dict(),
               "provenance": _provenance({"bits": args.bits,
                                          "config": args.config})}
    _write_json(outdir / f"randomness_{Path(args.bits).stem}.json", payload)
    return EXIT_OK


_COMMANDS = {
    "cosmo": _cmd_cosmo,
    "windows": _cmd_windows,
    "analyze": _cmd_analyze,
    "simulate": _cmd_simulate,
    "schedule": _cmd_schedule,
    "randomness": _cmd_randomness,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_OK
    try:
        config = RunConfig.load(args.config)
        outdir = Path(args.output)
        outdir.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](args, config, outdir)
    except (DataError, DomainError, FileNotFoundError) as exc:
        print(f"quasarbell: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except QuasarBellError as exc:
        print(f"quasarbell: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - unexpected
        print(f"quasarbell: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

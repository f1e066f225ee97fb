"""Quasar-pair selection for a two-telescope observing window.

Filters a magnitude-limited catalog down to per-patch brightest-for-their-
distance survivors, computes per-minute observability and causal-alignment
feasibility for every candidate pair, and ranks by excluded light-cone
fraction with an expected-significance figure of merit as the secondary
key.  The significance heuristic is a documented rough proxy (square-root
counting), not a calibrated forecast.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from . import cosmo as cosmo_mod
from . import geom as geom_mod
from .errors import DataError, DomainError
from .predict import visibility_constraint

__all__ = [
    "CatalogEntry", "PairScore", "RatesModel", "load_catalog_csv",
    "filter_catalog", "observability", "score_pairs", "write_ranked_csv",
]


@dataclass(frozen=True)
class CatalogEntry:
    id: str
    ra_deg: float
    dec_deg: float
    z: float
    rmag: float

    def __post_init__(self):
        if self.z < 0:
            raise DataError(f"{self.id}: negative redshift")
        if not (0 <= self.ra_deg < 360) or abs(self.dec_deg) > 90:
            raise DataError(f"{self.id}: bad coordinates")


def load_catalog_csv(path) -> list[CatalogEntry]:
    """Catalog CSV with columns id, ra, dec, z, rmag."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(CatalogEntry(id=row["id"].strip(),
                                    ra_deg=float(row["ra"]),
                                    dec_deg=float(row["dec"]),
                                    z=float(row["z"]),
                                    rmag=float(row["rmag"])))
    return out


def filter_catalog(entries: list[CatalogEntry], mag_limit: float = 19.0,
                   patch_deg: float = 5.0) -> list[CatalogEntry]:
    """Keep entries brighter than the limit that are brightest for their
    distance within their sky patch.

    Within each patch an entry survives when no other entry in the patch is
    simultaneously at least as distant and strictly brighter (a Pareto
    front over (z, magnitude)).
    """
    patches: dict[tuple[int, int], list[CatalogEntry]] = {}
    for e in entries:
        if e.rmag > mag_limit:
            continue
        key = (int(e.ra_deg // patch_deg), int((e.dec_deg + 90.0) // patch_deg))
        patches.setdefault(key, []).append(e)
    kept: list[CatalogEntry] = []
    for members in patches.values():
        members.sort(key=lambda e: (-e.z, e.rmag))
        best = math.inf
        for e in members:
            if e.rmag < best:
                kept.append(e)
                best = e.rmag
    kept.sort(key=lambda e: e.id)
    return kept


def observability(entry: CatalogEntry, site: geom_mod.SitePosition,
                  start_utc: datetime, duration_min: int,
                  min_alt_deg: float = 25.0, cadence_min: int = 1) -> int:
    """Minutes within the window during which the source sits above
    ``min_alt_deg`` at the site."""
    if duration_min < 0:
        raise DomainError("window must have non-negative length")
    minutes = 0
    for k in range(0, duration_min, cadence_min):
        _, alt = geom_mod.radec_to_azalt(entry.ra_deg, entry.dec_deg, site,
                                         start_utc + timedelta(minutes=k))
        if alt > min_alt_deg:
            minutes += cadence_min
    return minutes


@dataclass(frozen=True)
class RatesModel:
    """Crude per-port rate forecast from the catalog magnitude.

    Port signal splits a magnitude-scaled source rate evenly between the
    colors; noise is a site constant.  Used only for the scheduling
    feasibility screen.
    """

    rate_at_mag15_cps: float = 40_000.0
    noise_cps: float = 300.0

    def port_signal_cps(self, rmag: float) -> float:
        return 0.5 * self.rate_at_mag15_cps * 10.0 ** (-0.4 * (rmag - 15.0))

    def port_eps(self, rmag: float) -> float:
        s = self.port_signal_cps(rmag)
        return self.noise_cps / (s + self.noise_cps)


@dataclass(frozen=True)
class PairScore:
    id_a: str
    id_b: str
    alpha_deg: float
    f_excl: float
    expected_nu_per_sqrt_minute: float
    joint_minutes: int
    min_port_snr: float

    def sort_key(self):
        return (-round(self.f_excl, 6), -self.expected_nu_per_sqrt_minute,
                -self.joint_minutes, self.id_a, self.id_b)


def score_pairs(entries: list[CatalogEntry], geometry: geom_mod.ExperimentGeometry,
                delays_a: geom_mod.ChannelDelays, delays_b: geom_mod.ChannelDelays,
                start_utc: datetime, duration_min: int,
                params: cosmo_mod.CosmologyParams = cosmo_mod.CosmologyParams(),
                rates: RatesModel = RatesModel(),
                visibility: float = 0.935,
                min_alt_deg: float = 25.0,
                pair_rate_cps: float = 1.0e6) -> list[PairScore]:
    """Rank all feasible pairs of catalog entries for the window.

    A minute counts as jointly feasible when both sources clear the
    altitude floor, both sides' instantaneous alignment windows are
    positive, and the forecast corrupt fraction stays below the
    visibility bound.  Pairs with no feasible minutes (or with zero
    angular separation, which cannot give independent settings) are
    dropped.  Ranking is lexicographic on (excluded fraction, expected
    significance rate), tie-broken by feasible minutes.
    """
    if len(entries) < 2:
        raise DataError("need at least two catalog entries")
    eps_bound = visibility_constraint(visibility)
    site_a = geometry.receiver_a
    site_b = geometry.receiver_b
    minutes = [start_utc + timedelta(minutes=k) for k in range(duration_min)]

    def track(entry: CatalogEntry, site, side, delays):
        """Per-minute (alt, tau_valid_us) for one source at one site."""
        out = []
        for t in minutes:
            az, alt = geom_mod.radec_to_azalt(entry.ra_deg, entry.dec_deg, site, t)
            n_hat = geom_mod.direction_from_azalt(az, alt, site)
            tg = geom_mod.tau_geom(side, geometry, n_hat, delays)
            out.append((alt, tg - (delays.tau_set_ns + delays.tau_buffer_ns) * 1e-3))
        return out

    tracks_a = {e.id: track(e, site_a, "A", delays_a) for e in entries}
    tracks_b = {e.id: track(e, site_b, "B", delays_b) for e in entries}

    scored = []
    for ea in entries:
        for eb in entries:
            if ea.id >= eb.id:
                continue
            alpha = cosmo_mod.angular_separation(ea.ra_deg, ea.dec_deg,
                                                 eb.ra_deg, eb.dec_deg)
            if alpha <= 0.0:
                continue  # same line of sight: settings share a worldline
            eps_pair = 2.0 * max(rates.port_eps(ea.rmag), rates.port_eps(eb.rmag))
            if eps_pair >= eps_bound:
                continue
            joint = 0
            for (alt_a, tv_a), (alt_b, tv_b) in zip(tracks_a[ea.id], tracks_b[eb.id]):
                if (alt_a > min_alt_deg and alt_b > min_alt_deg
                        and tv_a > 0 and tv_b > 0):
                    joint += 1
            if joint == 0:
                continue
            f_excl = cosmo_mod.excluded_fraction(ea.z, eb.z, alpha, params).f_excl
            snr = min(_snr(rates, ea.rmag), _snr(rates, eb.rmag))
            duty = (_duty(rates, ea.rmag, 2.0) * _duty(rates, eb.rmag, 1.0))
            nu_rate = math.sqrt(max(pair_rate_cps * duty * 60.0, 0.0))
            scored.append(PairScore(
                id_a=ea.id, id_b=eb.id, alpha_deg=alpha, f_excl=f_excl,
                expected_nu_per_sqrt_minute=nu_rate, joint_minutes=joint,
                min_port_snr=snr))
    scored.sort(key=PairScore.sort_key)
    return scored


def _snr(rates: RatesModel, rmag: float) -> float:
    s = rates.port_signal_cps(rmag)
    return s / math.sqrt(s + rates.noise_cps)


def _duty(rates: RatesModel, rmag: float, tau_valid_us: float) -> float:
    r = 2.0 * (rates.port_signal_cps(rmag) + rates.noise_cps)
    return 1.0 - math.exp(-r * tau_valid_us * 1e-6)


def write_ranked_csv(path, scored: list[PairScore]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id_a", "id_b", "alpha_deg", "f_excl",
                         "expected_nu_per_sqrt_minute", "joint_minutes",
                         "min_port_snr"])
        for s in scored:
            writer.writerow([s.id_a, s.id_b, f"{s.alpha_deg:.4f}",
                             f"{s.f_excl:.6f}",
                             f"{s.expected_nu_per_sqrt_minute:.4f}",
                             s.joint_minutes, f"{s.min_port_snr:.3f}"])

"""Causal-alignment geometry: sites, pointing, and validity windows.

Everything lives in one geocentric Cartesian frame (WGS84 ECEF, meters).
A minimal mean-sidereal-time ephemeris converts catalog (RA, Dec) to local
azimuth/altitude; precession, nutation and refraction are ignored, which is
adequate at the sub-degree level and whose timing impact is absorbed by the
safety buffer.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .errors import DataError, DomainError

__all__ = [
    "SitePosition",
    "ChannelDelays",
    "ExperimentGeometry",
    "SkyTrack",
    "geodetic_to_geocentric",
    "direction_from_azalt",
    "radec_to_azalt",
    "azalt_to_radec",
    "julian_date",
    "tau_geom",
    "tau_valid",
    "TauValidResult",
    "SPEED_OF_LIGHT",
]

SPEED_OF_LIGHT = 299792458.0  # m/s

_WGS84_A = 6378137.0
_WGS84_F = 1.0 / 298.257223563
_WGS84_E2 = _WGS84_F * (2.0 - _WGS84_F)


@dataclass(frozen=True)
class SitePosition:
    """Geodetic site coordinates (degrees, degrees, meters above ellipsoid)."""

    latitude: float
    longitude: float
    elevation_m: float = 0.0

    def __post_init__(self):
        if abs(self.latitude) > 90:
            raise DomainError(f"latitude out of range: {self.latitude}")

    @property
    def geocentric(self) -> np.ndarray:
        return geodetic_to_geocentric(self)


@dataclass(frozen=True)
class ChannelDelays:
    """Per-side electronic and propagation delays.

    ``gamma`` is the effective group index of the cable/fiber run between
    the cosmic-photon receiver and the entangled-photon detector; ``n_air``
    the refractive index along the free-space quantum channel.
    """

    tau_set_ns: float
    tau_buffer_ns: float = 150.0
    gamma: float = 1.5
    n_air: float = 1.00027
    fiber_delay_ns: float = 0.0

    def __post_init__(self):
        if self.tau_set_ns < 0 or self.tau_buffer_ns < 0:
            raise DomainError("delays must be non-negative")
        if self.gamma < 1 or self.n_air < 1:
            raise DomainError("group indices must be >= 1")


@dataclass(frozen=True)
class ExperimentGeometry:
    """Station layout: cosmic-photon receivers, entangled source, detectors.

    Detector positions default to the receiver positions (co-located), which
    zeroes the cable-run term of the alignment window.
    """

    receiver_a: SitePosition
    receiver_b: SitePosition
    source: SitePosition
    detector_a: SitePosition | None = None
    detector_b: SitePosition | None = None

    def receiver(self, side: str) -> SitePosition:
        return self.receiver_a if _side(side) == "A" else self.receiver_b

    def detector(self, side: str) -> SitePosition:
        if _side(side) == "A":
            return self.detector_a or self.receiver_a
        return self.detector_b or self.receiver_b


def _side(side: str) -> str:
    s = str(side).upper()
    if s not in ("A", "B"):
        raise DataError(f"side must be 'A' or 'B', got {side!r}")
    return s


def geodetic_to_geocentric(site: SitePosition) -> np.ndarray:
    """WGS84 geodetic coordinates to geocentric Cartesian meters."""
    phi = math.radians(site.latitude)
    lam = math.radians(site.longitude)
    n = _WGS84_A / math.sqrt(1.0 - _WGS84_E2 * math.sin(phi) ** 2)
    h = site.elevation_m
    return np.array([
        (n + h) * math.cos(phi) * math.cos(lam),
        (n + h) * math.cos(phi) * math.sin(lam),
        (n * (1.0 - _WGS84_E2) + h) * math.sin(phi),
    ])


def _enu_basis(site: SitePosition):
    phi = math.radians(site.latitude)
    lam = math.radians(site.longitude)
    east = np.array([-math.sin(lam), math.cos(lam), 0.0])
    north = np.array([-math.sin(phi) * math.cos(lam),
                      -math.sin(phi) * math.sin(lam), math.cos(phi)])
    up = np.array([math.cos(phi) * math.cos(lam),
                   math.cos(phi) * math.sin(lam), math.sin(phi)])
    return east, north, up


def direction_from_azalt(az_deg: float, alt_deg: float, site: SitePosition) -> np.ndarray:
    """Unit vector in the geocentric frame toward (azimuth, altitude) at ``site``.

    Azimuth is measured clockwise from North; the local vertical is the
    geodetic (ellipsoid-normal) up direction.
    """
    east, north, up = _enu_basis(site)
    az = math.radians(az_deg)
    alt = math.radians(alt_deg)
    vec = (math.cos(alt) * (math.sin(az) * east + math.cos(az) * north)
           + math.sin(alt) * up)
    return vec / np.linalg.norm(vec)


def julian_date(utc: datetime) -> float:
    """Julian date of a UTC instant (naive datetimes are taken as UTC)."""
    if utc.tzinfo is not None:
        utc = utc.astimezone(timezone.utc).replace(tzinfo=None)
    a = (14 - utc.month) // 12
    y = utc.year + 4800 - a
    m = utc.month + 12 * a - 3
    jdn = (utc.day + (153 * m + 2) // 5 + 365 * y + y // 4 - y // 100
           + y // 400 - 32045)
    frac = ((utc.hour - 12) / 24.0 + utc.minute / 1440.0
            + (utc.second + utc.microsecond * 1e-6) / 86400.0)
    return jdn + frac


def _gmst_deg(jd: float) -> float:
    d = jd - 2451545.0
    t = d / 36525.0
    g = 280.46061837 + 360.98564736629 * d + 0.000387933 * t * t - t**3 / 38710000.0
    return g % 360.0


def radec_to_azalt(ra_deg: float, dec_deg: float, site: SitePosition,
                   utc: datetime) -> tuple[float, float]:
    """Apparent azimuth (clockwise from North) and altitude of a fixed source.

    Mean sidereal time only; accurate to a few tenths of a degree, which is
    all the integer-degree pointing tables require.
    """
    lst = (_gmst_deg(julian_date(utc)) + site.longitude) % 360.0
    ha = math.radians((lst - ra_deg) % 360.0)
    phi = math.radians(site.latitude)
    dec = math.radians(dec_deg)
    sin_alt = (math.sin(phi) * math.sin(dec)
               + math.cos(phi) * math.cos(dec) * math.cos(ha))
    alt = math.degrees(math.asin(min(1.0, max(-1.0, sin_alt))))
    az = math.degrees(math.atan2(
        -math.sin(ha) * math.cos(dec),
        math.sin(dec) * math.cos(phi) - math.cos(dec) * math.sin(phi) * math.cos(ha)))
    return az % 360.0, alt


def azalt_to_radec(az_deg: float, alt_deg: float, site: SitePosition,
                   utc: datetime) -> tuple[float, float]:
    """Inverse of :func:`radec_to_azalt` (used for round-trip checks)."""
    az = math.radians(az_deg)
    alt = math.radians(alt_deg)
    phi = math.radians(site.latitude)
    sin_dec = math.sin(alt) * math.sin(phi) + math.cos(alt) * math.cos(phi) * math.cos(az)
    dec = math.asin(min(1.0, max(-1.0, sin_dec)))
    ha = math.atan2(-math.sin(az) * math.cos(alt),
                    math.sin(alt) * math.cos(phi) - math.cos(alt) * math.sin(phi) * math.cos(az))
    lst = (_gmst_deg(julian_date(utc)) + site.longitude) % 360.0
    ra = (lst - math.degrees(ha)) % 360.0
    return ra, math.degrees(dec)


@dataclass
class SkyTrack:
    """Time-tagged pointing history of one side's cosmic-photon telescope."""

    utc: list[datetime]
    az_deg: np.ndarray
    alt_deg: np.ndarray

    def __post_init__(self):
        self.az_deg = np.asarray(self.az_deg, dtype=float)
        self.alt_deg = np.asarray(self.alt_deg, dtype=float)
        if len(self.utc) != len(self.az_deg) or len(self.utc) != len(self.alt_deg):
            raise DataError("track columns must have equal length")
        if len(self.utc) == 0:
            raise DataError("track must not be empty")
        if np.any(np.abs(self.alt_deg) > 90):
            raise DataError("altitude out of [-90, 90]")
        times = [julian_date(t) for t in self.utc]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DataError("track timestamps must be strictly increasing")

    @classmethod
    def from_radec(cls, ra_deg: float, dec_deg: float, site: SitePosition,
                   start_utc: datetime, duration_min: float,
                   cadence_s: float = 60.0) -> "SkyTrack":
        n = int(duration_min * 60.0 / cadence_s) + 1
        utc = [start_utc + timedelta(seconds=i * cadence_s) for i in range(n)]
        az, alt = zip(*(radec_to_azalt(ra_deg, dec_deg, site, t) for t in utc))
        return cls(utc=utc, az_deg=np.array(az), alt_deg=np.array(alt))

    @classmethod
    def from_csv(cls, path) -> "SkyTrack":
        utc, az, alt = [], [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                utc.append(datetime.fromisoformat(row["utc"]))
                az.append(float(row["az"]))
                alt.append(float(row["alt"]))
        return cls(utc=utc, az_deg=np.array(az), alt_deg=np.array(alt))


def tau_geom(side: str, geometry: ExperimentGeometry, n_hat: np.ndarray,
             delays: ChannelDelays) -> float:
    """Geometric causal-alignment window in microseconds for one side.

    With r the cosmic receiver on this side, m/m' the entangled-photon
    detectors on this and the other side, and s the source:

        tau = n_hat . (r - m') / c
              + n_air (|m - s| - |m' - s|) / c
              - gamma |r - m| / c

    May be negative, meaning the instantaneous pointing is out of causal
    alignment.
    """
    s = _side(side)
    other = "B" if s == "A" else "A"
    r_k = geometry.receiver(s).geocentric
    m_k = geometry.detector(s).geocentric
    m_l = geometry.detector(other).geocentric
    s_v = geometry.source.geocentric
    n_hat = np.asarray(n_hat, dtype=float)
    tau = (float(n_hat @ (r_k - m_l)) / SPEED_OF_LIGHT
           + delays.n_air / SPEED_OF_LIGHT
           * (np.linalg.norm(m_k - s_v) - np.linalg.norm(m_l - s_v))
           - delays.gamma / SPEED_OF_LIGHT * np.linalg.norm(r_k - m_k))
    return tau * 1e6


@dataclass(frozen=True)
class TauValidResult:
    tau_valid_us: float
    tau_geom_min_us: float
    tau_geom_us: np.ndarray = field(repr=False)
    out_of_alignment: bool = False

    def as_dict(self) -> dict:
        return {"tau_valid_us": self.tau_valid_us,
                "tau_geom_min_us": self.tau_geom_min_us,
                "out_of_alignment": self.out_of_alignment}


def tau_valid(track: SkyTrack, side: str, geometry: ExperimentGeometry,
              delays: ChannelDelays) -> TauValidResult:
    """Setting-validity window: min over the track of tau_geom, minus delays.

    A non-positive result is returned as-is with ``out_of_alignment`` set;
    settings on that side cannot be used.
    """
    site = geometry.receiver(side)
    taus = np.array([
        tau_geom(side, geometry, direction_from_azalt(az, alt, site), delays)
        for az, alt in zip(track.az_deg, track.alt_deg)
    ])
    tau_min = float(taus.min())
    valid = tau_min - (delays.tau_set_ns + delays.tau_buffer_ns) * 1e-3
    return TauValidResult(tau_valid_us=valid, tau_geom_min_us=tau_min,
                          tau_geom_us=taus, out_of_alignment=valid <= 0)

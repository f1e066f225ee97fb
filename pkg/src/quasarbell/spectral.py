"""Color-port rate model for the cosmic random number generators.

A source spectrum is pushed through atmospheric extinction, the dichroic
filter stack, the shared optics and the detector quantum efficiency to
predict the red/blue port rates, the wrong-way (misdirected photon)
fractions, and per-port signal-to-noise against a skyglow spectrum.  All
curves are resampled to a common half-nanometer grid; the sharpest real
features (dichroic edges) are several nanometers wide.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, DomainError

__all__ = [
    "SpectrumTable", "FilterChain", "BandRates", "RankedFilterSet",
    "apply_extinction", "band_rates", "rank_filter_sets", "port_snr",
    "GRID_STEP_NM",
]

GRID_STEP_NM = 0.5


@dataclass
class SpectrumTable:
    """Sampled per-wavelength values: flux density (counts/s/nm) or a
    dimensionless transmission curve."""

    wavelength_nm: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        self.wavelength_nm = np.asarray(self.wavelength_nm, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        if self.wavelength_nm.shape != self.value.shape or self.wavelength_nm.ndim != 1:
            raise DataError("spectrum columns must be 1-d and aligned")
        if self.wavelength_nm.size < 2:
            raise DataError("spectrum needs at least two samples")
        if np.any(np.diff(self.wavelength_nm) <= 0):
            raise DataError("wavelengths must be strictly increasing")
        if np.any(self.value < 0):
            raise DataError("spectral values must be non-negative")

    @classmethod
    def from_csv(cls, path) -> "SpectrumTable":
        wl, val = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    wl.append(float(row[0]))
                    val.append(float(row[1]))
                except (ValueError, IndexError):
                    continue  # header line
        return cls(np.array(wl), np.array(val))

    def resampled(self, grid: np.ndarray, fill: float = 0.0) -> np.ndarray:
        return np.interp(grid, self.wavelength_nm, self.value,
                         left=fill, right=fill)

    def span(self) -> tuple[float, float]:
        return float(self.wavelength_nm[0]), float(self.wavelength_nm[-1])


@dataclass
class FilterChain:
    """The dichroic selection stack and the shared optical path.

    The beamsplitter curve is the red-arm (transmitted) fraction; the blue
    arm reflects ``1 - bs``.  SP/LP cleanup filters remove photons near the
    split wavelength; ``common`` collects mirrors, lens coatings and the
    detector quantum efficiency as one multiplicative curve.
    """

    bs: SpectrumTable
    sp1: SpectrumTable       # blue-arm shortpass
    lp1: SpectrumTable       # red-arm longpass
    sp2: SpectrumTable       # red-arm infrared cutoff
    common: SpectrumTable
    band_split_nm: float = 630.0
    name: str = ""

    def curves(self) -> dict:
        return {"bs": self.bs, "sp1": self.sp1, "lp1": self.lp1,
                "sp2": self.sp2, "common": self.common}


def _common_grid(*tables: SpectrumTable) -> np.ndarray:
    lo = min(t.span()[0] for t in tables)
    hi = max(t.span()[1] for t in tables)
    return np.arange(lo, hi + GRID_STEP_NM / 2, GRID_STEP_NM)


def apply_extinction(spectrum: SpectrumTable, airmass: float,
                     extinction: SpectrumTable) -> SpectrumTable:
    """Attenuate by the atmosphere: flux * 10^(-0.4 k(lambda) X).

    ``extinction`` holds k in magnitudes per airmass; it is interpolated
    onto the spectrum's own grid (edge-extended).
    """
    if airmass < 0:
        raise DomainError("airmass must be non-negative")
    k = np.interp(spectrum.wavelength_nm, extinction.wavelength_nm,
                  extinction.value,
                  left=extinction.value[0], right=extinction.value[-1])
    return replace(spectrum, value=spectrum.value * 10.0 ** (-0.4 * k * airmass))


@dataclass(frozen=True)
class BandRates:
    red_cps: float
    blue_cps: float
    f_blue_to_red: float     # other-band contamination fraction of the red port
    f_red_to_blue: float

    def as_dict(self) -> dict:
        return {"red_cps": self.red_cps, "blue_cps": self.blue_cps,
                "f_blue_to_red": self.f_blue_to_red,
                "f_red_to_blue": self.f_red_to_blue}


def band_rates(spectrum: SpectrumTable, chain: FilterChain) -> BandRates:
    """Port rates and wrong-way fractions for a spectrum through the stack.

    Red-port transmission is bs * lp1 * sp2 * common, blue-port is
    (1 - bs) * sp1 * common.  A photon is 'red' when its wavelength exceeds
    the nominal split; the wrong-way fraction of a port is the other band's
    share of that port's total rate.
    """
    grid = _common_grid(spectrum, *chain.curves().values())
    lo, hi = spectrum.span()
    for name, curve in chain.curves().items():
        clo, chi_ = curve.span()
        if clo > lo or chi_ < hi:
            raise DataError(f"filter curve {name!r} does not cover the spectrum "
                            f"support [{lo}, {hi}] nm")
    flux = spectrum.resampled(grid)
    bs = np.clip(chain.bs.resampled(grid), 0.0, 1.0)
    common = np.clip(chain.common.resampled(grid), 0.0, 1.0)
    t_red = bs * np.clip(chain.lp1.resampled(grid), 0, 1) \
        * np.clip(chain.sp2.resampled(grid), 0, 1) * common
    t_blue = (1.0 - bs) * np.clip(chain.sp1.resampled(grid), 0, 1) * common
    is_red = grid >= chain.band_split_nm
    step = GRID_STEP_NM
    red_total = float((flux * t_red).sum() * step)
    blue_total = float((flux * t_blue).sum() * step)
    red_wrong = float((flux * t_red)[~is_red].sum() * step)
    blue_wrong = float((flux * t_blue)[is_red].sum() * step)
    return BandRates(
        red_cps=red_total, blue_cps=blue_total,
        f_blue_to_red=red_wrong / red_total if red_total > 0 else 0.0,
        f_red_to_blue=blue_wrong / blue_total if blue_total > 0 else 0.0,
    )


def port_snr(signal_cps: float, noise_cps: float) -> float:
    """Poisson counting signal-to-noise: s / sqrt(s + n)."""
    if signal_cps < 0 or noise_cps < 0:
        raise DomainError("rates must be non-negative")
    total = signal_cps + noise_cps
    return signal_cps / math.sqrt(total) if total > 0 else 0.0


@dataclass(frozen=True)
class RankedFilterSet:
    chain: FilterChain
    min_snr: float
    per_source: dict


def rank_filter_sets(candidates: list[FilterChain],
                     spectra: list[SpectrumTable],
                     skyglow: SpectrumTable) -> list[RankedFilterSet]:
    """Rank candidate stacks by their worst port signal-to-noise.

    For every (source spectrum, port) the SNR uses the source's port rate
    as signal and the skyglow's rate through the same port as noise; each
    candidate is scored by the minimum over that set and the list is
    returned in stable descending order.
    """
    if not candidates:
        raise DataError("no candidate filter sets")
    ranked = []
    for chain in candidates:
        noise = band_rates(skyglow, chain)
        per_source = {}
        worst = math.inf
        for idx, spec in enumerate(spectra):
            r = band_rates(spec, chain)
            snr_red = port_snr(r.red_cps, noise.red_cps)
            snr_blue = port_snr(r.blue_cps, noise.blue_cps)
            per_source[idx] = {"red": snr_red, "blue": snr_blue}
            worst = min(worst, snr_red, snr_blue)
        ranked.append(RankedFilterSet(chain=chain, min_snr=worst,
                                      per_source=per_source))
    return sorted(ranked, key=lambda r: -r.min_snr)

"""Excess predictability of the setting choices.

A setting is "corrupt" when it was produced by a local noise photon (sky
glow, dark counts) or by a cosmic photon the dichroic sent to the wrong
port.  The corrupt fraction per port follows from the measured signal and
noise rates; uncertainties come from Poisson fluctuation of the noise
counts over the noise-measurement duration.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DomainError

__all__ = [
    "PortRates", "SideRates", "RateMeasurement", "PredictabilityTable",
    "excess_predictability", "excess_predictability_timeresolved",
    "joint_predictability", "visibility_constraint", "load_rates_csv",
]


@dataclass(frozen=True)
class PortRates:
    """Measured rates for one CRNG output port (counts per second).

    ``wrongway_in`` is the fraction of the *other* band's photons this port
    captures; ``wrongway_out`` the fraction of this band's photons lost to
    the other port.
    """

    signal_cps: float
    noise_cps: float
    noise_duration_s: float = 300.0
    wrongway_in: float = 0.0
    wrongway_out: float = 0.0

    def __post_init__(self):
        if self.signal_cps < 0 or self.noise_cps < 0:
            raise DomainError("rates must be non-negative")
        if not 0 <= self.wrongway_in <= 1 or not 0 <= self.wrongway_out <= 1:
            raise DomainError("wrong-way fractions must be in [0, 1]")
        if self.noise_duration_s <= 0:
            raise DomainError("noise measurement duration must be positive")


@dataclass(frozen=True)
class SideRates:
    red: PortRates   # setting 1
    blue: PortRates  # setting 2

    @property
    def ports(self) -> tuple[PortRates, PortRates]:
        return (self.red, self.blue)


@dataclass(frozen=True)
class RateMeasurement:
    a: SideRates
    b: SideRates


def _port_rate(port: PortRates, other: PortRates) -> float:
    """Total detection rate at a port: surviving own-band signal, leakage
    from the other band, and noise."""
    return ((1.0 - port.wrongway_out) * port.signal_cps
            + port.wrongway_in * other.signal_cps + port.noise_cps)


def _port_eps(port: PortRates, other: PortRates) -> tuple[float, float]:
    """Corrupt fraction and its sigma for one port.

    eps = (noise + leaked other-band signal) / total rate; the uncertainty
    keeps only the Poisson noise-rate term (wrong-way contributions are
    O(f_w) and negligible at the measured f_w < 2e-5).
    """
    r = _port_rate(port, other)
    if r <= 0:
        raise DataError("zero total rate at a port; predictability undefined")
    eps = (port.noise_cps + port.wrongway_in * other.signal_cps) / r
    sigma_n = math.sqrt(port.noise_cps / port.noise_duration_s)
    return eps, sigma_n / r


@dataclass
class PredictabilityTable:
    """Per-port and joint corrupt fractions with uncertainties."""

    eps_a: np.ndarray         # shape (2,)
    eps_b: np.ndarray
    sigma_a: np.ndarray
    sigma_b: np.ndarray
    eps_ij: np.ndarray = field(default=None)        # shape (2, 2)
    sigma_ij: np.ndarray = field(default=None)
    eps_max: float = field(default=None)
    sigma_eps_max: float = field(default=None)
    average_based: bool = False

    def __post_init__(self):
        self.eps_a = np.asarray(self.eps_a, dtype=float)
        self.eps_b = np.asarray(self.eps_b, dtype=float)
        self.sigma_a = np.asarray(self.sigma_a, dtype=float)
        self.sigma_b = np.asarray(self.sigma_b, dtype=float)
        for arr in (self.eps_a, self.eps_b):
            if arr.shape != (2,):
                raise DataError("per-side epsilon must have two ports")
            if np.any(arr < 0) or np.any(arr > 1):
                raise DataError("epsilon must lie in [0, 1]")
        if self.eps_ij is None:
            joint_predictability(self)
        else:
            self.eps_ij = np.asarray(self.eps_ij, dtype=float)
            if self.sigma_ij is None or self.eps_max is None:
                self._fill_joint_sigmas()

    def _fill_joint_sigmas(self):
        self.sigma_ij = np.sqrt(self.sigma_a[:, None] ** 2 + self.sigma_b[None, :] ** 2)
        i, j = int(self.eps_a.argmax()), int(self.eps_b.argmax())
        self.eps_max = min(1.0, float(self.eps_a[i] + self.eps_b[j]))
        self.sigma_eps_max = float(math.hypot(self.sigma_a[i], self.sigma_b[j]))

    @classmethod
    def from_overrides(cls, eps_a, eps_b, sigma_a=None, sigma_b=None,
                       eps_ij=None) -> "PredictabilityTable":
        """Table from externally supplied values (e.g. published analyses).

        ``eps_ij`` may be given explicitly; otherwise it is the clipped sum
        of the per-port entries.
        """
        zero = np.zeros(2)
        return cls(eps_a=np.asarray(eps_a, float), eps_b=np.asarray(eps_b, float),
                   sigma_a=zero if sigma_a is None else np.asarray(sigma_a, float),
                   sigma_b=zero if sigma_b is None else np.asarray(sigma_b, float),
                   eps_ij=None if eps_ij is None else np.asarray(eps_ij, float))

    def as_dict(self) -> dict:
        return {"eps_a": self.eps_a.tolist(), "eps_b": self.eps_b.tolist(),
                "sigma_a": self.sigma_a.tolist(), "sigma_b": self.sigma_b.tolist(),
                "eps_ij": self.eps_ij.tolist(), "sigma_ij": self.sigma_ij.tolist(),
                "eps_max": self.eps_max, "sigma_eps_max": self.sigma_eps_max,
                "average_based": self.average_based}


def excess_predictability(rates: RateMeasurement) -> PredictabilityTable:
    """Corrupt setting fractions from measured rates.

    Computed from the supplied (typically run-averaged) rates; when only
    averages are available the result is flagged ``average_based`` since a
    conservative analysis would use the per-port maxima over the run.
    """
    ea, sa = zip(*(_port_eps(p, o) for p, o in
                   [(rates.a.red, rates.a.blue), (rates.a.blue, rates.a.red)]))
    eb, sb = zip(*(_port_eps(p, o) for p, o in
                   [(rates.b.red, rates.b.blue), (rates.b.blue, rates.b.red)]))
    return PredictabilityTable(eps_a=np.array(ea), eps_b=np.array(eb),
                               sigma_a=np.array(sa), sigma_b=np.array(sb),
                               average_based=True)


def excess_predictability_timeresolved(
        slices: list[RateMeasurement]) -> PredictabilityTable:
    """Conservative run-level table from time-resolved rate measurements.

    Each port keeps the largest corrupt fraction it showed in any slice
    (with that slice's uncertainty), so a transient noise excess anywhere
    in the run bounds the whole run.
    """
    if not slices:
        raise DataError("need at least one rate slice")
    tables = [excess_predictability(s) for s in slices]
    eps_a = np.stack([t.eps_a for t in tables])
    eps_b = np.stack([t.eps_b for t in tables])
    sig_a = np.stack([t.sigma_a for t in tables])
    sig_b = np.stack([t.sigma_b for t in tables])
    ia = eps_a.argmax(axis=0)
    ib = eps_b.argmax(axis=0)
    cols = np.arange(2)
    return PredictabilityTable(
        eps_a=eps_a[ia, cols], eps_b=eps_b[ib, cols],
        sigma_a=sig_a[ia, cols], sigma_b=sig_b[ib, cols],
        average_based=False)


def joint_predictability(table: PredictabilityTable) -> PredictabilityTable:
    """Fill the joint entries: eps_ij = eps_a_i + eps_b_j clipped at 1,
    eps_max = max_i eps_a_i + max_j eps_b_j (clipped), sigmas in quadrature."""
    table.eps_ij = np.minimum(1.0, table.eps_a[:, None] + table.eps_b[None, :])
    table._fill_joint_sigmas()
    return table


def visibility_constraint(visibility: float) -> float:
    """Largest excess predictability still compatible with a violation.

    threshold = V sqrt(2) - 1; a non-positive value means no violation is
    possible at that visibility regardless of predictability.
    """
    if not 0 <= visibility <= 1:
        raise DomainError("visibility must be in [0, 1]")
    return visibility * math.sqrt(2.0) - 1.0


def load_rates_csv(path) -> RateMeasurement:
    """CSV columns: side, port, signal_cps, noise_cps, noise_duration_s,
    f_wrongway (the port's incoming leakage fraction)."""
    ports: dict[tuple[str, str], PortRates] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            side = row["side"].strip().lower()
            port = row["port"].strip().lower()
            if side not in ("a", "b") or port not in ("red", "blue"):
                raise DataError(f"bad side/port {side!r}/{port!r}")
            ports[(side, port)] = PortRates(
                signal_cps=float(row["signal_cps"]),
                noise_cps=float(row["noise_cps"]),
                noise_duration_s=float(row.get("noise_duration_s") or 300.0),
                wrongway_in=float(row.get("f_wrongway") or 0.0),
            )
    missing = {("a", "red"), ("a", "blue"), ("b", "red"), ("b", "blue")} - set(ports)
    if missing:
        raise DataError(f"rates file incomplete, missing {sorted(missing)}")
    return RateMeasurement(
        a=SideRates(red=ports[("a", "red")], blue=ports[("a", "blue")]),
        b=SideRates(red=ports[("b", "red")], blue=ports[("b", "blue")]),
    )

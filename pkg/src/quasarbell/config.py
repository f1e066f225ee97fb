"""Shared JSON run configuration.

One file drives every subcommand: cosmology parameters, station layout,
per-side delays, the observed quasar pairs, analysis inputs (count tables
and predictability overrides) and simulator settings.  A bundled default
describes the two-pair La Palma session the reference tables refer to.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from importlib import resources
from pathlib import Path

from .cosmo import CosmologyParams
from .errors import DataError
from .geom import ChannelDelays, ExperimentGeometry, SitePosition
from .predict import PredictabilityTable

__all__ = ["QuasarSpec", "PairSpec", "RunConfig", "default_config_path"]

CONFIG_SCHEMA_VERSION = 1


def default_config_path():
    return resources.files("quasarbell.data") / "default_config.json"


@dataclass(frozen=True)
class QuasarSpec:
    id: str
    ra_deg: float
    dec_deg: float
    z: float


@dataclass(frozen=True)
class PairSpec:
    id: str
    utc_start: datetime
    duration_min: float
    side_a: QuasarSpec
    side_b: QuasarSpec
    alpha_deg: float | None = None  # computed from coordinates when absent


@dataclass
class RunConfig:
    cosmology: CosmologyParams
    geometry: ExperimentGeometry
    delays_a: ChannelDelays
    delays_b: ChannelDelays
    pairs: dict[str, PairSpec]
    eps_overrides: dict[str, PredictabilityTable]
    simulator: dict
    raw: dict = field(repr=False, default_factory=dict)

    def delays(self, side: str) -> ChannelDelays:
        side = side.upper()
        if side == "A":
            return self.delays_a
        if side == "B":
            return self.delays_b
        raise DataError(f"side must be A or B, got {side!r}")

    def pair(self, pair_id: str) -> PairSpec:
        try:
            return self.pairs[pair_id]
        except KeyError:
            raise DataError(f"unknown pair {pair_id!r}; have {sorted(self.pairs)}") from None

    @classmethod
    def load(cls, path=None) -> "RunConfig":
        path = default_config_path() if path is None else Path(path)
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        version = raw.get("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise DataError(f"unsupported config schema version {version}")
        cosmology = CosmologyParams.from_dict(raw.get("cosmology", {}))

        sites = raw.get("sites", {})

        def site(key: str) -> SitePosition:
            try:
                s = sites[key]
                return SitePosition(latitude=float(s["latitude"]),
                                    longitude=float(s["longitude"]),
                                    elevation_m=float(s.get("elevation_m", 0.0)))
            except KeyError as exc:
                raise DataError(f"sites.{key} missing field {exc}") from None

        geometry = ExperimentGeometry(receiver_a=site("receiver_a"),
                                      receiver_b=site("receiver_b"),
                                      source=site("source"))

        def delays(key: str) -> ChannelDelays:
            d = raw.get("delays", {}).get(key, {})
            if "tau_set_ns" not in d:
                raise DataError(f"delays.{key}.tau_set_ns is required")
            return ChannelDelays(
                tau_set_ns=float(d["tau_set_ns"]),
                tau_buffer_ns=float(d.get("tau_buffer_ns", 150.0)),
                gamma=float(d.get("gamma", 1.5)),
                n_air=float(d.get("n_air", 1.00027)),
                fiber_delay_ns=float(d.get("fiber_delay_ns", 0.0)))

        pairs = {}
        for p in raw.get("pairs", []):
            def quasar(side: dict) -> QuasarSpec:
                return QuasarSpec(id=str(side["id"]), ra_deg=float(side["ra"]),
                                  dec_deg=float(side["dec"]), z=float(side["z"]))
            try:
                spec = PairSpec(
                    id=str(p["id"]),
                    utc_start=datetime.fromisoformat(p["utc_start"]),
                    duration_min=float(p["duration_min"]),
                    side_a=quasar(p["side_a"]), side_b=quasar(p["side_b"]),
                    alpha_deg=float(p["alpha_deg"]) if "alpha_deg" in p else None)
            except KeyError as exc:
                raise DataError(f"pair entry missing field {exc}") from None
            pairs[spec.id] = spec

        overrides = {}
        for name, o in raw.get("analysis", {}).get("eps_overrides", {}).items():
            overrides[name] = PredictabilityTable.from_overrides(
                eps_a=o["eps_a"], eps_b=o["eps_b"],
                sigma_a=o.get("sigma_a"), sigma_b=o.get("sigma_b"),
                eps_ij=o.get("eps_ij"))

        return cls(cosmology=cosmology, geometry=geometry,
                   delays_a=delays("a"), delays_b=delays("b"),
                   pairs=pairs, eps_overrides=overrides,
                   simulator=raw.get("simulator", {}), raw=raw)

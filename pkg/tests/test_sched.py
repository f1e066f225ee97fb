"""Catalog filtering, observability windows, and pair ranking."""

import csv
from datetime import datetime

import numpy as np
import pytest

from quasarbell.cosmo import CosmologyParams, excluded_fraction
from quasarbell.errors import DataError
from quasarbell.geom import ChannelDelays, ExperimentGeometry, SitePosition
from quasarbell.sched import (
    CatalogEntry,
    PairScore,
    RatesModel,
    filter_catalog,
    load_catalog_csv,
    observability,
    score_pairs,
    write_ranked_csv,
)
from conftest import QSO_COORDS

RECEIVER_A = SitePosition(28.75410, -17.88915, 2375.0)
RECEIVER_B = SitePosition(28.760636, -17.8816861, 2352.0)
SOURCE = SitePosition(28.757189, -17.884961, 2385.0)
GEOMETRY = ExperimentGeometry(receiver_a=RECEIVER_A, receiver_b=RECEIVER_B,
                              source=SOURCE)
DELAYS_A = ChannelDelays(tau_set_ns=325.0)
DELAYS_B = ChannelDelays(tau_set_ns=430.0)


def _entry(i, ra, dec, z, mag):
    return CatalogEntry(id=f"q{i:05d}", ra_deg=ra, dec_deg=dec, z=z, rmag=mag)


class TestFilterCatalog:
    def test_empty(self):
        assert filter_catalog([]) == []

    def test_magnitude_limit(self):
        entries = [_entry(0, 10.0, 10.0, 1.0, 18.0),
                   _entry(1, 10.0, 10.0, 1.0, 19.5)]
        kept = filter_catalog(entries, mag_limit=19.0)
        assert [e.id for e in kept] == ["q00000"]

    def test_same_distance_keeps_brighter(self):
        entries = [_entry(0, 10.0, 10.0, 1.0, 18.5),
                   _entry(1, 10.2, 10.2, 1.0, 17.5)]
        kept = filter_catalog(entries)
        assert [e.id for e in kept] == ["q00001"]

    def test_pareto_front_within_patch(self):
        # deeper but fainter entries survive alongside brighter nearby ones
        entries = [_entry(0, 10.0, 10.0, 0.5, 16.0),
                   _entry(1, 10.3, 10.1, 2.0, 17.5),
                   _entry(2, 10.6, 10.2, 1.0, 18.0)]  # dominated by q00001
        kept = {e.id for e in filter_catalog(entries)}
        assert kept == {"q00000", "q00001"}

    def test_synthetic_catalog_survivor_count(self):
        # a full-sky magnitude-limited catalog thins to a few thousand
        rng = np.random.default_rng(77)
        n = 62_000
        entries = [
            _entry(i, rng.uniform(0, 360), np.degrees(np.arcsin(rng.uniform(-1, 1))),
                   rng.uniform(0.05, 5.0), 19.0 - rng.exponential(1.2))
            for i in range(n)
        ]
        kept = filter_catalog(entries, mag_limit=19.0, patch_deg=5.0)
        assert 1000 <= len(kept) <= 16_000  # order of magnitude ~4000

    def test_deterministic(self):
        rng = np.random.default_rng(78)
        entries = [_entry(i, rng.uniform(0, 360), rng.uniform(-60, 60),
                          rng.uniform(0.1, 4.0), rng.uniform(15, 19))
                   for i in range(500)]
        assert filter_catalog(entries) == filter_catalog(list(entries))


class TestObservability:
    START = datetime(2018, 1, 11, 0, 0)

    def test_circumpolar_full_window(self):
        entry = _entry(0, 120.0, 88.0, 1.0, 17.0)
        assert observability(entry, RECEIVER_B, self.START, 90) == 90

    def test_never_rises(self):
        entry = _entry(0, 120.0, -70.0, 1.0, 17.0)
        assert observability(entry, RECEIVER_B, self.START, 90) == 0

    def test_reference_source_rises_through_window(self):
        ra, dec, _ = QSO_COORDS["QSO J0831+5245"]
        entry = _entry(0, ra, dec, 3.911, 17.0)
        # above the floor the whole 00:00-01:30 stretch, rising 57 -> 64 deg
        assert observability(entry, RECEIVER_B, self.START, 90) == 90
        from quasarbell.geom import radec_to_azalt
        _, alt_0020 = radec_to_azalt(ra, dec, RECEIVER_B,
                                     datetime(2018, 1, 11, 0, 20))
        _, alt_0121 = radec_to_azalt(ra, dec, RECEIVER_B,
                                     datetime(2018, 1, 11, 1, 21))
        assert alt_0020 == pytest.approx(57.0, abs=1.0)
        assert alt_0121 == pytest.approx(64.0, abs=1.0)
        assert alt_0121 > alt_0020


class TestScorePairs:
    START = datetime(2018, 1, 11, 0, 20)

    def _catalog(self):
        entries = []
        for i, (name, (ra, dec, z)) in enumerate(QSO_COORDS.items()):
            entries.append(_entry(i, ra, dec, z, 17.0))
        return entries

    def test_reference_pair_feasible_and_ranked_by_exclusion(self):
        scored = score_pairs(self._catalog(), GEOMETRY, DELAYS_A, DELAYS_B,
                             self.START, 17)
        assert scored, "reference sources should be schedulable"
        top = scored[0]
        # the deepest pair (z 0.964 with z 3.911 at alpha ~84 deg) has the
        # largest excluded fraction of all three combinations
        assert {top.id_a, top.id_b} == {"q00000", "q00001"}
        assert top.f_excl == pytest.approx(0.960, abs=0.002)

    def test_f_excl_matches_cosmology_exactly(self):
        entries = self._catalog()
        scored = score_pairs(entries, GEOMETRY, DELAYS_A, DELAYS_B,
                             self.START, 17)
        by_id = {e.id: e for e in entries}
        for s in scored:
            ea, eb = by_id[s.id_a], by_id[s.id_b]
            from quasarbell.cosmo import angular_separation
            alpha = angular_separation(ea.ra_deg, ea.dec_deg,
                                       eb.ra_deg, eb.dec_deg)
            expect = excluded_fraction(ea.z, eb.z, alpha).f_excl
            assert s.f_excl == expect

    def test_same_line_of_sight_rejected(self):
        entries = self._catalog()
        dup = CatalogEntry(id="q99999", ra_deg=entries[0].ra_deg,
                           dec_deg=entries[0].dec_deg, z=2.0, rmag=16.0)
        scored = score_pairs(entries + [dup], GEOMETRY, DELAYS_A, DELAYS_B,
                             self.START, 17)
        assert not any({s.id_a, s.id_b} == {"q00000", "q99999"} for s in scored)

    def test_faint_sources_fail_snr_screen(self):
        entries = [
            _entry(0, *QSO_COORDS["QSO B0350-073"][:2], 0.964, 25.0),
            _entry(1, *QSO_COORDS["QSO J0831+5245"][:2], 3.911, 25.0),
        ]
        scored = score_pairs(entries, GEOMETRY, DELAYS_A, DELAYS_B,
                             self.START, 17)
        assert scored == []

    def test_deterministic_ranking(self):
        scored1 = score_pairs(self._catalog(), GEOMETRY, DELAYS_A, DELAYS_B,
                              self.START, 17)
        scored2 = score_pairs(self._catalog(), GEOMETRY, DELAYS_A, DELAYS_B,
                              self.START, 17)
        assert scored1 == scored2

    def test_tie_break_by_joint_minutes(self):
        a = PairScore(id_a="x", id_b="y", alpha_deg=50.0, f_excl=0.9,
                      expected_nu_per_sqrt_minute=1.0, joint_minutes=3,
                      min_port_snr=5.0)
        b = PairScore(id_a="u", id_b="v", alpha_deg=50.0, f_excl=0.9,
                      expected_nu_per_sqrt_minute=1.0, joint_minutes=17,
                      min_port_snr=5.0)
        assert sorted([a, b], key=PairScore.sort_key)[0] is b

    def test_requires_two_entries(self):
        with pytest.raises(DataError):
            score_pairs(self._catalog()[:1], GEOMETRY, DELAYS_A, DELAYS_B,
                        self.START, 17)


class TestIO:
    def test_catalog_round_trip(self, tmp_path):
        path = tmp_path / "cat.csv"
        path.write_text("id,ra,dec,z,rmag\nq1,10.5,-3.25,1.5,17.2\n")
        entries = load_catalog_csv(path)
        assert entries[0] == CatalogEntry("q1", 10.5, -3.25, 1.5, 17.2)

    def test_ranked_csv(self, tmp_path):
        path = tmp_path / "ranked.csv"
        write_ranked_csv(path, [PairScore("a", "b", 80.0, 0.9, 1.0, 10, 4.0)])
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["id_a"] == "a"
        assert float(rows[0]["f_excl"]) == 0.9

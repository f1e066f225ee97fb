"""Timestamp-stream pipeline: drift correction, coincidences, setting gating.

All timestamps are int64 picoseconds on a common session epoch.  The
pipeline is deterministic: identical inputs produce bit-identical outputs
regardless of the kernel backend.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, InternalError, NoLockError
from . import _backend

__all__ = [
    "DriftModel", "SettingIntervals", "TrialRecords", "DutyReport",
    "estimate_clock_drift", "find_coincidences", "build_setting_intervals",
    "gate_and_label", "coincidence_half_window_ps", "split_at_gaps",
]

PS_PER_NS = 1_000
PS_PER_US = 1_000_000
PS_PER_S = 1_000_000_000_000

# Coarse/fine histogram controls for the drift estimator.
_COARSE_BIN_PS = 1 * PS_PER_US
_FINE_BIN_PS = 50
_PEAK_SIGNIFICANCE = 5.0


def coincidence_half_window_ps(window_ns: float = 2.66,
                               width_mode: str = "full") -> int:
    """Half-acceptance |tA - tB| threshold in ps for a quoted window.

    ``width_mode="full"`` reads the quoted window as the full width of the
    acceptance interval (|dt| <= window/2), the common time-tagger
    convention and the default; ``"half"`` reads it as |dt| <= window.
    """
    if width_mode == "full":
        return int(round(window_ns * PS_PER_NS / 2))
    if width_mode == "half":
        return int(round(window_ns * PS_PER_NS))
    raise DataError(f"width_mode must be 'full' or 'half', got {width_mode!r}")


@dataclass
class DriftModel:
    """Piecewise-linear clock correction for side B: t -> t + offset(t).

    Offsets are anchored at block centers and linearly interpolated between
    them (constant extrapolation outside), so the correction is continuous.
    """

    block_centers_ps: np.ndarray
    offsets_ps: np.ndarray
    block_length_s: float = 10.0

    def __post_init__(self):
        self.block_centers_ps = np.asarray(self.block_centers_ps, dtype=np.int64)
        self.offsets_ps = np.asarray(self.offsets_ps, dtype=np.float64)
        if self.block_centers_ps.size != self.offsets_ps.size or self.offsets_ps.size == 0:
            raise DataError("drift model needs matching, non-empty anchors")
        if self.block_centers_ps.size > 1:
            slopes = np.abs(np.diff(self.offsets_ps) / np.diff(self.block_centers_ps))
            if np.any(slopes >= 1e-4):
                raise DataError(f"implied drift rate {slopes.max():.2e} exceeds 1e-4")

    @classmethod
    def zero(cls) -> "DriftModel":
        return cls(np.array([0], dtype=np.int64), np.array([0.0]))

    def apply(self, t_ps: np.ndarray) -> np.ndarray:
        """Corrected timestamps, rounded back to integer picoseconds.

        Interpolation is linear between anchors and extends the edge
        segments linearly, so a steady drift stays corrected past the first
        and last block centers.
        """
        t = np.asarray(t_ps, dtype=np.int64)
        x = t.astype(np.float64)
        c = self.block_centers_ps.astype(np.float64)
        off = np.interp(x, c, self.offsets_ps)
        if c.size > 1:
            lo = x < c[0]
            if lo.any():
                slope = (self.offsets_ps[1] - self.offsets_ps[0]) / (c[1] - c[0])
                off[lo] = self.offsets_ps[0] + slope * (x[lo] - c[0])
            hi = x > c[-1]
            if hi.any():
                slope = (self.offsets_ps[-1] - self.offsets_ps[-2]) / (c[-1] - c[-2])
                off[hi] = self.offsets_ps[-1] + slope * (x[hi] - c[-1])
        return t + np.rint(off).astype(np.int64)

    def negated(self) -> "DriftModel":
        return DriftModel(self.block_centers_ps.copy(), -self.offsets_ps,
                          self.block_length_s)


def _peak_offset(a: np.ndarray, b: np.ndarray, center: int, half_span: int,
                 bin_ps: int):
    """Coincidence-peak location in a +-half_span scan around ``center``.

    Returns (offset_ps, width_ps, ok): the background-subtracted centroid
    of the contiguous above-half-height region around the maximum, that
    region's width, and whether the peak stood out of the accidental
    background at all.
    """
    hist = _backend.delta_histogram(a, b, center, half_span, bin_ps)
    n = hist.sum()
    if n == 0:
        return 0.0, 0, False
    background = float(np.median(hist))
    peak = int(hist.argmax())
    height = float(hist[peak]) - background
    noise = max(np.sqrt(max(background, 1.0)), 1.0)
    if height < _PEAK_SIGNIFICANCE * noise:
        return 0.0, 0, False
    thresh = background + 0.5 * height
    lo = peak
    while lo > 0 and hist[lo - 1] > thresh:
        lo -= 1
    hi = peak
    while hi < hist.size - 1 and hist[hi + 1] > thresh:
        hi += 1
    sel = np.arange(lo, hi + 1)
    weights = np.maximum(hist[sel].astype(float) - background, 0.0)
    centers = (center - half_span) + (sel + 0.5) * bin_ps
    offset = float(np.average(centers, weights=weights))
    return offset, (hi - lo + 1) * bin_ps, True


def _block_peak(blk_a: np.ndarray, blk_b: np.ndarray, guess: int,
                scan_ps: int, bin_ps: int):
    """Peak position refined through a multi-resolution ladder.

    After the initial scan the binning descends while the measured peak
    width supports it (target resolution ~1/8 of the current width, at
    most a factor 20 per step, floored at the fine bin), re-centering the
    span each time.  Smeared peaks therefore stop at the scale they
    genuinely occupy instead of dissolving into fine-bin background noise.
    """
    est, width, ok = _peak_offset(blk_a, blk_b, guess, scan_ps, bin_ps)
    if not ok:
        return None
    while bin_ps > _FINE_BIN_PS:
        target = max(_FINE_BIN_PS, int(width) // 8)
        if target >= bin_ps:
            break
        new_bin = max(target, bin_ps // 20)
        span = max(4 * int(width), 100 * new_bin)
        est2, width2, ok2 = _peak_offset(blk_a, blk_b, int(round(est)),
                                         span, new_bin)
        if not ok2:
            break
        est, width, bin_ps = est2, width2, new_bin
    return est


def _block_offsets(a: np.ndarray, b: np.ndarray, t0: int, t1: int,
                   block_ps: int, scan_ps: int, bin_ps: int,
                   sequential: bool = False) -> tuple[list, list]:
    """Per-block refined peak offsets of (b - a).

    With ``sequential`` the scan recenters on the last found peak, letting
    the tracker follow a drift that walks far beyond one scan span over the
    session.
    """
    n_blocks = max(1, int(np.ceil((t1 - t0) / block_ps)))
    centers, offsets = [], []
    last = 0.0
    for k in range(n_blocks):
        lo = t0 + k * block_ps
        hi = min(lo + block_ps, t1)
        center = (lo + hi) // 2
        guess = int(round(last)) if sequential else 0
        blk_a = a[np.searchsorted(a, lo):np.searchsorted(a, hi)]
        blk_b = b[np.searchsorted(b, lo + guess - scan_ps):
                  np.searchsorted(b, hi + guess + scan_ps)]
        if blk_a.size == 0 or blk_b.size == 0:
            continue
        est = _block_peak(blk_a, blk_b, guess, scan_ps, bin_ps)
        if est is None:
            continue
        centers.append(center)
        offsets.append(est)
        last = est
    return centers, offsets


def estimate_clock_drift(stream_a: np.ndarray, stream_b: np.ndarray,
                         window_scan_ns: float = 5_000.0,
                         block_s: float = 10.0) -> DriftModel:
    """Relative clock offset of stream B vs A, blockwise.

    Iterated block cross-correlation.  The first pass tracks the
    coincidence peak sequentially within ``+-window_scan_ns`` per block; a
    straight-line drift model is fitted and *applied* to stream B, which
    removes most of the within-block smear, and residual peaks are
    re-measured through a multi-resolution binning ladder.  A few rounds
    take a 10 ppm drift from a ~100 us smeared peak down to
    picosecond-level block anchors.  Raises :class:`NoLockError` when no
    block shows a coincidence peak above five sigma of the accidental
    background.

    The model maps raw B timestamps onto A's clock: t_B + offset(t_B).
    """
    a = np.ascontiguousarray(stream_a, dtype=np.int64)
    b = np.ascontiguousarray(stream_b, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        raise DataError("both streams must be non-empty")
    t0 = int(max(a[0], b[0]))
    t1 = int(min(a[-1], b[-1]))
    if t1 <= t0:
        raise DataError("streams do not overlap in time")
    block_ps = int(block_s * PS_PER_S)
    scan_ps = int(window_scan_ns * PS_PER_NS)

    peak_line = np.poly1d([0.0])  # modeled peak position of (b - a), ps
    centers = totals = None
    for iteration in range(6):
        if iteration == 0:
            b_w = b
            scan = scan_ps
            # ~400 bins across the scan, clamped to the resolution ladder
            bin_ps = min(_COARSE_BIN_PS,
                         max(_FINE_BIN_PS, scan_ps // 200))
        else:
            # warp B by the model so residual peaks are unsmeared
            b_w = b - np.rint(peak_line(b.astype(np.float64))).astype(np.int64)
            scan = max(scan_ps // 4, 20 * _COARSE_BIN_PS)
            bin_ps = _COARSE_BIN_PS
        cs, res = _block_offsets(a, b_w, t0, t1, block_ps, scan, bin_ps,
                                 sequential=(iteration == 0))
        if not cs:
            if iteration == 0:
                raise NoLockError(
                    "no coincidence peak above 5x accidental background "
                    "in any block; streams appear uncorrelated")
            break
        centers = np.asarray(cs, dtype=np.int64)
        res = np.asarray(res, dtype=np.float64)
        # the warp removed peak_line evaluated at B-times, so reconstitute
        # the total peak with the line read at (A center + peak), not at the
        # A center itself; one fixed-point step is ample
        approx = peak_line(centers.astype(np.float64)) + res
        totals = res + peak_line(centers.astype(np.float64) + approx)
        if centers.size >= 2:
            peak_line = np.poly1d(np.polyfit(centers.astype(np.float64), totals, 1))
        else:
            peak_line = np.poly1d([float(totals[0])])
        if iteration > 0 and np.max(np.abs(res)) < 4 * _FINE_BIN_PS:
            break
    # anchor at B-clock times (A block center plus the peak position) so the
    # correction is exact for a steady drift when evaluated on raw B stamps
    anchors_b = centers + np.rint(totals).astype(np.int64)
    return DriftModel(anchors_b, -totals, block_s)


def find_coincidences(stream_a: np.ndarray, stream_b: np.ndarray,
                      drift: DriftModel | None = None,
                      window_ns: float = 2.66, width_mode: str = "full"):
    """Greedy earliest-first coincidence pairs between two sorted streams.

    The drift model (if given) is applied to side B before matching.  Each
    event participates in at most one pair.  Returns ``(idx_a, idx_b)``
    index arrays into the input streams.
    """
    a = np.ascontiguousarray(stream_a, dtype=np.int64)
    b = np.ascontiguousarray(stream_b, dtype=np.int64)
    if drift is not None:
        b = drift.apply(b)
    half = coincidence_half_window_ps(window_ns, width_mode)
    return _backend.match_pairs(a, b, half)


@dataclass
class SettingIntervals:
    """Non-overlapping validity windows [start, end] with a setting label."""

    start_ps: np.ndarray
    end_ps: np.ndarray
    setting: np.ndarray  # int8, 1 or 2

    def __post_init__(self):
        self.start_ps = np.asarray(self.start_ps, dtype=np.int64)
        self.end_ps = np.asarray(self.end_ps, dtype=np.int64)
        self.setting = np.asarray(self.setting, dtype=np.int8)
        if not (self.start_ps.shape == self.end_ps.shape == self.setting.shape):
            raise DataError("interval columns must align")
        if self.start_ps.size:
            if np.any(self.end_ps < self.start_ps):
                raise InternalError("interval with negative length")
            if np.any(self.start_ps[1:] < self.end_ps[:-1]):
                raise InternalError("overlapping setting intervals")

    def __len__(self) -> int:
        return self.start_ps.size

    def total_valid_ps(self) -> int:
        return int((self.end_ps - self.start_ps).sum())

    def duty_cycle(self, session_ps: int) -> float:
        return self.total_valid_ps() / session_ps if session_ps > 0 else 0.0

    def covering(self, t_ps: np.ndarray):
        """(covered mask, setting labels) for query times; label 0 if uncovered."""
        t = np.asarray(t_ps, dtype=np.int64)
        idx = np.searchsorted(self.start_ps, t, side="right") - 1
        valid = idx >= 0
        idx_c = np.clip(idx, 0, max(len(self) - 1, 0))
        covered = valid & (t <= self.end_ps[idx_c]) if len(self) else np.zeros(t.shape, bool)
        labels = np.where(covered, self.setting[idx_c], 0).astype(np.int8)
        return covered, labels


def build_setting_intervals(crng_times_ps: np.ndarray, crng_settings: np.ndarray,
                            tau_set_ns: float, tau_valid_us: float) -> SettingIntervals:
    """Validity windows implied by a CRNG detection stream.

    A detection at t opens [t + tau_set, t + tau_set + tau_valid]; the next
    detection supersedes it (the modulator latches the newer setting), so an
    open window is truncated at the newer detection's t + tau_set.
    """
    t = np.asarray(crng_times_ps, dtype=np.int64)
    s = np.asarray(crng_settings, dtype=np.int8)
    if t.shape != s.shape:
        raise DataError("times and settings must align")
    if np.any(np.diff(t) < 0):
        raise DataError("CRNG stream must be sorted")
    if tau_valid_us <= 0:
        warnings.warn("tau_valid <= 0: side is out of causal alignment, "
                      "no setting intervals generated")
        empty = np.empty(0, dtype=np.int64)
        return SettingIntervals(empty, empty.copy(), np.empty(0, dtype=np.int8))
    set_ps = int(round(tau_set_ns * PS_PER_NS))
    valid_ps = int(round(tau_valid_us * PS_PER_US))
    start = t + set_ps
    end = start + valid_ps
    end[:-1] = np.minimum(end[:-1], start[1:])
    keep = end > start  # simultaneous detections leave zero-length windows
    return SettingIntervals(start[keep], end[keep], s[keep])


@dataclass
class TrialRecords:
    """Gated coincidences with setting labels and outcomes."""

    t_a_ps: np.ndarray
    t_b_ps: np.ndarray
    setting_a: np.ndarray   # 1|2
    setting_b: np.ndarray
    outcome_a: np.ndarray   # +1|-1
    outcome_b: np.ndarray

    def __post_init__(self):
        n = len(self.t_a_ps)
        for name in ("t_b_ps", "setting_a", "setting_b", "outcome_a", "outcome_b"):
            if len(getattr(self, name)) != n:
                raise DataError("trial columns must align")

    def __len__(self) -> int:
        return len(self.t_a_ps)

    def iter_records(self):
        for k in range(len(self)):
            yield {
                "t_a_ps": int(self.t_a_ps[k]), "t_b_ps": int(self.t_b_ps[k]),
                "setting_a": int(self.setting_a[k]), "setting_b": int(self.setting_b[k]),
                "outcome_a": int(self.outcome_a[k]), "outcome_b": int(self.outcome_b[k]),
            }

    @classmethod
    def from_records(cls, records: list[dict]) -> "TrialRecords":
        cols = {k: np.array([r[k] for r in records])
                for k in ("t_a_ps", "t_b_ps", "setting_a", "setting_b",
                          "outcome_a", "outcome_b")}
        return cls(cols["t_a_ps"], cols["t_b_ps"],
                   cols["setting_a"].astype(np.int8), cols["setting_b"].astype(np.int8),
                   cols["outcome_a"].astype(np.int8), cols["outcome_b"].astype(np.int8))


@dataclass(frozen=True)
class DutyReport:
    duty_a: float
    duty_b: float
    duty_joint: float
    session_ps: int
    n_coincidences: int
    n_trials: int

    def as_dict(self) -> dict:
        return {"duty_a": self.duty_a, "duty_b": self.duty_b,
                "duty_joint": self.duty_joint, "session_ps": self.session_ps,
                "n_coincidences": self.n_coincidences, "n_trials": self.n_trials}


def _joint_valid_ps(ia: SettingIntervals, ib: SettingIntervals) -> int:
    """Total overlap length of two non-overlapping interval families."""
    total = 0
    i = j = 0
    while i < len(ia) and j < len(ib):
        lo = max(ia.start_ps[i], ib.start_ps[j])
        hi = min(ia.end_ps[i], ib.end_ps[j])
        if hi > lo:
            total += int(hi - lo)
        if ia.end_ps[i] < ib.end_ps[j]:
            i += 1
        else:
            j += 1
    return total


def gate_and_label(t_a_ps: np.ndarray, outcome_a: np.ndarray,
                   t_b_ps: np.ndarray, outcome_b: np.ndarray,
                   intervals_a: SettingIntervals, intervals_b: SettingIntervals,
                   session_ps: int | None = None):
    """Keep coincidences covered by valid settings on both sides.

    Inputs are the matched coincidence columns (time and +1/-1 outcome per
    side).  Returns ``(TrialRecords, DutyReport)``.
    """
    t_a = np.asarray(t_a_ps, dtype=np.int64)
    t_b = np.asarray(t_b_ps, dtype=np.int64)
    cov_a, set_a = intervals_a.covering(t_a)
    cov_b, set_b = intervals_b.covering(t_b)
    keep = cov_a & cov_b
    trials = TrialRecords(
        t_a[keep], t_b[keep], set_a[keep], set_b[keep],
        np.asarray(outcome_a, dtype=np.int8)[keep],
        np.asarray(outcome_b, dtype=np.int8)[keep],
    )
    if session_ps is None:
        tmax = 0
        for arr in (intervals_a.end_ps, intervals_b.end_ps, t_a, t_b):
            if len(arr):
                tmax = max(tmax, int(arr.max()))
        session_ps = tmax
    report = DutyReport(
        duty_a=intervals_a.duty_cycle(session_ps),
        duty_b=intervals_b.duty_cycle(session_ps),
        duty_joint=_joint_valid_ps(intervals_a, intervals_b) / session_ps
        if session_ps else 0.0,
        session_ps=session_ps,
        n_coincidences=int(t_a.size),
        n_trials=len(trials),
    )
    return trials, report


def split_at_gaps(stream: np.ndarray, n_chunks: int, min_gap_ps: int):
    """Chunk boundaries that fall inside gaps wider than ``min_gap_ps``.

    Matching each chunk independently then concatenating reproduces the
    whole-stream result, because no pair can straddle such a gap.
    """
    t = np.asarray(stream, dtype=np.int64)
    if t.size < 2 or n_chunks < 2:
        return []
    gaps = np.flatnonzero(np.diff(t) > min_gap_ps) + 1
    if gaps.size == 0:
        return []
    targets = t[0] + (np.arange(1, n_chunks) * (t[-1] - t[0])) // n_chunks
    cuts = sorted({int(gaps[np.abs(t[gaps] - tgt).argmin()]) for tgt in targets})
    return cuts

"""Event-file formats.

Two interchangeable on-disk encodings of a timestamped event stream:

* CSV with header ``channel,timestamp_ps``; the channel column holds either
  the symbolic name (``a_crng_red``) or the integer code.
* Packed binary: little-endian records of one ``uint8`` channel code
  followed by one ``uint64`` timestamp in picoseconds (9 bytes/record).

Gated trials are written as JSON Lines, one object per trial.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from ..errors import DataError

__all__ = [
    "CHANNELS", "CHANNEL_NAMES", "EventStream",
    "read_events_csv", "write_events_csv",
    "read_events_binary", "write_events_binary",
    "read_events", "write_trials_jsonl", "read_trials_jsonl",
]

# Channel code map: CRNG color ports and polarization analyzer outputs.
CHANNELS = {
    "a_crng_red": 0,
    "a_crng_blue": 1,
    "a_pol_plus": 2,
    "a_pol_minus": 3,
    "b_crng_red": 4,
    "b_crng_blue": 5,
    "b_pol_plus": 6,
    "b_pol_minus": 7,
}
CHANNEL_NAMES = {code: name for name, code in CHANNELS.items()}

_RECORD_DTYPE = np.dtype([("channel", "u1"), ("timestamp_ps", "<u8")])


@dataclass
class EventStream:
    """All events of one session: parallel channel/timestamp arrays."""

    channel: np.ndarray       # uint8 codes
    timestamp_ps: np.ndarray  # int64 picoseconds

    def __post_init__(self):
        self.channel = np.asarray(self.channel, dtype=np.uint8)
        self.timestamp_ps = np.asarray(self.timestamp_ps, dtype=np.int64)
        if self.channel.shape != self.timestamp_ps.shape:
            raise DataError("channel and timestamp arrays must align")
        if self.timestamp_ps.size and self.timestamp_ps.min() < 0:
            raise DataError("timestamps must be non-negative")

    def __len__(self) -> int:
        return self.channel.size

    def of(self, *names: str) -> np.ndarray:
        """Sorted timestamps of the given channel(s)."""
        codes = [_code(n) for n in names]
        mask = np.isin(self.channel, codes)
        t = self.timestamp_ps[mask]
        return np.sort(t)

    def of_labeled(self, plus: str, minus: str):
        """Merged, sorted timestamps of two channels plus a +1/-1 label array."""
        cp, cm = _code(plus), _code(minus)
        mask = (self.channel == cp) | (self.channel == cm)
        t = self.timestamp_ps[mask]
        lab = np.where(self.channel[mask] == cp, 1, -1).astype(np.int8)
        order = np.argsort(t, kind="stable")
        return t[order], lab[order]

    def sorted_by_time(self) -> "EventStream":
        order = np.argsort(self.timestamp_ps, kind="stable")
        return EventStream(self.channel[order], self.timestamp_ps[order])


def _code(name_or_code) -> int:
    if isinstance(name_or_code, (int, np.integer)):
        code = int(name_or_code)
        if code not in CHANNEL_NAMES:
            raise DataError(f"unknown channel code {code}")
        return code
    try:
        return CHANNELS[str(name_or_code)]
    except KeyError:
        raise DataError(f"unknown channel {name_or_code!r}") from None


def read_events_csv(path) -> EventStream:
    channels, times = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["channel", "timestamp_ps"]:
            raise DataError(f"{path}: expected header 'channel,timestamp_ps'")
        for row in reader:
            if not row:
                continue
            name = row[0].strip()
            if name in CHANNELS:
                channels.append(CHANNELS[name])
            elif name.isdigit():
                channels.append(_code(int(name)))
            else:
                raise DataError(f"{path}: unknown channel {name!r}")
            times.append(int(row[1]))
    return EventStream(np.array(channels, dtype=np.uint8),
                       np.array(times, dtype=np.int64))


def write_events_csv(path, stream: EventStream) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["channel", "timestamp_ps"])
        for code, t in zip(stream.channel.tolist(), stream.timestamp_ps.tolist()):
            writer.writerow([CHANNEL_NAMES[code], t])


def read_events_binary(path) -> EventStream:
    raw = np.fromfile(path, dtype=_RECORD_DTYPE)
    bad = ~np.isin(raw["channel"], list(CHANNEL_NAMES))
    if bad.any():
        raise DataError(f"{path}: unknown channel code {int(raw['channel'][bad][0])}")
    return EventStream(raw["channel"].copy(),
                       raw["timestamp_ps"].astype(np.int64))


def write_events_binary(path, stream: EventStream) -> None:
    if stream.timestamp_ps.size and stream.timestamp_ps.min() < 0:
        raise DataError("negative timestamp cannot be encoded")
    rec = np.empty(len(stream), dtype=_RECORD_DTYPE)
    rec["channel"] = stream.channel
    rec["timestamp_ps"] = stream.timestamp_ps.astype(np.uint64)
    rec.tofile(path)


def read_events(path) -> EventStream:
    """Dispatch on extension: ``.csv`` text format, anything else binary."""
    if str(path).endswith(".csv"):
        return read_events_csv(path)
    return read_events_binary(path)


def write_trials_jsonl(path, trials) -> None:
    with open(path, "w") as fh:
        for rec in trials.iter_records():
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_trials_jsonl(path) -> list[dict]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out

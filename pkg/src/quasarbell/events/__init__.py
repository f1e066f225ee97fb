"""Timestamped-event ingestion, clock drift, coincidences and gating."""

from ._backend import BACKEND, implementations
from .core import (
    DriftModel,
    DutyReport,
    SettingIntervals,
    TrialRecords,
    build_setting_intervals,
    coincidence_half_window_ps,
    estimate_clock_drift,
    find_coincidences,
    gate_and_label,
    split_at_gaps,
)
from .io import (
    CHANNEL_NAMES,
    CHANNELS,
    EventStream,
    read_events,
    read_events_binary,
    read_events_csv,
    read_trials_jsonl,
    write_events_binary,
    write_events_csv,
    write_trials_jsonl,
)

__all__ = [
    "BACKEND", "implementations",
    "DriftModel", "DutyReport", "SettingIntervals", "TrialRecords",
    "build_setting_intervals", "coincidence_half_window_ps",
    "estimate_clock_drift", "find_coincidences", "gate_and_label",
    "split_at_gaps",
    "CHANNELS", "CHANNEL_NAMES", "EventStream",
    "read_events", "read_events_binary", "read_events_csv",
    "write_events_binary", "write_events_csv",
    "read_trials_jsonl", "write_trials_jsonl",
]

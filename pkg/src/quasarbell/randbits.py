"""Finite-sample mutual information between a bit and its predecessors.

Measures how much an m-bit history predicts the next bit of a setting
stream.  The plug-in estimate over the empirical (context, bit) joint is
corrected for finite-sample bias with the first-order occupied-bin term,
so the result can come out slightly negative on independent streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError

__all__ = [
    "BitStream", "MIEstimate", "choose_m", "mutual_information",
    "read_bits", "write_bits_packed",
]


@dataclass
class BitStream:
    """A 0/1 sequence with an optional source label."""

    bits: np.ndarray
    source: str = ""

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 1:
            raise DataError("bit stream must be one-dimensional")
        if self.bits.size and self.bits.max() > 1:
            raise DataError("bit stream must contain only 0 and 1")

    def __len__(self) -> int:
        return self.bits.size


def choose_m(length: int) -> int:
    """Smallest context length strictly larger than floor(log2(L) - 7).

    Shorter streams than 256 bits cannot support the rule at all.
    """
    if length < 256:
        raise DomainError("stream too short to choose a context length")
    return int(math.floor(math.log2(length) - 7.0)) + 1


@dataclass(frozen=True)
class MIEstimate:
    mi_bits: float             # bias-corrected estimate
    plugin_bits: float         # raw plug-in value
    bias_correction_bits: float
    m: int
    n_samples: int
    occupied_joint: int
    occupied_contexts: int

    def as_dict(self) -> dict:
        return {"mi_bits": self.mi_bits, "plugin_bits": self.plugin_bits,
                "bias_correction_bits": self.bias_correction_bits,
                "m": self.m, "n_samples": self.n_samples,
                "occupied_joint": self.occupied_joint,
                "occupied_contexts": self.occupied_contexts}


def _entropy_bits(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log2(p)).sum())


def mutual_information(bits, m: int) -> MIEstimate:
    """Bias-corrected mutual information I(context_m ; next bit) in bits.

    Contexts are the m predecessors read most-significant-first.  The
    plug-in estimate H(ctx) + H(bit) - H(ctx, bit) is reduced by the
    first-order bias term (R_joint - R_ctx - R_bit + 1) / (2 N ln 2) with R
    the occupied-bin counts; unseen contexts contribute nothing (0 log 0 =
    0).  Counting is a single pass over (context, bit) keys, with memory
    proportional to the number of occupied contexts.
    """
    arr = bits.bits if isinstance(bits, BitStream) else np.asarray(bits, dtype=np.uint8)
    length = arr.size
    if m < 1:
        raise DomainError("context length must be positive")
    if m >= length:
        raise DomainError(f"context length {m} requires a stream longer than {m}")
    n = length - m
    # rolling integer context: bit k of the key is predecessor (m-k) back
    keys = np.zeros(n, dtype=np.int64)
    for k in range(m):
        np.left_shift(keys, 1, out=keys)
        np.add(keys, arr[k:k + n], out=keys, casting="unsafe")
    joint_keys = (keys << 1) | arr[m:].astype(np.int64)

    uniq, joint_counts = np.unique(joint_keys, return_counts=True)
    ctx_of_uniq = uniq >> 1
    # occupied joint bins share sorted order with their contexts
    boundaries = np.flatnonzero(np.diff(ctx_of_uniq)) + 1
    ctx_counts = np.add.reduceat(joint_counts, np.concatenate(([0], boundaries)))
    bit_counts = np.array([n - int(arr[m:].sum()), int(arr[m:].sum())])

    plugin = (_entropy_bits(ctx_counts, n) + _entropy_bits(bit_counts, n)
              - _entropy_bits(joint_counts, n))
    r_joint = int(uniq.size)
    r_ctx = int(ctx_counts.size)
    r_bit = int((bit_counts > 0).sum())
    correction = (r_joint - r_ctx - r_bit + 1) / (2.0 * n * math.log(2.0))
    return MIEstimate(mi_bits=plugin - correction, plugin_bits=plugin,
                      bias_correction_bits=correction, m=m, n_samples=n,
                      occupied_joint=r_joint, occupied_contexts=r_ctx)


def write_bits_packed(path, bits: np.ndarray) -> None:
    """Pack to bytes, LSB-first within each byte (bit k of byte -> index 8j+k)."""
    arr = np.asarray(bits, dtype=np.uint8)
    np.packbits(arr, bitorder="little").tofile(path)


def read_bits(path, n_bits: int | None = None) -> BitStream:
    """Read a packed binary stream (LSB-first) or ASCII 0/1 lines.

    Files whose content is entirely 0/1 characters and whitespace are read
    as text; anything else is unpacked as binary.  ``n_bits`` trims packed
    padding.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw and all(c in b"01 \t\r\n" for c in raw):
        bits = np.frombuffer(raw.translate(None, b" \t\r\n"), dtype=np.uint8) - ord("0")
    else:
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
    if n_bits is not None:
        if n_bits > bits.size:
            raise DataError(f"requested {n_bits} bits, file holds {bits.size}")
        bits = bits[:n_bits]
    return BitStream(bits=np.ascontiguousarray(bits), source=str(path))

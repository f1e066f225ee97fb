"""CHSH statistics from coincidence counts, plus independence and
no-signaling checks.

The 4x4 count table N[i][j][A][B] is the single source for everything here:
correlation functions E_ij, the CHSH S (and the equivalent C form), the
Pearson chi-square test that the joint setting frequencies factorize, and
pooled two-proportion z-tests that each side's outcome distribution is
independent of the remote setting.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, gammaincc

from .errors import DataError

__all__ = [
    "CoincidenceCounts", "CorrelationReport", "SettingsStats",
    "NoSignalingReport", "tabulate", "correlations",
    "settings_independence", "no_signaling", "pooled_two_proportion_z",
    "TSIRELSON_S",
]

TSIRELSON_S = 2.0 * math.sqrt(2.0)

_OUTCOME_COLS = ("++", "+-", "-+", "--")


@dataclass
class CoincidenceCounts:
    """Counts N[i][j][A][B], indices i,j in {0,1} and A,B in {0:+, 1:-}."""

    table: np.ndarray

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=np.int64)
        if self.table.shape != (2, 2, 2, 2):
            raise DataError(f"count table must be 2x2x2x2, got {self.table.shape}")
        if np.any(self.table < 0):
            raise DataError("counts must be non-negative")

    @property
    def n_ij(self) -> np.ndarray:
        """Per-setting totals, shape (2, 2)."""
        return self.table.sum(axis=(2, 3))

    @property
    def n(self) -> int:
        return int(self.table.sum())

    @property
    def q_ij(self) -> np.ndarray:
        n = self.n
        if n == 0:
            raise DataError("empty count table")
        return self.n_ij / n

    def same_outcome(self) -> np.ndarray:
        """N_ij^{A=B}, shape (2, 2)."""
        return self.table[:, :, 0, 0] + self.table[:, :, 1, 1]

    def diff_outcome(self) -> np.ndarray:
        return self.table[:, :, 0, 1] + self.table[:, :, 1, 0]

    def win_counts(self) -> np.ndarray:
        """Winning counts per setting: different outcomes except on (2,2)."""
        win = self.diff_outcome().copy()
        win[1, 1] = self.same_outcome()[1, 1]
        return win

    @classmethod
    def from_trials(cls, setting_a, setting_b, outcome_a, outcome_b) -> "CoincidenceCounts":
        i = np.asarray(setting_a, dtype=np.int64) - 1
        j = np.asarray(setting_b, dtype=np.int64) - 1
        a = (1 - np.asarray(outcome_a, dtype=np.int64)) // 2   # +1 -> 0, -1 -> 1
        b = (1 - np.asarray(outcome_b, dtype=np.int64)) // 2
        if np.any((i < 0) | (i > 1)) or np.any((j < 0) | (j > 1)):
            raise DataError("settings must be 1 or 2")
        flat = ((i * 2 + j) * 2 + a) * 2 + b
        return cls(np.bincount(flat, minlength=16).reshape(2, 2, 2, 2))

    @classmethod
    def from_csv(cls, path) -> "CoincidenceCounts":
        """4x4 CSV, rows 11,12,21,22 and columns ++, +-, -+, --."""
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                cells = [c.strip() for c in row if c.strip() != ""]
                if cells and all(_is_int(c) for c in cells):
                    rows.append([int(c) for c in cells])
        if len(rows) != 4 or any(len(r) != 4 for r in rows):
            raise DataError(f"{path}: expected a 4x4 integer table")
        return cls(np.array(rows, dtype=np.int64).reshape(2, 2, 2, 2))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["# rows 11,12,21,22; columns " + ", ".join(_OUTCOME_COLS)])
            for i in (0, 1):
                for j in (0, 1):
                    writer.writerow(self.table[i, j].ravel().tolist())


def _is_int(s: str) -> bool:
    try:
        int(s)
        return True
    except ValueError:
        return False


def tabulate(trials) -> CoincidenceCounts:
    """Count table from gated trial records."""
    return CoincidenceCounts.from_trials(trials.setting_a, trials.setting_b,
                                         trials.outcome_a, trials.outcome_b)


@dataclass(frozen=True)
class CorrelationReport:
    e_ij: np.ndarray
    c: float
    s: float
    visibility: float

    def as_dict(self) -> dict:
        return {"E": self.e_ij.tolist(), "C": self.c, "S": self.s,
                "visibility": self.visibility}


def correlations(counts: CoincidenceCounts) -> CorrelationReport:
    """Correlation functions and the CHSH statistic.

    E_ij = 2 p(A=B | ij) - 1;  C = -p(..|11) - p(..|12) - p(..|21) + p(..|22);
    S = 2 |C + 1|; visibility = S / (2 sqrt 2).
    """
    n_ij = counts.n_ij
    empty = np.argwhere(n_ij == 0)
    if empty.size:
        i, j = empty[0] + 1
        raise DataError(f"no coincidences for setting pair ({i},{j}); "
                        "correlation undefined")
    p_same = counts.same_outcome() / n_ij
    c = float(-p_same[0, 0] - p_same[0, 1] - p_same[1, 0] + p_same[1, 1])
    e_ij = 2.0 * p_same - 1.0
    s = 2.0 * abs(c + 1.0)
    return CorrelationReport(e_ij=e_ij, c=c, s=s, visibility=s / TSIRELSON_S)


@dataclass(frozen=True)
class SettingsStats:
    q_ij: np.ndarray
    p_a: np.ndarray
    p_b: np.ndarray
    p_factorized: np.ndarray
    chi2: float
    p_value: float

    def as_dict(self) -> dict:
        return {"q_ij": self.q_ij.tolist(), "p_a": self.p_a.tolist(),
                "p_b": self.p_b.tolist(), "p_factorized": self.p_factorized.tolist(),
                "chi2": self.chi2, "p_value": self.p_value}


def settings_independence(counts: CoincidenceCounts) -> SettingsStats:
    """Pearson chi-square test that q_ij factorizes into p(a_i) p(b_j).

    chi2 = N sum_ij (q_ij - p_i p_j)^2 / (p_i p_j), referred to a
    chi-square distribution with one degree of freedom (2x2 independence).
    """
    q = counts.q_ij
    p_a = q.sum(axis=1)
    p_b = q.sum(axis=0)
    p_fact = np.outer(p_a, p_b)
    if np.any(p_fact == 0):
        raise DataError("degenerate setting margin: a row or column is empty")
    chi2 = float(counts.n * ((q - p_fact) ** 2 / p_fact).sum())
    p_value = float(gammaincc(0.5, chi2 / 2.0))  # survival of chi2, 1 dof
    return SettingsStats(q_ij=q, p_a=p_a, p_b=p_b, p_factorized=p_fact,
                         chi2=chi2, p_value=p_value)


def pooled_two_proportion_z(x1: int, n1: int, x2: int, n2: int) -> tuple[float, float]:
    """Pooled two-proportion z statistic and its two-sided Gaussian p-value.

    z = (p1 - p2) / sqrt(p (1-p) (1/n1 + 1/n2)) with p the pooled rate;
    p-value = erfc(|z| / sqrt 2).
    """
    if n1 <= 0 or n2 <= 0:
        raise DataError("z-test sample sizes must be positive")
    p1, p2 = x1 / n1, x2 / n2
    pool = (x1 + x2) / (n1 + n2)
    if pool in (0.0, 1.0):
        return 0.0, 1.0
    se = math.sqrt(pool * (1.0 - pool) * (1.0 / n1 + 1.0 / n2))
    z = (p1 - p2) / se
    return z, float(erfc(abs(z) / math.sqrt(2.0)))


@dataclass(frozen=True)
class NoSignalingReport:
    p_a_plus: np.ndarray        # p(A=+ | ij), shape (2, 2)
    p_b_plus: np.ndarray        # p(B=+ | ij)
    z_values: dict
    p_values: dict              # keys 'a1','a2','b1','b2'
    aggregate: float
    n_tests: int

    def min_p(self) -> float:
        return min(self.p_values.values())

    def as_dict(self) -> dict:
        return {"p_a_plus": self.p_a_plus.tolist(), "p_b_plus": self.p_b_plus.tolist(),
                "z_values": self.z_values, "p_values": self.p_values,
                "aggregate": self.aggregate, "n_tests": self.n_tests}


def no_signaling(counts: CoincidenceCounts, n_tests: int = 8) -> NoSignalingReport:
    """No-signaling tests: outcome margins must not depend on the remote setting.

    For each local setting the two conditional '+' probabilities (one per
    remote setting) are compared with a pooled two-proportion z-test.  The
    aggregate is the chance that the worst of ``n_tests`` independent tests
    is at least as extreme as observed: 1 - (1 - min p)^n_tests, with
    ``n_tests`` defaulting to the full two-session suite of 8.
    """
    n_ij = counts.n_ij
    empty = np.argwhere(n_ij == 0)
    if empty.size:
        i, j = empty[0] + 1
        raise DataError(f"no coincidences for setting pair ({i},{j})")
    a_plus = counts.table[:, :, 0, :].sum(axis=2)   # N_ij^{A=+}
    b_plus = counts.table[:, :, :, 0].sum(axis=2)   # N_ij^{B=+}
    z_values, p_values = {}, {}
    for i in (0, 1):  # A side under a_i: remote b1 vs b2
        z, p = pooled_two_proportion_z(a_plus[i, 0], n_ij[i, 0],
                                       a_plus[i, 1], n_ij[i, 1])
        z_values[f"a{i + 1}"] = z
        p_values[f"a{i + 1}"] = p
    for j in (0, 1):  # B side under b_j: remote a1 vs a2
        z, p = pooled_two_proportion_z(b_plus[0, j], n_ij[0, j],
                                       b_plus[1, j], n_ij[1, j])
        z_values[f"b{j + 1}"] = z
        p_values[f"b{j + 1}"] = p
    min_p = min(p_values.values())
    aggregate = 1.0 - (1.0 - min_p) ** n_tests
    return NoSignalingReport(p_a_plus=a_plus / n_ij, p_b_plus=b_plus / n_ij,
                             z_values=z_values, p_values=p_values,
                             aggregate=aggregate, n_tests=n_tests)

"""Shared fixtures: the reference two-session dataset and its published
analysis quantities, used as golden values across the suite."""

import numpy as np
import pytest

from quasarbell.chsh import CoincidenceCounts
from quasarbell.predict import PredictabilityTable

# Coincidence-count tables of the reference quasar sessions.
# Rows: setting pairs 11, 12, 21, 22; columns: outcomes ++, +-, -+, --.
SESSION1_TABLE = np.array([
    [145, 956, 1229, 291],
    [487, 1618, 2417, 370],
    [440, 1514, 1399, 206],
    [3229, 418, 593, 2321],
], dtype=np.int64)

SESSION2_TABLE = np.array([
    [71, 1007, 1102, 168],
    [654, 1394, 1975, 494],
    [315, 771, 702, 186],
    [1975, 108, 165, 1333],
], dtype=np.int64)

# Per-port corrupt-setting fractions and uncertainties for both sessions,
# plus the joint table as published (rounded at the fourth decimal).
SESSION1_EPS = dict(
    eps_a=[0.1441, 0.1334], eps_b=[0.0653, 0.0342],
    sigma_a=[1.21e-3, 0.88e-3], sigma_b=[0.46e-3, 0.13e-3],
    eps_ij=[[0.2095, 0.1783], [0.1987, 0.1676]],
)
SESSION2_EPS = dict(
    eps_a=[0.1326, 0.1679], eps_b=[0.0537, 0.0342],
    sigma_a=[0.46e-3, 0.54e-3], sigma_b=[0.93e-3, 0.26e-3],
    eps_ij=[[0.1862, 0.1667], [0.2216, 0.2021]],
)

# Reference significance-chain values for both sessions.
SESSION1_RESULTS = dict(
    N=17633, C=0.3229, S=2.6457, V=0.935,
    chi2=0.1504, chi2_p=0.698,
    W=72224.1, W_avg=69319.1, sigma_W=290.222, nu_bar=10.01,
    delta_nu=0.0576, nu_n=9.46, p_cond=1.48e-21, p_no_m=2.96e-21,
    nu_no_m=9.39, B=0.6001, p=7.41e-21, nu=9.29, log10_p=-20.13,
)
SESSION2_RESULTS = dict(
    N=12420, C=0.3140, S=2.6281, V=0.929,
    chi2=2.405, chi2_p=0.121,
    W=51110.3, W_avg=49268.0, sigma_W=242.745, nu_bar=7.59,
    delta_nu=0.0395, nu_n=7.30, p_cond=1.43e-13, p_no_m=2.86e-13,
    nu_no_m=7.21, B=0.5937, p=7.03e-13, nu=7.08, log10_p=-12.15,
)

# No-signaling z-test p-values as tabulated (A|a1, A|a2, B|b1, B|b2).
SESSION1_NOSIG_P = [0.395, 0.503, 0.562, 0.234]
SESSION2_NOSIG_P = [0.653, 0.023, 0.308, 0.156]

# Sky coordinates of the three reference sources (degrees) and redshifts.
QSO_COORDS = {
    "QSO B0350-073": (58.127300, -7.183976, 0.964),
    "QSO J0831+5245": (127.923750, 52.754860, 3.911),
    "QSO B0422+004": (66.195175, 0.601758, 0.268),
}


@pytest.fixture(scope="session")
def session1_counts() -> CoincidenceCounts:
    return CoincidenceCounts(SESSION1_TABLE.reshape(2, 2, 2, 2))


@pytest.fixture(scope="session")
def session2_counts() -> CoincidenceCounts:
    return CoincidenceCounts(SESSION2_TABLE.reshape(2, 2, 2, 2))


@pytest.fixture(scope="session")
def session1_eps() -> PredictabilityTable:
    return PredictabilityTable.from_overrides(**SESSION1_EPS)


@pytest.fixture(scope="session")
def session2_eps() -> PredictabilityTable:
    return PredictabilityTable.from_overrides(**SESSION2_EPS)

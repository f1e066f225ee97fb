"""Quasar-settings Bell test toolkit.

Library and CLI covering the quantitative machinery of a Bell-CHSH
experiment whose measurement settings come from the colors of quasar
photons: FLRW light-cone volume accounting, causal-alignment timing
windows, timestamp-stream coincidence processing, CHSH statistics with
excess-predictability and memory-robust significance, a synthetic-session
simulator, and a quasar-pair scheduler.
"""

__version__ = "0.1.0"

from . import chsh, cosmo, events, geom, predict, randbits, sched, signif, sim, spectral

__all__ = [
    "__version__",
    "chsh", "cosmo", "events", "geom", "predict",
    "randbits", "sched", "signif", "sim", "spectral",
]

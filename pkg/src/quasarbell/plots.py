"""SVG figures rendered from report dictionaries (file-based, no live state).

Two light-cone diagrams (conformal and cosmic-time coordinates, one spatial
dimension, the slice through Earth and both sources) and the memory-bound
curve.  Everything is derived from the same JSON-serializable reports the
CLI writes.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import cosmo as cosmo_mod

__all__ = ["lightcone_conformal_svg", "lightcone_cosmic_svg", "pleft_curve_svg"]


def _slice_positions(report: dict):
    """Comoving x of the two apexes in the Earth/source-plane slice."""
    half = math.radians(report["alpha_deg"]) / 2.0
    x_a = -report["chi_a"] * math.sin(half)
    x_b = report["chi_b"] * math.sin(half)
    return x_a, x_b


def lightcone_conformal_svg(report: dict, path,
                            params: cosmo_mod.CosmologyParams | None = None) -> None:
    """Past light cones in (comoving distance, conformal time) coordinates.

    Null geodesics are 45-degree lines; the experiment cone has its apex at
    the origin of space today, the emission cones at their comoving slice
    positions.
    """
    params = params or cosmo_mod.CosmologyParams()
    eta0 = cosmo_mod.scale_factor_table(params).eta0
    x_a, x_b = _slice_positions(report)
    fig, ax = plt.subplots(figsize=(6, 4.2))

    def cone(ax, x0, eta_apex, color, label):
        xs = [x0 - eta_apex, x0, x0 + eta_apex]
        ys = [0.0, eta_apex, 0.0]
        ax.fill(xs, ys, color=color, alpha=0.35, lw=0)
        ax.plot(xs, ys, color=color, lw=1.2, label=label)

    cone(ax, 0.0, eta0, "0.5", "experiment")
    cone(ax, x_a, report["eta_a"], "tab:blue", "emission A")
    cone(ax, x_b, report["eta_b"], "tab:red", "emission B")
    if report.get("common_cause_exists"):
        ax.axhline(report["eta_ab"], color="purple", ls=":", lw=1,
                   label="latest common cause")
    ax.plot([x_a, 0], [report["eta_a"], eta0], color="tab:blue", ls="--", lw=0.8)
    ax.plot([x_b, 0], [report["eta_b"], eta0], color="tab:red", ls="--", lw=0.8)
    ax.set_xlabel("comoving distance (c/H0)")
    ax.set_ylabel("conformal time")
    ax.set_ylim(0, eta0 * 1.05)
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title(f"excluded fraction {report['f_excl']:.3f}")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def lightcone_cosmic_svg(report: dict, path,
                         params: cosmo_mod.CosmologyParams | None = None) -> None:
    """Past light cones in (physical distance, cosmic time) coordinates.

    The cone boundaries r(t) = a(t) * (comoving radius) produce the
    characteristic teardrop under the varying expansion rate.
    """
    params = params or cosmo_mod.CosmologyParams()
    table = cosmo_mod.scale_factor_table(params)
    eta0 = table.eta0
    t_h = params.hubble_time_gyr
    x_a, x_b = _slice_positions(report)
    etas = np.linspace(0.0, eta0, 300)
    a_of = table.a_of_eta(etas)
    t_of = np.array([cosmo_mod.cosmic_time_of_eta(e, params) for e in etas])

    fig, ax = plt.subplots(figsize=(6, 4.2))

    def cone(x0, eta_apex, color, label):
        mask = etas <= eta_apex
        left = (x0 - (eta_apex - etas[mask])) * a_of[mask] * t_h
        right = (x0 + (eta_apex - etas[mask])) * a_of[mask] * t_h
        ax.fill_betweenx(t_of[mask], left, right, color=color, alpha=0.35, lw=0)
        ax.plot(left, t_of[mask], color=color, lw=1.0, label=label)
        ax.plot(right, t_of[mask], color=color, lw=1.0)

    cone(0.0, eta0, "0.5", "experiment")
    cone(x_a, report["eta_a"], "tab:blue", "emission A")
    cone(x_b, report["eta_b"], "tab:red", "emission B")
    ax.set_xlabel("physical distance (Glyr)")
    ax.set_ylabel("cosmic time (Gyr)")
    ax.legend(loc="upper right", fontsize=8)
    t_lb_ab = report.get("t_lb_ab_gyr")
    if t_lb_ab is not None:
        ax.set_title(f"cones last met {t_lb_ab:.2f} Gyr ago")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def pleft_curve_svg(curve, path, b: float | None = None) -> None:
    """Memory-bound curve: maximum left-move probability versus trial count."""
    curve = np.asarray(curve, dtype=float)
    n = np.arange(1, curve.size + 1)
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(n, curve, "o-", ms=4, lw=1)
    if b is not None:
        ax.axhline(b, color="tab:red", ls=":", lw=1, label=f"B = {b:.4f}")
        ax.legend(fontsize=8)
    ax.set_xlabel("trials n")
    ax.set_ylabel("max left-move probability")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)

"""Memory-robust statistical significance of a CHSH violation.

The chain runs: win statistic W over the gated trials, its ensemble mean
under the strongest local-realist strategy, the adversary-optimal standard
deviation, the deviation count nu with propagated setting-predictability
uncertainty, Gaussian tail p-values, and finally an inflation factor for
strategies that exploit memory of earlier trials, computed from a
random-walk bound B.

Probabilities are taken over the ensemble of orderings of the observed
setting sequence; per-trial step distributions treat the settings as
drawn with the observed frequencies q_ij.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, erfcinv, log_ndtr

from .chsh import CoincidenceCounts
from .errors import DataError, DomainError, InternalError
from .predict import PredictabilityTable

__all__ = [
    "SignificanceInput", "SignificanceReport", "StepDistribution",
    "win_statistic", "expected_w", "optimal_fractions", "sigma_w_opt",
    "nu_chain", "memory_bound", "final_p", "significance_report",
    "step_distributions", "MemoryBound",
]

_LN10 = math.log(10.0)


@dataclass(frozen=True)
class SignificanceInput:
    """Everything the chain needs: counts plus the predictability table."""

    counts: CoincidenceCounts
    eps: PredictabilityTable

    def __post_init__(self):
        if np.any(self.eps.eps_ij >= 1.0):
            raise DomainError("joint predictability of 1 makes W undefined")

    @property
    def q_ij(self) -> np.ndarray:
        return self.counts.q_ij

    @property
    def eps_ij(self) -> np.ndarray:
        return self.eps.eps_ij


def win_statistic(inp: SignificanceInput) -> float:
    """W = sum_ij N_ij^win / (q_ij (1 - eps_ij)).

    The winning counts are the unequal-outcome coincidences except on the
    (2,2) setting pair, where equal outcomes win.  With zero predictability
    and exact conditional probabilities W reduces to (3 + C) N.  Setting
    pairs that never occurred carry no wins and contribute nothing.
    """
    win = inp.counts.win_counts()
    q = inp.q_ij
    seen = q > 0
    return float((win[seen] / (q[seen] * (1.0 - inp.eps_ij[seen]))).sum())


def expected_w(inp: SignificanceInput) -> tuple[float, float]:
    """Ensemble mean of W and the predictability load eps_bar.

    eps_bar = sum_ij eps_ij / (1 - eps_ij);  <W> = N (3 + eps_bar).
    """
    eps_bar = float((inp.eps_ij / (1.0 - inp.eps_ij)).sum())
    return inp.counts.n * (3.0 + eps_bar), eps_bar


def optimal_fractions(inp: SignificanceInput) -> tuple[np.ndarray, bool]:
    """Adversary-optimal losing-pair fractions f_ij on the simplex.

    Stationary point of the strategy variance:
    f_ij = 1/2 - q_ij + (N-1)/(2N) [eps_ij/(1-eps_ij) - eps_bar q_ij].
    Entries driven negative are clamped to zero and the remainder re-solved
    on the reduced simplex (the stationarity conditions shift all active
    entries by a common amount); the returned flag reports whether that
    branch was taken.
    """
    n = inp.counts.n
    if n < 2:
        raise DataError("need at least two trials")
    q = inp.q_ij
    eps = inp.eps_ij
    eps_bar = float((eps / (1.0 - eps)).sum())
    h = 0.5 - q + (n - 1) / (2.0 * n) * (eps / (1.0 - eps) - eps_bar * q)
    f = h.copy()
    clamped = False
    active = np.ones_like(f, dtype=bool)
    for _ in range(4):
        if not np.any(f[active] < 0):
            break
        clamped = True
        active &= f >= 0
        if not active.any():
            raise InternalError("optimal-fraction projection emptied the simplex")
        f = np.where(active, h + (1.0 - h[active].sum()) / active.sum(), 0.0)
    total = f.sum()
    if abs(total - 1.0) > 1e-9:
        raise InternalError(f"losing fractions sum to {total}, expected 1")
    return f, clamped


def sigma_w_opt(inp: SignificanceInput) -> float:
    """Adversary-optimal standard deviation of W.

    Valid on the branch where every optimal fraction is non-negative (both
    bundled reference datasets are); the clamped branch reuses the same
    expression as an upper-bound approximation and is flagged upstream.
    """
    n = inp.counts.n
    q = inp.q_ij
    eps = inp.eps_ij
    eps_bar = float((eps / (1.0 - eps)).sum())
    var = (n * n / (4.0 * (n - 1.0)) * ((1.0 / q).sum() - 4.0)
           - n * eps_bar
           + n / 4.0 * (eps / (q * (1.0 - eps))).sum()
           - (n - 1.0) / 4.0 * eps_bar ** 2
           + 0.25 * ((n - eps) * eps / (q * (1.0 - eps) ** 2)).sum())
    if var <= 0:
        raise InternalError(f"non-positive strategy variance {var}")
    return math.sqrt(var)


def _log10_half_erfc(nu: float) -> float:
    """log10 of erfc(nu/sqrt2)/2 via the stable normal log-CDF."""
    return log_ndtr(-nu) / _LN10


def nu_chain(inp: SignificanceInput, w: float, w_avg: float, sigma: float):
    """Deviation counts and Gaussian tail probabilities.

    nu_bar = (W - <W>)/sigma; the predictability uncertainties propagate to
    Delta_nu, shrinking the usable deviation count to nu_n = nu_bar /
    (1 + Delta_nu); p_cond = erfc(nu_n/sqrt2)/2, doubled into p_no_m to
    cover the equal chance that the true nu lies below nu_n.
    """
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    n = inp.counts.n
    q = inp.q_ij
    eps = inp.eps_ij
    win = inp.counts.win_counts()
    nu_bar = (w - w_avg) / sigma
    f_opt, clamped = optimal_fractions(inp)
    e_ij = win - n * q - (nu_bar * n / (2.0 * sigma)) * f_opt
    denom = q * (1.0 - eps) ** 2
    d2 = 0.0
    for i in (0, 1):
        d2 += (inp.eps.sigma_a[i] / sigma) ** 2 * float((e_ij[i, :] / denom[i, :]).sum()) ** 2
    for j in (0, 1):
        d2 += (inp.eps.sigma_b[j] / sigma) ** 2 * float((e_ij[:, j] / denom[:, j]).sum()) ** 2
    delta_nu = math.sqrt(d2)
    nu_n = nu_bar / (1.0 + delta_nu)
    p_cond = 0.5 * erfc(nu_n / math.sqrt(2.0))
    # doubling can exceed 1 when the predictability load saturates; a
    # probability is reported, so cap (the deviation count then hits -inf)
    p_no_m = min(2.0 * p_cond, 1.0)
    nu_no_m = math.sqrt(2.0) * erfcinv(2.0 * p_no_m)
    return {
        "nu_bar": nu_bar, "delta_nu": delta_nu, "nu_n": nu_n,
        "p_cond": p_cond, "p_no_m": p_no_m, "nu_no_m": nu_no_m,
        "log10_p_cond": _log10_half_erfc(nu_n),
        "log10_p_no_m": _log10_half_erfc(nu_n) + math.log10(2.0),
        "f_opt": f_opt, "f_opt_clamped": clamped, "cal_e_ij": e_ij,
    }


@dataclass(frozen=True)
class StepDistribution:
    """Per-trial increments of the centered running statistic for one plan.

    A plan fixes the losing setting pair.  On a trial with settings (k,l)
    the plan wins unless (k,l) is the losing pair and the trial is not
    corrupt; a win adds 1/(q_kl (1 - eps_kl)), every trial subtracts
    (3 + eps_bar).
    """

    losing_pair: tuple[int, int]
    probabilities: np.ndarray
    steps: np.ndarray

    def expected_step(self) -> float:
        return float(self.probabilities @ self.steps)

    def p_left_curve(self, n_max: int, merge_decimals: int = 12) -> np.ndarray:
        """P(sum of n i.i.d. steps < 0) for n = 1..n_max, exact enumeration.

        Reachable sums are merged when equal to within the rounding
        resolution; the state count stays polynomial because the support
        has at most five distinct values.
        """
        dist = {0.0: 1.0}
        out = np.empty(n_max)
        pairs = [(float(p), float(s)) for p, s in
                 zip(self.probabilities, self.steps) if p > 0.0]
        for n in range(n_max):
            nxt: dict[float, float] = {}
            for cur, pcur in dist.items():
                for p, s in pairs:
                    key = round(cur + s, merge_decimals)
                    nxt[key] = nxt.get(key, 0.0) + pcur * p
            dist = nxt
            out[n] = sum(p for s, p in dist.items() if s < 0.0)
        return out


def step_distributions(q_ij: np.ndarray, eps_ij: np.ndarray) -> list[StepDistribution]:
    """The four candidate plans' step distributions."""
    q = np.asarray(q_ij, dtype=float)
    eps = np.asarray(eps_ij, dtype=float)
    eps_bar = float((eps / (1.0 - eps)).sum())
    drift = 3.0 + eps_bar
    win_steps = 1.0 / (q * (1.0 - eps)) - drift
    dists = []
    for i in (0, 1):
        for j in (0, 1):
            probs, steps = [], []
            for k in (0, 1):
                for l in (0, 1):
                    p = q[k, l] * eps[k, l] if (k, l) == (i, j) else q[k, l]
                    probs.append(p)
                    steps.append(win_steps[k, l])
            probs.append(q[i, j] * (1.0 - eps[i, j]))
            steps.append(-drift)
            dists.append(StepDistribution(
                losing_pair=(i + 1, j + 1),
                probabilities=np.array(probs), steps=np.array(steps)))
    return dists


@dataclass(frozen=True)
class MemoryBound:
    b: float
    argmax_n: int
    curve: np.ndarray            # p_left,max(n), n = 1..n_max
    per_plan: dict = field(repr=False, default=None)

    def as_dict(self) -> dict:
        return {"B": self.b, "argmax_n": self.argmax_n,
                "p_left_max": self.curve.tolist()}


def memory_bound(q_ij: np.ndarray, eps_ij: np.ndarray,
                 n_max: int = 20) -> MemoryBound:
    """Random-walk bound B = max_n p_left,max(n).

    p_left,max(n) is the largest probability, over the four plans (each
    holding one losing pair), that the centered statistic has moved left
    after n trials.  Computed by exact enumeration of reachable step sums;
    the closed form at n = 1 is max over plans of the total probability of
    negative single steps.
    """
    if n_max < 1:
        raise DomainError("n_max must be at least 1")
    dists = step_distributions(q_ij, eps_ij)
    per_plan = {d.losing_pair: d.p_left_curve(n_max) for d in dists}
    curve = np.max(np.stack(list(per_plan.values())), axis=0)
    argmax = int(curve.argmax())
    return MemoryBound(b=float(curve[argmax]), argmax_n=argmax + 1,
                       curve=curve, per_plan=per_plan)


def memory_bound_n1_closed_form(q_ij: np.ndarray, eps_ij: np.ndarray) -> float:
    """Independent single-trial enumeration of p_left,max(1)."""
    best = 0.0
    for d in step_distributions(q_ij, eps_ij):
        best = max(best, float(d.probabilities[d.steps < 0.0].sum()))
    return best


def final_p(p_no_m: float, b: float, log10_p_no_m: float | None = None):
    """Memory-inflated bound p = p_no_m / (1 - B) and its deviation count.

    The bound is capped at 1 (it is a probability); a capped result reports
    a deviation count of -inf.
    """
    if not 0 <= b < 1:
        raise DomainError(f"memory bound must be in [0, 1), got {b}")
    p = min(p_no_m / (1.0 - b), 1.0)
    nu = math.sqrt(2.0) * erfcinv(2.0 * p)
    if log10_p_no_m is None:
        log10_p = math.log10(p) if p > 0 else -math.inf
    else:
        log10_p = min(log10_p_no_m - math.log10(1.0 - b), 0.0)
    return p, nu, log10_p


@dataclass
class SignificanceReport:
    """Full chain output; keys of :meth:`as_dict` follow the canonical
    report layout (W, W_avg, sigma_W_opt, nu_bar, Delta_nu, nu_n, p_cond,
    p_no_m, nu_no_m, B, p, nu)."""

    w: float
    w_avg: float
    eps_bar: float
    f_opt: np.ndarray
    f_opt_clamped: bool
    sigma_w_opt: float
    nu_bar: float
    delta_nu: float
    nu_n: float
    p_cond: float
    p_no_m: float
    nu_no_m: float
    b: float
    b_argmax_n: int
    p_left_curve: np.ndarray
    p_final: float
    nu_final: float
    log10_p_final: float

    def as_dict(self) -> dict:
        return {
            "W": self.w, "W_avg": self.w_avg, "eps_bar": self.eps_bar,
            "f_opt": self.f_opt.tolist(), "f_opt_clamped": self.f_opt_clamped,
            "sigma_W_opt": self.sigma_w_opt,
            "nu_bar": self.nu_bar, "Delta_nu": self.delta_nu, "nu_n": self.nu_n,
            "p_cond": self.p_cond, "p_no_m": self.p_no_m, "nu_no_m": self.nu_no_m,
            "B": self.b, "B_argmax_n": self.b_argmax_n,
            "p_left_max": self.p_left_curve.tolist(),
            "p": self.p_final, "nu": self.nu_final,
            "log10_p": self.log10_p_final,
        }


def significance_report(counts: CoincidenceCounts, eps: PredictabilityTable,
                        n_max: int = 20) -> SignificanceReport:
    """Run the whole chain on a count table and a predictability table."""
    inp = SignificanceInput(counts=counts, eps=eps)
    w = win_statistic(inp)
    w_avg, eps_bar = expected_w(inp)
    sigma = sigma_w_opt(inp)
    chain = nu_chain(inp, w, w_avg, sigma)
    mem = memory_bound(inp.q_ij, inp.eps_ij, n_max=n_max)
    p, nu, log10_p = final_p(chain["p_no_m"], mem.b, chain["log10_p_no_m"])
    return SignificanceReport(
        w=w, w_avg=w_avg, eps_bar=eps_bar,
        f_opt=chain["f_opt"], f_opt_clamped=chain["f_opt_clamped"],
        sigma_w_opt=sigma,
        nu_bar=chain["nu_bar"], delta_nu=chain["delta_nu"], nu_n=chain["nu_n"],
        p_cond=chain["p_cond"], p_no_m=chain["p_no_m"], nu_no_m=chain["nu_no_m"],
        b=mem.b, b_argmax_n=mem.argmax_n, p_left_curve=mem.curve,
        p_final=p, nu_final=nu, log10_p_final=log10_p,
    )

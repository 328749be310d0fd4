"""Expected Q-value trajectories, their binomial-mixture bounds and the
limit of the SU detection estimates."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import gammaln

from .detection import (average_detection_probability, local_pfa_for_global,
                        or_pfa, threshold_for_pfa)
from .policy import su_q_limit


@dataclass
class ConvergenceSpec:
    alpha: float = 0.1
    epsilon: float = 0.1
    l: int = 1
    n_b: int = 5
    mu: tuple = (1.0, 1.0, 1.0, 1.0, 10.0)
    horizon: int = 2000

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        if self.mu.shape != (self.n_b,):
            raise ValueError("mu needs one value per band")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 1 <= self.l <= self.n_b:
            raise ValueError("l must lie in 1..n_b")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


def binomial_pmf(t, k: int, p: float):
    """C(k,t) p^t (1-p)^(k-t), evaluated through logarithms."""
    t = np.asarray(t)
    if np.any((t < 0) | (t > k)):
        raise ValueError("t must lie in 0..k")
    if p <= 0.0:
        out = (t == 0).astype(float)
    elif p >= 1.0:
        out = (t == k).astype(float)
    else:
        logc = gammaln(k + 1) - gammaln(t + 1) - gammaln(k - t + 1)
        out = np.exp(logc + t * np.log(p) + (k - t) * np.log1p(-p))
    return out if out.ndim else float(out)


def bound_rates(epsilon: float, l: int, n_b: int) -> tuple[float, float]:
    """Per-slot update probabilities of a band under the pessimistic case
    (updated only when explored) and the optimistic one (always selected
    when exploiting)."""
    return epsilon * l / n_b, 1.0 - epsilon * (1.0 - l / n_b)


def su_bound_rates(epsilon: float, l: int, n_b: int) -> tuple[float, float]:
    """Same bounds for the per-link SU estimates."""
    return epsilon * l / n_b ** 2, 1.0 - epsilon * (1.0 - l / n_b ** 2)


def expected_q_bound(spec: ConvergenceSpec, k: int, which: str = "lower") -> np.ndarray:
    """Mixture of the constant-reward trajectory over a binomial count of
    updates by slot ``k``; one value per band."""
    if which not in ("lower", "upper"):
        raise ValueError("which must be 'lower' or 'upper'")
    if not 0 <= k <= spec.horizon:
        raise ValueError("k must lie in 0..horizon")
    p = bound_rates(spec.epsilon, spec.l, spec.n_b)[0 if which == "lower" else 1]
    t = np.arange(k + 1)
    growth = -np.expm1(t * np.log1p(-spec.alpha)) if spec.alpha < 1 else (t > 0).astype(float)
    return spec.mu * float(binomial_pmf(t, k, p) @ growth)


def bound_trajectory(spec: ConvergenceSpec, ks, which: str = "lower") -> np.ndarray:
    """``expected_q_bound`` at each slot of ``ks``; shape (len(ks), n_b)."""
    return np.array([expected_q_bound(spec, int(k), which) for k in ks])


def sample_ks(horizon: int, points: int = 500) -> np.ndarray:
    return np.unique(np.linspace(0, horizon, min(points, horizon + 1)).round().astype(int))


@dataclass
class QTrajectory:
    mean: np.ndarray      # (horizon + 1, n_b), row k is E[Q_k]
    stderr: np.ndarray
    runs: int


def simulate_expected_q(spec: ConvergenceSpec, runs: int,
                        rng: np.random.Generator) -> QTrajectory:
    """Monte Carlo mean of the band Q-values under epsilon-greedy selection.

    Exploration picks ``l`` bands uniformly at random; exploitation picks the
    ``l`` largest Q-values with random tie-breaks.  A selected band pays
    ``2 * mu`` with probability 1/2 and nothing otherwise, so its mean reward
    is ``mu``.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    n_b, l, a = spec.n_b, spec.l, spec.alpha
    q = np.zeros((runs, n_b))
    s1 = np.zeros((spec.horizon + 1, n_b))
    s2 = np.zeros((spec.horizon + 1, n_b))
    rows = np.arange(runs)[:, None]
    for k in range(1, spec.horizon + 1):
        tie = rng.random((runs, n_b))
        explore = rng.random(runs) < spec.epsilon
        greedy = np.lexsort((tie, -q), axis=-1)[:, :l]
        uniform = np.argsort(rng.random((runs, n_b)), axis=1)[:, :l]
        chosen = np.where(explore[:, None], uniform, greedy)
        gate = rng.random((runs, l)) < 0.5
        r = np.where(gate, 2.0 * spec.mu[chosen], 0.0)
        q[rows, chosen] += a * (r - q[rows, chosen])
        s1[k] = q.sum(axis=0)
        s2[k] = (q * q).sum(axis=0)
    mean = s1 / runs
    var = np.maximum(s2 / runs - mean ** 2, 0.0) * (runs / max(runs - 1, 1))
    return QTrajectory(mean, np.sqrt(var / runs), runs)


# ---- SU estimate limits ---------------------------------------------------

def su_q_limit_matrix(mean_snr_db, idle_prob, d: int, global_pfa: float,
                      num_samples: int, fading: bool = True) -> np.ndarray:
    """Limit of each SU's detection estimate on each band when it always
    senses in groups of ``d`` drawn evenly from the other SUs.

    ``mean_snr_db`` is (n_su, n_b); ``idle_prob`` has one entry per band.
    The fused detection probability in the denominator is averaged over the
    possible partner groups, matching the long-run share of updates.
    """
    snr = np.asarray(mean_snr_db, dtype=float)
    n_su, n_b = snr.shape
    p0 = np.broadcast_to(np.asarray(idle_prob, dtype=float), (n_b,))
    pf_s = local_pfa_for_global(global_pfa, d)
    pf_fc = or_pfa(pf_s, d)
    thr = threshold_for_pfa(pf_s, num_samples)
    pd = np.asarray(average_detection_probability(snr, num_samples, thr, fading))
    out = np.empty_like(pd)
    for s in range(n_su):
        others = [j for j in range(n_su) if j != s]
        groups = list(combinations(others, d - 1))
        for b in range(n_b):
            miss_partner = np.mean([np.prod([1.0 - pd[j, b] for j in g]) for g in groups])
            pd_fc = 1.0 - (1.0 - pd[s, b]) * miss_partner
            out[s, b] = su_q_limit(1.0 - p0[b], p0[b], pd[s, b], pf_s, pd_fc, pf_fc)
    return out

"""Two-stage epsilon-greedy sensing policy and baseline band selectors."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .assignment import PD_CLIP, InfeasibleError, SapInstance, SOLVERS

EXPLORE = "exploration"
EXPLOIT = "exploitation"


def q_update(q: float, r: float, alpha: float) -> float:
    return q + alpha * (r - q)


def band_reward(accessed: bool, band_free: bool, throughput: float) -> float:
    return float(throughput) if (accessed and band_free) else 0.0


def su_reward(local_decision: int, fc_decision: int, current_q: float) -> float:
    """Local decision scored against the fusion center; no information when
    the center declares the band idle, so the Q-value is returned as is."""
    return float(local_decision) if fc_decision == 1 else current_q


def su_q_limit(p1: float, p0: float, pd_s: float, pf_s: float,
               pd_fc: float, pf_fc: float) -> float:
    """Asymptotic expected SU Q-value under OR fusion."""
    den = p1 * pd_fc + p0 * pf_fc
    if den <= 0:
        raise ValueError("fusion-center decision probability must be positive")
    return (p1 * pd_s + p0 * pf_s) / den


def select_bands_exploit(band_q, l: int, rng: np.random.Generator) -> list[int]:
    """Indices of the ``l`` largest Q-values; ties broken uniformly."""
    q = np.asarray(band_q, dtype=float)
    if not 1 <= l <= q.size:
        raise ValueError("l must lie in 1..len(band_q)")
    # random priority as secondary key gives uniform tie-breaking
    keys = np.lexsort((rng.random(q.size), -q))
    return sorted(keys[:l].tolist())


@dataclass
class QTables:
    band_q: np.ndarray
    su_q: np.ndarray
    band_count: np.ndarray = None
    su_count: np.ndarray = None

    @classmethod
    def zeros(cls, n_su: int, n_b: int, su_q_init: float = 0.5) -> "QTables":
        return cls(np.zeros(n_b), np.full((n_su, n_b), float(su_q_init)))

    def __post_init__(self):
        if self.band_count is None:
            self.band_count = np.zeros(self.band_q.shape, dtype=np.int64)
        if self.su_count is None:
            self.su_count = np.zeros(self.su_q.shape, dtype=np.int64)

    def update_band(self, b: int, reward: float, alpha: float) -> None:
        self.band_q[b] += alpha * (reward - self.band_q[b])
        self.band_count[b] += 1

    def update_su(self, s: int, b: int, local: int, fc: int, alpha: float) -> None:
        if fc != 1:
            return
        self.su_q[s, b] += alpha * (local - self.su_q[s, b])
        self.su_count[s, b] += 1


@dataclass
class PolicyConfig:
    epsilon: float = 0.1
    alpha1: float = 0.01
    alpha2: float = 0.1
    num_bands_sought: int = 3
    diversity: int = 2
    su_q_init: float = 0.5
    solver: str = "bb"

    def validate(self, n_su: int, n_b: int) -> None:
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        for name in ("alpha1", "alpha2"):
            a = getattr(self, name)
            if not 0.0 < a <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if not 1 <= self.num_bands_sought <= n_b:
            raise ValueError("num_bands_sought must lie in 1..n_b")
        if not 1 <= self.diversity <= n_su:
            raise ValueError("diversity must lie in 1..n_su")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver '{self.solver}'")


@dataclass
class HoppingCodebook:
    """Cyclic-shift hopping sequences plus the SU-group rotation.

    ``sequences[q][i] == (i + shifts[q]) % n_b``. Period ``p`` uses
    ``partitions[p % len(partitions)]``, whose ``q``-th group follows
    sequence ``q``.
    """

    n_b: int
    n_su: int
    d: int
    shifts: list[int]
    sequences: list[list[int]]
    partitions: list[list[tuple[int, ...]]]

    @property
    def period(self) -> int:
        return self.n_b

    @property
    def n_groups(self) -> int:
        return len(self.sequences)

    def column(self, index: int) -> list[tuple[int, tuple[int, ...]]]:
        """(band, SU group) pairs sensed at exploration instant ``index``."""
        i = index % self.n_b
        part = self.partitions[(index // self.n_b) % len(self.partitions)]
        return [(self.sequences[q][i], part[q]) for q in range(self.n_groups)]


def make_hopping_codebook(n_b: int, n_s: int, d: int, shifts=None) -> HoppingCodebook:
    n_groups = n_s // d
    if n_groups < 1:
        raise ValueError("need at least one SU group (n_s >= d)")
    if shifts is None:
        shifts = list(range(n_groups))
    shifts = [int(s) for s in shifts]
    if len(shifts) != n_groups:
        raise ValueError(f"need {n_groups} shifts, got {len(shifts)}")
    if len({s % n_b for s in shifts}) != len(shifts):
        raise ValueError("duplicate shifts modulo n_b")
    sequences = [[(i + dq) % n_b for i in range(n_b)] for dq in shifts]
    return HoppingCodebook(n_b, n_s, d, shifts, sequences,
                           _rotation_partitions(n_s, d, n_groups))


def _rotation_partitions(n_s: int, d: int, n_groups: int) -> list[list[tuple[int, ...]]]:
    """Round-robin over all d-subsets: each partition places ``n_groups``
    disjoint groups, seeded with the next still-unused subsets, until every
    d-subset of SUs has appeared in some group."""
    combos = list(itertools.combinations(range(n_s), d))
    unused = list(combos)
    partitions = []
    while unused:
        groups: list[tuple[int, ...]] = []
        taken: set[int] = set()
        for combo in list(unused):
            if len(groups) == n_groups:
                break
            if taken.isdisjoint(combo):
                groups.append(combo)
                taken.update(combo)
                unused.remove(combo)
        for combo in combos:
            if len(groups) == n_groups:
                break
            if taken.isdisjoint(combo):
                groups.append(combo)
                taken.update(combo)
                if combo in unused:
                    unused.remove(combo)
        partitions.append(groups)
    return partitions


@dataclass
class SensingDirective:
    bands: list[int]
    sensors: dict[int, list[int]]        # band -> SUs sensing it
    phase: str

    def assignment(self, n_su: int, n_b: int) -> np.ndarray:
        x = np.zeros((n_su, n_b), dtype=np.int8)
        for b, sus in self.sensors.items():
            x[sus, b] = 1
        return x

    @property
    def n_sensings(self) -> int:
        return sum(len(v) for v in self.sensors.values())


def spread_assignment(bands, n_su: int, capacities) -> dict[int, list[int]]:
    """Every SU senses up to K_s of the chosen bands, round-robin."""
    bands = list(bands)
    out = {b: [] for b in bands}
    if not bands:
        return out
    for s in range(n_su):
        for j in range(min(int(capacities[s]), len(bands))):
            out[bands[(s + j) % len(bands)]].append(s)
    return out


def exploration_directive(codebook: HoppingCodebook, index: int) -> SensingDirective:
    col = codebook.column(index)
    return SensingDirective([b for b, _ in col], {b: list(g) for b, g in col}, EXPLORE)


def step_policy(q: QTables, cfg: PolicyConfig, codebook: HoppingCodebook,
                explore_index: int, rng: np.random.Generator, *,
                capacities, weights, miss_targets, safety_margin: float = 1.0,
                solve=None) -> SensingDirective:
    """One sensing decision of the proposed policy.

    With probability epsilon the next hopping-code column is sensed;
    otherwise the top-L bands by band Q-value are assigned sensors by solving
    the sensing assignment problem on the current SU Q-values. Infeasible
    assignment problems fall back to spreading all SUs over the chosen bands.
    ``solve`` overrides the configured solver (used for timing probes).
    """
    if rng.random() < cfg.epsilon:
        return exploration_directive(codebook, explore_index)
    bands = select_bands_exploit(q.band_q, cfg.num_bands_sought, rng)
    pd_hat = np.clip(q.su_q[:, bands], PD_CLIP, 1.0 - PD_CLIP)
    inst = SapInstance(weights, pd_hat, np.asarray(miss_targets)[bands], capacities,
                       safety_margin)
    solver = solve or SOLVERS[cfg.solver]
    try:
        sol = solver(inst)
    except InfeasibleError:
        return SensingDirective(bands, spread_assignment(bands, len(weights), capacities),
                                EXPLOIT)
    sensors = {b: np.flatnonzero(sol.x[:, j]).tolist() for j, b in enumerate(bands)}
    return SensingDirective(bands, sensors, EXPLOIT)


class DiscountedUCB:
    """Discounted UCB band selector.

    Index of band b: discounted mean + 2 * B * sqrt(xi * log(n) / N(b)), with
    N(b) the discounted visit count, n their sum, and B the largest reward seen
    so far. Unvisited bands go first.
    """

    def __init__(self, n_b: int, gamma: float = 0.99, xi: float = 0.6):
        if not 0.0 < gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        self.n_b = n_b
        self.gamma = gamma
        self.xi = xi
        self.counts = np.zeros(n_b)
        self.sums = np.zeros(n_b)
        self.visited = np.zeros(n_b, dtype=bool)
        self.b_scale = 0.0

    def indices(self) -> np.ndarray:
        n = self.counts.sum()
        with np.errstate(divide="ignore", invalid="ignore"):
            mean = np.where(self.counts > 0, self.sums / self.counts, 0.0)
            pad = 2.0 * self.b_scale * np.sqrt(self.xi * math.log(max(n, 1.0)) / self.counts)
        return np.where(self.counts > 0, mean + pad, np.inf)

    def select(self, l: int, rng: np.random.Generator) -> list[int]:
        if not self.visited.all():
            fresh = np.flatnonzero(~self.visited)
            rng.shuffle(fresh)
            picks = fresh[:l].tolist()
            if len(picks) < l:
                rest = [b for b in select_bands_exploit(self.indices(), self.n_b, rng)
                        if b not in picks]
                picks += rest[:l - len(picks)]
            return sorted(picks)
        return select_bands_exploit(self.indices(), l, rng)

    def update(self, rewards: dict[int, float]) -> None:
        self.counts *= self.gamma
        self.sums *= self.gamma
        for b, r in rewards.items():
            self.counts[b] += 1.0
            self.sums[b] += r
            self.visited[b] = True
            self.b_scale = max(self.b_scale, r)


def ducb_select(history, n_b: int, gamma: float, xi: float = 0.6,
                b_scale: float | None = None,
                rng: np.random.Generator | None = None) -> int:
    """DUCB choice from a time-ordered ``(band, reward)`` history."""
    pol = DiscountedUCB(n_b, gamma, xi)
    for b, r in history:
        pol.update({b: r})
    if b_scale is not None:
        pol.b_scale = b_scale
    return pol.select(1, rng or np.random.default_rng())[0]


class BeliefMyopic:
    """Parameter-informed baseline: tracks the idle belief of every band and
    senses the ``l`` bands with the largest belief x mean throughput."""

    def __init__(self, p00, p11, mean_throughputs, beliefs=None):
        self.p00 = np.asarray(p00, dtype=float).copy()
        self.p11 = np.asarray(p11, dtype=float).copy()
        self.mu = np.asarray(mean_throughputs, dtype=float).copy()
        if beliefs is None:
            leave_idle, leave_busy = 1 - self.p00, 1 - self.p11
            tot = leave_idle + leave_busy
            beliefs = np.where(tot > 0, leave_busy / np.where(tot > 0, tot, 1.0), 0.5)
        self.beliefs = np.asarray(beliefs, dtype=float).copy()

    def propagate(self) -> None:
        w = self.beliefs
        self.beliefs = w * self.p00 + (1.0 - w) * (1.0 - self.p11)

    def observe(self, fc_decisions: dict[int, int]) -> None:
        for b, d in fc_decisions.items():
            self.beliefs[b] = 0.0 if d else 1.0

    def set_params(self, p00, p11, mu, perm=None) -> None:
        self.p00 = np.asarray(p00, dtype=float).copy()
        self.p11 = np.asarray(p11, dtype=float).copy()
        self.mu = np.asarray(mu, dtype=float).copy()
        if perm is not None:
            self.beliefs = self.beliefs[perm]

    def select(self, l: int, rng: np.random.Generator) -> list[int]:
        return belief_myopic_select(self.beliefs, self.mu, l, rng)


def belief_myopic_select(beliefs, mean_throughputs, l: int,
                         rng: np.random.Generator | None = None) -> list[int]:
    score = np.asarray(beliefs, dtype=float) * np.asarray(mean_throughputs, dtype=float)
    return select_bands_exploit(score, l, rng or np.random.default_rng())


def genie_select(true_states, throughputs, l: int) -> list[int]:
    """The ``l`` idle bands with the highest instantaneous throughput."""
    idle = [b for b, st in enumerate(true_states) if st == 0]
    idle.sort(key=lambda b: (-throughputs[b], b))
    return sorted(idle[:l])

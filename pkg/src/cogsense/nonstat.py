"""Band-selection experiments under permuted (non-stationary) statistics.

Only the first stage of the policy is exercised: the fusion center is
abstracted to fixed miss and false-alarm probabilities. All policies of a run
see the same occupancy trace and the same detection noise, and the
permutation instants are shared by every run so that their effect stays
visible in the run average.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import draw_permutation_schedule, make_scenario
from .policy import (BeliefMyopic, DiscountedUCB, genie_select, make_hopping_codebook,
                     q_update, select_bands_exploit)

SCENARIOS = {
    "markov": dict(mu=[11.0, 21.0, 31.0, 41.0, 51.0],
                   p00=[0.5, 0.9, 0.6, 0.8, 0.8],
                   p11=[0.9, 0.31, 0.7, 0.9, 0.3]),
    # i.i.d. occupancy: P(idle) = P0 whatever the previous state
    "bernoulli": dict(mu=[11.0, 21.0, 31.0, 41.0, 51.0],
                      p00=[0.87, 0.17, 0.43, 0.33, 0.78],
                      p11=[0.13, 0.83, 0.57, 0.67, 0.22]),
}

NONSTAT_POLICIES = ("proposed", "ducb", "myopic", "genie")


@dataclass
class NonstatConfig:
    scenario: str = "markov"
    l: int = 1
    p_miss: float = 0.1
    p_fa: float = 0.01
    epsilon: float = 0.1
    alpha: float = 0.1
    horizon: int = 5000
    permutations: int = 3
    runs: int = 100
    seed: int = 12345
    ducb_gamma: float = 0.99
    ducb_xi: float = 0.6
    stochastic_throughput: bool = False
    policies: tuple = NONSTAT_POLICIES
    mu: list = field(default=None)
    p00: list = field(default=None)
    p11: list = field(default=None)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        base = SCENARIOS[self.scenario]
        for k in ("mu", "p00", "p11"):
            if getattr(self, k) is None:
                setattr(self, k, list(base[k]))
        if self.scenario == "bernoulli":
            # the informed baseline is not part of the i.i.d. comparison
            self.policies = tuple(p for p in self.policies if p != "myopic")
        for p in self.policies:
            if p not in NONSTAT_POLICIES:
                raise ValueError(f"unknown policy {p!r}")
        if not 1 <= self.l <= len(self.mu):
            raise ValueError("l must lie in 1..n_b")

    @property
    def n_b(self) -> int:
        return len(self.mu)


@dataclass
class Trace:
    states: np.ndarray        # (horizon, n_b)
    mu: np.ndarray            # (horizon, n_b) mean throughput in force
    p00: np.ndarray
    p11: np.ndarray
    gain: np.ndarray          # (horizon, n_b) throughput multiplier
    detect_u: np.ndarray      # (horizon, n_b) uniforms driving the FC decision
    perms: dict               # slot index (0-based) -> permutation


def make_trace(cfg: NonstatConfig, schedule, rng: np.random.Generator) -> Trace:
    sc = make_scenario(cfg.p00, cfg.p11, cfg.mu, 1, 0.0, 0.0, rng, schedule)
    h, n_b = cfg.horizon, cfg.n_b
    states = np.zeros((h, n_b), dtype=np.int8)
    mu = np.zeros((h, n_b))
    p00 = np.zeros((h, n_b))
    p11 = np.zeros((h, n_b))
    perms = {}
    for k in range(h):
        v = sc.version
        states[k] = sc.advance(rng)
        if sc.version != v:
            perms[k] = sc.last_perm.copy()
        mu[k] = sc.mean_throughputs()
        p00[k] = [p.chain.p00 for p in sc.profiles]
        p11[k] = [p.chain.p11 for p in sc.profiles]
    gain = rng.exponential(1.0, (h, n_b)) if cfg.stochastic_throughput else np.ones((h, n_b))
    return Trace(states, mu, p00, p11, gain, rng.random((h, n_b)), perms)


def _fc_busy(state: int, u: float, cfg: NonstatConfig) -> int:
    return int(u < (1.0 - cfg.p_miss)) if state else int(u < cfg.p_fa)


def run_policy(name: str, trace: Trace, cfg: NonstatConfig,
               rng: np.random.Generator) -> np.ndarray:
    """Per-slot throughput of one policy on a fixed trace."""
    h, n_b, l = cfg.horizon, cfg.n_b, cfg.l
    out = np.zeros(h)
    q = np.zeros(n_b)
    code = make_hopping_codebook(n_b, l, 1)
    explored = 0
    ducb = DiscountedUCB(n_b, cfg.ducb_gamma, cfg.ducb_xi) if name == "ducb" else None
    myo = BeliefMyopic(trace.p00[0], trace.p11[0], trace.mu[0]) if name == "myopic" else None
    for k in range(h):
        st, tp = trace.states[k], trace.mu[k] * trace.gain[k]
        if name == "proposed":
            if rng.random() < cfg.epsilon:
                bands = [b for b, _ in code.column(explored)]
                explored += 1
            else:
                bands = select_bands_exploit(q, l, rng)
        elif name == "ducb":
            bands = ducb.select(l, rng)
        elif name == "myopic":
            if k in trace.perms:
                myo.set_params(trace.p00[k], trace.p11[k], trace.mu[k], trace.perms[k])
            myo.propagate()
            bands = myo.select(l, rng)
        else:
            bands = genie_select(st, tp, l)
        fc, rewards = {}, {}
        for b in bands:
            fc[b] = _fc_busy(int(st[b]), trace.detect_u[k, b], cfg)
            rewards[b] = float(tp[b]) if (fc[b] == 0 and st[b] == 0) else 0.0
        out[k] = sum(rewards.values())
        if name == "proposed":
            for b, r in rewards.items():
                q[b] = q_update(q[b], r, cfg.alpha)
        elif ducb is not None:
            ducb.update(rewards)
        elif myo is not None:
            myo.observe(fc)
    return out


@dataclass
class NonstatResult:
    cfg: NonstatConfig
    schedule: list
    throughput: dict          # policy -> (runs, horizon)

    def mean_curve(self, name: str) -> np.ndarray:
        return self.throughput[name].mean(axis=0)

    def totals(self) -> dict:
        """Horizon-total throughput averaged over runs, with standard error."""
        out = {}
        for name, tp in self.throughput.items():
            tot = tp.sum(axis=1)
            se = float(tot.std(ddof=1) / np.sqrt(len(tot))) if len(tot) > 1 else 0.0
            out[name] = (float(tot.mean()), se)
        return out


def run_nonstationary(cfg: NonstatConfig) -> NonstatResult:
    schedule = draw_permutation_schedule(cfg.horizon, cfg.permutations,
                                         np.random.default_rng([cfg.seed, 4]))
    tp = {p: np.zeros((cfg.runs, cfg.horizon)) for p in cfg.policies}
    for r in range(cfg.runs):
        trace = make_trace(cfg, schedule, np.random.default_rng([cfg.seed + r, 0]))
        for i, name in enumerate(cfg.policies):
            rng = np.random.default_rng([cfg.seed + r, 1, i])
            tp[name][r] = run_policy(name, trace, cfg, rng)
    return NonstatResult(cfg, schedule, tp)


def nonstat_rows(res: NonstatResult, window: int = 50) -> list[str]:
    """CSV rows of run-averaged throughput, block-averaged over ``window``
    slots, plus the running cumulative mean."""
    rows = ["curve,slot,mean_throughput,cumulative_mean_throughput"]
    h = res.cfg.horizon
    for name in res.throughput:
        m = res.mean_curve(name)
        cum = np.cumsum(m) / np.arange(1, h + 1)
        for start in range(0, h, window):
            end = min(start + window, h)
            rows.append(f"{name},{end},{m[start:end].mean():.10g},{cum[end - 1]:.10g}")
    return rows

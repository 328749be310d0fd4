"""Primary-user occupancy, shadowing/fading and throughput per subband.

State 0 of a chain means the subband is idle, state 1 that a primary user
occupies it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _check_prob(name: str, p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p


@dataclass
class GilbertElliot:
    """Two-state Markov chain for one subband."""

    p00: float
    p11: float
    state: int = 0

    def __post_init__(self):
        self.p00 = _check_prob("p00", self.p00)
        self.p11 = _check_prob("p11", self.p11)
        if self.state not in (0, 1):
            raise ValueError(f"state must be 0 or 1, got {self.state}")

    def next_state(self, u: float) -> int:
        """Transition driven by a uniform draw ``u`` in [0, 1)."""
        if self.state == 0:
            self.state = 0 if u < self.p00 else 1
        else:
            self.state = 1 if u < self.p11 else 0
        return self.state

    @property
    def idle_prob(self) -> float:
        return stationary_idle_prob(self.p00, self.p11)


def step_markov(chain: GilbertElliot, rng: np.random.Generator) -> int:
    return chain.next_state(rng.random())


def stationary_idle_prob(p00: float, p11: float) -> float:
    """Stationary probability of the idle state."""
    leave_idle = 1.0 - p00
    leave_busy = 1.0 - p11
    if leave_idle + leave_busy <= 0.0:
        raise ValueError("no unique stationary distribution")
    return leave_busy / (leave_idle + leave_busy)


def draw_instant_snr(mean_snr_db, rng: np.random.Generator | None = None,
                     fading: bool = True, size=None):
    """Linear SNR for one sensing slot: shadowed mean times a unit-mean
    exponential power gain (Rayleigh block fading).

    ``-inf`` dB means no signal and maps to 0.
    """
    mean_lin = np.power(10.0, np.asarray(mean_snr_db, dtype=float) / 10.0)
    if not fading:
        out = np.broadcast_to(mean_lin, size) if size is not None else mean_lin
        return out if np.ndim(out) else float(out)
    shape = size if size is not None else np.shape(mean_lin)
    gain = rng.exponential(1.0, size=shape)
    out = mean_lin * gain
    return out if np.ndim(out) else float(out)


@dataclass
class SubbandProfile:
    chain: GilbertElliot
    mean_throughput: float
    mean_snr_db: np.ndarray
    shadow_std_db: float = 9.0

    def __post_init__(self):
        if self.mean_throughput < 0:
            raise ValueError("mean_throughput must be non-negative")
        self.mean_snr_db = np.asarray(self.mean_snr_db, dtype=float)

    def params(self) -> tuple[float, float, float]:
        return (self.chain.p00, self.chain.p11, self.mean_throughput)


def instantaneous_throughput(profile: SubbandProfile,
                             rng: np.random.Generator | None = None,
                             stochastic: bool = False) -> float:
    if not stochastic or profile.mean_throughput == 0.0:
        return float(profile.mean_throughput)
    return float(profile.mean_throughput * rng.exponential(1.0))


@dataclass
class ScenarioState:
    """All subbands of one simulation run."""

    profiles: list[SubbandProfile]
    slot_index: int = 0
    permutation_schedule: list[int] = field(default_factory=list)

    version: int = field(init=False, default=0)
    last_perm: np.ndarray | None = field(init=False, default=None, repr=False)
    _pending: set[int] = field(init=False, repr=False, default_factory=set)

    def __post_init__(self):
        if len(self.profiles) < 1:
            raise ValueError("need at least one subband")
        self.permutation_schedule = sorted(int(k) for k in self.permutation_schedule)
        self._pending = set(self.permutation_schedule)

    @property
    def n_bands(self) -> int:
        return len(self.profiles)

    @property
    def n_su(self) -> int:
        return len(self.profiles[0].mean_snr_db)

    def states(self) -> np.ndarray:
        return np.array([p.chain.state for p in self.profiles], dtype=np.int8)

    def mean_throughputs(self) -> np.ndarray:
        return np.array([p.mean_throughput for p in self.profiles])

    def snr_db_matrix(self) -> np.ndarray:
        """Mean SNR in dB, shape (n_su, n_bands)."""
        return np.column_stack([p.mean_snr_db for p in self.profiles])

    def advance(self, rng: np.random.Generator) -> np.ndarray:
        """Move to the next slot: permute if scheduled, then step every chain
        with one vector of uniforms. Returns the new occupancy vector."""
        self.slot_index += 1
        if self.slot_index in self._pending:
            permute_statistics(self, rng)
        u = rng.random(len(self.profiles))
        for prof, ui in zip(self.profiles, u):
            prof.chain.next_state(ui)
        return self.states()


def permute_statistics(state: ScenarioState, rng: np.random.Generator,
                       perm: np.ndarray | None = None) -> ScenarioState:
    """Shuffle whole subband profiles (chain parameters and current state,
    mean throughput, SNR map) with one uniform random permutation."""
    if perm is None:
        perm = rng.permutation(state.n_bands)
    state.profiles = [state.profiles[i] for i in perm]
    state.last_perm = np.asarray(perm)
    state.version += 1
    return state


def draw_permutation_schedule(horizon: int, count: int,
                              rng: np.random.Generator) -> list[int]:
    """``count`` distinct slot indices drawn uniformly from 2..horizon."""
    if count <= 0 or horizon < 2:
        return []
    count = min(count, horizon - 1)
    picks = rng.choice(np.arange(2, horizon + 1), size=count, replace=False)
    return sorted(int(k) for k in picks)


def make_scenario(p00, p11, mean_throughput, n_su: int, network_snr_db: float,
                  shadow_std_db: float, rng: np.random.Generator,
                  permutation_schedule=(), initial_states=None) -> ScenarioState:
    """Build a scenario with log-normal shadowing drawn once per (SU, band)
    link and chain states drawn from their stationary distributions."""
    p00 = np.atleast_1d(np.asarray(p00, dtype=float))
    p11 = np.atleast_1d(np.asarray(p11, dtype=float))
    mu = np.atleast_1d(np.asarray(mean_throughput, dtype=float))
    n_b = len(mu)
    p00 = np.broadcast_to(p00, (n_b,))
    p11 = np.broadcast_to(p11, (n_b,))
    snr = network_snr_db + shadow_std_db * rng.standard_normal((n_su, n_b))
    if initial_states is None:
        u = rng.random(n_b)
        initial_states = []
        for a, b, ui in zip(p00, p11, u):
            try:
                idle = stationary_idle_prob(a, b)
            except ValueError:
                idle = 0.5
            initial_states.append(0 if ui < idle else 1)
    profiles = [
        SubbandProfile(GilbertElliot(p00[b], p11[b], int(initial_states[b])),
                       float(mu[b]), snr[:, b], shadow_std_db)
        for b in range(n_b)
    ]
    return ScenarioState(profiles, 0, list(permutation_schedule))

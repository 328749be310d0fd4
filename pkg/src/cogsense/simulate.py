"""Slot-loop engine, metrics and multi-run experiments.

Seeding: run ``r`` of an experiment with base seed ``S`` owns three
independent streams, ``default_rng([S + r, 0])`` for the environment
(occupancy, fading, throughput, permutation instants),
``default_rng([S + r, 1])`` for policy randomness and
``default_rng([S + r, 2])`` for receiver noise.  A fixed network draws its
shadowing from ``default_rng([S, 3])`` so every run shares it.
"""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assignment import InfeasibleError, SOLVERS
from .channel import draw_permutation_schedule, make_scenario, stationary_idle_prob
from .config import ScenarioConfig
from .detection import average_detection_probability, local_pfa_for_global, threshold_for_pfa
from .policy import (EXPLORE, BeliefMyopic, DiscountedUCB, PolicyConfig, QTables,
                     SensingDirective, genie_select,
                     make_hopping_codebook, spread_assignment, step_policy)


@dataclass
class SlotOutcome:
    slot: int
    directive: SensingDirective
    states: np.ndarray
    local: dict[int, list[int]]
    fc: dict[int, int]
    accessed: list[int]
    rewards: dict[int, float]
    collisions: list[int]
    n_sensors: int
    su_throughput: float
    genie_throughput: float
    occupied_sensed: int
    missed: int

    @property
    def phase(self) -> str:
        return self.directive.phase


class SolverTimer:
    """Solves with the configured solver while timing BB and IH on the same
    instance."""

    def __init__(self, primary: str):
        self.primary = primary
        self.seconds = {"bb": 0.0, "ih": 0.0}
        self.calls = 0

    def __call__(self, inst):
        results = {}
        for name in ("bb", "ih"):
            t0 = time.perf_counter()
            try:
                results[name] = SOLVERS[name](inst)
            except InfeasibleError as exc:
                results[name] = exc
            self.seconds[name] += time.perf_counter() - t0
        self.calls += 1
        out = results[self.primary]
        if isinstance(out, Exception):
            raise out
        return out


class Simulation:
    """One independent run: scenario, policy state and random streams."""

    def __init__(self, cfg: ScenarioConfig, run_index: int = 0):
        self.cfg = cfg
        base = cfg.seed + run_index
        self.env_rng = np.random.default_rng([base, 0])
        self.policy_rng = np.random.default_rng([base, 1])
        self.sense_rng = np.random.default_rng([base, 2])
        n_s, n_b = cfg.n_s, cfg.n_b
        self.n_s, self.n_b = n_s, n_b

        p00, p11, mu = cfg.per_band("p00"), cfg.per_band("p11"), cfg.per_band("mu")
        schedule = draw_permutation_schedule(cfg.horizon, cfg.permutations, self.env_rng)
        init = []
        for a, b, u in zip(p00, p11, self.env_rng.random(n_b)):
            try:
                idle = stationary_idle_prob(a, b)
            except ValueError:
                idle = 0.5
            init.append(0 if u < idle else 1)
        net_rng = np.random.default_rng([cfg.seed, 3]) if cfg.fixed_network else self.env_rng
        self.scenario = make_scenario(p00, p11, mu, n_s, cfg.resolved_snr_db(),
                                      cfg.shadow_std_db, net_rng, schedule, init)
        self._refresh_links()

        self.capacities = cfg.per_su("k_s", int)
        self.weights = cfg.per_su("weights")
        self.miss_targets = cfg.per_band("p_miss_target")
        max_d = int(self.capacities.sum())
        self.thresholds = [0.0] + [
            threshold_for_pfa(local_pfa_for_global(cfg.p_f_fc, d), cfg.num_samples)
            for d in range(1, max(max_d, n_s) + 1)
        ]

        eps = 1.0 if cfg.policy == "fixed_hopping" else cfg.epsilon
        self.pcfg = PolicyConfig(eps, cfg.alpha1, cfg.alpha2, cfg.l, cfg.d, cfg.su_q_init,
                                 cfg.solver)
        self.pcfg.validate(n_s, n_b)
        self.q = QTables.zeros(n_s, n_b, cfg.su_q_init)
        self.codebook = make_hopping_codebook(n_b, n_s, cfg.d)
        self.explore_index = 0
        self.timer = SolverTimer(cfg.solver) if cfg.time_solvers else None
        self.ducb = DiscountedUCB(n_b, cfg.ducb_gamma, cfg.ducb_xi) if cfg.policy == "ducb" else None
        self.myopic = BeliefMyopic(p00, p11, mu) if cfg.policy == "myopic" else None
        self.slot = 0

    def _refresh_links(self) -> None:
        self._version = self.scenario.version
        self.mean_snr_lin = np.power(10.0, self.scenario.snr_db_matrix() / 10.0)
        self.mu = self.scenario.mean_throughputs()

    # -- one slot --------------------------------------------------------
    def directive(self, states: np.ndarray, throughput: np.ndarray) -> SensingDirective:
        cfg, rng = self.cfg, self.policy_rng
        if cfg.policy in ("proposed", "fixed_hopping"):
            d = step_policy(self.q, self.pcfg, self.codebook, self.explore_index, rng,
                            capacities=self.capacities, weights=self.weights,
                            miss_targets=self.miss_targets,
                            safety_margin=cfg.safety_margin, solve=self.timer)
            if d.phase == EXPLORE:
                self.explore_index += 1
            return d
        if cfg.policy == "ducb":
            bands = self.ducb.select(cfg.l, rng)
        elif cfg.policy == "myopic":
            self.myopic.propagate()
            bands = self.myopic.select(cfg.l, rng)
        else:
            bands = genie_select(states, throughput, cfg.l)
        return SensingDirective(bands, spread_assignment(bands, self.n_s, self.capacities),
                                "baseline")

    def run_slot(self) -> SlotOutcome:
        cfg = self.cfg
        self.slot += 1
        env = self.env_rng
        states = self.scenario.advance(env)
        if self.scenario.version != self._version:
            self._refresh_links()
            if self.myopic is not None:
                prof = self.scenario.profiles
                self.myopic.set_params([p.chain.p00 for p in prof], [p.chain.p11 for p in prof],
                                       self.mu, self.scenario.last_perm)
        gains = env.exponential(1.0, (self.n_s, self.n_b)) if cfg.fading else 1.0
        snr = self.mean_snr_lin * gains
        if cfg.stochastic_throughput:
            throughput = self.mu * env.exponential(1.0, self.n_b)
        else:
            throughput = self.mu

        directive = self.directive(states, throughput)

        # local sensing: one energy statistic per (SU, band) pair
        pairs_s, pairs_b, thr = [], [], []
        for b, sus in directive.sensors.items():
            t = self.thresholds[len(sus)]
            for s in sus:
                pairs_s.append(s)
                pairs_b.append(b)
                thr.append(t)
        local: dict[int, list[int]] = {b: [] for b in directive.sensors}
        if pairs_s:
            ps, pb = np.array(pairs_s), np.array(pairs_b)
            sig = np.where(states[pb] == 1, snr[ps, pb], 0.0)
            energy = self.sense_rng.noncentral_chisquare(cfg.num_samples, cfg.num_samples * sig)
            dec = (energy > np.array(thr)).tolist()
            for s, b, dcs in zip(pairs_s, pairs_b, dec):
                local[b].append(int(dcs))

        fc: dict[int, int] = {}
        accessed, collisions = [], []
        rewards: dict[int, float] = {}
        occupied_sensed = missed = 0
        su_tp = 0.0
        for b, decs in local.items():
            if not decs:
                continue
            f = 1 if any(decs) else 0
            fc[b] = f
            busy = states[b] == 1
            if busy:
                occupied_sensed += 1
            if f == 0:
                accessed.append(b)
                if busy:
                    collisions.append(b)
                    missed += 1
            r = float(throughput[b]) if (f == 0 and not busy) else 0.0
            rewards[b] = r
            su_tp += r

        if cfg.policy in ("proposed", "fixed_hopping"):
            q = self.q
            for b, r in rewards.items():
                q.update_band(b, r, cfg.alpha1)
                if fc[b]:
                    for s, dcs in zip(directive.sensors[b], local[b]):
                        q.update_su(s, b, dcs, 1, cfg.alpha2)
        elif self.ducb is not None:
            self.ducb.update(rewards)
        elif self.myopic is not None:
            self.myopic.observe(fc)

        genie_bands = genie_select(states, throughput, cfg.l)
        genie_tp = float(sum(throughput[b] for b in genie_bands))
        return SlotOutcome(self.slot, directive, states, local, fc, accessed, rewards,
                           collisions, directive.n_sensings, su_tp, genie_tp,
                           occupied_sensed, missed)


def run_slot(sim: Simulation) -> SlotOutcome:
    return sim.run_slot()


# ---- metrics ------------------------------------------------------------

def relative_throughput(su, genie) -> np.ndarray:
    """Cumulative SU throughput over cumulative genie throughput (0/0 -> 1)."""
    cs, cg = np.cumsum(su, dtype=float), np.cumsum(genie, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(cg > 0, cs / np.where(cg > 0, cg, 1.0), 1.0)


def miss_rate(occupied, missed, window: int | None = None) -> np.ndarray:
    """Fraction of occupied-and-sensed bands declared idle, cumulatively or
    over the trailing ``window`` slots; NaN while nothing occupied was sensed."""
    occ = np.cumsum(occupied, dtype=float)
    mis = np.cumsum(missed, dtype=float)
    if window is not None:
        occ = occ - np.concatenate([np.zeros(window), occ[:-window]])[:len(occ)]
        mis = mis - np.concatenate([np.zeros(window), mis[:-window]])[:len(mis)]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(occ > 0, mis / np.where(occ > 0, occ, 1.0), np.nan)


def sensing_ratio(sensors, d_ref: int, l_ref: int) -> np.ndarray:
    """Cumulative sensings relative to a fixed policy using ``d_ref`` sensors
    on each of ``l_ref`` bands every slot."""
    k = np.arange(1, len(sensors) + 1)
    return np.cumsum(sensors, dtype=float) / (k * d_ref * l_ref)


@dataclass
class RunTrace:
    su: np.ndarray
    genie: np.ndarray
    occupied: np.ndarray
    missed: np.ndarray
    sensors: np.ndarray
    explore: np.ndarray
    solver_seconds: dict = field(default_factory=dict)
    solver_calls: int = 0
    su_q: np.ndarray | None = None
    band_q: np.ndarray | None = None
    mean_snr_db: np.ndarray | None = None


def simulate_run(cfg: ScenarioConfig, run_index: int) -> RunTrace:
    sim = Simulation(cfg, run_index)
    h = cfg.horizon
    su, genie = np.zeros(h), np.zeros(h)
    occ, mis = np.zeros(h, dtype=np.int32), np.zeros(h, dtype=np.int32)
    sensors = np.zeros(h, dtype=np.int32)
    explore = np.zeros(h, dtype=bool)
    for k in range(h):
        o = sim.run_slot()
        su[k], genie[k] = o.su_throughput, o.genie_throughput
        occ[k], mis[k], sensors[k] = o.occupied_sensed, o.missed, o.n_sensors
        explore[k] = o.directive.phase == EXPLORE
    tr = RunTrace(su, genie, occ, mis, sensors, explore, su_q=sim.q.su_q.copy(),
                  band_q=sim.q.band_q.copy(), mean_snr_db=sim.scenario.snr_db_matrix())
    if sim.timer is not None:
        tr.solver_seconds = dict(sim.timer.seconds)
        tr.solver_calls = sim.timer.calls
    return tr


@dataclass
class MetricsSeries:
    """Per-slot metrics averaged over runs (index ``k - 1`` is slot ``k``)."""

    relative_throughput: np.ndarray
    miss_rate: np.ndarray
    miss_rate_windowed: np.ndarray
    sensing_ratio: np.ndarray
    cum_su_throughput: np.ndarray
    cum_genie_throughput: np.ndarray
    runs: int
    final: dict = field(default_factory=dict)
    solver_seconds: dict = field(default_factory=dict)
    traces: list = field(default_factory=list, repr=False)

    @property
    def horizon(self) -> int:
        return len(self.relative_throughput)


def aggregate(traces: list[RunTrace], cfg: ScenarioConfig, keep_traces=False) -> MetricsSeries:
    d_ref, l_ref = cfg.d, cfg.n_s // cfg.d
    rel = np.array([relative_throughput(t.su, t.genie) for t in traces])
    miss = np.array([miss_rate(t.occupied, t.missed) for t in traces])
    missw = np.array([miss_rate(t.occupied, t.missed, cfg.miss_window) for t in traces])
    sens = np.array([sensing_ratio(t.sensors, d_ref, l_ref) for t in traces])
    cs = np.array([np.cumsum(t.su) for t in traces])
    cg = np.array([np.cumsum(t.genie) for t in traces])

    def mean(a):
        with np.errstate(all="ignore"):
            import warnings
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                return np.nanmean(a, axis=0)

    n = len(traces)

    def final_stat(a):
        col = a[:, -1]
        col = col[~np.isnan(col)]
        se = float(col.std(ddof=1) / np.sqrt(len(col))) if len(col) > 1 else 0.0
        return {"mean": float(col.mean()) if len(col) else float("nan"), "stderr": se}

    secs = {"bb": 0.0, "ih": 0.0}
    calls = 0
    for t in traces:
        for k, v in t.solver_seconds.items():
            secs[k] += v
        calls += t.solver_calls
    solver = {}
    if calls:
        solver = {"calls": calls, "bb_seconds": secs["bb"], "ih_seconds": secs["ih"],
                  "bb_over_ih": secs["bb"] / secs["ih"] if secs["ih"] > 0 else float("inf")}
    return MetricsSeries(
        mean(rel), mean(miss), mean(missw), mean(sens), mean(cs), mean(cg), n,
        final={"relative_throughput": final_stat(rel), "miss_rate": final_stat(miss),
               "sensing_ratio": final_stat(sens)},
        solver_seconds=solver,
        traces=traces if keep_traces else [],
    )


def _run_one(args):
    cfg, r = args
    return simulate_run(cfg, r)


def run_experiment(cfg: ScenarioConfig, keep_traces: bool = False,
                   progress=None) -> MetricsSeries:
    """All ``cfg.runs`` runs, in worker processes when ``cfg.jobs > 1``."""
    cfg.validate()
    jobs = [(cfg, r) for r in range(cfg.runs)]
    if cfg.jobs > 1 and cfg.runs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            traces = list(pool.map(_run_one, jobs))
    else:
        traces = []
        for j in jobs:
            traces.append(_run_one(j))
            if progress is not None:
                progress(len(traces), cfg.runs)
    return aggregate(traces, cfg, keep_traces)


# ---- CSV ------------------------------------------------------------------

CSV_COLUMNS = ("curve", "slot", "relative_throughput", "miss_rate", "miss_rate_windowed",
               "sensing_ratio", "cum_su_throughput", "cum_genie_throughput")


def sample_slots(horizon: int, points: int) -> np.ndarray:
    """Log-spaced slot indices in 1..horizon, always including both ends."""
    pts = np.unique(np.round(np.logspace(0, np.log10(horizon), points)).astype(int))
    return np.union1d(pts, [1, horizon])


def _cell(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else f"{v:.10g}"


def metrics_rows(curves: dict[str, MetricsSeries], points: int) -> list[str]:
    rows = [",".join(CSV_COLUMNS)]
    for label, m in curves.items():
        for k in sample_slots(m.horizon, points):
            i = k - 1
            vals = (m.relative_throughput[i], m.miss_rate[i], m.miss_rate_windowed[i],
                    m.sensing_ratio[i], m.cum_su_throughput[i], m.cum_genie_throughput[i])
            rows.append(",".join([label, str(int(k))] + [_cell(float(v)) for v in vals]))
    return rows


def write_metrics_csv(path, curves: dict[str, MetricsSeries], points: int) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(metrics_rows(curves, points)) + "\n")


# ---- SU estimate calibration ------------------------------------------------

@dataclass
class SuCalibration:
    mean_su_q: np.ndarray     # (n_s, n_b) run average of the final SU Q-values
    limit: np.ndarray         # analytic limit for the same links
    mean_snr_db: np.ndarray
    runs: int
    snr_grid: np.ndarray | None = None
    pd_curve: np.ndarray | None = None   # true local detection probability on the grid

    @property
    def gap(self) -> np.ndarray:
        return np.abs(self.mean_su_q - self.limit)

    def gap_per_su(self) -> np.ndarray:
        return self.gap.mean(axis=1)


def su_q_calibration(cfg: ScenarioConfig) -> SuCalibration:
    """Exploration-only runs on one fixed network; compares the averaged SU
    Q-values with their analytic limit."""
    from .analysis import su_q_limit_matrix

    cfg = cfg.replace(epsilon=1.0, fixed_network=True, permutations=0, policy="proposed")
    traces = [simulate_run(cfg, r) for r in range(cfg.runs)]
    snr = traces[0].mean_snr_db
    idle = [stationary_idle_prob(a, b) for a, b in zip(cfg.per_band("p00"), cfg.per_band("p11"))]
    limit = su_q_limit_matrix(snr, idle, cfg.d, cfg.p_f_fc, cfg.num_samples, cfg.fading)
    grid = np.linspace(snr.min() - 1.0, snr.max() + 1.0, 200)
    thr = threshold_for_pfa(local_pfa_for_global(cfg.p_f_fc, cfg.d), cfg.num_samples)
    curve = average_detection_probability(grid, cfg.num_samples, thr, cfg.fading)
    return SuCalibration(np.mean([t.su_q for t in traces], axis=0), limit, snr, cfg.runs,
                         grid, np.asarray(curve))

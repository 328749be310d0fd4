import numpy as np
import pytest

from cogsense.config import ScenarioConfig
from cogsense.simulate import (Simulation, aggregate, metrics_rows, miss_rate, relative_throughput,
                               run_experiment, sample_slots, sensing_ratio, simulate_run,
                               write_metrics_csv)

SMALL = dict(runs=2, horizon=400, network_snr_db=5.0)


def _outcomes(cfg, run=0, n=None):
    sim = Simulation(cfg, run)
    return [sim.run_slot() for _ in range(n or cfg.horizon)]


def test_miss_rate_examples():
    assert miss_rate([2, 3], [0, 0])[-1] == 0
    assert miss_rate([2, 3], [2, 3])[-1] == 1
    occ = np.zeros(60, int)
    occ[:] = 1
    mis = np.zeros(60, int)
    mis[[3, 17, 40]] = 1
    assert miss_rate(occ, mis)[-1] == pytest.approx(0.05)
    assert np.isnan(miss_rate([0, 0], [0, 0])).all()
    w = miss_rate([1, 1, 1, 1], [1, 1, 0, 0], window=2)
    assert w.tolist() == [1.0, 1.0, 0.5, 0.0]


def test_sensing_ratio_examples():
    assert sensing_ratio([6] * 5, 2, 3)[-1] == 1.0
    assert sensing_ratio([3] * 5, 2, 3)[-1] == 0.5
    assert sensing_ratio([0] * 5, 2, 3)[-1] == 0.0


def test_relative_throughput_zero_over_zero():
    r = relative_throughput([0, 0, 3], [0, 5, 5])
    assert r.tolist() == [1.0, 0.0, 0.3]


def test_slot_outcome_invariants():
    cfg = ScenarioConfig(**SMALL)
    for o in _outcomes(cfg):
        assert o.n_sensors == o.directive.assignment(6, 10).sum()
        for b in o.collisions:
            assert o.states[b] == 1 and o.fc[b] == 0 and b in o.accessed
        for b in o.accessed:
            assert o.fc[b] == 0
            if o.states[b] == 1:
                assert b in o.collisions
        assert o.genie_throughput >= o.su_throughput - 1e-12 or \
            len(o.accessed) > cfg.l   # exploration may access more than L bands


def test_all_busy_perfect_detection():
    cfg = ScenarioConfig(p00=[0.0], p11=[1.0], network_snr_db=60.0, fading=False,
                         runs=1, horizon=50)
    for o in _outcomes(cfg):
        assert o.su_throughput == 0 and not o.collisions and all(o.fc.values())
        assert o.genie_throughput == 0


def test_determinism():
    cfg = ScenarioConfig(**SMALL)
    a, b = _outcomes(cfg), _outcomes(cfg)
    for x, y in zip(a, b):
        assert x.directive.sensors == y.directive.sensors
        assert x.local == y.local and x.fc == y.fc and x.rewards == y.rewards
        assert np.array_equal(x.states, y.states)


def test_su_q_frozen_on_idle_declarations():
    cfg = ScenarioConfig(**SMALL)
    sim = Simulation(cfg, 0)
    for _ in range(200):
        before = sim.q.su_q.copy()
        o = sim.run_slot()
        touched = {b for b, f in o.fc.items() if f == 1}
        for b in range(10):
            if b not in touched:
                assert np.array_equal(sim.q.su_q[:, b], before[:, b])


def test_epsilon_one_equals_fixed_hopping():
    a = _outcomes(ScenarioConfig(epsilon=1.0, **SMALL))
    b = _outcomes(ScenarioConfig(policy="fixed_hopping", epsilon=0.1, **SMALL))
    for x, y in zip(a, b):
        assert x.directive.sensors == y.directive.sensors
        assert x.local == y.local and x.rewards == y.rewards


def test_exploitation_respects_capacity():
    cfg = ScenarioConfig(epsilon=0.2, k_s=[1, 2, 1, 1, 2, 1], **SMALL)
    for o in _outcomes(cfg):
        x = o.directive.assignment(6, 10)
        assert np.all(x.sum(axis=1) <= np.array([1, 2, 1, 1, 2, 1])) or o.phase == "exploration"


@pytest.mark.parametrize("policy", ["ducb", "myopic", "genie"])
def test_baselines_run(policy):
    m = run_experiment(ScenarioConfig(policy=policy, **SMALL))
    assert 0 < m.relative_throughput[-1] <= 1.0 + 1e-12
    if policy == "genie":
        assert m.relative_throughput[-1] == pytest.approx(1.0, abs=0.1)


def test_permutations_in_stationary_engine():
    cfg = ScenarioConfig(permutations=3, policy="myopic", **SMALL)
    sim = Simulation(cfg, 0)
    for _ in range(cfg.horizon):
        sim.run_slot()
    assert sim.scenario.version == 3


def test_metric_monotonicity_and_bounds():
    m = run_experiment(ScenarioConfig(**SMALL))
    assert np.all(np.diff(m.cum_su_throughput) >= 0)
    assert np.all(np.diff(m.cum_genie_throughput) >= 0)
    assert np.all(m.sensing_ratio > 0)


def test_solver_timing_recorded():
    m = run_experiment(ScenarioConfig(time_solvers=True, **SMALL))
    s = m.solver_seconds
    assert s["calls"] > 0 and s["bb_seconds"] > 0 and s["ih_seconds"] > 0


def test_csv_bytes_identical(tmp_path):
    cfg = ScenarioConfig(**SMALL)
    for name in ("a.csv", "b.csv"):
        write_metrics_csv(tmp_path / name, {"p": run_experiment(cfg)}, 50)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_csv_layout():
    m = aggregate([simulate_run(ScenarioConfig(**SMALL), 0)], ScenarioConfig(**SMALL))
    rows = metrics_rows({"x": m}, 20)
    assert rows[0].startswith("curve,slot,")
    slots = [int(r.split(",")[1]) for r in rows[1:]]
    assert slots[0] == 1 and slots[-1] == 400 and slots == sorted(set(slots))
    assert sample_slots(10000, 200)[-1] == 10000


def test_parallel_equals_serial():
    cfg = ScenarioConfig(**SMALL)
    a = run_experiment(cfg)
    b = run_experiment(cfg.replace(jobs=2))
    assert np.array_equal(a.relative_throughput, b.relative_throughput)


@pytest.mark.slow
def test_bb_and_ih_perform_alike():
    cfg = ScenarioConfig(runs=30, horizon=5000)
    bb = run_experiment(cfg).final
    ih = run_experiment(cfg.replace(solver="ih")).final
    assert abs(bb["relative_throughput"]["mean"] - ih["relative_throughput"]["mean"]) < 0.02
    assert abs(bb["miss_rate"]["mean"] - ih["miss_rate"]["mean"]) < 0.01


@pytest.mark.slow
def test_proposed_beats_fixed_hopping():
    cfg = ScenarioConfig(runs=50, horizon=5000)
    prop = run_experiment(cfg).final["relative_throughput"]["mean"]
    fixed = run_experiment(cfg.replace(policy="fixed_hopping")).final["relative_throughput"]["mean"]
    assert prop > fixed

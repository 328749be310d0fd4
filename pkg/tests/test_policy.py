import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from cogsense.assignment import AssignmentMatrix
from cogsense.policy import (EXPLOIT, EXPLORE, BeliefMyopic, DiscountedUCB, PolicyConfig,
                             QTables, band_reward, belief_myopic_select, ducb_select,
                             exploration_directive, genie_select, make_hopping_codebook,
                             q_update, select_bands_exploit, spread_assignment, step_policy,
                             su_q_limit, su_reward)


def test_q_update_examples():
    assert q_update(0.0, 1.0, 0.1) == pytest.approx(0.1)
    assert q_update(0.37, 0.37, 0.6) == 0.37


@given(st.floats(0.01, 1.0), st.floats(0, 100), st.integers(0, 300))
def test_q_update_closed_form(alpha, mu, k):
    q = 0.0
    for _ in range(k):
        q = q_update(q, mu, alpha)
    assert q == pytest.approx(mu * (1 - (1 - alpha) ** k), abs=1e-9 * max(mu, 1))


def test_band_q_replay_weighted_average(rng):
    q = QTables.zeros(2, 3)
    r = rng.uniform(0, 10, 400)
    a = 0.05
    for x in r:
        q.update_band(1, x, a)
    k = len(r)
    want = sum(a * (1 - a) ** (k - i) * r[i - 1] for i in range(1, k + 1))
    assert q.band_q[1] == pytest.approx(want, abs=1e-9)
    assert q.band_count[1] == k and q.band_count[0] == 0


def test_rewards():
    assert band_reward(True, True, 7.3) == 7.3
    assert band_reward(True, False, 7.3) == 0.0
    assert band_reward(False, True, 7.3) == 0.0
    assert q_update(0.5, su_reward(1, 1, 0.5), 0.1) == pytest.approx(0.55)
    assert q_update(0.5, su_reward(0, 1, 0.5), 0.1) == pytest.approx(0.45)
    assert q_update(0.7, su_reward(1, 0, 0.7), 0.1) == 0.7


def test_su_q_untouched_when_fc_idle():
    q = QTables.zeros(3, 4)
    before = q.su_q.copy()
    q.update_su(1, 2, 1, 0, 0.1)
    assert np.array_equal(q.su_q, before)
    q.update_su(1, 2, 1, 1, 0.1)
    assert q.su_q[1, 2] == pytest.approx(0.55)


def test_select_bands_exploit(rng):
    assert select_bands_exploit([1, 5, 3], 1, rng) == [1]
    assert select_bands_exploit([1, 5, 3], 3, rng) == [0, 1, 2]
    with pytest.raises(ValueError):
        select_bands_exploit([1, 2], 3, rng)


def test_select_ties_uniform(rng):
    n_b, n = 10, 10**4
    counts = Counter(select_bands_exploit(np.zeros(n_b), 1, rng)[0] for _ in range(n))
    obs = [counts[b] for b in range(n_b)]
    for c in obs:
        assert abs(c - n / n_b) < 3 * np.sqrt(n * 0.1 * 0.9) + 1
    assert stats.chisquare(obs).pvalue > 1e-3


@settings(max_examples=50)
@given(st.lists(st.integers(-50, 50), min_size=1, max_size=8), st.floats(-1e3, 1e3),
       st.integers(0, 2**32 - 1))
def test_select_shift_invariant(q, c, seed):
    q = np.array(q, dtype=float)
    l = 1 + seed % len(q)
    a = select_bands_exploit(q, l, np.random.default_rng(seed))
    b = select_bands_exploit(q + c, l, np.random.default_rng(seed))
    assert a == b


def test_codebook_basic():
    cb = make_hopping_codebook(3, 1, 1, shifts=[0])
    assert cb.sequences[0] == [0, 1, 2]
    with pytest.raises(ValueError):
        make_hopping_codebook(3, 4, 2, shifts=[0, 3])


def test_codebook_orthogonal_small():
    # four SUs in pairs over three bands: the two pair sequences never collide
    cb = make_hopping_codebook(3, 4, 2, shifts=[0, 1])
    for i in range(3):
        assert cb.sequences[0][i] != cb.sequences[1][i]
    for i in range(30):
        col = cb.column(i)
        assert len({b for b, _ in col}) == 2
        sus = [s for _, g in col for s in g]
        assert sorted(sus) == sorted(set(sus)) and all(len(g) == 2 for _, g in col)


@pytest.mark.parametrize("n_b,n_s,d", [(3, 4, 2), (10, 6, 2), (5, 6, 3), (4, 5, 2)])
def test_rotation_covers_every_subset_on_every_band(n_b, n_s, d):
    cb = make_hopping_codebook(n_b, n_s, d)
    n_periods = len(list(itertools.combinations(range(n_s), d))) * len(cb.partitions)
    seen = {b: set() for b in range(n_b)}
    for i in range(n_periods * n_b):
        for b, g in cb.column(i):
            seen[b].add(tuple(sorted(g)))
    everything = set(itertools.combinations(range(n_s), d))
    for b in range(n_b):
        assert seen[b] == everything


def test_every_sequence_visits_each_band_once_per_period():
    cb = make_hopping_codebook(10, 6, 2)
    for seq in cb.sequences:
        assert sorted(seq) == list(range(10))


def _cfg(eps, l=3, solver="bb"):
    return PolicyConfig(epsilon=eps, num_bands_sought=l, diversity=2, solver=solver)


def _policy_kw(n_s=6, n_b=10):
    return dict(capacities=np.ones(n_s, int), weights=np.ones(n_s),
                miss_targets=np.full(n_b, 0.1))


def test_step_policy_explores_when_epsilon_one(rng):
    q = QTables.zeros(6, 10)
    cb = make_hopping_codebook(10, 6, 2)
    counts = Counter()
    for i in range(10):
        d = step_policy(q, _cfg(1.0), cb, i, rng, **_policy_kw())
        assert d.phase == EXPLORE and len(d.bands) == 3
        assert all(len(v) == 2 for v in d.sensors.values())
        counts.update(d.bands)
    assert all(counts[b] == 3 for b in range(10))


def test_step_policy_greedy(rng):
    q = QTables.zeros(6, 10)
    q.band_q[-1] = 10.0
    q.su_q[:] = 0.95
    cb = make_hopping_codebook(10, 6, 2)
    d = step_policy(q, _cfg(0.0, l=1), cb, 0, rng, **_policy_kw())
    assert d.phase == EXPLOIT and d.bands == [9]
    assert d.n_sensings == 1


def test_step_policy_exploration_frequency(rng):
    q = QTables.zeros(6, 10)
    cb = make_hopping_codebook(10, 6, 2)
    stub = lambda inst: AssignmentMatrix(np.eye(inst.n_su, inst.n_bands, dtype=int))  # noqa: E731
    n = 10**5
    explore = sum(step_policy(q, _cfg(0.1), cb, 0, rng, solve=stub, **_policy_kw()).phase
                  == EXPLORE for _ in range(n))
    assert abs(explore / n - 0.1) < 0.005


def test_step_policy_infeasible_fallback(rng):
    q = QTables.zeros(6, 10)      # all estimates 0.5: one band needs 4 SUs
    cb = make_hopping_codebook(10, 6, 2)
    d = step_policy(q, _cfg(0.0), cb, 0, rng, **_policy_kw())
    assert d.phase == EXPLOIT
    assert sorted(len(v) for v in d.sensors.values()) == [2, 2, 2]


def test_exploitation_directives_feasible(rng):
    q = QTables.zeros(6, 10)
    q.su_q[:] = rng.uniform(0.6, 0.99, (6, 10))
    q.band_q[:] = rng.uniform(0, 10, 10)
    cb = make_hopping_codebook(10, 6, 2)
    for solver in ("bb", "ih"):
        d = step_policy(q, _cfg(0.0, solver=solver), cb, 0, rng, **_policy_kw())
        x = d.assignment(6, 10)
        assert np.all(x.sum(axis=1) <= 1)
        for b in d.bands:
            assert np.prod(1 - q.su_q[x[:, b] == 1, b]) <= 0.1 + 1e-12


def test_spread_assignment():
    out = spread_assignment([2, 5, 7], 6, [1] * 6)
    assert out == {2: [0, 3], 5: [1, 4], 7: [2, 5]}
    assert spread_assignment([1, 4], 3, [2, 2, 2]) == {1: [0, 1, 2], 4: [0, 1, 2]}


def test_exploration_directive_matches_codebook():
    cb = make_hopping_codebook(10, 6, 2)
    d = exploration_directive(cb, 13)
    assert d.bands == [b for b, _ in cb.column(13)]


def test_ducb_single_band(rng):
    pol = DiscountedUCB(1, 0.9)
    for _ in range(20):
        b = pol.select(1, rng)[0]
        assert b == 0
        pol.update({b: rng.random()})


def test_ducb_symmetric_tie(rng):
    pol = DiscountedUCB(2, 0.9)
    pol.update({0: 1.0, 1: 1.0})
    pol.update({0: 0.0, 1: 0.0})
    n = 4000
    hits = sum(pol.select(1, rng)[0] == 0 for _ in range(n))
    assert abs(hits / n - 0.5) < 4 * np.sqrt(0.25 / n)
    # history form: the most recent observation is discounted least
    assert ducb_select([(0, 1.0), (1, 0.0), (1, 0.0)], 2, 0.9, rng=rng) == 0


def test_ducb_finds_best_band(rng):
    means = np.array([0.2, 0.4, 0.8, 0.5])
    pol = DiscountedUCB(4, gamma=0.999)
    picks = []
    for _ in range(10**4):
        b = pol.select(1, rng)[0]
        pol.update({b: float(rng.random() < means[b])})
        picks.append(b)
    assert np.mean(np.array(picks[-1000:]) == 2) >= 0.8


def test_ducb_unvisited_first(rng):
    pol = DiscountedUCB(3)
    pol.update({0: 5.0})
    assert pol.select(1, rng)[0] in (1, 2)


def test_belief_absorbing():
    m = BeliefMyopic([1.0, 0.5], [0.5, 0.5], [1.0, 1.0])
    m.observe({0: 0})
    for _ in range(50):
        m.propagate()
    assert m.beliefs[0] == 1.0


def test_belief_equal_picks_top_mu(rng):
    assert belief_myopic_select([0.4] * 4, [1, 7, 3, 9], 2, rng) == [1, 3]


def test_belief_beats_random_two_bands(rng):
    p00, p11, mu = np.array([0.95, 0.5]), np.array([0.9, 0.5]), np.array([1.0, 1.0])
    m = BeliefMyopic(p00, p11, mu)
    state = np.array([0, 0])
    got_m = got_r = 0.0
    for _ in range(10**5):
        u = rng.random(2)
        state = np.where(state == 0, (u >= p00).astype(int), (u < p11).astype(int))
        m.propagate()
        b = m.select(1, rng)[0]
        got_m += state[b] == 0
        m.observe({b: int(state[b])})
        got_r += state[rng.integers(2)] == 0
    assert got_m > got_r


def test_belief_permutation():
    m = BeliefMyopic([0.9, 0.5], [0.5, 0.9], [1.0, 2.0], beliefs=[0.2, 0.8])
    m.set_params([0.5, 0.9], [0.9, 0.5], [2.0, 1.0], perm=np.array([1, 0]))
    assert m.beliefs.tolist() == [0.8, 0.2]


def test_genie():
    assert genie_select([1, 1, 1], [5, 6, 7], 2) == []
    assert genie_select([1, 0, 1], [5, 6, 7], 3) == [1]
    assert genie_select([0, 1, 0, 0], [5, 6, 7, 1], 4) == [0, 2, 3]
    assert genie_select([0, 0, 0, 0], [5, 6, 7, 1], 2) == [1, 2]


def test_su_q_limit():
    assert su_q_limit(1.0, 0.0, 0.9, 0.005, 0.99, 0.01) == pytest.approx(0.9091, abs=1e-4)
    assert su_q_limit(0.5, 0.5, 0.8, 0.01, 0.8, 0.01) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        su_q_limit(0.0, 1.0, 0.5, 0.0, 0.5, 0.0)


def test_policy_config_validate():
    with pytest.raises(ValueError):
        PolicyConfig(epsilon=1.5).validate(6, 10)
    with pytest.raises(ValueError):
        PolicyConfig(num_bands_sought=11).validate(6, 10)
    with pytest.raises(ValueError):
        PolicyConfig(solver="lp").validate(6, 10)
